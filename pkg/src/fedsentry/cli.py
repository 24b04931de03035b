"""Command-line front end: run one experiment or sweep attack fractions."""

from __future__ import annotations

import argparse
import logging
import sys

from .harness import ConfigError, load_config, run_experiment, run_sweep

logger = logging.getLogger(__name__)


def _parse_fractions(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad attack fraction list {text!r}") from exc
    if not all(0.0 <= v < 1.0 for v in values):
        raise ConfigError(f"attack fractions must lie in [0, 1): {values}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsentry",
        description="Federated-learning simulation with collusive-attacker detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a single experiment")
    run_p.add_argument("--config", required=True, help="YAML experiment config")

    sweep_p = sub.add_parser("sweep", help="run one experiment per attack fraction")
    sweep_p.add_argument("--config", required=True, help="YAML base config")
    sweep_p.add_argument(
        "--attack-fractions",
        required=True,
        help="comma-separated fractions, e.g. 0.1,0.2,0.7",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "run":
            result = run_experiment(config)
            summary = result.summary
            print(
                f"policy={summary['policy']} m={summary['attacker_fraction']} "
                f"rounds={summary['rounds']} accuracy={summary['final_accuracy']:.4f} "
                f"f1={summary['final_macro_f1']:.4f} asr={summary['final_asr']:.4f} "
                f"ed={summary['ed']}"
            )
            if summary["aborted_rounds"]:
                logger.error("aborted rounds: %s", summary["aborted_rounds"])
                return 1
            return 0

        fractions = _parse_fractions(args.attack_fractions)
        rows = run_sweep(config, fractions)
        failed = False
        for row in rows:
            if "error" in row:
                print(f"m={row['m']} detector={row['detector']} ERROR: {row['error']}")
                failed = True
            else:
                print(
                    f"m={row['m']} detector={row['detector']} "
                    f"accuracy={row['final_accuracy']:.4f} f1={row['final_f1']:.4f} "
                    f"asr={row['final_asr']:.4f} ed={row['ed']}"
                )
        return 1 if failed else 0
    except (ConfigError, OSError) as exc:
        logger.error("%s", exc)
        return 1
    except Exception as exc:  # divergence etc.: surface, nonzero exit
        logger.error("experiment failed: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
