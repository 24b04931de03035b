"""Experiment orchestration: the federated round loop, detector-gated
aggregation, and per-round artifacts (rounds.csv, detections.json,
summary.json)."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .aggregate import (
    AggregationPolicy,
    NoIncludedClientsError,
    geometric_median,
    weighted_aggregate,
)
from .attacks import AttackConfig, choose_attackers, flip_labels
from .data import dirichlet_partition, load_idx, synth_blobs
from .density import DensityDiagnostics, density_ad
from .gradients import build_correlation_matrix
from .metrics import RoundRecord, attack_success_rate, earliest_detection, evaluate
from .mst import MstDiagnostics, mst_ad
from .training import (
    OneHiddenLayerClassifier,
    SoftmaxClassifier,
    TrainingConfig,
    derive_round_seed,
    local_train,
)

logger = logging.getLogger(__name__)

POLICIES = ("fedavg", "mst_ad", "density_ad", "geomed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; mirrors the config-file keys one to one."""

    n_clients: int = 50
    attacker_fraction: float = 0.0
    flip_pair: tuple[int, int] = (0, 1)
    rounds: int = 30
    alpha: float = 0.9
    seed: int = 0
    dataset: str = "synth"
    num_classes: int = 10
    synth_input_dim: int = 16
    synth_per_class: int = 150
    synth_test_per_class: int = 50
    synth_spread: float = 0.35
    idx_train_images: str | None = None
    idx_train_labels: str | None = None
    idx_test_images: str | None = None
    idx_test_labels: str | None = None
    hidden: int | None = None
    lr: float = 0.5
    epochs: int = 2
    batch_size: int = 16
    policy: str = "fedavg"
    correlation_centering: str = "per_vector"
    asr_mode: str = "any_error"
    output_dir: str | None = None

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.n_clients < 2:
            raise ConfigError("need at least 2 clients")
        if not 0.0 <= self.attacker_fraction < 1.0:
            raise ConfigError("attacker_fraction must be in [0, 1)")
        if self.attacker_fraction > 0 and round(self.attacker_fraction * self.n_clients) < 2:
            raise ConfigError(
                f"attacker_fraction {self.attacker_fraction} yields fewer than 2 attackers"
            )
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.dataset not in ("synth", "idx"):
            raise ConfigError(f"dataset must be 'synth' or 'idx', got {self.dataset!r}")
        a, b = self.flip_pair
        if a == b or not (0 <= a < self.num_classes and 0 <= b < self.num_classes):
            raise ConfigError(f"flip_pair {self.flip_pair} invalid for {self.num_classes} classes")
        if self.dataset == "idx" and None in (
            self.idx_train_images,
            self.idx_train_labels,
            self.idx_test_images,
            self.idx_test_labels,
        ):
            raise ConfigError("dataset 'idx' needs all four idx_* paths")

    def aggregation_policy(self) -> AggregationPolicy:
        if self.policy == "geomed":
            return AggregationPolicy(kind="geomed")
        if self.policy == "fedavg":
            return AggregationPolicy(kind="fedavg")
        return AggregationPolicy(kind="fedavg", detector=self.policy, exclusion=True)


def load_config(path) -> ExperimentConfig:
    """Read an ExperimentConfig from a YAML key-value file."""
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    if "flip_pair" in raw:
        pair = raw["flip_pair"]
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"{path}: flip_pair must be a 2-item list")
        raw["flip_pair"] = (int(pair[0]), int(pair[1]))
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RoundRecord]
    detections: list[dict]
    summary: dict
    final_params: np.ndarray


def _subseed(base_seed: int, label: str) -> int:
    """Independent named seed streams off the experiment seed."""
    tag = f"{base_seed}/{label}".encode()
    return int.from_bytes(hashlib.blake2b(tag, digest_size=8).digest(), "big")


def _build_dataset(config: ExperimentConfig):
    """Return (train_x, train_y, test_x, test_y) for the configured source."""
    if config.dataset == "synth":
        per_class = config.synth_per_class + config.synth_test_per_class
        x, y = synth_blobs(
            num_classes=config.num_classes,
            input_dim=config.synth_input_dim,
            per_class=per_class,
            spread=config.synth_spread,
            seed=_subseed(config.seed, "data"),
        )
        train_idx, test_idx = [], []
        for c in range(config.num_classes):
            block = np.flatnonzero(y == c)
            train_idx.extend(block[: config.synth_per_class].tolist())
            test_idx.extend(block[config.synth_per_class :].tolist())
        return x[train_idx], y[train_idx], x[test_idx], y[test_idx]

    train_x, train_y = load_idx(config.idx_train_images, config.idx_train_labels)
    test_x, test_y = load_idx(config.idx_test_images, config.idx_test_labels)
    for name, labels in (("train", train_y), ("test", test_y)):
        if labels.max() >= config.num_classes:
            raise ConfigError(
                f"{name} labels reach {labels.max()} but num_classes is {config.num_classes}"
            )
    return train_x, train_y, test_x, test_y


def _build_model(config: ExperimentConfig, input_dim: int):
    if config.hidden:
        return OneHiddenLayerClassifier(input_dim, config.hidden, config.num_classes)
    return SoftmaxClassifier(input_dim, config.num_classes)


def _diagnostics_to_json(diag):
    if diag is None:
        return None
    if isinstance(diag, MstDiagnostics):
        return {
            "method": "mst_ad",
            "cut_edge": {"u": diag.cut_edge.u, "v": diag.cut_edge.v,
                         "weight": diag.cut_edge.weight},
            "flagged_avg_weight": diag.flagged_avg_weight,
            "other_avg_weight": diag.other_avg_weight,
            "ambiguous": diag.ambiguous,
        }
    if isinstance(diag, DensityDiagnostics):
        return {
            "method": "density_ad",
            "peel_trace": [
                {
                    "vertex": step.vertex,
                    "density_before": step.density_before,
                    "density_after": step.density_after,
                    "removed": step.removed,
                }
                for step in diag.trace
            ],
            "sparse_density": diag.sparse_density,
            "survivor_density": diag.survivor_density,
            "ambiguous": diag.ambiguous,
        }
    return {"method": "custom", "detail": repr(diag)}


def run_experiment(config: ExperimentConfig, detect_fn=None) -> ExperimentResult:
    """Run the federated loop for the configured scenario.

    Each round: broadcast the global params, train every client locally,
    build the correlation matrix, run the configured detector (if any) and
    drop the flagged clients, aggregate, evaluate on the held-out test
    set. Fully deterministic for a given config.

    Args:
        detect_fn: optional override mapping a CorrelationMatrix to a
            DetectionResult; used for auditing (e.g. an oracle that flags
            the true attackers). When given, fedavg aggregation is gated
            on its output exactly as for a configured detector.
    """
    policy = config.aggregation_policy()
    train_x, train_y, test_x, test_y = _build_dataset(config)
    model = _build_model(config, train_x.shape[1])

    shards = dirichlet_partition(
        train_x, train_y, config.n_clients, config.alpha, _subseed(config.seed, "partition")
    )
    attacker_ids = choose_attackers(
        config.n_clients, config.attacker_fraction, _subseed(config.seed, "attackers")
    )
    attack = AttackConfig(
        flip_pair=config.flip_pair,
        attacker_fraction=config.attacker_fraction,
        attacker_ids=attacker_ids,
    )
    for i in sorted(attack.attacker_ids):
        shards[i] = flip_labels(shards[i], attack.flip_pair)

    if detect_fn is None and policy.detector is not None:
        detect_fn = {"mst_ad": mst_ad, "density_ad": density_ad}[policy.detector]

    params = model.init_params(_subseed(config.seed, "init"))
    records: list[RoundRecord] = []
    detections: list[dict] = []
    aborted_rounds: list[int] = []

    for round_index in range(1, config.rounds + 1):
        updates = []
        for client in range(config.n_clients):
            hyper = TrainingConfig(
                lr=config.lr,
                epochs=config.epochs,
                batch_size=config.batch_size,
                seed=derive_round_seed(config.seed, client, round_index),
            )
            updates.append(local_train(model, params, shards[client], hyper))

        sample_counts = np.array([len(s) for s in shards], dtype=np.float64)
        local_losses = np.array(
            [
                model.loss(params + updates[i].delta, shards[i].features, shards[i].labels)
                for i in range(config.n_clients)
            ]
        )
        train_loss = float((sample_counts * local_losses).sum() / sample_counts.sum())

        flagged: frozenset[int] = frozenset()
        diagnostics_json = None
        if detect_fn is not None:
            matrix = build_correlation_matrix(updates, config.correlation_centering)
            result = detect_fn(matrix)
            flagged = frozenset(result.attackers)
            diagnostics_json = _diagnostics_to_json(result.diagnostics)

        excluded = set(flagged) if policy.exclusion or detect_fn is not None else set()
        if policy.kind == "geomed":
            excluded = set()
            params = params + geometric_median(updates)
            included = sorted(u.client_id for u in updates)
        else:
            try:
                params = weighted_aggregate(params, updates, excluded)
                included = sorted(u.client_id for u in updates if u.client_id not in excluded)
            except NoIncludedClientsError:
                logger.warning(
                    "round %d: every client excluded; carrying the model forward",
                    round_index,
                )
                aborted_rounds.append(round_index)
                included = []

        accuracy, macro_f1, confusion = evaluate(model, params, test_x, test_y)
        asr = attack_success_rate(confusion, config.flip_pair, config.asr_mode)
        detection_exact = detect_fn is not None and flagged == attack.attacker_ids

        records.append(
            RoundRecord(
                round=round_index,
                train_loss=train_loss,
                test_accuracy=accuracy,
                macro_f1=macro_f1,
                asr=asr,
                detection_exact=detection_exact,
                n_excluded=len(excluded),
                confusion=confusion,
            )
        )
        detections.append(
            {
                "round": round_index,
                "flagged": sorted(flagged),
                "true_attackers": sorted(attack.attacker_ids),
                "included": included,
                "diagnostics": diagnostics_json,
            }
        )

    detects = detect_fn is not None
    ed = earliest_detection([r.detection_exact for r in records]) if detects else None
    summary = {
        "policy": config.policy,
        "n_clients": config.n_clients,
        "attacker_fraction": config.attacker_fraction,
        "attacker_ids": sorted(attack.attacker_ids),
        "rounds": config.rounds,
        "ed": (ed if ed is not None else "*") if detects else None,
        "final_accuracy": records[-1].test_accuracy,
        "final_macro_f1": records[-1].macro_f1,
        "final_asr": records[-1].asr,
        "final_train_loss": records[-1].train_loss,
        "aborted_rounds": aborted_rounds,
        "config": _config_echo(config),
    }
    result = ExperimentResult(
        config=config,
        records=records,
        detections=detections,
        summary=summary,
        final_params=params,
    )
    if config.output_dir is not None:
        write_artifacts(result, Path(config.output_dir))
    return result


def _config_echo(config: ExperimentConfig) -> dict:
    echo = dataclasses.asdict(config)
    echo["flip_pair"] = list(config.flip_pair)
    return echo


def write_artifacts(result: ExperimentResult, output_dir: Path) -> None:
    """Write rounds.csv, detections.json, and summary.json.

    CSV uses '.' decimals, comma separators, and a header row; floats are
    written with repr so reruns of the same config are byte-identical.
    JSON is UTF-8 with sorted keys.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    with open(output_dir / "rounds.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            ["round", "train_loss", "test_accuracy", "macro_f1", "asr",
             "detection_exact", "n_excluded"]
        )
        for r in result.records:
            writer.writerow(
                [r.round, repr(r.train_loss), repr(r.test_accuracy), repr(r.macro_f1),
                 repr(r.asr), str(r.detection_exact).lower(), r.n_excluded]
            )

    with open(output_dir / "detections.json", "w", encoding="utf-8") as f:
        json.dump({"rounds": result.detections}, f, indent=2, sort_keys=True)
        f.write("\n")

    with open(output_dir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(result.summary, f, indent=2, sort_keys=True)
        f.write("\n")


def run_sweep(base_config: ExperimentConfig, m_values: list[float]) -> list[dict]:
    """Run one experiment per attack fraction and collect summary rows.

    Per-scenario seeds are base seed + index so scenarios stay independent
    yet reproducible; a failing scenario is recorded as a row with an
    "error" key and the sweep continues.
    """
    rows: list[dict] = []
    base_out = Path(base_config.output_dir) if base_config.output_dir else None
    for index, m in enumerate(m_values):
        scenario_dir = (
            str(base_out / f"A-{round(m * 100):02d}_{base_config.policy}")
            if base_out
            else None
        )
        scenario = replace(
            base_config,
            attacker_fraction=m,
            seed=base_config.seed + index,
            output_dir=scenario_dir,
        )
        try:
            result = run_experiment(scenario)
        except Exception as exc:  # keep sweeping; report at the end
            logger.error("scenario m=%s failed: %s", m, exc)
            rows.append({"m": m, "detector": base_config.policy, "error": str(exc)})
            continue
        rows.append(
            {
                "m": m,
                "detector": base_config.policy,
                "final_accuracy": result.summary["final_accuracy"],
                "final_f1": result.summary["final_macro_f1"],
                "final_asr": result.summary["final_asr"],
                "ed": result.summary["ed"],
            }
        )
    if base_out is not None:
        write_sweep_table(rows, base_out)
    return rows


def write_sweep_table(rows: list[dict], output_dir: Path) -> None:
    """One CSV row per scenario, in the shape of the results tables."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    with open(output_dir / "sweep.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["m", "detector", "final_accuracy", "final_f1", "final_asr", "ed"])
        for row in rows:
            if "error" in row:
                writer.writerow([repr(row["m"]), row["detector"], "error", "error",
                                 "error", row["error"]])
                continue
            writer.writerow(
                [repr(row["m"]), row["detector"], repr(row["final_accuracy"]),
                 repr(row["final_f1"]), repr(row["final_asr"]),
                 row["ed"] if row["ed"] is not None else ""]
            )
