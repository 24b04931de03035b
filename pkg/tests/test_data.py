import struct

import numpy as np
import pytest

from fedsentry.attacks import choose_attackers, flip_labels
from fedsentry.data import (
    BadMagicError,
    CountMismatchError,
    DataShard,
    TruncatedFileError,
    dirichlet_partition,
    load_idx,
    synth_blobs,
)


class TestSynthBlobs:
    def test_counts_and_shapes(self):
        x, y = synth_blobs(num_classes=10, input_dim=7, per_class=100, spread=0.5, seed=1)
        assert x.shape == (1000, 7)
        assert y.shape == (1000,)
        for c in range(10):
            assert (y == c).sum() == 100

    def test_zero_spread_collapses_to_centers(self):
        x, y = synth_blobs(num_classes=3, input_dim=4, per_class=5, spread=0.0, seed=9)
        for c in range(3):
            block = x[y == c]
            assert np.all(block == block[0])

    def test_deterministic(self):
        a = synth_blobs(5, 6, 20, 0.3, seed=123)
        b = synth_blobs(5, 6, 20, 0.3, seed=123)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        c = synth_blobs(5, 6, 20, 0.3, seed=124)
        assert not np.array_equal(a[0], c[0])

    def test_too_few_classes(self):
        with pytest.raises(ValueError):
            synth_blobs(1, 4, 5, 0.1, seed=0)


class TestDirichletPartition:
    def test_exact_partition(self):
        x, y = synth_blobs(4, 3, 50, 0.5, seed=2)
        shards = dirichlet_partition(x, y, n=8, alpha=0.9, seed=5)
        assert len(shards) == 8
        assert sum(len(s) for s in shards) == len(y)
        for c in range(4):
            assert sum(int((s.labels == c).sum()) for s in shards) == int((y == c).sum())
        assert [s.owner for s in shards] == list(range(8))

    def test_high_alpha_balances(self):
        x, y = synth_blobs(5, 3, 400, 0.5, seed=3)
        shards = dirichlet_partition(x, y, n=10, alpha=1e6, seed=7)
        target = len(y) / 10
        for s in shards:
            assert abs(len(s) - target) <= 0.02 * len(y)

    def test_deterministic_assignment(self):
        x, y = synth_blobs(10, 4, 120, 0.5, seed=4)
        a = dirichlet_partition(x, y, n=50, alpha=0.9, seed=42)
        b = dirichlet_partition(x, y, n=50, alpha=0.9, seed=42)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.features, sb.features)
            assert np.array_equal(sa.labels, sb.labels)

    def test_no_empty_shards_even_when_tight(self):
        x, y = synth_blobs(2, 2, 6, 0.5, seed=6)
        shards = dirichlet_partition(x, y, n=12, alpha=0.05, seed=11)
        assert all(len(s) >= 1 for s in shards)
        assert sum(len(s) for s in shards) == 12

    def test_input_validation(self):
        x, y = synth_blobs(2, 2, 5, 0.5, seed=8)
        with pytest.raises(ValueError):
            dirichlet_partition(x, y, n=5, alpha=0.0, seed=0)
        with pytest.raises(ValueError):
            dirichlet_partition(x, y, n=11, alpha=0.9, seed=0)


def write_idx_pair(tmp_path, images, labels, image_magic=0x803, label_magic=0x801):
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    images_path = tmp_path / "imgs.idx"
    labels_path = tmp_path / "labels.idx"
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", image_magic, count, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", label_magic, len(labels)))
        f.write(bytes(labels))
    return images_path, labels_path


class TestLoadIdx:
    def test_hand_built_fixture(self, tmp_path):
        img0 = np.arange(9, dtype=np.uint8).reshape(3, 3)
        img1 = np.full((3, 3), 255, dtype=np.uint8)
        images_path, labels_path = write_idx_pair(tmp_path, [img0, img1], [7, 2])
        x, y = load_idx(images_path, labels_path)
        assert x.shape == (2, 9)
        assert np.array_equal(y, [7, 2])
        assert np.allclose(x[0], np.arange(9) / 255.0)
        assert np.all(x[1] == 1.0)

    def test_wrong_magic(self, tmp_path):
        img = np.zeros((1, 2, 2), dtype=np.uint8)
        # labels written with the images magic
        images_path, labels_path = write_idx_pair(tmp_path, img, [0], label_magic=0x803)
        with pytest.raises(BadMagicError):
            load_idx(images_path, labels_path)
        images_path, labels_path = write_idx_pair(tmp_path, img, [0], image_magic=0x42)
        with pytest.raises(BadMagicError):
            load_idx(images_path, labels_path)

    def test_truncated_pixels(self, tmp_path):
        images_path = tmp_path / "imgs.idx"
        with open(images_path, "wb") as f:
            f.write(struct.pack(">IIII", 0x803, 2, 3, 3))
            f.write(bytes(5))
        labels_path = tmp_path / "labels.idx"
        with open(labels_path, "wb") as f:
            f.write(struct.pack(">II", 0x801, 2))
            f.write(bytes(2))
        with pytest.raises(TruncatedFileError):
            load_idx(images_path, labels_path)

    def test_count_mismatch(self, tmp_path):
        img = np.zeros((2, 2, 2), dtype=np.uint8)
        images_path, labels_path = write_idx_pair(tmp_path, img, [0, 1, 1])
        with pytest.raises(CountMismatchError):
            load_idx(images_path, labels_path)


class TestFlipLabels:
    def shard(self, labels):
        labels = np.asarray(labels)
        return DataShard(
            features=np.zeros((len(labels), 2)), labels=labels, owner=0
        )

    def test_swaps_both_directions(self):
        flipped = flip_labels(self.shard([0, 1, 2, 1, 0]), (0, 1))
        assert flipped.labels.tolist() == [1, 0, 2, 0, 1]

    def test_involution(self):
        shard = self.shard([0, 1, 2, 3, 1, 0])
        twice = flip_labels(flip_labels(shard, (0, 1)), (0, 1))
        assert np.array_equal(twice.labels, shard.labels)

    def test_untouched_when_pair_absent(self):
        shard = self.shard([2, 3, 4])
        flipped = flip_labels(shard, (0, 1))
        assert np.array_equal(flipped.labels, shard.labels)
        assert flipped.features is shard.features

    def test_invalid_pair(self):
        with pytest.raises(ValueError):
            flip_labels(self.shard([0, 1]), (1, 1))
        with pytest.raises(ValueError):
            flip_labels(self.shard([0, 1]), (-1, 1))


class TestChooseAttackers:
    def test_count_and_determinism(self):
        ids = choose_attackers(50, 0.3, seed=4)
        assert len(ids) == 15
        assert ids == choose_attackers(50, 0.3, seed=4)
        assert all(0 <= i < 50 for i in ids)

    def test_zero_fraction_empty(self):
        assert choose_attackers(50, 0.0, seed=1) == frozenset()

    def test_single_attacker_rejected(self):
        with pytest.raises(ValueError):
            choose_attackers(50, 0.02, seed=1)
