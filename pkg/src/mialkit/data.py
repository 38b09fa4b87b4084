"""Bag-structured data model: loading, validation, splitting and synthesis.

Instances are feature vectors grouped into bags. A bag carries one weak
label in {-1, +1}; instance-level ground truth may be fully known,
partially known or absent (human-annotation mode). Under the standard
consistency rule, a negative bag contains only negative instances and a
positive bag contains at least one positive instance.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

POSITIVE = 1
NEGATIVE = -1
UNKNOWN = 0

_HEADER_FIXED = ("bag_id", "bag_label", "instance_label")
_MAX_SPLIT_TRIES = 100_000


class MILFormatError(ValueError):
    """Malformed MIL-CSV content (bad header, labels or row shape)."""


class MILValidationError(ValueError):
    """Bag/instance label consistency rules are broken."""


class SplitError(ValueError):
    """A train/test split cannot satisfy its class guarantees."""


@dataclass(frozen=True)
class Instance:
    """A single feature vector inside a bag (read-only view)."""

    features: np.ndarray
    bag_index: int
    index_in_bag: int
    true_label: int = UNKNOWN


@dataclass(frozen=True)
class Bag:
    """An ordered set of instances sharing one weak label.

    ``true_labels`` uses 0 for unknown entries so partially annotated
    bags (human-oracle mode) are representable.
    """

    id: str
    label: int
    features: np.ndarray
    true_labels: np.ndarray

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(np.atleast_2d(self.features), dtype=np.float64)
        labels = np.ascontiguousarray(self.true_labels, dtype=np.int8)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise MILValidationError(f"bag {self.id!r} must hold at least one instance")
        if labels.shape != (feats.shape[0],):
            raise MILValidationError(
                f"bag {self.id!r}: {labels.shape[0]} instance labels for {feats.shape[0]} instances"
            )
        if self.label not in (NEGATIVE, POSITIVE):
            raise MILValidationError(f"bag {self.id!r}: bag label must be -1 or +1, got {self.label}")
        bad = set(np.unique(labels).tolist()) - {NEGATIVE, UNKNOWN, POSITIVE}
        if bad:
            raise MILValidationError(f"bag {self.id!r}: invalid instance labels {sorted(bad)}")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "true_labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def labels_known(self) -> bool:
        return bool(np.all(self.true_labels != UNKNOWN))


class MILDataset:
    """A named, immutable collection of bags with one feature dimensionality.

    Exposes flattened per-instance views (features, bag membership,
    labels) that downstream numerical code works on directly.
    """

    def __init__(self, bags: Sequence[Bag], name: str = "dataset"):
        bags = tuple(bags)
        if not bags:
            raise MILValidationError("dataset needs at least one bag")
        dim = bags[0].features.shape[1]
        seen: dict[str, int] = {}
        for i, bag in enumerate(bags):
            if bag.features.shape[1] != dim:
                raise MILValidationError(
                    f"bag {bag.id!r} has {bag.features.shape[1]} features, expected {dim}"
                )
            if bag.id in seen:
                raise MILValidationError(f"duplicate bag id {bag.id!r}")
            seen[bag.id] = i
        if not any(b.label == POSITIVE for b in bags):
            raise MILValidationError("dataset needs at least one positive bag")
        self.bags = bags
        self.name = name
        self.feature_dim = dim
        self._index = seen

    def __len__(self) -> int:
        return len(self.bags)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MILDataset):
            return NotImplemented
        return (
            self.name == other.name
            and len(self.bags) == len(other.bags)
            and all(
                a.id == b.id
                and a.label == b.label
                and np.array_equal(a.features, b.features)
                and np.array_equal(a.true_labels, b.true_labels)
                for a, b in zip(self.bags, other.bags)
            )
        )

    def index_of(self, bag_id: str) -> int:
        try:
            return self._index[bag_id]
        except KeyError:
            raise KeyError(f"unknown bag id {bag_id!r}") from None

    @cached_property
    def features(self) -> np.ndarray:
        """All instance feature vectors stacked, shape (n_instances, feature_dim)."""
        out = np.vstack([b.features for b in self.bags])
        out.setflags(write=False)
        return out

    @cached_property
    def instance_bag_index(self) -> np.ndarray:
        out = np.concatenate([np.full(len(b), i, dtype=np.int64) for i, b in enumerate(self.bags)])
        out.setflags(write=False)
        return out

    @cached_property
    def instance_true_labels(self) -> np.ndarray:
        out = np.concatenate([b.true_labels for b in self.bags]).astype(np.int8)
        out.setflags(write=False)
        return out

    @cached_property
    def instance_bag_labels(self) -> np.ndarray:
        out = np.concatenate([np.full(len(b), b.label, dtype=np.int8) for b in self.bags])
        out.setflags(write=False)
        return out

    @cached_property
    def bag_slices(self) -> tuple[slice, ...]:
        """Per-bag slices into the flattened instance arrays."""
        slices = []
        start = 0
        for b in self.bags:
            slices.append(slice(start, start + len(b)))
            start += len(b)
        return tuple(slices)

    @property
    def n_instances(self) -> int:
        return sum(len(b) for b in self.bags)

    @property
    def labels_known(self) -> bool:
        return all(b.labels_known for b in self.bags)

    def positive_bag_indices(self) -> list[int]:
        return [i for i, b in enumerate(self.bags) if b.label == POSITIVE]

    def negative_bag_indices(self) -> list[int]:
        return [i for i, b in enumerate(self.bags) if b.label == NEGATIVE]

    def instances(self) -> Iterator[Instance]:
        for i, bag in enumerate(self.bags):
            for j in range(len(bag)):
                yield Instance(bag.features[j], i, j, int(bag.true_labels[j]))

    def summary(self) -> dict:
        """Dataset statistics recomputed from raw content."""
        sizes = np.array([len(b) for b in self.bags])
        labels = self.instance_true_labels
        known = labels != UNKNOWN
        info = {
            "name": self.name,
            "bags": len(self.bags),
            "positive_bags": len(self.positive_bag_indices()),
            "negative_bags": len(self.negative_bag_indices()),
            "instances": int(sizes.sum()),
            "feature_dim": self.feature_dim,
            "min_instances_per_bag": int(sizes.min()),
            "max_instances_per_bag": int(sizes.max()),
            "avg_instances_per_bag": float(sizes.mean()),
        }
        # class imbalance = positive instances / all instances, only meaningful
        # when every instance label is known
        info["class_imbalance"] = (
            float(np.sum(labels == POSITIVE) / labels.size) if bool(known.all()) else None
        )
        return info


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the bag/instance consistency check; empty means clean."""

    violations: tuple[tuple[str, str], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_violations(self) -> None:
        if self.violations:
            lines = "; ".join(f"{bid}: {msg}" for bid, msg in self.violations)
            raise MILValidationError(f"{len(self.violations)} bag(s) violate label consistency: {lines}")


def validate(dataset: MILDataset) -> ValidationReport:
    """Check every bag against the standard consistency rule.

    A negative bag must not contain a known positive instance. A positive
    bag whose labels are all known must contain at least one positive.
    Unknown labels cannot refute either rule and are skipped.
    """
    violations: list[tuple[str, str]] = []
    for bag in dataset.bags:
        if bag.label == NEGATIVE:
            n_pos = int(np.sum(bag.true_labels == POSITIVE))
            if n_pos:
                violations.append((bag.id, f"negative bag holds {n_pos} positive instance(s)"))
        else:
            if bag.labels_known and not np.any(bag.true_labels == POSITIVE):
                violations.append((bag.id, "positive bag holds no positive instance"))
    return ValidationReport(tuple(violations))


def _parse_label(token: str, row_no: int, allow_unknown: bool) -> int:
    token = token.strip()
    if token == "?" and allow_unknown:
        return UNKNOWN
    if token in ("-1", "1", "+1"):
        return int(token)
    raise MILFormatError(f"row {row_no}: bad label {token!r}")


def load_dataset(path: str | Path, fmt: str = "mil-csv", strict: bool = True,
                 name: str | None = None) -> MILDataset:
    """Load a dataset from a MIL-CSV file.

    Header: ``bag_id,bag_label,instance_label,f0,...,f{d-1}``. One row per
    instance; rows of a bag need not be contiguous; bag order follows first
    appearance. ``instance_label`` may be ``?`` (unknown). With
    ``strict=True`` the consistency check runs and violations raise.
    """
    if fmt != "mil-csv":
        raise MILFormatError(f"unsupported format {fmt!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MILFormatError(f"{path}: empty file") from None
        if len(header) < 4 or tuple(h.strip() for h in header[:3]) != _HEADER_FIXED:
            raise MILFormatError(f"{path}: header must start with {','.join(_HEADER_FIXED)}")
        for k, col in enumerate(header[3:]):
            if not re.fullmatch(rf"f{k}", col.strip()):
                raise MILFormatError(f"{path}: feature column {k} named {col!r}, expected f{k}")
        dim = len(header) - 3

        order: list[str] = []
        bag_labels: dict[str, int] = {}
        rows: dict[str, list[tuple[int, np.ndarray]]] = {}
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 3:
                raise MILFormatError(f"{path}: row {row_no} has {len(row)} fields, expected {dim + 3}")
            bag_id = row[0].strip()
            if not bag_id:
                raise MILFormatError(f"{path}: row {row_no} has empty bag_id")
            bag_label = _parse_label(row[1], row_no, allow_unknown=False)
            inst_label = _parse_label(row[2], row_no, allow_unknown=True)
            try:
                feats = np.array([float(v) for v in row[3:]], dtype=np.float64)
            except ValueError as exc:
                raise MILFormatError(f"{path}: row {row_no}: {exc}") from None
            if bag_id not in bag_labels:
                order.append(bag_id)
                bag_labels[bag_id] = bag_label
                rows[bag_id] = []
            elif bag_labels[bag_id] != bag_label:
                raise MILFormatError(f"{path}: row {row_no}: bag {bag_id!r} label differs from earlier rows")
            rows[bag_id].append((inst_label, feats))

    if not order:
        raise MILFormatError(f"{path}: no instance rows")
    bags = [
        Bag(
            id=bid,
            label=bag_labels[bid],
            features=np.vstack([f for _, f in rows[bid]]),
            true_labels=np.array([lab for lab, _ in rows[bid]], dtype=np.int8),
        )
        for bid in order
    ]
    dataset = MILDataset(bags, name=name or path.stem)
    if strict:
        if not dataset.negative_bag_indices():
            raise MILValidationError(f"{path}: dataset has no negative bag")
        validate(dataset).raise_if_violations()
    return dataset


def save_dataset(dataset: MILDataset, path: str | Path) -> None:
    """Write MIL-CSV; floats use shortest round-trip formatting."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(_HEADER_FIXED) + [f"f{k}" for k in range(dataset.feature_dim)])
        for bag in dataset.bags:
            for j in range(len(bag)):
                lab = int(bag.true_labels[j])
                token = "?" if lab == UNKNOWN else str(lab)
                writer.writerow([bag.id, str(bag.label), token] + [repr(float(v)) for v in bag.features[j]])


def split_train_test(dataset: MILDataset, train_fraction: float, seed: int) -> tuple[MILDataset, MILDataset]:
    """Random bag-level partition into train/test.

    Permutations are resampled (same seeded stream) until both sides hold
    at least one positive bag and the train side also holds a negative bag,
    which retraining requires. Deterministic for a given seed.
    """
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must be in (0, 1), got {train_fraction}")
    z = len(dataset.bags)
    n_train = min(max(int(z * train_fraction + 0.5), 1), z - 1)
    n_pos = len(dataset.positive_bag_indices())
    n_neg = len(dataset.negative_bag_indices())
    if n_pos < 2:
        raise SplitError(f"need at least 2 positive bags to split, dataset has {n_pos}")
    if n_neg < 1 or n_train < 2:
        raise SplitError("train side cannot hold both a positive and a negative bag")

    labels = np.array([b.label for b in dataset.bags])
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_SPLIT_TRIES):
        perm = rng.permutation(z)
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
        if (
            np.any(labels[train_idx] == POSITIVE)
            and np.any(labels[train_idx] == NEGATIVE)
            and np.any(labels[test_idx] == POSITIVE)
        ):
            train = MILDataset([dataset.bags[i] for i in train_idx], name=f"{dataset.name}-train")
            test = MILDataset([dataset.bags[i] for i in test_idx], name=f"{dataset.name}-test")
            return train, test
    raise SplitError("no permutation satisfied the split guarantees")


@dataclass(frozen=True)
class SyntheticConfig:
    """Recipe for a synthetic bag-labeled problem.

    Positive instances are drawn from ``positive_cluster_count`` Gaussian
    modes (multimodal positive class); negatives come from a uniform
    background. Positive bags receive at least one positive instance, with
    ``witness_rate`` controlling the expected proportion.
    """

    positive_cluster_count: int = 4
    cluster_spread: float = 0.5
    feature_dim: int = 2
    bags: int = 180
    positive_bag_fraction: float = 1.0 / 3.0
    instances_per_bag: tuple[int, int] = (5, 8)
    witness_rate: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.positive_cluster_count < 1:
            raise ValueError("need at least one positive cluster")
        if not 0.0 < self.witness_rate <= 1.0:
            raise ValueError("witness_rate must be in (0, 1]")
        if self.bags < 2:
            raise ValueError("need at least 2 bags")
        if not 0.0 < self.positive_bag_fraction < 1.0:
            raise ValueError("positive_bag_fraction must be in (0, 1)")
        lo, hi = self.instances_per_bag
        if lo < 1 or hi < lo:
            raise ValueError(f"bad instances_per_bag range {self.instances_per_bag}")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.cluster_spread <= 0:
            raise ValueError("cluster_spread must be positive")


_POS_CENTER_BOX = 4.0
_BACKGROUND_BOX = 6.0
_BG_SPREAD_FACTOR = 2.0
_CENTER_TRIES = 200


def _separated_centers(rng: np.random.Generator, count: int, dim: int,
                       avoid: np.ndarray, min_distance: float) -> np.ndarray:
    """Uniform draws kept away from ``avoid`` and each other; after a try
    budget the candidate with the largest clearance wins, so generation
    always terminates."""
    centers = np.empty((count, dim))
    for k in range(count):
        taken = np.vstack([avoid, centers[:k]]) if k or avoid.size else avoid
        best, best_clearance = None, -np.inf
        for _ in range(_CENTER_TRIES):
            candidate = rng.uniform(-_POS_CENTER_BOX, _POS_CENTER_BOX, size=dim)
            clearance = (
                np.min(np.linalg.norm(taken - candidate, axis=1)) if taken.size else np.inf
            )
            if clearance > best_clearance:
                best, best_clearance = candidate, clearance
            if clearance >= min_distance:
                break
        centers[k] = best
    return centers


def generate_synthetic(config: SyntheticConfig) -> MILDataset:
    """Generate a synthetic dataset; label consistency holds by construction.

    Negative instances come from a set of broad background modes; positive
    witnesses from tighter modes kept clear of them. Witnesses of one bag
    share a mode: instances of the same object look alike, and rarely-drawn
    modes stay hidden until explored.
    """
    rng = np.random.default_rng(config.seed)
    d = config.feature_dim
    n_pos_bags = min(max(int(config.bags * config.positive_bag_fraction + 0.5), 1), config.bags - 1)
    bg_spread = _BG_SPREAD_FACTOR * config.cluster_spread
    n_bg_modes = max(4, 2 * config.positive_cluster_count)
    bg_centers = rng.uniform(-_BACKGROUND_BOX, _BACKGROUND_BOX, size=(n_bg_modes, d))
    centers = _separated_centers(rng, config.positive_cluster_count, d, bg_centers,
                                 min_distance=2.0 * (config.cluster_spread + bg_spread))
    lo, hi = config.instances_per_bag
    sizes = rng.integers(lo, hi + 1, size=config.bags)

    bags = []
    for i in range(config.bags):
        n = int(sizes[i])
        positive = i < n_pos_bags
        if positive:
            n_wit = int(min(n, max(1, rng.binomial(n, config.witness_rate))))
        else:
            n_wit = 0
        bg_modes = rng.integers(0, n_bg_modes, size=n)
        feats = bg_centers[bg_modes] + rng.normal(0.0, bg_spread, size=(n, d))
        labels = np.full(n, NEGATIVE, dtype=np.int8)
        if n_wit:
            slots = rng.choice(n, size=n_wit, replace=False)
            mode = int(rng.integers(0, config.positive_cluster_count))
            feats[slots] = centers[mode] + rng.normal(0.0, config.cluster_spread, size=(n_wit, d))
            labels[slots] = POSITIVE
        bags.append(Bag(id=f"bag{i:04d}", label=POSITIVE if positive else NEGATIVE,
                        features=feats, true_labels=labels))
    return MILDataset(bags, name=f"synthetic-{config.seed}")
