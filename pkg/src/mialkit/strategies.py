"""Bag selection strategies for the query loop.

All strategies rank only unqueried positive bags: negative-bag instance
labels are already determined by the bag label, so querying them buys
nothing. Ties break toward the lowest bag index, then the lowest instance
index, so selections are reproducible regardless of enumeration order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import MultiLevelClustering
from .data import MILDataset, POSITIVE
from .svm import TrainedModel, decision_scores, labels_from_scores

_LOG_HALF = np.log(0.5)
_EXPLORE_NORM = 1.0 - np.exp(-1.0)


class EmptyCandidateError(ValueError):
    """No unqueried positive bag is left to select."""


@dataclass
class QueryState:
    """Working per-instance labels plus the queried/candidate bag sets.

    ``labels`` holds the current hypothesis (-1/+1 per instance, flattened
    dataset order); ``known`` marks instances whose true label has been
    established, either by a query or because their bag is negative.
    Candidate and queried bags are kept as indices into ``bag_ids``, with
    candidates maintained in ascending index order.
    """

    labels: np.ndarray
    known: np.ndarray
    bag_ids: tuple[str, ...]
    queried: list[int] = field(default_factory=list)
    candidates: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.known = np.asarray(self.known, dtype=bool)
        if self.labels.shape != self.known.shape:
            raise ValueError("labels and known flags must align")
        overlap = set(self.queried) & set(self.candidates)
        if overlap:
            raise ValueError(f"bags {sorted(overlap)} are both queried and candidates")
        self.candidates = sorted(self.candidates)

    @property
    def finished(self) -> bool:
        return not self.candidates

    @property
    def queried_bag_ids(self) -> list[str]:
        return [self.bag_ids[i] for i in self.queried]

    @property
    def candidate_bag_ids(self) -> list[str]:
        return [self.bag_ids[i] for i in self.candidates]

    def apply_answer(self, dataset: MILDataset, bag_id: str, answer) -> None:
        """Record oracle labels for one candidate bag and retire it."""
        index = dataset.index_of(bag_id)
        if index not in self.candidates:
            raise ValueError(f"bag {bag_id!r} is not an open candidate")
        sl = dataset.bag_slices[index]
        answer = np.asarray(answer, dtype=np.int8)
        if answer.shape != (sl.stop - sl.start,):
            raise ValueError(f"bag {bag_id!r}: expected {sl.stop - sl.start} labels, got {answer.shape}")
        self.labels[sl] = answer
        self.known[sl] = True
        self.candidates.remove(index)
        self.queried.append(index)


@dataclass(frozen=True)
class ClusterStats:
    """Composition of one cluster: bag provenance, label split, unexplored share."""

    beta: float   # fraction of members that come from positive bags
    zeta: float   # fraction of members whose working label is positive
    alpha: float  # fraction of members whose true label is still unknown

    def __post_init__(self) -> None:
        for name in ("beta", "zeta", "alpha"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class BagScore:
    bag_id: str
    score: float


def informativeness(score):
    """exp(-2|s|): maximal on the decision boundary, decays with margin."""
    return np.exp(-2.0 * np.abs(score))


def aggregate_bag(instance_scores) -> float:
    """Bag informativeness: sum of instance informativeness values."""
    scores = np.asarray(instance_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot aggregate an empty bag")
    return float(np.sum(informativeness(scores)))


def _disagreement(p: np.ndarray) -> np.ndarray:
    """Entropy-shaped term, 1 at p=0.5 and 0 at the endpoints (0*log 0 := 0)."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    interior = (p > 0.0) & (p < 1.0)
    pi = p[interior]
    out[interior] = (pi * np.log(pi) + (1.0 - pi) * np.log(1.0 - pi)) / _LOG_HALF
    return out


def _exploration(alpha) -> np.ndarray:
    return (1.0 - np.exp(-np.asarray(alpha, dtype=np.float64))) / _EXPLORE_NORM


def cluster_criterion(stats: ClusterStats) -> float:
    """Product of bag disagreement, label disagreement and exploration terms."""
    return float(
        _disagreement(np.asarray(stats.beta))
        * _disagreement(np.asarray(stats.zeta))
        * _exploration(stats.alpha)
    )


def cbas_instance_scores(state: QueryState, dataset: MILDataset,
                         clusterings: MultiLevelClustering,
                         predictions: np.ndarray) -> np.ndarray:
    """Per-instance informativeness accumulated over all clustering levels.

    Each cluster contributes its criterion to every member. Working labels
    use the true label where known and the classifier's prediction
    elsewhere; bag provenance and the unexplored fraction come from the
    query state alone.
    """
    from_pos_bag = (dataset.instance_bag_labels == POSITIVE).astype(np.float64)
    zeta_labels = np.where(state.known, state.labels, predictions)
    positive = (zeta_labels == POSITIVE).astype(np.float64)
    unknown = (~state.known).astype(np.float64)

    phi = np.zeros(len(state.labels))
    for level in clusterings.levels:
        k = int(level.max()) + 1
        members = np.bincount(level, minlength=k).astype(np.float64)
        beta = np.bincount(level, weights=from_pos_bag, minlength=k) / members
        zeta = np.bincount(level, weights=positive, minlength=k) / members
        alpha = np.bincount(level, weights=unknown, minlength=k) / members
        criterion = _disagreement(beta) * _disagreement(zeta) * _exploration(alpha)
        phi += criterion[level]
    return phi


def _require_candidates(state: QueryState) -> list[int]:
    if not state.candidates:
        raise EmptyCandidateError("candidate set is empty")
    return state.candidates


def _sum_per_bag(dataset: MILDataset, candidates: list[int], values: np.ndarray) -> np.ndarray:
    return np.array([float(np.sum(values[dataset.bag_slices[i]])) for i in candidates])


def agin_bag_scores(state: QueryState, dataset: MILDataset, instance_scores: np.ndarray) -> list[BagScore]:
    candidates = _require_candidates(state)
    totals = _sum_per_bag(dataset, candidates, np.asarray(informativeness(instance_scores)))
    return [BagScore(dataset.bags[i].id, float(g)) for i, g in zip(candidates, totals)]


def margin_bag_scores(state: QueryState, dataset: MILDataset, instance_scores: np.ndarray) -> list[BagScore]:
    """Per-bag minimum score magnitude; the selection minimizes this."""
    candidates = _require_candidates(state)
    magnitude = np.abs(np.asarray(instance_scores, dtype=np.float64))
    return [
        BagScore(dataset.bags[i].id, float(np.min(magnitude[dataset.bag_slices[i]])))
        for i in candidates
    ]


def cbas_bag_scores(state: QueryState, dataset: MILDataset, clusterings: MultiLevelClustering,
                    instance_scores: np.ndarray) -> list[BagScore]:
    candidates = _require_candidates(state)
    phi = cbas_instance_scores(state, dataset, clusterings, labels_from_scores(instance_scores))
    totals = _sum_per_bag(dataset, candidates, phi)
    return [BagScore(dataset.bags[i].id, float(g)) for i, g in zip(candidates, totals)]


def _instance_scores(model: TrainedModel, dataset: MILDataset, scores) -> np.ndarray:
    if scores is None:
        scores = decision_scores(model, dataset.features)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (dataset.n_instances,):
        raise ValueError(f"expected {dataset.n_instances} instance scores, got {scores.shape}")
    return scores


def _argmax_bag(ranked: list[BagScore]) -> str:
    best = ranked[0]
    for entry in ranked[1:]:
        if entry.score > best.score:
            best = entry
    return best.bag_id


def select_agin(state: QueryState, model: TrainedModel, dataset: MILDataset, scores=None) -> str:
    """Bag with the largest aggregated informativeness."""
    return _argmax_bag(agin_bag_scores(state, dataset, _instance_scores(model, dataset, scores)))


def select_simple_margin(state: QueryState, model: TrainedModel, dataset: MILDataset,
                         scores=None) -> str:
    """Bag containing the single instance closest to the decision boundary."""
    instance_scores = _instance_scores(model, dataset, scores)
    candidates = _require_candidates(state)
    magnitude = np.abs(instance_scores)
    best_bag, best_value = candidates[0], np.inf
    for i in candidates:
        value = float(np.min(magnitude[dataset.bag_slices[i]]))
        if value < best_value:
            best_bag, best_value = i, value
    return dataset.bags[best_bag].id


def select_random(state: QueryState, rng: np.random.Generator | int) -> str:
    """Uniform draw over candidate bags from a caller-owned seeded stream."""
    candidates = _require_candidates(state)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return state.bag_ids[candidates[int(rng.integers(0, len(candidates)))]]


def select_cbas(state: QueryState, model: TrainedModel, clusterings: MultiLevelClustering,
                dataset: MILDataset, scores=None) -> str:
    """Bag with the largest accumulated cluster informativeness."""
    return _argmax_bag(
        cbas_bag_scores(state, dataset, clusterings, _instance_scores(model, dataset, scores))
    )
