"""Query-loop orchestration: initialize the label hypothesis, train,
score, select a bag, apply the oracle's labels, retrain, evaluate; repeat
until no positive bag is left to query. Also runs repeated experiments
over shared splits.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import metrics, strategies, svm
from .clustering import (DEFAULT_CUT_LEVELS, DEFAULT_INCONSISTENCY_DEPTH,
                         MultiLevelClustering, build_dendrogram, cut_levels,
                         inconsistency)
from .data import MILDataset, NEGATIVE, split_train_test
from .metrics import ExperimentResult, SessionRecord
from .strategies import QueryState

STRATEGY_NAMES = ("random", "simple-margin", "agin", "cbas")
DEFAULT_TRAIN_FRACTION = 2.0 / 3.0

_HYPOTHESIS_SCORE = 1e9  # stands in for a score when reporting known labels directly


class OracleError(ValueError):
    """Simulated oracle asked for labels it does not have."""


@dataclass(frozen=True)
class SessionConfig:
    """Everything one query session depends on besides the data itself."""

    strategy: str
    kernel: svm.KernelSpec
    base_cost: float
    seed: int = 0
    cluster_levels: int = DEFAULT_CUT_LEVELS
    inconsistency_depth: int = DEFAULT_INCONSISTENCY_DEPTH
    solver_tolerance: float = 1e-3
    max_iterations: int | None = None
    standardize: bool = False
    transductive_use_hypothesis: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGY_NAMES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGY_NAMES}")
        if self.base_cost <= 0:
            raise ValueError("base_cost must be positive")
        if self.cluster_levels < 1 or self.inconsistency_depth < 1:
            raise ValueError("clustering parameters must be >= 1")


@dataclass
class SessionState:
    """Final state of a completed (or aborted) session."""

    query_state: QueryState
    model: svm.TrainedModel | None
    curves: dict[tuple[str, str], tuple[float, ...]]
    query_log: tuple[str, ...]
    audit: tuple[dict, ...]


def init_hypothesis(train: MILDataset) -> QueryState:
    """Initial working labels: every instance inherits its bag label.

    Negative-bag instances are marked known immediately (their labels are
    implied); positive-bag instances start as deliberate optimistic guesses
    and stay unknown until their bag is queried.
    """
    positives = train.positive_bag_indices()
    if not positives:
        raise ValueError("training set has no positive bag")
    return QueryState(
        labels=train.instance_bag_labels.copy(),
        known=(train.instance_bag_labels == NEGATIVE).copy(),
        bag_ids=tuple(b.id for b in train.bags),
        queried=[],
        candidates=list(positives),
    )


def oracle_answer(dataset: MILDataset, bag_id: str) -> np.ndarray:
    """Ground-truth labels for every instance of a bag (simulated oracle)."""
    bag = dataset.bags[dataset.index_of(bag_id)]
    if not bag.labels_known:
        raise OracleError(f"bag {bag_id!r} has unlabeled instances; no simulated oracle available")
    return bag.true_labels.copy()


class SessionRunner:
    """Stepwise engine behind both the simulated loop and the live service.

    Kernel blocks between the training instances (and toward the test set)
    are computed once: geometry never changes between queries, only labels
    do. Retraining is synchronous and deterministic.
    """

    def __init__(self, train: MILDataset, test: MILDataset | None, config: SessionConfig):
        self.train = train
        self.test = test
        self.config = config
        if not train.negative_bag_indices():
            raise ValueError("training set has no negative bag; the classifier needs both classes")

        self._x_train = np.asarray(train.features, dtype=np.float64)
        self._x_test = np.asarray(test.features, dtype=np.float64) if test is not None else None
        if config.standardize:
            mean = self._x_train.mean(axis=0)
            std = self._x_train.std(axis=0)
            std[std == 0] = 1.0
            self._x_train = (self._x_train - mean) / std
            if self._x_test is not None:
                self._x_test = (self._x_test - mean) / std

        self.state = init_hypothesis(train)
        self.clusterings: MultiLevelClustering | None = None
        if config.strategy == "cbas":
            dendrogram = build_dendrogram(self._x_train)
            table = inconsistency(dendrogram, config.inconsistency_depth)
            self.clusterings = cut_levels(dendrogram, table, config.cluster_levels)
        self._rng = np.random.default_rng(config.seed)

        n = self._x_train.shape[0]
        self._gram = (
            svm.kernel_matrix(config.kernel, self._x_train, self._x_train)
            if n <= svm.GRAM_CACHE_LIMIT
            else None
        )
        self._gram_test = (
            svm.kernel_matrix(config.kernel, self._x_train, self._x_test)
            if self._x_test is not None and self._gram is not None
            else None
        )

        self.eval_train = train.labels_known
        self.eval_test = test is not None and test.labels_known
        self.curves: dict[tuple[str, str], list[float]] = {
            (m, s): [] for m in metrics.METRICS for s in ("train", "test")
        }
        self.audit: list[dict] = []
        self.model: svm.TrainedModel = None  # type: ignore[assignment]
        self._train_scores: np.ndarray = None  # type: ignore[assignment]
        self._pending: tuple[str, list[strategies.BagScore]] | None = None

        self._retrain()
        self._evaluate()

    # -- training and evaluation -------------------------------------------

    def _retrain(self) -> None:
        costs = svm.costs_from_ratio(self.config.base_cost, self.state.labels)
        self.model = svm.fit(
            self._x_train,
            self.state.labels,
            self.config.kernel,
            costs,
            tolerance=self.config.solver_tolerance,
            max_iterations=self.config.max_iterations,
            gram=self._gram,
        )
        if self._gram is not None:
            self._train_scores = svm.decision_scores_from_gram(self.model, self._gram)
        else:
            self._train_scores = svm.decision_scores(self.model, self._x_train)
        self._pending = None

    def _evaluate(self) -> None:
        if self.eval_train:
            truth = self.train.instance_true_labels
            scores = self._train_scores
            predicted = svm.labels_from_scores(scores)
            if self.config.transductive_use_hypothesis:
                predicted = np.where(self.state.known, self.state.labels, predicted)
                scores = np.where(self.state.known,
                                  self.state.labels * _HYPOTHESIS_SCORE, scores)
            self.curves[("f1", "train")].append(metrics.f1_score(predicted, truth))
            self.curves[("auc_pr", "train")].append(metrics.auc_pr(scores, truth))
        if self.eval_test:
            if self._gram_test is not None:
                test_scores = svm.decision_scores_from_gram(self.model, self._gram_test)
            else:
                test_scores = svm.decision_scores(self.model, self._x_test)
            truth = self.test.instance_true_labels
            self.curves[("f1", "test")].append(metrics.f1_score(svm.labels_from_scores(test_scores), truth))
            self.curves[("auc_pr", "test")].append(metrics.auc_pr(test_scores, truth))

    # -- querying -----------------------------------------------------------

    @property
    def finished(self) -> bool:
        return self.state.finished

    @property
    def train_scores(self) -> np.ndarray:
        """Decision scores of the current model on every training instance."""
        return self._train_scores

    def propose(self) -> tuple[str, list[strategies.BagScore]]:
        """Current query choice; stable until labels are applied."""
        if self.finished:
            raise strategies.EmptyCandidateError("session is finished")
        if self._pending is None:
            name = self.config.strategy
            if name == "random":
                chosen = strategies.select_random(self.state, self._rng)
                scored: list[strategies.BagScore] = []
            elif name == "agin":
                scored = strategies.agin_bag_scores(self.state, self.train, self._train_scores)
                chosen = strategies.select_agin(self.state, self.model, self.train,
                                                scores=self._train_scores)
            elif name == "simple-margin":
                scored = strategies.margin_bag_scores(self.state, self.train, self._train_scores)
                chosen = strategies.select_simple_margin(self.state, self.model, self.train,
                                                         scores=self._train_scores)
            else:
                scored = strategies.cbas_bag_scores(self.state, self.train, self.clusterings,
                                                    self._train_scores)
                chosen = strategies.select_cbas(self.state, self.model, self.clusterings,
                                                self.train, scores=self._train_scores)
            self._pending = (chosen, scored)
        return self._pending

    def apply(self, bag_id: str, labels) -> dict:
        """Commit oracle labels for the proposed bag, retrain and evaluate."""
        chosen, scored = self.propose()
        if bag_id != chosen:
            raise ValueError(f"expected labels for bag {chosen!r}, got {bag_id!r}")
        self.state.apply_answer(self.train, bag_id, labels)
        self._retrain()
        self._evaluate()
        record = {
            "query": len(self.state.queried),
            "bag_id": bag_id,
            "strategy": self.config.strategy,
            "bag_scores": {b.bag_id: b.score for b in scored},
            "metrics": {
                f"{metric}_{split}": values[-1]
                for (metric, split), values in self.curves.items()
                if values
            },
        }
        self.audit.append(record)
        return record

    def run_with_oracle(self) -> None:
        while not self.finished:
            bag_id, _ = self.propose()
            self.apply(bag_id, oracle_answer(self.train, bag_id))

    def final_state(self) -> SessionState:
        return SessionState(
            query_state=self.state,
            model=self.model,
            curves={k: tuple(v) for k, v in self.curves.items() if v},
            query_log=tuple(self.state.queried_bag_ids),
            audit=tuple(self.audit),
        )


def run_session(train: MILDataset, test: MILDataset | None, config: SessionConfig) -> SessionState:
    """Full simulated-oracle session: one query per positive training bag."""
    runner = SessionRunner(train, test, config)
    runner.run_with_oracle()
    return runner.final_state()


def _run_single(dataset: MILDataset, train_fraction: float, base_seed: int,
                repetition: int, strategy: str, config: SessionConfig) -> SessionRecord:
    train, test = split_train_test(dataset, train_fraction, base_seed + repetition)
    cfg = replace(config, strategy=strategy, seed=base_seed + repetition)
    try:
        session = run_session(train, test, cfg)
    except svm.ConvergenceError as exc:
        return SessionRecord(strategy=strategy, repetition=repetition, curves={},
                             query_log=(), error=str(exc))
    return SessionRecord(
        strategy=strategy,
        repetition=repetition,
        curves=session.curves,
        query_log=session.query_log,
        error=None,
        audit=session.audit,
    )


def run_experiment(dataset: MILDataset, strategy_names, repetitions: int, base_seed: int,
                   config: SessionConfig, train_fraction: float = DEFAULT_TRAIN_FRACTION,
                   jobs: int = 1) -> ExperimentResult:
    """Repeat the session for every strategy over shared per-repetition splits.

    Repetition r splits with seed ``base_seed + r`` and every strategy runs
    on that same split, so strategies differ only in their bag selection.
    Solver failures are recorded on the affected record instead of aborting
    the experiment. ``jobs > 1`` distributes sessions over processes; the
    result is merged by (repetition, strategy) and identical to a serial run.
    """
    strategy_names = tuple(strategy_names)
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    for name in strategy_names:
        if name not in STRATEGY_NAMES:
            raise ValueError(f"unknown strategy {name!r}")

    tasks = [(r, s) for r in range(repetitions) for s in strategy_names]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(
                _run_single_star,
                [(dataset, train_fraction, base_seed, r, s, config) for r, s in tasks],
            ))
    else:
        records = [_run_single(dataset, train_fraction, base_seed, r, s, config)
                   for r, s in tasks]

    result = ExperimentResult(
        dataset=dataset.name,
        strategies=strategy_names,
        repetitions=repetitions,
        base_seed=base_seed,
        records=records,
    )
    return result


def _run_single_star(args) -> SessionRecord:
    return _run_single(*args)
