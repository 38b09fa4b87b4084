"""Cost-sensitive binary kernel SVM trained by sequential minimal optimization.

The learner solves the soft-margin dual with per-class box constraints
(different error costs for the two classes) and exposes a real-valued
decision score; every query strategy consumes that score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

GRAM_CACHE_LIMIT = 8192
_CHI2_CHUNK = 256
_BOUND_SNAP = 1e-12


class KernelError(ValueError):
    """Invalid kernel configuration or incompatible inputs."""


class UndefinedRatioError(ValueError):
    """Class imbalance ratio requested without any negative label."""


class SingleClassError(ValueError):
    """Training requires both classes to be present."""


class ConvergenceError(RuntimeError):
    """Optimizer hit its iteration cap before reaching tolerance."""

    def __init__(self, iterations: int, violation: float, tolerance: float):
        self.iterations = iterations
        self.violation = violation
        self.tolerance = tolerance
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(KKT violation {violation:.3e} > tolerance {tolerance:.3e})"
        )


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters. ``gamma`` applies to the RBF only."""

    kind: str = "rbf"
    gamma: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("rbf", "chi2"):
            raise KernelError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf":
            if self.gamma is None or self.gamma <= 0:
                raise KernelError("rbf kernel needs gamma > 0")


@dataclass(frozen=True)
class CostSpec:
    """Per-class misclassification costs (box constraints in the dual)."""

    c_positive: float
    c_negative: float

    def __post_init__(self) -> None:
        if self.c_positive <= 0 or self.c_negative <= 0:
            raise ValueError("misclassification costs must be positive")


def imbalance_ratio(labels) -> float:
    """Positive/negative count ratio over the supplied labels."""
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == -1))
    if n_neg == 0:
        raise UndefinedRatioError("imbalance ratio undefined without negative labels")
    return n_pos / n_neg


def costs_from_ratio(base_cost: float, labels) -> CostSpec:
    """Cost pair with the negative-class cost scaled by the imbalance ratio."""
    rho = imbalance_ratio(labels)
    return CostSpec(c_positive=base_cost, c_negative=rho * base_cost)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Kernel value for a single pair of vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise KernelError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return float(kernel_matrix(spec, x[None, :], y[None, :])[0, 0])


def kernel_matrix(spec: KernelSpec, X, Y) -> np.ndarray:
    """Dense kernel matrix between two stacks of row vectors."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise KernelError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if spec.kind == "rbf":
        sq = (
            np.sum(X * X, axis=1)[:, None]
            + np.sum(Y * Y, axis=1)[None, :]
            - 2.0 * (X @ Y.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-spec.gamma * sq)
    # additive chi-squared: sum_i 2 x_i y_i / (x_i + y_i), 0/0 terms are 0;
    # chunked over rows to bound the (rows, cols, dim) broadcast
    if np.any(X < 0) or np.any(Y < 0):
        raise KernelError("chi-squared kernel requires non-negative features")
    out = np.empty((X.shape[0], Y.shape[0]), dtype=np.float64)
    for start in range(0, X.shape[0], _CHI2_CHUNK):
        xc = X[start : start + _CHI2_CHUNK]
        num = 2.0 * xc[:, None, :] * Y[None, :, :]
        den = xc[:, None, :] + Y[None, :, :]
        terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        out[start : start + _CHI2_CHUNK] = terms.sum(axis=2)
    return out


def kernel_diag(spec: KernelSpec, X) -> np.ndarray:
    """Self-similarities k(x, x) without forming the full matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if spec.kind == "rbf":
        return np.ones(X.shape[0])
    if np.any(X < 0):
        raise KernelError("chi-squared kernel requires non-negative features")
    return X.sum(axis=1)  # 2x*x/(x+x) reduces to x, summed over features


@dataclass(frozen=True)
class TrainedModel:
    """Immutable SVM state; the decision function is reproducible bit-for-bit.

    ``dual_coef`` holds the signed products alpha_i * y_i for the support
    vectors. ``sv_indices`` tracks positions in the training matrix so
    callers holding a precomputed Gram matrix can score without touching
    kernels again.
    """

    kernel: KernelSpec
    costs: CostSpec
    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    sv_indices: np.ndarray
    dual_objective: float
    n_iterations: int
    kkt_gap: float

    def __post_init__(self) -> None:
        for name in ("support_vectors", "dual_coef", "sv_indices"):
            arr = getattr(self, name)
            arr.setflags(write=False)


@njit(cache=True)
def _smo_loop(K, y, C, tolerance, max_iterations):  # pragma: no cover - compiled
    """Most-violating-pair SMO over a full kernel matrix.

    Maintains yg = -y * gradient incrementally; up/low track which duals
    may still move in each direction. First index wins ties.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    yg = y.copy()
    up = np.empty(n, np.bool_)
    low = np.empty(n, np.bool_)
    for k in range(n):
        up[k] = y[k] > 0.0
        low[k] = y[k] < 0.0
    it = 0
    gap = np.inf
    while it < max_iterations:
        it += 1
        i = -1
        hi = -np.inf
        for k in range(n):
            if up[k] and yg[k] > hi:
                hi = yg[k]
                i = k
        j = -1
        lo = np.inf
        for k in range(n):
            if low[k] and yg[k] < lo:
                lo = yg[k]
                j = k
        gap = hi - lo
        if gap <= tolerance:
            break
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        step = gap / quad
        cap_i = (C[i] - alpha[i]) if y[i] > 0.0 else alpha[i]
        cap_j = alpha[j] if y[j] > 0.0 else (C[j] - alpha[j])
        if cap_i < step:
            step = cap_i
        if cap_j < step:
            step = cap_j
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        for k in (i, j):  # snap to the box so bound membership stays exact
            if alpha[k] < _BOUND_SNAP:
                alpha[k] = 0.0
            elif alpha[k] > C[k] - _BOUND_SNAP:
                alpha[k] = C[k]
            up[k] = (y[k] > 0.0 and alpha[k] < C[k]) or (y[k] < 0.0 and alpha[k] > 0.0)
            low[k] = (y[k] < 0.0 and alpha[k] < C[k]) or (y[k] > 0.0 and alpha[k] > 0.0)
        for k in range(n):
            yg[k] -= step * (K[k, i] - K[k, j])
    return alpha, yg, it, gap


def _smo_loop_ondemand(X, y, C, kernel, tolerance, max_iterations):
    """Same procedure with kernel columns recomputed per iteration; used
    when the instance count exceeds the Gram cache limit."""
    n = y.size
    diag = kernel_diag(kernel, X)
    alpha = np.zeros(n)
    yg = y.copy()
    it = 0
    gap = np.inf
    while it < max_iterations:
        it += 1
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        j = int(np.argmin(np.where(low, yg, np.inf)))
        gap = float(yg[i] - yg[j])
        if gap <= tolerance:
            break
        ki = kernel_matrix(kernel, X, X[i : i + 1]).ravel()
        kj = kernel_matrix(kernel, X, X[j : j + 1]).ravel()
        quad = diag[i] + diag[j] - 2.0 * ki[j]
        if quad <= 0:
            quad = 1e-12
        step = min(gap / quad,
                   (C[i] - alpha[i]) if y[i] > 0 else alpha[i],
                   alpha[j] if y[j] > 0 else (C[j] - alpha[j]))
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        for k in (i, j):
            if alpha[k] < _BOUND_SNAP:
                alpha[k] = 0.0
            elif alpha[k] > C[k] - _BOUND_SNAP:
                alpha[k] = C[k]
        yg -= step * (ki - kj)
    return alpha, yg, it, gap


def fit(X, y, kernel: KernelSpec, costs: CostSpec, tolerance: float = 1e-3,
        max_iterations: int | None = None, gram: np.ndarray | None = None) -> TrainedModel:
    """Train on instances by solving the cost-sensitive soft-margin dual.

    Working pairs are chosen by maximal KKT violation (most violating pair),
    ties broken toward the lowest instance index, so identical inputs yield
    identical models. ``gram`` may supply a precomputed training kernel
    matrix; otherwise one is computed (and kept in full only up to
    ``GRAM_CACHE_LIMIT`` instances, with per-column recomputation beyond).

    Raises ``ConvergenceError`` with the final violation if the iteration
    cap is reached, and ``SingleClassError`` when only one class is present.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.size
    if X.shape[0] != n:
        raise ValueError(f"{X.shape[0]} instances but {n} labels")
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    if not (np.any(y == 1) and np.any(y == -1)):
        raise SingleClassError("training set must contain both classes")
    if max_iterations is None:
        max_iterations = max(200_000, 100 * n)

    C = np.where(y > 0, costs.c_positive, costs.c_negative)
    if gram is not None:
        if gram.shape != (n, n):
            raise ValueError(f"gram matrix shape {gram.shape} does not match {n} instances")
        K = np.ascontiguousarray(gram, dtype=np.float64)
    elif n <= GRAM_CACHE_LIMIT:
        K = kernel_matrix(kernel, X, X)
    else:
        K = None

    if K is not None:
        alpha, yg, it, gap = _smo_loop(K, y, C, tolerance, max_iterations)
    else:
        alpha, yg, it, gap = _smo_loop_ondemand(X, y, C, kernel, tolerance, max_iterations)
    if gap > tolerance:
        raise ConvergenceError(max_iterations, gap, tolerance)

    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        bias = float(np.mean(yg[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        bias = float((np.max(np.where(up, yg, -np.inf)) + np.min(np.where(low, yg, np.inf))) / 2.0)

    grad = -y * yg
    objective = float(np.sum(alpha) - 0.5 * np.dot(alpha, grad + 1.0))
    sv = np.flatnonzero(alpha > 0)
    return TrainedModel(
        kernel=kernel,
        costs=costs,
        support_vectors=X[sv].copy(),
        dual_coef=(alpha[sv] * y[sv]).copy(),
        bias=bias,
        sv_indices=sv.astype(np.int64),
        dual_objective=objective,
        n_iterations=it,
        kkt_gap=max(float(gap), 0.0),
    )


def decision_scores(model: TrainedModel, X) -> np.ndarray:
    """Real-valued scores for a stack of vectors."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.support_vectors.shape[1]:
        raise KernelError(f"dimension mismatch: {X.shape[1]} vs {model.support_vectors.shape[1]}")
    K = kernel_matrix(model.kernel, model.support_vectors, X)
    return model.dual_coef @ K + model.bias


def decision_scores_from_gram(model: TrainedModel, gram_rows: np.ndarray) -> np.ndarray:
    """Scores from a precomputed kernel block of shape (n_train, n_eval).

    ``gram_rows[i, j]`` must be the kernel between training instance ``i``
    and evaluation instance ``j``; agrees exactly with ``decision_scores``.
    """
    return model.dual_coef @ gram_rows[model.sv_indices] + model.bias


def decision_score(model: TrainedModel, x) -> float:
    return float(decision_scores(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def predict(model: TrainedModel, X) -> np.ndarray:
    """Hard labels from score signs; a score of exactly 0 maps to +1."""
    return labels_from_scores(decision_scores(model, X))


def labels_from_scores(scores: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(scores) >= 0.0, 1, -1).astype(np.int8)


_MODEL_FORMAT_VERSION = 1


def save_model(model: TrainedModel, path: str | Path) -> None:
    """Serialize to a self-describing npz container; round-trip is bit-exact."""
    meta = {
        "format_version": _MODEL_FORMAT_VERSION,
        "kernel_kind": model.kernel.kind,
        "kernel_gamma": model.kernel.gamma,
        "c_positive": model.costs.c_positive,
        "c_negative": model.costs.c_negative,
        "n_iterations": model.n_iterations,
        "dual_objective": model.dual_objective,
        "kkt_gap": model.kkt_gap,
    }
    np.savez(
        Path(path),
        meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
        support_vectors=model.support_vectors,
        dual_coef=model.dual_coef,
        bias=np.float64(model.bias),
        sv_indices=model.sv_indices,
    )


def load_model(path: str | Path) -> TrainedModel:
    with np.load(Path(path)) as payload:
        meta = json.loads(payload["meta"].tobytes().decode("utf-8"))
        if meta["format_version"] != _MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {meta['format_version']}")
        return TrainedModel(
            kernel=KernelSpec(kind=meta["kernel_kind"], gamma=meta["kernel_gamma"]),
            costs=CostSpec(c_positive=meta["c_positive"], c_negative=meta["c_negative"]),
            support_vectors=payload["support_vectors"].copy(),
            dual_coef=payload["dual_coef"].copy(),
            bias=float(payload["bias"]),
            sv_indices=payload["sv_indices"].copy(),
            dual_objective=float(meta["dual_objective"]),
            n_iterations=int(meta["n_iterations"]),
            kkt_gap=float(meta["kkt_gap"]),
        )
