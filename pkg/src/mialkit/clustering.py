"""Agglomerative clustering with Ward linkage, link inconsistency scores
and nested multi-granularity tree cuts.

The merge tree is built once per training set (instance geometry never
changes during a session) and reused by the cluster-based query strategy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import linkage

DEFAULT_INCONSISTENCY_DEPTH = 16
DEFAULT_CUT_LEVELS = 20


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class Dendrogram:
    """Agglomerative merge tree in the standard linkage-matrix encoding.

    Row k of ``links`` merges nodes ``links[k, 0]`` and ``links[k, 1]``
    at height ``links[k, 2]`` into node ``leaf_count + k`` of size
    ``links[k, 3]``. Node ids below ``leaf_count`` are leaves.
    """

    links: np.ndarray
    leaf_count: int

    def __post_init__(self) -> None:
        links = np.ascontiguousarray(self.links, dtype=np.float64)
        if links.shape != (self.leaf_count - 1, 4):
            raise ClusteringError(
                f"expected {self.leaf_count - 1} links of 4 fields, got {links.shape}"
            )
        children = links[:, :2].astype(np.int64)
        seen = np.zeros(2 * self.leaf_count - 1, dtype=bool)
        for k in range(links.shape[0]):
            for child in children[k]:
                if not 0 <= child < self.leaf_count + k:
                    raise ClusteringError(f"link {k} references invalid node {child}")
                if seen[child]:
                    raise ClusteringError(f"node {child} appears as a child twice")
                seen[child] = True
        if np.any(np.diff(links[:, 2]) < 0):
            raise ClusteringError("link heights must be non-decreasing")
        links.setflags(write=False)
        object.__setattr__(self, "links", links)

    @property
    def heights(self) -> np.ndarray:
        return self.links[:, 2]

    def children_links(self, k: int) -> tuple[int, int]:
        """Indices of the child links of link k; -1 marks a leaf child."""
        left, right = int(self.links[k, 0]), int(self.links[k, 1])
        return (left - self.leaf_count if left >= self.leaf_count else -1,
                right - self.leaf_count if right >= self.leaf_count else -1)


def build_dendrogram(instances, method: str = "ward", metric: str = "euclidean") -> Dendrogram:
    """Agglomerate instances, by default under Ward linkage on Euclidean
    distances. Other linkages/metrics are passed through unvalidated for
    experimentation; Ward itself is only defined on Euclidean distances."""
    X = np.ascontiguousarray(np.atleast_2d(instances), dtype=np.float64)
    if X.shape[0] < 2:
        raise ClusteringError(f"need at least 2 instances, got {X.shape[0]}")
    if method == "ward" and metric != "euclidean":
        raise ClusteringError("ward linkage requires the euclidean metric")
    return Dendrogram(links=linkage(X, method=method, metric=metric), leaf_count=X.shape[0])


@dataclass(frozen=True)
class InconsistencyTable:
    """Per-link inconsistency coefficients over a fixed depth window."""

    delta: np.ndarray
    depth: int

    def __post_init__(self) -> None:
        delta = np.ascontiguousarray(self.delta, dtype=np.float64)
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)


def inconsistency(dendrogram: Dendrogram, depth: int = DEFAULT_INCONSISTENCY_DEPTH) -> InconsistencyTable:
    """Normalized height deviation of each link from the links beneath it.

    The window of link k holds k itself plus all links reachable within
    ``depth - 1`` child steps. The coefficient is
    ``(h_k - mean) / std`` with the sample standard deviation; windows
    with zero spread (including singletons) get 0.
    """
    if depth < 1:
        raise ClusteringError("depth must be >= 1")
    heights = dendrogram.heights
    n_links = heights.size
    delta = np.zeros(n_links)
    for k in range(n_links):
        window = []
        stack = [(k, depth)]
        while stack:
            link, remaining = stack.pop()
            window.append(heights[link])
            if remaining > 1:
                for child in dendrogram.children_links(link):
                    if child >= 0:
                        stack.append((child, remaining - 1))
        if len(window) < 2:
            continue
        w = np.array(window)
        sigma = w.std(ddof=1)
        if sigma > 0:
            delta[k] = (heights[k] - w.mean()) / sigma
    return InconsistencyTable(delta=delta, depth=depth)


@dataclass(frozen=True)
class MultiLevelClustering:
    """Nested flat clusterings ordered coarse to fine.

    ``levels[l][i]`` is the cluster id of instance i at level l. Ids are
    assigned by first leaf occurrence, so partitions compare across
    permutations of the input set.
    """

    levels: tuple[np.ndarray, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self) -> None:
        for level in self.levels:
            level.setflags(write=False)

    @property
    def level_count(self) -> int:
        return len(self.levels)


def _cut_components(dendrogram: Dendrogram, honored: np.ndarray) -> np.ndarray:
    """Leaf partition from merging along honored links.

    A merge only takes effect if the clusters below it were themselves
    formed, so each cluster is a maximal subtree whose links are all
    honored. Child links precede parents in the matrix, which makes a
    single forward pass sufficient.
    """
    n = dendrogram.leaf_count
    parent = np.arange(2 * n - 1, dtype=np.int64)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    ok = np.zeros(n - 1, dtype=bool)
    for k in range(n - 1):
        lk, rk = dendrogram.children_links(k)
        if honored[k] and (lk < 0 or ok[lk]) and (rk < 0 or ok[rk]):
            ok[k] = True
            node = n + k
            for child in (int(dendrogram.links[k, 0]), int(dendrogram.links[k, 1])):
                parent[find(child)] = find(node)

    labels = np.empty(n, dtype=np.int64)
    remap: dict[int, int] = {}
    for leaf in range(n):
        root = find(leaf)
        labels[leaf] = remap.setdefault(root, len(remap))
    return labels


def cut_at_threshold(dendrogram: Dendrogram, table: InconsistencyTable, threshold: float) -> np.ndarray:
    """Flat clustering at one threshold; links join only where delta < threshold."""
    return _cut_components(dendrogram, table.delta < threshold)


def cut_levels(dendrogram: Dendrogram, table: InconsistencyTable,
               level_count: int = DEFAULT_CUT_LEVELS) -> MultiLevelClustering:
    """Cut the tree at the ``level_count`` largest distinct inconsistency
    values, largest (coarsest) first.

    At threshold t, two clusters join only through links whose coefficient
    is strictly below t. Fewer distinct values than requested yields fewer
    levels.
    """
    if level_count < 1:
        raise ClusteringError("level_count must be >= 1")
    distinct = np.unique(table.delta)[::-1]
    thresholds = distinct[:level_count]
    levels = tuple(_cut_components(dendrogram, table.delta < t) for t in thresholds)
    return MultiLevelClustering(levels=levels, thresholds=tuple(float(t) for t in thresholds))


def export_links_csv(dendrogram: Dendrogram, table: InconsistencyTable, path: str | Path) -> None:
    """Per-link records (children, height, size, inconsistency) for offline inspection."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["link", "left", "right", "height", "size", "inconsistency"])
        for k in range(dendrogram.links.shape[0]):
            left, right, height, size = dendrogram.links[k]
            writer.writerow([k, int(left), int(right), repr(float(height)), int(size),
                             repr(float(table.delta[k]))])
