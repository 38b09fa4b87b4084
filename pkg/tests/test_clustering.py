from __future__ import annotations

import math

import numpy as np
import pytest

from mialkit.clustering import (ClusteringError, Dendrogram, build_dendrogram,
                                cut_at_threshold, cut_levels, export_links_csv,
                                inconsistency)

from oracles import (linkage_merge_sets, partitions_equal, threshold_cut_oracle,
                     ward_merge_oracle)


def manual_dendrogram(rows) -> Dendrogram:
    links = np.asarray(rows, dtype=np.float64)
    return Dendrogram(links=links, leaf_count=links.shape[0] + 1)


class TestBuild:
    def test_nearest_pair_merges_first(self):
        d = build_dendrogram(np.array([[0.0], [1.0], [10.0]]))
        assert sorted(d.links[0, :2].astype(int).tolist()) == [0, 1]

    def test_duplicates_merge_at_zero(self):
        d = build_dendrogram(np.array([[1.5, 2.0], [1.5, 2.0], [9.0, 9.0]]))
        assert d.links[0, 2] == 0.0

    def test_requires_two_instances(self):
        with pytest.raises(ClusteringError):
            build_dendrogram(np.array([[1.0]]))

    def test_merge_sequence_matches_bruteforce(self):
        for seed in range(8):
            rng = np.random.default_rng(seed)
            points = rng.normal(0.0, 1.0, (int(rng.integers(5, 30)), int(rng.integers(1, 4))))
            d = build_dendrogram(points)
            got = linkage_merge_sets(d.links, d.leaf_count)
            expected = ward_merge_oracle(points)
            for (ga, gb, gh), (ea, eb, eh) in zip(got, expected):
                assert {ga, gb} == {ea, eb}
                assert gh == pytest.approx(eh, rel=1e-9, abs=1e-9)

    def test_alternative_linkage_stub(self):
        rng = np.random.default_rng(40)
        points = rng.normal(size=(9, 2))
        d = build_dendrogram(points, method="complete")
        assert d.links.shape == (8, 4)
        with pytest.raises(ClusteringError):
            build_dendrogram(points, metric="cityblock")

    def test_invariant_checks(self):
        with pytest.raises(ClusteringError):
            Dendrogram(links=np.array([[0.0, 0.0, 1.0, 2.0]]), leaf_count=2)  # child reused
        with pytest.raises(ClusteringError):
            Dendrogram(links=np.array([[0.0, 5.0, 1.0, 2.0]]), leaf_count=2)  # bad node
        with pytest.raises(ClusteringError):
            manual_dendrogram([[0, 1, 2.0, 2], [2, 3, 1.0, 3]])  # decreasing heights


class TestInconsistency:
    def test_hand_computed_window(self):
        # link 1 sees heights {1, 3}: mean 2, sample std sqrt(2)
        d = manual_dendrogram([[0, 1, 1.0, 2], [2, 3, 3.0, 3]])
        table = inconsistency(d, depth=16)
        assert table.delta[0] == 0.0  # singleton window
        assert table.delta[1] == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)

    def test_equal_heights_give_zero(self):
        d = manual_dendrogram([[0, 1, 2.0, 2], [2, 3, 2.0, 2], [4, 5, 2.0, 4]])
        assert np.all(inconsistency(d, depth=16).delta == 0.0)

    def test_depth_one_is_all_zero(self):
        rng = np.random.default_rng(3)
        d = build_dendrogram(rng.normal(size=(12, 2)))
        assert np.all(inconsistency(d, depth=1).delta == 0.0)

    def test_depth_two_window(self):
        # three-leaf chain: depth 2 window of the top link is {h_top, h_child}
        d = manual_dendrogram([[0, 1, 2.0, 2], [2, 3, 6.0, 3]])
        table = inconsistency(d, depth=2)
        w = np.array([6.0, 2.0])
        assert table.delta[1] == pytest.approx((6.0 - w.mean()) / w.std(ddof=1))

    def test_depth_limits_window(self):
        # chain of merges: leaf+leaf, +leaf, +leaf with increasing heights
        d = manual_dendrogram([[0, 1, 1.0, 2], [4, 2, 2.0, 3], [5, 3, 6.0, 4]])
        deep = inconsistency(d, depth=16).delta[2]
        shallow = inconsistency(d, depth=2).delta[2]
        w_deep = np.array([6.0, 2.0, 1.0])
        w_shallow = np.array([6.0, 2.0])
        assert deep == pytest.approx((6.0 - w_deep.mean()) / w_deep.std(ddof=1))
        assert shallow == pytest.approx((6.0 - w_shallow.mean()) / w_shallow.std(ddof=1))

    def test_bad_depth(self):
        d = manual_dendrogram([[0, 1, 1.0, 2]])
        with pytest.raises(ClusteringError):
            inconsistency(d, depth=0)


class TestCuts:
    def test_threshold_above_max_gives_one_cluster(self):
        rng = np.random.default_rng(4)
        d = build_dendrogram(rng.normal(size=(10, 2)))
        table = inconsistency(d, 16)
        labels = cut_at_threshold(d, table, float(table.delta.max()) + 1.0)
        assert len(set(labels.tolist())) == 1

    def test_threshold_at_or_below_min_gives_singletons(self):
        rng = np.random.default_rng(5)
        d = build_dendrogram(rng.normal(size=(8, 2)))
        table = inconsistency(d, 16)
        labels = cut_at_threshold(d, table, float(table.delta.min()))
        assert len(set(labels.tolist())) == 8

    def test_two_blobs_separated_at_some_level(self):
        rng = np.random.default_rng(6)
        blob_a = rng.normal(0.0, 0.2, (5, 2))
        blob_b = rng.normal(8.0, 0.2, (5, 2))
        points = np.vstack([blob_a, blob_b])
        d = build_dendrogram(points)
        table = inconsistency(d, 16)
        ml = cut_levels(d, table, 20)
        want = [set(range(5)), set(range(5, 10))]
        assert any(partitions_equal(level, want) for level in ml.levels)

    def test_cut_matches_pairwise_oracle(self):
        for seed in range(6):
            rng = np.random.default_rng(seed + 10)
            points = rng.normal(0.0, 1.0, (int(rng.integers(6, 20)), 2))
            d = build_dendrogram(points)
            table = inconsistency(d, 16)
            grid = np.concatenate([[table.delta.min() - 0.5, table.delta.max() + 0.5],
                                   np.unique(table.delta)])
            for t in grid:
                got = cut_at_threshold(d, table, float(t))
                expected = threshold_cut_oracle(d.links, d.leaf_count, table.delta, float(t))
                assert partitions_equal(got, expected)

    def test_levels_are_partitions_and_refine(self):
        rng = np.random.default_rng(30)
        points = rng.normal(0.0, 1.0, (40, 3))
        d = build_dendrogram(points)
        ml = cut_levels(d, inconsistency(d, 16), 20)
        assert ml.level_count <= 20
        n = points.shape[0]
        for level in ml.levels:
            assert level.shape == (n,)
            assert set(level.tolist()) == set(range(int(level.max()) + 1))  # cover, contiguous ids
        for coarse, fine in zip(ml.levels, ml.levels[1:]):
            owners = {}
            for i in range(n):
                key = int(fine[i])
                if key in owners:
                    assert owners[key] == int(coarse[i])  # each fine cluster in one coarse cluster
                else:
                    owners[key] = int(coarse[i])

    def test_permutation_invariant_partitions(self):
        rng = np.random.default_rng(31)
        points = rng.normal(0.0, 1.0, (15, 2))
        perm = rng.permutation(15)
        d1 = build_dendrogram(points)
        d2 = build_dendrogram(points[perm])
        t1 = inconsistency(d1, 16)
        t2 = inconsistency(d2, 16)
        m1 = cut_levels(d1, t1, 20)
        m2 = cut_levels(d2, t2, 20)
        assert m1.level_count == m2.level_count
        for l1, l2 in zip(m1.levels, m2.levels):
            sets1 = {frozenset(np.flatnonzero(l1 == c).tolist()) for c in set(l1.tolist())}
            sets2 = {frozenset(perm[np.flatnonzero(l2 == c)].tolist()) for c in set(l2.tolist())}
            assert sets1 == sets2

    def test_fewer_distinct_values_than_levels(self):
        d = manual_dendrogram([[0, 1, 2.0, 2], [2, 3, 2.0, 2], [4, 5, 2.0, 4]])
        ml = cut_levels(d, inconsistency(d, 16), 20)
        assert ml.level_count == 1  # all deltas identical

    def test_level_count_validation(self):
        d = manual_dendrogram([[0, 1, 1.0, 2]])
        with pytest.raises(ClusteringError):
            cut_levels(d, inconsistency(d, 16), 0)


def test_export_links_csv(tmp_path):
    rng = np.random.default_rng(7)
    d = build_dendrogram(rng.normal(size=(6, 2)))
    table = inconsistency(d, 16)
    path = tmp_path / "links.csv"
    export_links_csv(d, table, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "link,left,right,height,size,inconsistency"
    assert len(lines) == 6  # header + five links
