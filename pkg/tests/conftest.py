from __future__ import annotations

import numpy as np
import pytest

from mialkit.data import Bag, MILDataset


def make_bag(bag_id: str, label: int, rows, truth) -> Bag:
    return Bag(id=bag_id, label=label, features=np.asarray(rows, dtype=float),
               true_labels=np.asarray(truth, dtype=np.int8))


@pytest.fixture
def tiny_dataset() -> MILDataset:
    """Two positive and two negative bags in 1-D, labels fully known."""
    bags = [
        make_bag("p0", 1, [[0.0], [3.0]], [1, -1]),
        make_bag("p1", 1, [[0.2], [0.4], [3.5]], [1, 1, -1]),
        make_bag("n0", -1, [[2.8], [3.2]], [-1, -1]),
        make_bag("n1", -1, [[4.0]], [-1]),
    ]
    return MILDataset(bags, name="tiny")
