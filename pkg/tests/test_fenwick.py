import numpy as np

from hemogen_core.fenwick import FenwickTree


def test_find_skips_zero_weights():
    tree = FenwickTree([0.0, 2.0, 0.0, 3.0])
    assert tree.find(0.0) == 1
    assert tree.find(1.99) == 1
    assert tree.find(2.0) == 3
    assert tree.find(4.9) == 3
    assert tree.find(5.0) == 4
    assert tree.total == 5.0


def test_matches_cumulative_sums_after_updates():
    rng = np.random.default_rng(3)
    # integer weights keep every partial sum exact
    weights = rng.integers(0, 5, size=37).astype(float)
    tree = FenwickTree(weights)
    for _ in range(200):
        i = int(rng.integers(len(weights)))
        delta = float(rng.integers(0, 4)) - min(weights[i], 1.0)
        weights[i] += delta
        tree.add(i, delta)

    cumulative = np.cumsum(weights)
    for count in range(len(weights) + 1):
        assert tree.prefix(count) == (cumulative[count - 1] if count else 0.0)
    for u in rng.random(500) * cumulative[-1]:
        assert tree.find(u) == int(np.searchsorted(cumulative, u, side="right"))


def test_single_element():
    tree = FenwickTree([4.0])
    assert len(tree) == 1
    assert tree.find(3.5) == 0
    assert tree.find(4.0) == 1
