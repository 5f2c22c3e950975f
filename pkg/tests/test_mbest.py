import itertools
import math

import numpy as np
import pytest

from haplodrift.mbest import top_m_products


def brute_force(scores, m):
    combos = []
    for idx in itertools.product(*(range(len(s)) for s in scores)):
        total = sum(s[i] for s, i in zip(scores, idx))
        combos.append((idx, total))
    combos.sort(key=lambda pair: (-pair[1], pair[0]))
    return combos[:m]


def test_two_list_example():
    lists = [[math.log(0.6), math.log(0.4)], [math.log(0.9), math.log(0.1)]]
    out = top_m_products(lists, 2)
    assert [idx for idx, _ in out] == [(0, 0), (1, 0)]
    products = [math.exp(s) for _, s in out]
    assert products == pytest.approx([0.54, 0.36])


def test_m_one_is_heads():
    lists = [[0.0, -1.0, -2.0], [-0.5, -0.7], [0.0, -3.0]]
    out = top_m_products(lists, 1)
    assert out == [((0, 0, 0), -0.5)]


def test_prefix_property():
    rng = np.random.default_rng(4)
    lists = [sorted(rng.normal(size=5), reverse=True) for _ in range(4)]
    one = top_m_products(lists, 1)
    hundred = top_m_products(lists, 100)
    assert hundred[0] == one[0]
    assert hundred[:10] == top_m_products(lists, 10)


@pytest.mark.parametrize("trial", range(30))
def test_matches_brute_force(trial):
    rng = np.random.default_rng(1000 + trial)
    n_lists = int(rng.integers(2, 5))
    lists = [
        sorted(rng.normal(size=int(rng.integers(1, 9))), reverse=True)
        for _ in range(n_lists)
    ]
    m = int(rng.integers(1, 40))
    got = top_m_products(lists, m)
    expected = brute_force(lists, m)
    assert [i for i, _ in got] == [i for i, _ in expected]
    np.testing.assert_allclose(
        [s for _, s in got], [s for _, s in expected], rtol=0, atol=1e-12
    )


def test_tie_break_is_lexicographic():
    lists = [[0.0, 0.0], [0.0, 0.0]]
    out = top_m_products(lists, 4)
    assert [idx for idx, _ in out] == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_m_exceeding_total_returns_all():
    lists = [[0.0, -1.0], [0.0]]
    assert len(top_m_products(lists, 50)) == 2


def test_empty_list_rejected():
    with pytest.raises(ValueError, match="empty"):
        top_m_products([[0.0], []], 3)


def test_unsorted_list_rejected():
    with pytest.raises(ValueError, match="sorted"):
        top_m_products([[0.0, 1.0]], 1)


def test_bad_m_rejected():
    with pytest.raises(ValueError):
        top_m_products([[0.0]], 0)
