import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leachclust.errors import ConfigurationError, DimensionError
from leachclust.metrics import nmi, pairwise_f, rand_index, rmse_missing


# Independent definitions, straight from pair enumeration and probability sums.


def brute_rand(a, b):
    pairs = list(itertools.combinations(range(len(a)), 2))
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)
    return agree / len(pairs)


def brute_f(truth, pred):
    pairs = list(itertools.combinations(range(len(truth)), 2))
    st_ = {p for p in pairs if truth[p[0]] == truth[p[1]]}
    sp = {p for p in pairs if pred[p[0]] == pred[p[1]]}
    if not st_ and not sp:
        return 1.0
    both = len(st_ & sp)
    if both == 0:
        return 0.0
    prec, rec = both / len(sp), both / len(st_)
    return 2 * prec * rec / (prec + rec)


def brute_nmi(a, b):
    n = len(a)
    pa = {x: a.count(x) / n for x in set(a)}
    pb = {y: b.count(y) / n for y in set(b)}
    ha = -sum(p * math.log(p) for p in pa.values())
    hb = -sum(p * math.log(p) for p in pb.values())
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    mi = 0.0
    for x in pa:
        for y in pb:
            pxy = sum(1 for i in range(n) if a[i] == x and b[i] == y) / n
            if pxy > 0:
                mi += pxy * math.log(pxy / (pa[x] * pb[y]))
    return mi / math.sqrt(ha * hb)


def all_partition_pairs(max_n=6, max_c=3):
    for n in range(2, max_n + 1):
        labelings = list(itertools.product(range(max_c), repeat=n))
        for a in labelings[:: max(1, len(labelings) // 40)]:
            for b in labelings[:: max(1, len(labelings) // 40)]:
                yield list(a), list(b)


@pytest.mark.parametrize("metric, oracle", [(nmi, brute_nmi), (rand_index, brute_rand), (pairwise_f, brute_f)])
def test_matches_brute_force(metric, oracle):
    for a, b in all_partition_pairs():
        assert abs(metric(a, b) - oracle(a, b)) <= 1e-12, (a, b)


def test_nmi_examples():
    assert nmi([0, 0, 1, 1, 2], [5, 5, 7, 7, 9]) == pytest.approx(1.0)
    assert nmi([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(0.0, abs=1e-15)
    assert nmi([3, 3, 3], [1, 1, 1]) == 1.0
    assert nmi([3, 3, 3], [1, 2, 1]) == 0.0


def test_rand_examples():
    assert rand_index([0, 1, 1, 2], [4, 5, 5, 6]) == 1.0
    assert rand_index([1, 1, 2], [1, 2, 2]) == pytest.approx(1 / 3)
    assert rand_index([0, 0, 0, 0], [0, 1, 2, 3]) == 0.0


def test_f_examples():
    assert pairwise_f([0, 0, 1], [2, 2, 0]) == 1.0
    # P = 1/3, R = 1/2
    assert pairwise_f([1, 1, 2, 2], [1, 1, 1, 2]) == pytest.approx(0.4)
    assert pairwise_f([0, 0, 1, 1], [0, 1, 2, 3]) == 0.0


def test_length_checks():
    with pytest.raises(DimensionError):
        nmi([0, 1], [0, 1, 2])
    with pytest.raises(DimensionError):
        pairwise_f([0, 1], [0])
    with pytest.raises(ConfigurationError):
        rand_index([0], [0])


labels = st.lists(st.integers(0, 3), min_size=2, max_size=12)


@given(labels.flatmap(lambda a: st.tuples(st.just(a), st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))),
       st.permutations(range(4)))
def test_relabeling_invariance(ab, perm):
    a, b = ab
    b2 = [perm[x] for x in b]
    for metric in (nmi, rand_index, pairwise_f):
        assert metric(a, b) == pytest.approx(metric(a, b2), abs=1e-12)
        assert 0.0 <= metric(a, b) <= 1.0
    assert rand_index(a, b) == pytest.approx(rand_index(b, a))
    assert nmi(a, b) == pytest.approx(nmi(b, a))


def test_rmse_examples():
    t = np.array([[2.0, 1.0], [4.0, 0.0]])
    L = np.array([[0, 1], [1, 1]])
    assert rmse_missing(t, t, L) == 0.0
    assert rmse_missing(t, np.array([[5.0, 1.0], [4.0, 0.0]]), L) == 3.0
    L2 = np.array([[0, 0], [1, 1]])
    assert rmse_missing(t, t + np.array([[3.0, 4.0], [0, 0]]), L2) == pytest.approx(math.sqrt(12.5))
    with pytest.raises(ConfigurationError):
        rmse_missing(t, t, np.ones((2, 2)))
