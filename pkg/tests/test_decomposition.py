import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kelly_slc.core import RewardMatrix, StrategyMatrix
from kelly_slc.decomposition import (
    InvalidActual,
    NoDecomposition,
    actual_strategy,
    compute_q,
    decompose,
    decomposition_exists_2x2,
    effective_strategy,
    find_dominant_wager,
    try_decompose,
)

from oracles import random_reward

EX3 = RewardMatrix([[2, 1], [1, 3]])


def cramer_q(r):
    """R q = 1 by Cramer's rule, independent of any linear solver."""
    r = np.asarray(r, float)
    det = np.linalg.det(r)
    out = []
    for i in range(r.shape[0]):
        m = r.copy()
        m[:, i] = 1.0
        out.append(np.linalg.det(m) / det)
    return np.array(out)


def test_compute_q_examples():
    assert np.allclose(compute_q(EX3), [0.4, 0.2], atol=1e-15)
    assert np.allclose(compute_q(np.diag([2.0, 4.0, 5.0])), [0.5, 0.25, 0.2])
    assert np.allclose(compute_q([[4, 3], [1, 2]]), [-0.2, 0.6], atol=1e-15)


def test_decompose_mixed_payouts():
    d = decompose(EX3)
    assert np.max(np.abs(d.D - np.diag([2.5, 5.0]))) < 1e-9
    assert np.max(np.abs(d.B - [[0.8, 0.2], [0.4, 0.6]])) < 1e-9
    assert np.allclose(d.B @ d.B_inv, np.eye(2), atol=1e-12)


def test_decompose_diagonal():
    d = decompose(np.diag([2.0, 3.0]))
    assert np.allclose(d.B, np.eye(2)) and np.allclose(d.D, np.diag([2.0, 3.0]))


def test_no_decomposition_for_dominant_example():
    with pytest.raises(NoDecomposition) as info:
        decompose([[4, 3], [1, 2]])
    assert abs(info.value.q[0] + 0.2) < 1e-15 and not info.value.near_degenerate
    assert try_decompose([[4, 3], [1, 2]]) is None


def test_dominant_wager_examples():
    dw = find_dominant_wager(RewardMatrix([[4, 3], [1, 2]]))
    assert dw.index == 0 and dw.horse == 1
    assert find_dominant_wager(RewardMatrix([[2, 0], [0, 2]])) is None
    assert find_dominant_wager(EX3) is None


def test_dominant_ties_pick_smallest_row():
    assert find_dominant_wager(np.array([[1.0]])).index == 0


def test_exists_2x2_examples():
    assert decomposition_exists_2x2(EX3)
    assert not decomposition_exists_2x2([[4, 3], [1, 2]])
    assert not decomposition_exists_2x2([[3, 2], [1, 2]])  # r12 = r22
    with pytest.raises(ValueError):
        decomposition_exists_2x2(np.eye(3))


def test_effective_strategy_examples():
    d = decompose(EX3)
    t = effective_strategy([[0.5, 0.5], [0, 1]], d)
    assert np.allclose(t.s, [[0.6, 0.4], [0.4, 0.6]], atol=1e-15)
    s = StrategyMatrix([[0.3, 0.7], [0.9, 0.1]])
    assert np.array_equal(effective_strategy(s, decompose(np.diag([2.0, 5.0]))).s, s.s)
    assert np.allclose(effective_strategy(np.eye(2), d).s, d.B)


def test_actual_strategy_examples():
    d = decompose(EX3)
    s = actual_strategy([[0.6, 0.4], [0.4, 0.6]], d)
    assert np.allclose(s.s, [[0.5, 0.5], [0, 1]], atol=1e-12)
    with pytest.raises(InvalidActual) as info:
        actual_strategy([[0.7, 0.3], [0.3, 0.7]], d)
    assert info.value.raw.min() < 0


def test_actual_valid_iff_t_between_two_fifths_and_four_fifths():
    d = decompose(EX3)
    for t in np.linspace(0, 1, 201):
        row = [[t, 1 - t], [t, 1 - t]]
        try:
            actual_strategy(row, d)
            ok = True
        except InvalidActual:
            ok = False
        assert ok == (0.4 - 1e-12 <= t <= 0.8 + 1e-12), t


@given(st.integers(0, 100_000), st.sampled_from([2, 3]))
def test_decomposition_invariants(seed, k):
    rng = np.random.default_rng(seed)
    r = random_reward(rng, k, tie_prob=0.05)
    q = cramer_q(r)
    d = try_decompose(r)
    if d is None:
        assert np.any(q <= 1e-9)
        return
    assert np.allclose(d.q, q, rtol=1e-8, atol=1e-12)
    assert np.max(np.abs(d.B @ d.D - r)) < 1e-9
    assert np.all(d.B >= -1e-12) and np.max(np.abs(d.B.sum(1) - 1)) < 1e-9
    assert np.max(np.abs(d.B @ d.B_inv - np.eye(k))) < 1e-8
    RewardMatrix(d.D)
    # any other row-stochastic B' with diagonal D' and B' D' = R must coincide: D' = diag(1/q)
    alt_d = 1.0 / cramer_q(r)
    assert np.allclose(np.diag(d.D), alt_d, rtol=1e-8)
    s = StrategyMatrix(rng.dirichlet(np.ones(k), k))
    back = actual_strategy(effective_strategy(s, d), d)
    assert np.max(np.abs(back.s - s.s)) < 1e-8


@given(st.integers(0, 100_000))
def test_two_horse_existence_equivalences(seed):
    r = random_reward(np.random.default_rng(seed), 2, tie_prob=0.1)
    ok = try_decompose(r) is not None
    assert decomposition_exists_2x2(r) == ok
    if not ok:
        assert find_dominant_wager(r) is not None
