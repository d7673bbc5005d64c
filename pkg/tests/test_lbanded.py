"""L-banded calculus and damping, checked against dense linear algebra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssmamp.errors import (
    SingularAugmentation,
    SingularCovariance,
    SingularSequence,
)
from ssmamp.lbanded import (
    block_inverse_update,
    damping_with_backoff,
    effective_index_set,
    effective_index_update,
    lbanded_determinant,
    lbanded_inverse,
    lbanded_matrix,
    lbanded_quadratic_stats,
    lbandedness_score,
    optimal_damping,
)


def _decreasing_sequence(rng, t):
    """Strictly decreasing positive value sequence (a valid covariance)."""
    steps = rng.uniform(0.05, 1.0, size=t)
    return np.cumsum(steps[::-1])[::-1].copy()


def test_lbanded_matrix_shape():
    v = np.array([3.0, 2.0, 1.0])
    V = lbanded_matrix(v)
    expected = np.array([[3.0, 2.0, 1.0], [2.0, 2.0, 1.0], [1.0, 1.0, 1.0]])
    assert np.array_equal(V, expected)


def test_inverse_against_dense():
    rng = np.random.default_rng(0)
    for _ in range(200):
        t = rng.integers(1, 65)
        v = _decreasing_sequence(rng, t)
        V = lbanded_matrix(v)
        inv = lbanded_inverse(v)
        dense = np.linalg.inv(V)
        assert np.max(np.abs(inv - dense)) <= 1e-10


def test_determinant_against_dense():
    rng = np.random.default_rng(1)
    for _ in range(200):
        t = rng.integers(1, 13)
        v = _decreasing_sequence(rng, t)
        det = lbanded_determinant(v)
        dense = np.linalg.det(lbanded_matrix(v))
        assert abs(det - dense) <= 1e-10 * max(abs(dense), 1e-300)


def test_quadratic_stats_are_inverse_row_sums():
    rng = np.random.default_rng(2)
    for _ in range(200):
        t = rng.integers(1, 65)
        v = _decreasing_sequence(rng, t)
        rowsum, total = lbanded_quadratic_stats(v)
        dense = np.linalg.inv(lbanded_matrix(v))
        assert np.max(np.abs(rowsum - dense.sum(axis=1))) <= 1e-12 * total
        assert abs(total - 1.0 / v[-1]) <= 1e-12 / v[-1]


def test_singular_sequence_raises():
    with pytest.raises(SingularSequence):
        lbanded_inverse([2.0, 2.0, 1.0])
    with pytest.raises(SingularSequence):
        lbanded_inverse([2.0, 1.0, 0.0])


def test_determinant_zero_for_repeated_values():
    assert lbanded_determinant([2.0, 2.0, 1.0]) == 0.0


def _random_spd(rng, t):
    A = rng.standard_normal((t, t))
    return A @ A.T + t * np.eye(t) * 0.1


def test_optimal_damping_beats_random_simplex():
    rng = np.random.default_rng(3)
    for _ in range(200):
        t = rng.integers(1, 11)
        V = _random_spd(rng, t)
        zeta, var = optimal_damping(V)
        assert abs(zeta.sum() - 1.0) <= 1e-12
        samples = rng.dirichlet(np.ones(t), size=1000)
        vals = np.einsum("ij,jk,ik->i", samples, V, samples)
        assert var <= np.min(vals) + 1e-12
        assert abs(var - zeta @ V @ zeta) <= 1e-10 * var


def test_optimal_damping_on_lbanded_is_last_unit_vector():
    rng = np.random.default_rng(4)
    for _ in range(50):
        t = rng.integers(1, 11)
        v = _decreasing_sequence(rng, t)
        zeta, var = optimal_damping(lbanded_matrix(v))
        expected = np.zeros(t)
        expected[-1] = 1.0
        assert np.max(np.abs(zeta - expected)) <= 1e-9
        assert abs(var - v[-1]) <= 1e-9 * v[-1]


def test_optimal_damping_rejects_singular():
    with pytest.raises(SingularCovariance):
        optimal_damping(np.ones((3, 3)))


def test_effective_index_set_skips_dependent_rows():
    rng = np.random.default_rng(5)
    V3 = _random_spd(rng, 3)
    # duplicate the middle row/column: index 2 is linearly dependent
    V = np.zeros((4, 4))
    V[:3, :3] = V3
    V[3, :3] = V3[1, :]
    V[:3, 3] = V3[:, 1]
    V[3, 3] = V3[1, 1]
    order = [0, 1, 3, 2]
    perm = V[np.ix_(order, order)]
    # position 2 duplicates position 1 and is rejected; position 3 is the
    # remaining independent row
    eff = effective_index_set(perm)
    assert eff == (0, 1, 3)


def test_effective_index_update_keeps_set_on_rejection():
    V = np.ones((2, 2))
    assert effective_index_update(V, (0,), 1) == (0,)


def test_damping_with_backoff_embeds_support():
    rng = np.random.default_rng(6)
    V = _random_spd(rng, 5)
    zeta, var = damping_with_backoff(V, (1, 3))
    assert zeta[0] == zeta[2] == zeta[4] == 0.0
    sub = V[np.ix_((1, 3), (1, 3))]
    zs, vs = optimal_damping(sub)
    assert np.allclose(zeta[[1, 3]], zs)
    assert abs(var - vs) <= 1e-14


def test_block_inverse_update_matches_dense():
    rng = np.random.default_rng(7)
    for _ in range(100):
        t = rng.integers(1, 12)
        V = _random_spd(rng, t + 1)
        A_inv = np.linalg.inv(V[:t, :t])
        out = block_inverse_update(A_inv, V[:t, t], V[t, t])
        dense = np.linalg.inv(V)
        assert np.max(np.abs(out - dense)) <= 1e-7 * np.max(np.abs(dense))


def test_block_inverse_update_rejects_singular_augmentation():
    A_inv = np.array([[1.0]])
    with pytest.raises(SingularAugmentation):
        block_inverse_update(A_inv, np.array([1.0]), 1.0)


def test_lbandedness_score_zero_on_exact_banded():
    v = np.array([4.0, 2.5, 1.0])
    assert lbandedness_score(lbanded_matrix(v)) == 0.0
    assert lbandedness_score(np.array([[2.0]])) == 0.0


def test_lbandedness_score_detects_deviation():
    V = lbanded_matrix([4.0, 2.0, 1.0])
    V[0, 1] = V[1, 0] = 2.5   # 25% off the v_1 = 2.0 band
    assert abs(lbandedness_score(V) - 0.25) <= 1e-12


def test_lbandedness_score_complex_input():
    V = lbanded_matrix([2.0, 1.0]).astype(complex)
    V[0, 1] += 0.1j
    V[1, 0] -= 0.1j
    assert lbandedness_score(V) == pytest.approx(0.1, abs=1e-12)


@given(
    st.lists(st.floats(0.05, 10.0), min_size=1, max_size=20),
)
@settings(max_examples=100, deadline=None)
def test_property_inverse_roundtrip(steps):
    v = np.cumsum(np.asarray(steps)[::-1])[::-1].copy()
    V = lbanded_matrix(v)
    inv = lbanded_inverse(v)
    assert np.max(np.abs(inv @ V - np.eye(len(v)))) <= 1e-7


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_property_damping_optimality(t, seed):
    rng = np.random.default_rng(seed)
    V = _random_spd(rng, t)
    zeta, var = optimal_damping(V)
    probe = rng.dirichlet(np.ones(t), size=50)
    vals = np.einsum("ij,jk,ik->i", probe, V, probe)
    assert var <= vals.min() + 1e-10 * abs(vals.min())
