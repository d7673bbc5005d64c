"""Sensing model, instance sampling, and spectral-moment tables."""

import numpy as np
import pytest

from ssmamp.model import (
    build_sensing_model,
    estimate_spectral_moments,
    exact_spectral_moments,
    mse_db,
    sample_instance,
    sample_signal,
    tables_from_estimates,
)


def _dense_A(model):
    """Materialize A column by column through the matrix-free apply."""
    n = model.n
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(model.apply_A(e))
    return np.column_stack(cols)


def test_operator_matches_dense_and_adjoint():
    model = build_sensing_model(16, 32, 10.0, 0)
    A = _dense_A(model)
    rng = np.random.default_rng(1)
    x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    assert np.allclose(model.apply_A(x), A @ x, atol=1e-12)
    assert np.allclose(model.apply_AH(y), A.conj().T @ y, atol=1e-12)
    # adjoint identity <Ax, y> = <x, A'y>
    assert np.vdot(model.apply_A(x), y) == pytest.approx(
        np.vdot(x, model.apply_AH(y)), abs=1e-10
    )


def test_singular_values_profile():
    m, n, kappa = 64, 128, 50.0
    model = build_sensing_model(m, n, kappa, 3)
    d = model.d
    assert len(d) == min(m, n)
    assert np.sum(d**2) == pytest.approx(n, rel=1e-12)
    assert d[0] / d[-1] == pytest.approx(
        kappa ** ((len(d) - 1) / len(d)), rel=1e-12
    )
    ratios = d[:-1] / d[1:]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)
    assert model.condition_number() == pytest.approx(ratios[0] ** (len(d) - 1))


def test_kappa_one_is_row_orthogonal():
    model = build_sensing_model(8, 16, 1.0, 0)
    A = _dense_A(model)
    gram = A @ A.conj().T
    assert np.allclose(gram, 2.0 * np.eye(8), atol=1e-12)  # d_i^2 = n/m


def test_signal_statistics():
    x = sample_signal(200000, 0.1, 0)
    frac = np.mean(x != 0)
    assert frac == pytest.approx(0.1, abs=0.01)
    assert np.mean(np.abs(x) ** 2) == pytest.approx(1.0, abs=0.05)


def test_instance_snr_calibration():
    model = build_sensing_model(2048, 4096, 10.0, 0)
    inst = sample_instance(model, 0.1, 20.0, 7)
    assert inst.sigma2 == pytest.approx(0.01)
    assert np.mean(np.abs(inst.n) ** 2) == pytest.approx(0.01, rel=0.1)
    assert np.allclose(inst.y, model.apply_A(inst.x) + inst.n)


def test_exact_moments_against_dense_traces():
    model = build_sensing_model(12, 24, 20.0, 5)
    T = 6
    tables = exact_spectral_moments(model, T)
    A = _dense_A(model)
    AAH = A @ A.conj().T
    n = model.n
    ld = tables.lam_dagger
    B = ld * np.eye(model.m) - AAH
    for t in range(2 * T + 1):
        lam_direct = np.trace(np.linalg.matrix_power(AAH, t)).real / n
        assert tables.lam[t] == pytest.approx(lam_direct, rel=1e-10)
        b_direct = np.trace(np.linalg.matrix_power(B, t)).real / n
        assert tables.b[t] == pytest.approx(b_direct, rel=1e-10)
    for t in range(2 * T):
        w_direct = np.trace(
            A.conj().T @ np.linalg.matrix_power(B, t) @ A
        ).real / n
        assert tables.w[t] == pytest.approx(w_direct, rel=1e-10)


def test_exact_moments_lambda_dagger_midpoint():
    model = build_sensing_model(128, 128, 100.0, 2)      # square: lam_min > 0
    tables = exact_spectral_moments(model, 4)
    d2 = model.d**2
    assert tables.lam_max == pytest.approx(d2.max())
    assert tables.lam_min == pytest.approx(d2.min())
    assert tables.lam_dagger == pytest.approx(0.5 * (d2.max() + d2.min()))
    tall = build_sensing_model(96, 64, 10.0, 2)          # M > N: zero rows
    tbl = exact_spectral_moments(tall, 4)
    assert tbl.lam_min == 0.0


def test_exact_moments_no_overflow_at_high_kappa_long_run():
    model = build_sensing_model(512, 1024, 500.0, 0)
    tables = exact_spectral_moments(model, 200)
    assert np.all(np.isfinite(np.asarray(tables.b, dtype=np.longdouble)))
    assert np.all(np.isfinite(np.asarray(tables.w, dtype=np.longdouble)))


def test_wbar_matrix_matches_scalar():
    model = build_sensing_model(16, 32, 5.0, 1)
    tables = exact_spectral_moments(model, 4)
    W = tables.wbar_matrix(4)
    for i in range(4):
        for j in range(4):
            assert W[i, j] == pytest.approx(tables.wbar(i, j), rel=1e-12)


def test_estimated_moments_track_exact():
    model = build_sensing_model(2048, 4096, 10.0, 0)
    T = 5
    exact = exact_spectral_moments(model, T)
    lam_hat, lam_up = estimate_spectral_moments(
        model.apply_A, model.apply_AH, model.m, model.n, T, seed=0
    )
    # single-probe estimates concentrate at rate ~1/sqrt(N)
    rel = np.abs(lam_hat - exact.lam[: 2 * T + 1]) / exact.lam[: 2 * T + 1]
    assert np.max(rel) <= 0.2
    assert lam_up >= exact.lam_max
    tables = tables_from_estimates(lam_hat, lam_up, model.m, model.n, T)
    assert tables.lam_dagger == pytest.approx(0.5 * lam_up)


def test_spectral_upper_bound_dominates_on_many_models():
    rng = np.random.default_rng(42)
    for k in range(50):
        kappa = float(rng.uniform(1.0, 200.0))
        model = build_sensing_model(512, 1024, kappa, int(rng.integers(1e6)))
        _, lam_up = estimate_spectral_moments(
            model.apply_A, model.apply_AH, model.m, model.n, 8,
            seed=int(rng.integers(1e6)),
        )
        assert lam_up >= float(np.max(model.d**2)) - 1e-9


def test_mse_db():
    assert mse_db(0.01) == pytest.approx(-20.0)
    with pytest.raises(Exception):
        mse_db(0.0)


def test_build_rejects_bad_kappa():
    with pytest.raises(ValueError):
        build_sensing_model(8, 16, 0.5, 0)
