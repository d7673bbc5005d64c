"""Finite-N runs of the iterative algorithms against their trackers."""

import numpy as np
import pytest

from ssmamp.algorithms import (
    run_bo_mamp_baseline,
    run_oamp_vamp,
    run_ss_bo_mamp,
)
from ssmamp.denoiser import BernoulliGaussianPrior
from ssmamp.model import build_sensing_model, exact_spectral_moments, sample_instance
from ssmamp.state_evolution import se_oamp_vamp, se_ss_bo_mamp

PRIOR = BernoulliGaussianPrior(0.1)


def _setup(kappa=10.0, m=512, n=1024, T=12, seed=0, inst_seed=1, snr_db=30.0):
    model = build_sensing_model(m, n, kappa, seed)
    tables = exact_spectral_moments(model, T + 1)
    inst = sample_instance(model, 0.1, snr_db, inst_seed)
    return model, tables, inst


def test_full_window_baseline_is_bitwise_identical_to_ss():
    """A window that never binds must reproduce the full-memory algorithm
    exactly -- same damping weights, same messages, same estimates --
    even when each run builds its own tracker."""
    model, tables, inst = _setup(T=10)
    ss = run_ss_bo_mamp(inst, model, tables, PRIOR, 10, retain_history=True)
    base = run_bo_mamp_baseline(
        inst, model, tables, PRIOR, 10, L=32, retain_history=True
    )
    assert np.array_equal(ss.mse, base.mse)
    assert np.array_equal(ss.v_gamma, base.v_gamma)
    assert np.array_equal(ss.v_phi, base.v_phi)
    assert np.array_equal(ss.R, base.R)
    assert np.array_equal(ss.X, base.X)


def test_ss_run_tracks_state_evolution():
    model, tables, inst = _setup(T=12)
    se = se_ss_bo_mamp(tables, PRIOR, inst.sigma2, 12)
    traj = run_ss_bo_mamp(inst, model, tables, PRIOR, 12, se_track=se)
    k = min(traj.iterations, se.iterations)
    sim_db = traj.mse_db()[:k]
    se_db = 10.0 * np.log10(np.asarray(se.v_phi[1 : k + 1]))
    # a single trial at N=1024; the multi-trial 1 dB claim is checked in
    # the acceptance suite, here we only require the same decay
    assert np.all(np.abs(sim_db - se_db) < 3.0)
    assert sim_db[-1] < -25.0


def test_oamp_vamp_reaches_fixed_point():
    model, tables, inst = _setup(T=25)
    se = se_oamp_vamp(model, PRIOR, inst.sigma2, 25)
    traj = run_oamp_vamp(inst, model, PRIOR, 25)
    assert traj.iterations == 25
    fp_db = 10.0 * np.log10(se.fixed_point[1])
    assert abs(traj.mse_db()[-1] - fp_db) < 3.0


def test_trajectory_history_shapes_and_init_column():
    model, tables, inst = _setup(T=6)
    traj = run_ss_bo_mamp(inst, model, tables, PRIOR, 6, retain_history=True)
    n = model.n
    assert traj.R.shape == (n, 6)
    assert traj.X.shape == (n, 7)
    assert np.all(traj.X[:, 0] == 0.0)
    assert traj.final_estimates.shape == (n, 6)
    # mse is the posterior-mean error of the damped message
    err = traj.final_estimates - inst.x[:, None]
    assert np.allclose(
        traj.mse, np.mean(np.abs(err) ** 2, axis=0), rtol=1e-12
    )
    assert len(traj.v_phi) == 7 and len(traj.v_gamma) == 6


def test_history_not_retained_by_default():
    model, tables, inst = _setup(T=3)
    traj = run_ss_bo_mamp(inst, model, tables, PRIOR, 3)
    assert traj.R is None and traj.X is None


def test_pinned_coefficients_match_tracker():
    """The damping schedule applied to the data is the deterministic one
    from the tracker, not something fitted to the realization."""
    model, tables, inst = _setup(T=8)
    se = se_ss_bo_mamp(tables, PRIOR, inst.sigma2, 8)
    traj = run_ss_bo_mamp(inst, model, tables, PRIOR, 8, se_track=se)
    k = traj.iterations
    assert np.array_equal(traj.xi[:k], np.asarray(se.xi[:k]))
    assert np.array_equal(traj.theta[:k], np.asarray(se.theta[:k]))


def test_run_never_blows_up_under_freeze_guard():
    """Ill-conditioned small-N runs can leave the deterministic track;
    the guard must keep every recorded error finite and near its best."""
    for inst_seed in range(4):
        model, tables, inst = _setup(
            kappa=100.0, m=256, n=512, T=20, inst_seed=inst_seed
        )
        traj = run_ss_bo_mamp(inst, model, tables, PRIOR, 20)
        assert np.all(np.isfinite(traj.mse))
        assert traj.mse[-1] <= np.min(traj.mse) * 4.0 + 1e-12


def test_baseline_rejects_bad_arguments():
    model, tables, inst = _setup(T=2)
    with pytest.raises(ValueError):
        run_bo_mamp_baseline(inst, model, tables, PRIOR, 2, L=0)
    with pytest.raises(ValueError):
        run_bo_mamp_baseline(inst, model, tables, PRIOR, 2, L=2, damp_site="x")


def test_windowed_baseline_differs_when_window_binds():
    model, tables, inst = _setup(kappa=100.0, T=12)
    ss = run_ss_bo_mamp(inst, model, tables, PRIOR, 12)
    base = run_bo_mamp_baseline(inst, model, tables, PRIOR, 12, L=2)
    assert not np.array_equal(ss.mse, base.mse)
    assert ss.mse[-1] <= base.mse[-1] * 1.5
