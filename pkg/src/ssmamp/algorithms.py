"""Iterative recovery engines driven by the state-evolution trackers.

All three engines share the structure LE -> orthogonalize -> damp ->
denoise.  The damping vectors, memory weights and predicted variances come
from the deterministic state-evolution module (the algorithm cannot see
the true signal, so empirical covariances are never used for damping; the
diagnostics module compares them to the SE predictions separately).

* run_oamp_vamp: regularized least squares solved per-mode in the
  spectral domain, orthogonalized with the divergence gamma'.
* run_ss_bo_mamp: memory linear estimator z_t = theta_t B z_{t-1} +
  xi_t (y - A x_t) with B = ld I - A A' applied matrix-free, normalized to
  r~_t = (A' z_t - X_t p_t) / eps_t, then damped over the effective index
  set (full memory: the sufficient-statistic algorithm).
* run_bo_mamp_baseline: same machinery with the damping support
  restricted to the last L effective indices, at either the MLE or the
  NLE site.  damp_site="mle" with L >= T reproduces run_ss_bo_mamp
  bitwise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .denoiser import VARIANCE_FLOOR, orthogonal_nle
from .errors import DegenerateDivergence
from .state_evolution import (
    MemoryAmpRecursion,
    SETrack,
    compute_xi_opt,
    se_memory_amp,
    se_oamp_vamp,
)

# back-off threshold: freeze the iteration once the measured denoiser
# error variance exceeds the predicted one by this factor (see
# _run_memory_amp)
FREEZE_FACTOR = 4.0

__all__ = [
    "Trajectory",
    "run_oamp_vamp",
    "run_ss_bo_mamp",
    "run_bo_mamp_baseline",
    "compute_xi_opt",
]


@dataclass
class Trajectory:
    """Per-iteration record of one algorithm run on one instance.

    mse[t-1] is ||posterior_mean(r_t) - x||^2 / N (the final estimator is
    the posterior mean of the damped message, not the orthogonalized
    feedback estimate).  R and X are retained only when requested:
    R[:, t-1] = r_t (damped messages) and X[:, k] = x_{k+1} with
    X[:, 0] = x_1 = 0.
    """

    mse: np.ndarray
    v_gamma: np.ndarray
    v_phi: np.ndarray
    xi: np.ndarray | None = None
    theta: np.ndarray | None = None
    zeta: list = field(default_factory=list)
    wall_time: float = 0.0
    se: SETrack | None = None
    R: np.ndarray | None = None
    X: np.ndarray | None = None
    final_estimates: np.ndarray | None = None

    @property
    def iterations(self):
        return len(self.mse)

    def mse_db(self):
        return 10.0 * np.log10(self.mse)


def run_oamp_vamp(instance, model, prior, T, retain_history=False):
    """BO-OAMP/VAMP with the spectral-domain regularized-LS LE."""
    t0 = time.perf_counter()
    n = model.n
    d2 = np.zeros(n)
    d2[: model.j] = model.d**2
    # measurement coordinates in the right-singular basis (d_i = 0 modes
    # carry no measurement)
    dy = np.zeros(n, dtype=complex)
    dy[: model.j] = model.d * instance.y[: model.j]
    sigma2 = instance.sigma2

    x = np.zeros(n, dtype=complex)
    # the NLE output error is iid and independent of the noise, so its
    # variance is measurable from the residual; driving the LE with the
    # measured value keeps the run consistent with the data at finite N
    v_phi = _residual_variance(model, instance.y, x, sigma2)
    mse = np.empty(T)
    v_gamma_seq = np.empty(T)
    v_phi_seq = np.empty(T + 1)
    v_phi_seq[0] = v_phi
    R = np.empty((n, T), dtype=complex) if retain_history else None
    X = np.empty((n, T + 1), dtype=complex) if retain_history else None
    if retain_history:
        X[:, 0] = 0.0
    finals = np.empty((n, T), dtype=complex) if retain_history else None

    for ti in range(T):
        rho = sigma2 / v_phi
        xs = model.to_spectral(x)
        x_hat_s = (dy + rho * xs) / (d2 + rho)
        gp = float(np.mean(rho / (d2 + rho)))
        r_s = (x_hat_s - gp * xs) / (1.0 - gp)
        r = model.from_spectral(r_s)
        v_gamma = v_phi / (1.0 / gp - 1.0)
        v_gamma_seq[ti] = v_gamma
        post = prior.posterior_mean(r, v_gamma)
        mse[ti] = float(np.mean(np.abs(post - instance.x) ** 2))
        if retain_history:
            R[:, ti] = r
            finals[:, ti] = post
        try:
            x = orthogonal_nle(r, v_gamma, prior).x_next
        except DegenerateDivergence:
            x = r
        v_phi = _residual_variance(model, instance.y, x, sigma2)
        v_phi_seq[ti + 1] = v_phi
        if retain_history:
            X[:, ti + 1] = x

    return Trajectory(
        mse=mse,
        v_gamma=v_gamma_seq,
        v_phi=v_phi_seq,
        wall_time=time.perf_counter() - t0,
        R=R,
        X=X,
        final_estimates=finals,
    )


def _apply_B(model, u, lam_dagger):
    return lam_dagger * u - model.apply_A(model.apply_AH(u))


def _residual_variance(model, y, x_col, sigma2):
    """x-free estimate of the error variance of an estimate column.

    The denoiser error f is asymptotically iid and independent of the
    measurement noise, so E||y - A x||^2 = M sigma^2 + v_f sum_i d_i^2
    with sum d_i^2 = N.  Measuring it costs one A-apply.
    """
    res = y - model.apply_A(x_col)
    v = (float(np.real(np.vdot(res, res))) - model.m * sigma2) / model.n
    return max(v, VARIANCE_FLOOR)


def _run_memory_amp(
    instance,
    model,
    tables,
    prior,
    T,
    se_track,
    damp_site,
    window=None,
    retain_history=False,
):
    """Shared empirical engine for SS-BO-MAMP and the windowed baselines.

    All coefficients -- theta, xi, the normalizers and the damping
    vectors -- come from the deterministic state-evolution track; the
    data never selects coefficients.  The variances handed to the
    denoiser, however, are tracked: the denoiser output error variance
    is measurable from the residual y - A x_t (the error is
    asymptotically iid and independent of the noise), and replaying the
    covariance calculus with the measured values (MemoryAmpRecursion in
    pinned mode) gives the message variance the applied damping actually
    achieves on this instance.  Without that feedback, percent-level
    finite-N deviations from the predicted track destabilize the
    denoiser through the memory.  A safety guard remains: if the
    measured denoiser error variance blows up past FREEZE_FACTOR times
    the predicted one, the run freezes at the best state reached so far.
    """
    t0 = time.perf_counter()
    n = model.n
    y = instance.y
    sigma2 = instance.sigma2
    se = se_track
    T_eff = min(T, se.iterations)

    z = np.zeros(model.m, dtype=complex)
    X = np.zeros((n, T_eff + 1), dtype=complex)      # x_1 .. x_{T+1}
    Rtil = np.zeros((n, T_eff), dtype=complex)       # raw messages r~_t
    R = np.empty((n, T_eff), dtype=complex)          # damped messages r_t
    Xraw = np.zeros((n, T_eff + 1), dtype=complex)   # raw NLE outputs (nle site)
    mse = np.empty(T_eff)
    v_gamma_used = np.empty(T_eff)
    finals = np.empty((n, T_eff), dtype=complex) if retain_history else None

    rec = MemoryAmpRecursion(
        tables, prior, sigma2, T_eff, window=window, damp_site=damp_site,
        pinned=se,
    )
    rec.set_vphi(0, _residual_variance(model, y, X[:, 0], sigma2))
    best_ti = -1
    best_v = np.inf
    frozen = False

    for ti in range(T_eff):
        if not frozen:
            zeta, v_gamma = rec.linear_step(ti)
            z = rec.theta[ti] * _apply_B(model, z, tables.lam_dagger) + rec.xi[
                ti
            ] * (y - model.apply_A(X[:, ti]))
            rtil = (
                model.apply_AH(z) - X[:, : ti + 1] @ rec.p_rows[ti]
            ) / rec.eps[ti]
            Rtil[:, ti] = rtil
            r = Rtil[:, : ti + 1] @ zeta if damp_site == "mle" else rtil
            R[:, ti] = r
            v_gamma_used[ti] = v_gamma

            post = prior.posterior_mean(r, v_gamma)
            mse[ti] = float(np.mean(np.abs(post - instance.x) ** 2))
            if retain_history:
                finals[:, ti] = post

            try:
                x_raw = orthogonal_nle(r, v_gamma, prior).x_next
            except DegenerateDivergence:
                # no information gained: pass the message through
                x_raw = r
            if damp_site == "mle":
                X[:, ti + 1] = x_raw
                rec.denoiser_update(
                    ti, _residual_variance(model, y, x_raw, sigma2)
                )
            else:
                Xraw[:, ti + 1] = x_raw
                zeta_x = rec.denoiser_update(
                    ti, _residual_variance(model, y, x_raw, sigma2)
                )
                X[:, ti + 1] = Xraw[:, : ti + 2] @ zeta_x
                rec.set_vphi(
                    ti + 1, _residual_variance(model, y, X[:, ti + 1], sigma2)
                )
            v_meas = rec.v_phi[ti + 1]
            if v_meas <= best_v:
                best_ti = ti
                best_v = v_meas
            elif v_meas > FREEZE_FACTOR * se.v_phi[ti + 1]:
                # the realized error has left the predicted track; the
                # memory would amplify the mismatch from here on, so hold
                # the best state reached instead (back-off to
                # r_t = r_{best}).  Transient rises still below the
                # threshold recover on their own and are left alone.
                frozen = True
        if frozen:
            R[:, ti] = R[:, best_ti]
            X[:, ti + 1] = X[:, best_ti + 1]
            mse[ti] = mse[best_ti]
            v_gamma_used[ti] = v_gamma_used[best_ti]
            rec.set_vphi(ti + 1, rec.v_phi[best_ti + 1])
            if retain_history:
                finals[:, ti] = finals[:, best_ti]

    traj = Trajectory(
        mse=mse,
        v_gamma=v_gamma_used,
        v_phi=rec.v_phi[: T_eff + 1].copy(),
        xi=rec.xi[:T_eff].copy(),
        theta=rec.theta[:T_eff].copy(),
        zeta=(rec.zetas if damp_site == "mle" else rec.zetas_x)[:T_eff],
        wall_time=time.perf_counter() - t0,
        se=se_track,
    )
    if retain_history:
        traj.R = R
        traj.X = X
        traj.final_estimates = finals
    return traj


def run_ss_bo_mamp(
    instance,
    model,
    tables,
    prior,
    T,
    xi_mode="optimal",
    se_track=None,
    retain_history=False,
):
    """Sufficient-statistic memory AMP (full damping over effective set)."""
    if se_track is None:
        se_track = se_memory_amp(
            tables, prior, instance.sigma2, T, xi_mode=xi_mode
        )
    return _run_memory_amp(
        instance, model, tables, prior, T, se_track, "mle",
        retain_history=retain_history,
    )


def run_bo_mamp_baseline(
    instance,
    model,
    tables,
    prior,
    T,
    L,
    damp_site="mle",
    xi_mode="optimal",
    se_track=None,
    retain_history=False,
):
    """Short-memory damping baseline (window L, damping at MLE or NLE)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    site = damp_site.lower()
    if site not in ("mle", "nle"):
        raise ValueError("damp_site must be 'MLE' or 'NLE'")
    if se_track is None:
        se_track = se_memory_amp(
            tables,
            prior,
            instance.sigma2,
            T,
            xi_mode=xi_mode,
            window=L,
            damp_site=site,
        )
    return _run_memory_amp(
        instance, model, tables, prior, T, se_track, site,
        window=L, retain_history=retain_history,
    )
