"""Deterministic state-evolution trackers and fixed-point solvers.

Two families are tracked:

* BO-OAMP/VAMP: a scalar recursion alternating the spectral-domain
  linear-estimator variance map with the orthogonalized-denoiser map.

* Memory AMP (SS and windowed-damping baselines): the linear memory
  estimator r~_t = (A' z_t - X_t p_t) / eps_t has jointly Gaussian errors
  whose covariance vtilde is a deterministic polynomial functional of the
  spectrum (the w / wbar tables), of the damping history, and of the
  denoiser error covariance.  Damping with the variance-optimal vector
  over the effective index set then gives the tracked variances.

Both trackers use the harmonic (information-additive) variance update
    1 / v_out = 1 / mmse(v_in) - 1 / v_in
for the orthogonalized modules; this is the form consistent with scalar
AWGN fusion and it is validated against Monte Carlo in the tests.

Indexing: math iterations t = 1..T map to row/array index t-1; the
denoiser outputs x_1..x_{T+1} map to index 0..T with x_1 = 0, v_phi_1 = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import VARIANCE_FLOOR, nle_cross_covariance, nle_output_variance
from .errors import (
    DegenerateDivergence,
    MonotonicityViolation,
    NoConvergence,
    SingularAugmentation,
    SingularCovariance,
)
from .lbanded import (
    block_inverse_update,
    damping_with_backoff,
    effective_index_update,
    lbanded_matrix,
)

XI_CAP = 1e8
MONOTONE_SLACK = 1e-9


@dataclass
class SETrack:
    """State-evolution record for one algorithm configuration.

    v_gamma[t-1] is the error variance of the (damped) denoiser input at
    iteration t; v_phi[k] is the error variance of estimate x_{k+1}
    (v_phi[0] = 1 for x_1 = 0).  Memory-AMP tracks also carry the raw
    covariance vtilde_gamma and the per-iteration coefficients needed to
    replay the exact same algorithm on data.
    """

    v_gamma: np.ndarray
    v_phi: np.ndarray
    vtilde_gamma: np.ndarray | None = None
    theta: np.ndarray | None = None
    xi: np.ndarray | None = None
    eps: np.ndarray | None = None
    p_rows: list = field(default_factory=list)
    zeta_gamma: list = field(default_factory=list)
    zeta_phi: list = field(default_factory=list)
    effective: tuple = ()
    backoff: np.ndarray | None = None
    fixed_point: tuple | None = None
    vx: np.ndarray | None = None
    q_phi: np.ndarray | None = None

    @property
    def iterations(self):
        return len(self.v_gamma)


def _le_divergence(d2_padded, sigma2, v_phi):
    """gamma' = (1/N) sum_i rho / (d_i^2 + rho), rho = sigma2 / v_phi."""
    rho = sigma2 / v_phi
    return float(np.mean(rho / (d2_padded + rho)))


def _harmonic(mmse_val, v_in):
    return 1.0 / (1.0 / mmse_val - 1.0 / v_in)


def se_oamp_vamp(spectrum, prior, sigma2, T, stop_tol=None):
    """Scalar SE for BO-OAMP/VAMP given the exact singular values.

    spectrum: a SensingModel, or a tuple (d, m, n).
    """
    if hasattr(spectrum, "d"):
        d, m, n = spectrum.d, spectrum.m, spectrum.n
    else:
        d, m, n = spectrum
    d2 = np.zeros(n)
    d2[: len(d)] = np.asarray(d, dtype=float) ** 2
    v_phi = [1.0]
    v_gamma = []
    for _ in range(T):
        gp = _le_divergence(d2, sigma2, v_phi[-1])
        vg = v_phi[-1] / (1.0 / gp - 1.0)
        v_gamma.append(vg)
        try:
            vp = nle_output_variance(vg, prior)
        except DegenerateDivergence:
            vp = vg
        v_phi.append(vp)
        if stop_tol is not None and abs(v_phi[-1] - v_phi[-2]) < stop_tol:
            break
    track = SETrack(v_gamma=np.array(v_gamma), v_phi=np.array(v_phi))
    if len(v_phi) >= 2 and abs(v_phi[-1] - v_phi[-2]) < max(
        stop_tol or 0.0, 1e-12
    ):
        track.fixed_point = (v_gamma[-1], v_phi[-1])
    return track


def compute_xi_opt(t, tables, v_phi_seq, theta_seq, xi_prev_seq, sigma2):
    """Variance-optimal memory weight xi_t (t is 1-based; xi_1 = 1).

    v_phi_seq[k] is the error variance of x_{k+1}; theta_seq / xi_prev_seq
    hold theta_1..theta_t and xi_1..xi_{t-1}.  The denoiser error
    covariance is taken L-banded (v_phi of the later index), which is the
    sufficient-statistic structure.
    """
    v_phi_seq = np.asarray(v_phi_seq, dtype=float)
    vx = lbanded_matrix(v_phi_seq[:t])
    return _xi_opt(t, tables, vx, v_phi_seq[t - 1], theta_seq, xi_prev_seq, sigma2)


def _vartheta_prefix(t, theta_seq, xi_prev_seq):
    """vartheta_{t,i} for i = 1..t-1 given theta_1..theta_t, xi_1..xi_{t-1}."""
    out = np.empty(t - 1)
    prod = 1.0
    for i in range(t - 1, 0, -1):            # i is 1-based index of xi
        prod *= theta_seq[i]                 # theta_{i+1} cumulated down from t
        out[i - 1] = xi_prev_seq[i - 1] * prod
    return out


def _xi_opt(t, tables, vx, v_phi_t, theta_seq, xi_prev_seq, sigma2):
    if t == 1:
        return 1.0
    w = tables.w
    lead = _vartheta_prefix(t, theta_seq, xi_prev_seq)   # vartheta_{t,i}, i<t
    k = np.arange(1, t)                                  # i = 1..t-1
    wt = w[t - k]                                        # w_{t-i}
    c0 = float(np.sum(lead * wt) / w[0])
    c1 = sigma2 * w[0] + v_phi_t * tables.wbar(0, 0)
    c2 = -float(np.sum(lead * (sigma2 * wt + v_phi_t * _wbar_vec(tables, t - k))))
    s = (t - k)[:, None] + (t - k)[None, :]
    wbar_blk = tables.lam_dagger * w[s] - w[s + 1] - np.outer(wt, wt)
    blk = sigma2 * w[s] + vx[:t - 1, :t - 1] * wbar_blk
    c3 = float(lead @ blk @ lead)
    denom = c1 * c0 + c2
    num = c2 * c0 + c3
    scale = max(abs(c1 * c0), abs(c2), 1e-300)
    if abs(denom) <= 1e-14 * scale:
        return XI_CAP
    xi = num / denom
    return float(np.clip(xi, -XI_CAP, XI_CAP))


def _wbar_vec(tables, idx):
    return (
        tables.lam_dagger * tables.w[idx]
        - tables.w[idx + 1]
        - tables.w[0] * tables.w[idx]
    )


def _vtilde_entry(t, tp, vth_rows, eps, w, lam_dagger, vx, sigma2):
    """Eq.-(70)-style raw covariance entry for (t, tp), both 1-based."""
    a = vth_rows[t - 1]
    b = vth_rows[tp - 1]
    ki = t - np.arange(1, t + 1)             # t - i, i = 1..t
    kj = tp - np.arange(1, tp + 1)
    s = ki[:, None] + kj[None, :]
    wbar_blk = lam_dagger * w[s] - w[s + 1] - np.outer(w[ki], w[kj])
    blk = sigma2 * w[s] + vx[:t, :tp] * wbar_blk
    return float(a @ blk @ b) / (eps[t - 1] * eps[tp - 1])


class MemoryAmpRecursion:
    """Incremental memory-AMP coefficient/covariance recursion.

    Holds the per-iteration state of the variance calculus: the theta/xi
    coefficients, normalizers, raw and damped message covariances, the
    denoiser error covariance and the effective index sets.  The
    se_memory_amp driver advances it one linear step and one denoiser
    step per iteration.

    With pinned=<SETrack> the recursion stops choosing coefficients: it
    applies the theta/xi/damping vectors recorded in the track and only
    replays the covariance calculus.  The covariance identity holds for
    whatever coefficients are actually applied once the actual denoiser
    error variances are plugged in (set_vphi / denoiser_update), so this
    mode turns the recursion into a variance tracker for a runtime
    engine: the data never selects coefficients, but the variances handed
    to the denoiser stay consistent with the realized trajectory.
    """

    def __init__(
        self,
        tables,
        prior,
        sigma2,
        T,
        xi_mode="optimal",
        window=None,
        damp_site="mle",
        vx_fill="lbanded",
        pinned=None,
    ):
        if damp_site not in ("mle", "nle"):
            raise ValueError("damp_site must be 'mle' or 'nle'")
        if xi_mode not in ("optimal", "heuristic"):
            raise ValueError("xi_mode must be 'optimal' or 'heuristic'")
        if window is not None and window >= T and damp_site == "mle":
            # the window never binds, so this is exactly the full-memory
            # sufficient-statistic configuration, L-banded structure included
            window = None
            vx_fill = "lbanded"
        self.is_ss = window is None and damp_site == "mle"
        if not self.is_ss:
            # windowed or NLE-site damping breaks the L-banded structure,
            # so the denoiser error covariance must be computed, not
            # assumed
            vx_fill = "quadrature"
        self.tables = tables
        self.prior = prior
        self.sigma2 = sigma2
        self.T = T
        self.xi_mode = xi_mode
        self.window = window
        self.damp_site = damp_site
        self.vx_fill = vx_fill
        self.pinned = pinned

        T_ = T
        self.v_phi = np.empty(T_ + 1)
        self.v_phi[0] = 1.0
        self.v_gamma = np.empty(T_)
        self.theta = np.empty(T_)
        self.xi = np.empty(T_)
        self.eps = np.empty(T_)
        self.backoff = np.zeros(T_, dtype=bool)
        self.vth_rows = []                 # vartheta_{t, 1..t}
        self.p_rows = []
        self.vtil = np.zeros((T_, T_))     # raw MLE error covariance
        self.vgam = np.zeros((T_, T_))     # damped MLE error covariance
        self.vx = np.zeros((T_ + 1, T_ + 1))  # denoiser error covariance
        self.vx[0, 0] = 1.0
        self.q = np.zeros((T_ + 1, T_ + 1))   # raw denoiser covariance (nle)
        self.q[0, 0] = 1.0
        self.zetas = []                    # MLE-site damping vectors
        self.zetas_x = []                  # NLE-site damping vectors
        self.eff = ()                      # effective indices of vtil
        self.inv_eff = np.zeros((0, 0))    # inverse of vtil on eff
        self.eff_x = (0,)                  # effective indices of q

    def set_vphi(self, k, value):
        """Override the denoiser error variance at index k, e.g. with a
        value measured from the data."""
        self.v_phi[k] = value
        self.vx[k, k] = value
        if k == 0:
            self.q[0, 0] = value

    def linear_step(self, ti):
        """Coefficients, raw covariance row and message damping for
        iteration ti (0-based); v_phi[ti] must be set.  Returns
        (zeta, v_gamma[ti]) with zeta spanning raw messages 1..ti+1."""
        tables = self.tables
        w = tables.w
        lam_dagger = tables.lam_dagger
        sigma2 = self.sigma2
        window = self.window
        vtil = self.vtil
        vgam = self.vgam
        t = ti + 1
        if self.pinned is not None:
            self.theta[ti] = self.pinned.theta[ti]
        else:
            self.theta[ti] = 1.0 / (lam_dagger + sigma2 / self.v_phi[ti])
        lead = self.theta[ti] * self.vth_rows[ti - 1] if ti > 0 else np.empty(0)
        if self.pinned is not None:
            self.xi[ti] = self.pinned.xi[ti]
        elif t == 1:
            self.xi[ti] = 1.0
        elif self.xi_mode == "optimal":
            self.xi[ti] = _xi_opt(
                t, tables, self.vx, self.v_phi[ti], self.theta[: t],
                self.xi[: t - 1], sigma2,
            )
        else:
            self.xi[ti] = 1.0 / (sigma2 + self.v_gamma[ti - 1])
        row = np.concatenate([lead, [self.xi[ti]]])
        self.vth_rows.append(row)
        wt = w[t - np.arange(1, t + 1)]
        self.p_rows.append(-row * wt)
        self.eps[ti] = float(np.sum(row * wt))

        for tp in range(1, t + 1):
            val = _vtilde_entry(
                t, tp, self.vth_rows, self.eps, w, lam_dagger, self.vx, sigma2
            )
            vtil[ti, tp - 1] = val
            vtil[tp - 1, ti] = val
        if vtil[ti, ti] <= 0.0:
            # deep post-convergence iterations cancel to roundoff noise
            # (the entry is a tiny difference of huge memory terms); carry
            # the previous level rather than propagate a nonpositive value
            vtil[ti, ti] = vtil[ti - 1, ti - 1] if ti > 0 else VARIANCE_FLOOR

        # ----- MLE-site damping -----
        if self.damp_site == "mle" and self.pinned is not None:
            # apply the recorded damping vector; the quadratic form gives
            # the variance it achieves on the replayed covariance
            zeta = self.pinned.zeta_gamma[ti]
            vg = float(zeta @ vtil[: t, : t] @ zeta)
            if vg <= 0.0:
                vg = self.v_gamma[ti - 1] if ti > 0 else vtil[ti, ti]
            self.zetas.append(zeta)
            self.v_gamma[ti] = vg
            for j in range(t):
                zj = self.zetas[j]
                vgam[ti, j] = vgam[j, ti] = float(
                    zeta[: t] @ vtil[: t, : len(zj)] @ zj
                )
            return zeta, vg
        if self.damp_site == "mle":
            if window is None:
                # full damping over the effective set: grow the restricted
                # inverse incrementally; a failed Schur test is the
                # effective-index rejection
                zeta = vg = None
                bvec = vtil[list(self.eff), ti]
                try:
                    inv_new = block_inverse_update(
                        self.inv_eff, bvec, vtil[ti, ti]
                    )
                    s = inv_new.sum(axis=1)
                    tot = float(s.sum())
                    cand_vg = 1.0 / tot if tot > 0 else np.inf
                    # nested growth cannot raise the optimum; an increase
                    # is numerical breakdown and is treated as a rejection
                    if ti > 0 and cand_vg > self.v_gamma[ti - 1]:
                        raise SingularAugmentation("no numerical improvement")
                    self.eff = self.eff + (ti,)
                    self.inv_eff = inv_new
                    zeta = np.zeros(t)
                    zeta[list(self.eff)] = s / tot
                    vg = cand_vg
                except SingularAugmentation:
                    pass
            else:
                new_eff = effective_index_update(vtil[: t, : t], self.eff, ti)
                zeta = vg = None
                if ti in new_eff:
                    self.eff = new_eff
                    supp = self.eff[-window:]
                    try:
                        zeta, vg = damping_with_backoff(vtil[: t, : t], supp)
                    except SingularCovariance:
                        zeta = np.zeros(t)
                        zeta[ti] = 1.0
                        vg = vtil[ti, ti]
            if zeta is None:
                self.backoff[ti] = True
                zeta = np.zeros(t)
                zeta[: len(self.zetas[-1])] = self.zetas[-1]
                vg = self.v_gamma[ti - 1]
            self.zetas.append(zeta)
            self.v_gamma[ti] = vg
            for j in range(t):
                zj = self.zetas[j]
                vgam[ti, j] = vgam[j, ti] = float(
                    zeta[: t] @ vtil[: t, : len(zj)] @ zj
                )
        else:
            zeta = np.zeros(t)
            zeta[ti] = 1.0
            self.zetas.append(zeta)
            self.v_gamma[ti] = vtil[ti, ti]
            vgam[: t, : t] = vtil[: t, : t]
        return zeta, self.v_gamma[ti]

    def denoiser_update(self, ti, q_diag):
        """Insert the denoiser output error variance for iteration ti
        (a prediction or a measurement) and update the covariance state.
        For NLE-site damping returns the damping vector over the raw
        outputs x_1..x_{ti+2}; otherwise returns None."""
        t = ti + 1
        vtil, vgam, vx, q = self.vtil, self.vgam, self.vx, self.q
        prior = self.prior
        window = self.window
        if self.damp_site == "mle":
            if self.vx_fill == "lbanded":
                self.v_phi[ti + 1] = q_diag
                vx[ti + 1, : ti + 2] = q_diag
                vx[: ti + 2, ti + 1] = q_diag
            else:
                vx[ti + 1, 0] = vx[0, ti + 1] = q_diag
                vx[ti + 1, ti + 1] = q_diag
                for j in range(1, t):
                    c = nle_cross_covariance(
                        self.v_gamma[ti], self.v_gamma[j - 1],
                        vgam[ti, j - 1], prior,
                    )
                    vx[ti + 1, j] = vx[j, ti + 1] = c
                self.v_phi[ti + 1] = q_diag
            return None
        # raw NLE-output covariance, then damp at the NLE site
        q[ti + 1, ti + 1] = q_diag
        q[ti + 1, 0] = q[0, ti + 1] = q_diag
        for j in range(1, t):
            c = nle_cross_covariance(
                self.v_gamma[ti], self.v_gamma[j - 1], vtil[ti, j - 1], prior
            )
            q[ti + 1, j] = q[j, ti + 1] = c
        if self.pinned is not None:
            zeta_x = self.pinned.zeta_phi[ti]
            vp = float(zeta_x @ q[: t + 1, : t + 1] @ zeta_x)
            if vp <= 0.0:
                vp = self.v_phi[ti]
            self.zetas_x.append(zeta_x)
            self.v_phi[ti + 1] = vp
            for j in range(t + 1):
                zj = self.zetas_x[j - 1] if j >= 1 else np.array([1.0])
                vx[ti + 1, j] = vx[j, ti + 1] = float(
                    zeta_x @ q[: t + 1, : len(zj)] @ zj
                )
            return zeta_x
        new_eff_x = effective_index_update(q[: t + 1, : t + 1], self.eff_x, ti + 1)
        if ti + 1 in new_eff_x:
            self.eff_x = new_eff_x
            supp = self.eff_x if window is None else self.eff_x[-window:]
            try:
                zeta_x, vp = damping_with_backoff(q[: t + 1, : t + 1], supp)
            except SingularCovariance:
                zeta_x = np.zeros(t + 1)
                zeta_x[ti + 1] = 1.0
                vp = q[ti + 1, ti + 1]
        else:
            # singular augmentation: keep the previous combination
            zeta_x = np.zeros(t + 1)
            prev = self.zetas_x[-1] if self.zetas_x else np.array([1.0])
            zeta_x[: len(prev)] = prev
            vp = self.v_phi[ti]
        self.zetas_x.append(zeta_x)
        self.v_phi[ti + 1] = vp
        for j in range(t + 1):
            zj = self.zetas_x[j - 1] if j >= 1 else np.array([1.0])
            vx[ti + 1, j] = vx[j, ti + 1] = float(
                zeta_x @ q[: t + 1, : len(zj)] @ zj
            )
        return zeta_x

    def as_track(self, n_eff):
        """Freeze the first n_eff iterations into an SETrack."""
        return SETrack(
            v_gamma=self.v_gamma[: n_eff].copy(),
            v_phi=self.v_phi[: n_eff + 1].copy(),
            vtilde_gamma=self.vtil[: n_eff, : n_eff].copy(),
            theta=self.theta[: n_eff].copy(),
            xi=self.xi[: n_eff].copy(),
            eps=self.eps[: n_eff].copy(),
            p_rows=self.p_rows[: n_eff],
            zeta_gamma=self.zetas[: n_eff],
            zeta_phi=self.zetas_x[: n_eff],
            effective=self.eff,
            backoff=self.backoff[: n_eff].copy(),
            vx=self.vx[: n_eff + 1, : n_eff + 1].copy(),
            q_phi=(
                self.q[: n_eff + 1, : n_eff + 1].copy()
                if self.damp_site == "nle"
                else None
            ),
        )


def se_memory_amp(
    tables,
    prior,
    sigma2,
    T,
    xi_mode="optimal",
    window=None,
    damp_site="mle",
    vx_fill="lbanded",
    stop_tol=None,
    strict_monotone=None,
):
    """General memory-AMP state evolution.

    window=None with damp_site="mle" and vx_fill="lbanded" is the
    sufficient-statistic tracker; a finite window gives the short-memory
    damping baselines.  vx_fill="quadrature" evaluates the denoiser error
    cross-covariances by deterministic quadrature instead of assuming the
    L-banded sufficient-statistic structure (required whenever damping is
    windowed, optional for the SS tracker).

    strict_monotone defaults to True exactly when the configuration is
    the sufficient-statistic one, where nonincreasing variances are a
    theorem; a violation beyond 1e-9 then raises MonotonicityViolation.
    """
    rec = MemoryAmpRecursion(
        tables, prior, sigma2, T, xi_mode=xi_mode, window=window,
        damp_site=damp_site, vx_fill=vx_fill,
    )
    if strict_monotone is None:
        strict_monotone = rec.is_ss
    converged_at = None

    for ti in range(rec.T):
        _, vg = rec.linear_step(ti)
        # ----- NLE step -----
        try:
            q_diag = nle_output_variance(vg, prior)
        except DegenerateDivergence:
            # no information gained: pass the damped message through
            rec.v_phi[ti + 1] = vg
            converged_at = ti
            break
        rec.denoiser_update(ti, q_diag)

        if strict_monotone and rec.v_phi[ti + 1] > rec.v_phi[ti] + MONOTONE_SLACK:
            raise MonotonicityViolation(
                f"v_phi rose from {rec.v_phi[ti]:.6e} to "
                f"{rec.v_phi[ti + 1]:.6e} at t={ti + 1}"
            )
        if stop_tol is not None and abs(rec.v_phi[ti + 1] - rec.v_phi[ti]) < stop_tol:
            converged_at = ti
            break

    n_eff = rec.T if converged_at is None else converged_at + 1
    track = rec.as_track(n_eff)
    if track.iterations >= 2 and abs(track.v_phi[-1] - track.v_phi[-2]) < max(
        stop_tol or 0.0, 1e-12
    ):
        track.fixed_point = (track.v_gamma[-1], track.v_phi[-1])
    return track
def se_ss_bo_mamp(tables, prior, sigma2, T, xi_mode="optimal", **kw):
    """Sufficient-statistic memory-AMP state evolution (full damping)."""
    return se_memory_amp(tables, prior, sigma2, T, xi_mode=xi_mode, **kw)


def se_bo_mamp_baseline(
    tables, prior, sigma2, T, L, damp_site="mle", xi_mode="optimal", **kw
):
    """State evolution for the windowed-damping baseline (window length L)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return se_memory_amp(
        tables,
        prior,
        sigma2,
        T,
        xi_mode=xi_mode,
        window=L,
        damp_site=damp_site,
        vx_fill="quadrature",
        **kw,
    )


def se_fixed_point(se_kind, spectrum_or_tables, prior, sigma2, tol=1e-12, t_max=400):
    """Iterate an SE track until the v_phi change drops below tol.

    se_kind: "oamp_vamp" (spectrum argument) or "ss_bo_mamp" (tables).
    Raises NoConvergence if the Cauchy criterion is not met within t_max.
    """
    if se_kind == "oamp_vamp":
        track = se_oamp_vamp(spectrum_or_tables, prior, sigma2, t_max, stop_tol=tol)
    elif se_kind == "ss_bo_mamp":
        track = se_ss_bo_mamp(spectrum_or_tables, prior, sigma2, t_max, stop_tol=tol)
    else:
        raise ValueError("unknown se_kind")
    if track.fixed_point is None:
        raise NoConvergence(f"no fixed point within t_max={t_max}")
    return track.fixed_point
