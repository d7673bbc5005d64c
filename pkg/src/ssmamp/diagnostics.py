"""Ground-truth-aware checks on finished trajectories.

Everything here is post-processing: the algorithms never see the true
signal, so these empirical covariances and residuals exist only to verify
the structural claims the state evolution relies on --

* the error covariance of the damped messages is L-banded,
* the estimation errors decorrelate from the signal and from each other
  at the CLT rate,
* the damped per-iteration variances are nonincreasing,
* and the last damped message carries (numerically) all the information
  of the whole message history, so a joint two-message posterior gains
  nothing over the scalar one.

All tolerances are arguments, not constants buried in the code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingHistory
from .lbanded import lbandedness_score

__all__ = [
    "DiagnosticsReport",
    "empirical_covariances",
    "orthogonality_residuals",
    "sufficiency_gap",
    "joint_posterior_variance",
    "build_report",
]


def _as_trajectory_list(trajectory, x_true):
    """Normalize the (trajectory, x_true) arguments to parallel lists."""
    if isinstance(trajectory, (list, tuple)):
        trajs = list(trajectory)
        if isinstance(x_true, (list, tuple)):
            xs = list(x_true)
        else:
            xs = [x_true] * len(trajs)
        if len(xs) != len(trajs):
            raise ValueError("need one x_true per trajectory")
    else:
        trajs = [trajectory]
        xs = [x_true]
    for tr in trajs:
        if tr.R is None or tr.X is None:
            raise MissingHistory(
                "trajectory was run without retain_history=True"
            )
    return trajs, xs


def _error_matrices(traj, x):
    """G[:, t-1] = r_t - x and F[:, k] = x_{k+1} - x (so F[:, 0] = -x)."""
    G = traj.R - x[:, None]
    F = traj.X - x[:, None]
    return G, F


def empirical_covariances(trajectory, x_true):
    """Empirical error covariances of the message and denoiser histories.

    Returns (V_gamma, V_phi) with V_gamma = (1/N) G'G for G = R - x 1',
    and likewise V_phi = (1/N) F'F with F = X - x 1' (the first column
    of X is the all-zero initial estimate, so F[:, 0] = -x and the
    leading diagonal entry is the signal power).  A list of
    trajectories (independent trials of the same configuration) is
    averaged entrywise.
    """
    trajs, xs = _as_trajectory_list(trajectory, x_true)
    n = trajs[0].R.shape[0]
    vg = 0.0
    vp = 0.0
    for tr, x in zip(trajs, xs):
        G, F = _error_matrices(tr, x)
        vg = vg + (G.conj().T @ G) / n
        vp = vp + (F.conj().T @ F) / n
    vg = vg / len(trajs)
    vp = vp / len(trajs)
    # the quadratic forms are Hermitian by construction up to roundoff
    vg = 0.5 * (vg + vg.conj().T)
    vp = 0.5 * (vp + vp.conj().T)
    return vg, vp


def _normalized_corr(a, b):
    """|<a|b>| / (||a|| ||b||); ~1/sqrt(N) for independent vectors."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return abs(np.vdot(a, b)) / (na * nb)


def orthogonality_residuals(trajectory, x_true):
    """Normalized correlations that should vanish at the CLT rate.

    Returns a dict of per-iteration arrays:
      "g_x"[t-1]  = corr(g_t, x)
      "g_F"[t-1]  = max_k corr(g_t, f_k), k = 2..t  (f_1 = -x is the
                    trivial first column and is reported under "g_x")
      "f_G"[t-1]  = max_k corr(f_{t+1}, g_k), k = 1..t
    For orthogonalized outputs all entries are O(1/sqrt(N)); an
    un-orthogonalized denoiser shows an O(1) entry in "f_G".
    """
    trajs, xs = _as_trajectory_list(trajectory, x_true)
    if len(trajs) != 1:
        raise ValueError("residuals are per-trajectory; pass one at a time")
    G, F = _error_matrices(trajs[0], xs[0])
    x = xs[0]
    T = G.shape[1]
    g_x = np.zeros(T)
    g_F = np.zeros(T)
    f_G = np.zeros(T)
    for ti in range(T):
        g = G[:, ti]
        g_x[ti] = _normalized_corr(g, x)
        if ti >= 1:
            g_F[ti] = max(
                _normalized_corr(g, F[:, k]) for k in range(1, ti + 1)
            )
        f_next = F[:, ti + 1]
        f_G[ti] = max(_normalized_corr(f_next, G[:, k]) for k in range(ti + 1))
    return {"g_x": g_x, "g_F": g_F, "f_G": f_G}


def joint_posterior_variance(cov2, prior, nodes=60):
    """Average posterior variance of x from two jointly observed messages.

    The channel is r_k = x + g_k, k = 1, 2, with (g_1, g_2) zero-mean
    circular complex Gaussian of covariance cov2 (2x2, Hermitian PSD) and
    x drawn from the Bernoulli-Gaussian prior.  Computed by quadrature on
    the bivariate Gaussian channel directly -- the conditional mean and
    variance come from the 2x2 joint-Gaussian formulas, never from a
    pre-collapsed scalar message, so this is an independent probe of
    whether the second message adds information.

    Reduction: whiten r = L u (Cholesky), rotate so the signal direction
    is the first coordinate, u = (a x + w_1, w_2) with a = ||L^{-1} 1||.
    Circular symmetry in each complex coordinate leaves two radial
    variables on a nodes x nodes grid; the integrand is constant in the
    second, which integrates to 1 and doubles as a sanity check on the
    grid.
    """
    cov2 = np.asarray(cov2, dtype=complex)
    L = np.linalg.cholesky(cov2)
    mvec = np.linalg.solve(L, np.ones(2, dtype=complex))
    a2 = float(np.real(np.vdot(mvec, mvec)))
    mu = prior.mu
    s = prior.slab_var
    v_sig = 1.0 + a2 * s          # var of u_1 under the slab component
    v_slab = s / v_sig            # posterior var of x given slab, any r
    b = s * np.sqrt(a2) / v_sig   # |E[x | u, slab]| = b * |u_1|

    # radial grids; composite split at the occupancy-transition radius
    def radial_nodes(hi, brk):
        xg, wg = np.polynomial.legendre.leggauss(nodes // 2)
        pts = []
        wts = []
        edges = [0.0] + ([brk] if 0.0 < brk < hi else [hi / 4.0]) + [hi]
        for lo, up in zip(edges[:-1], edges[1:]):
            pts.append(0.5 * (up - lo) * (xg + 1.0) + lo)
            wts.append(0.5 * (up - lo) * wg)
        return np.concatenate(pts), np.concatenate(wts)

    if mu < 1.0:
        # |u_1| where the slab/spike posterior odds cross 1
        lr0 = np.log((1.0 - mu) / mu) + np.log(v_sig)
        brk = np.sqrt(max(lr0, 0.0) * v_sig / max(a2 * s, 1e-300))
    else:
        brk = 0.0
    hi1 = 8.0 * np.sqrt(v_sig)
    r1, w1 = radial_nodes(hi1, brk)
    r2, w2 = radial_nodes(8.0, 0.0)

    # mixture density of |u_1| (Rayleigh components) and occupancy
    ray0 = 2.0 * r1 * np.exp(-(r1 ** 2))
    ray1 = (2.0 * r1 / v_sig) * np.exp(-(r1 ** 2) / v_sig)
    if mu < 1.0:
        # the radius densities carry the same ratio as the complex ones
        num = mu * ray1
        den = num + (1.0 - mu) * ray0
        # guard the far tail where both densities underflow
        with np.errstate(invalid="ignore", divide="ignore"):
            pi = np.where(den > 0.0, num / den, 1.0)
        pdf1 = mu * ray1 + (1.0 - mu) * ray0
    else:
        pi = np.ones_like(r1)
        pdf1 = ray1
    var_given = pi * v_slab + pi * (1.0 - pi) * (b * r1) ** 2
    inner = float(np.sum(w1 * pdf1 * var_given))
    # second radial coordinate carries no signal; its weight must sum to 1
    norm2 = float(np.sum(w2 * 2.0 * r2 * np.exp(-(r2 ** 2))))
    return inner * norm2


def sufficiency_gap(trajectory, x_true, prior, nodes=60):
    """Relative information gain of the previous message over the last.

    For each t >= 2 the empirical 2x2 error covariance of (r_{t-1}, r_t)
    defines a bivariate Gaussian channel; the entry reported is

        (var{x | r_t} - var{x | r_{t-1}, r_t}) / var{x | r_t}

    with the scalar term evaluated at the empirical variance of r_t.  A
    value near zero means the last damped message is a sufficient
    statistic of the pair; a clearly positive value means memory was
    discarded.  Entry [0] corresponds to t = 2.
    """
    trajs, xs = _as_trajectory_list(trajectory, x_true)
    if len(trajs) != 1:
        raise ValueError("sufficiency gap is per-trajectory")
    G, _ = _error_matrices(trajs[0], xs[0])
    n, T = G.shape
    if T < 2:
        raise MissingHistory("need at least two retained iterations")
    gaps = np.zeros(T - 1)
    for ti in range(1, T):
        pair = G[:, ti - 1 : ti + 1]
        cov2 = pair.conj().T @ pair / n
        cov2 = 0.5 * (cov2 + cov2.conj().T)
        v_last = float(np.real(cov2[1, 1]))
        scalar = prior.mmse(v_last)
        if np.array_equal(pair[:, 0], pair[:, 1]):
            gaps[ti - 1] = 0.0
            continue
        joint = joint_posterior_variance(cov2, prior, nodes=nodes)
        gaps[ti - 1] = (scalar - joint) / scalar
    return gaps


@dataclass
class DiagnosticsReport:
    """Bundle of the empirical structural checks for one configuration."""

    v_gamma_emp: np.ndarray
    v_phi_emp: np.ndarray
    lbandedness_gamma: float
    lbandedness_phi: float
    orthogonality: dict
    monotone_gamma: bool
    monotone_phi: bool
    se_deviation_db: np.ndarray | None = None
    sufficiency: np.ndarray | None = None
    notes: dict = field(default_factory=dict)


def build_report(trajectory, x_true, prior=None, se_track=None,
                 with_sufficiency=False):
    """Assemble a DiagnosticsReport from retained trajectories.

    trajectory may be one Trajectory or a list of trials; the
    orthogonality residuals and sufficiency gap are computed on the first
    trial, the covariances on the average.
    """
    trajs, xs = _as_trajectory_list(trajectory, x_true)
    vg, vp = empirical_covariances(trajs, xs)
    orth = orthogonality_residuals(trajs[0], xs[0])
    diag_g = np.real(np.diag(vg))
    diag_p = np.real(np.diag(vp))
    report = DiagnosticsReport(
        v_gamma_emp=vg,
        v_phi_emp=vp,
        lbandedness_gamma=lbandedness_score(np.real(vg)),
        lbandedness_phi=lbandedness_score(np.real(vp)),
        orthogonality=orth,
        monotone_gamma=bool(np.all(np.diff(diag_g) <= 0.0)),
        monotone_phi=bool(np.all(np.diff(diag_p[1:]) <= 0.0)),
    )
    if se_track is not None:
        k = min(len(diag_g), len(se_track.v_gamma))
        with np.errstate(divide="ignore"):
            report.se_deviation_db = 10.0 * np.log10(
                diag_g[:k] / np.asarray(se_track.v_gamma[:k])
            )
    if with_sufficiency:
        if prior is None:
            raise ValueError("sufficiency gap needs the prior")
        report.sufficiency = sufficiency_gap(trajs[0], xs[0], prior)
    return report
