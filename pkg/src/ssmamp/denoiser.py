"""Bernoulli-Gaussian posterior denoiser and its orthogonalized form.

Signal prior: x = b * g with P(b = 1) = mu and g ~ CN(0, 1/mu), so
E|x|^2 = 1.  For an AWGN observation r = x + w, w ~ CN(0, v), the
posterior mean, posterior variance, scalar mmse(v), and the pairwise
error covariance of two denoisers applied to correlated observations
all reduce to one- or two-dimensional radial integrals, evaluated here
with deterministic quadrature.  The test suite checks every closed form
against direct numerical integration and Monte Carlo.

The orthogonalized (divergence-free) denoiser is
    phi(r) = (phihat(r) - phihat' r) / (1 - phihat'),  phihat' = mmse(v)/v,
whose error satisfies E{(phi - x) conj(w)} = 0 and has variance
    v_out = 1 / (1/mmse(v) - 1/v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import i1e

from .errors import DegenerateDivergence, NonpositiveVariance

VARIANCE_FLOOR = 1e-15
DIVERGENCE_CEILING = 1.0 - 1e-12


def _quad_segmented(f, hi, feature_points=()):
    """Adaptive quadrature on [0, hi] segmented at decades and features.

    QUADPACK's global extrapolation can silently lose ~1e-5 relative mass
    on integrands that mix a sharp sigmoid with a long exponential tail;
    integrating each decade separately keeps every piece easy.
    """
    edges = {0.0, hi}
    edges.update(hi * 10.0**-k for k in range(1, 7))
    edges.update(p for p in feature_points if 0.0 < p < hi)
    edges = sorted(edges)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(
            f, a, b, epsabs=1e-15, epsrel=1e-13, limit=200, full_output=1
        )[0]
    return total


@dataclass
class BernoulliGaussianPrior:
    """Sparsity mu in (0, 1]; mu = 1 is the pure Gaussian prior."""

    mu: float

    def __post_init__(self):
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("mu must lie in (0, 1]")

    @property
    def slab_var(self):
        return 1.0 / self.mu

    def occupancy(self, r, v):
        """Posterior probability that the spike is active, pi(r)."""
        s = self.slab_var
        u = np.abs(r) ** 2
        if self.mu == 1.0:
            return np.ones_like(u)
        logit = (
            np.log((1.0 - self.mu) / self.mu)
            + np.log((s + v) / v)
            - u * s / (v * (s + v))
        )
        return 1.0 / (1.0 + np.exp(logit))

    def occupancy_transition(self, v):
        """|r|^2 at which the occupancy crosses 1/2 (0 when mu = 1 or the
        sigmoid never crosses)."""
        if self.mu == 1.0:
            return 0.0
        s = self.slab_var
        u = (v * (s + v) / s) * (
            np.log((1.0 - self.mu) / self.mu) + np.log((s + v) / v)
        )
        return max(float(u), 0.0)

    def posterior_mean(self, r, v):
        """E{x | r} for r = x + CN(0, v)."""
        v = _checked_variance(v)
        s = self.slab_var
        return self.occupancy(r, v) * (s / (s + v)) * r

    def posterior_var(self, r, v):
        """E{|x|^2 | r} - |E{x | r}|^2, pointwise."""
        v = _checked_variance(v)
        s = self.slab_var
        pi = self.occupancy(r, v)
        c = s / (s + v)
        second = pi * (s * v / (s + v) + c**2 * np.abs(r) ** 2)
        return second - np.abs(self.posterior_mean(r, v)) ** 2

    def mmse(self, v):
        """Scalar mmse(v) = 1 - E{|posterior_mean|^2} over the prior."""
        v = _checked_variance(v)
        if self.mu == 1.0:
            return v / (1.0 + v)
        s = self.slab_var
        c = s / (s + v)
        u_star = self.occupancy_transition(v)

        # E|phihat|^2 = E{ pi(u)^2 c^2 u } with u = |r|^2 mixed over the two
        # branches: u ~ Exp(mean v) w.p. 1 - mu, Exp(mean s + v) w.p. mu.
        # The branches live on very different scales, so integrate each on
        # its own domain with a breakpoint at the occupancy transition.
        def branch(scale):
            def integrand(u):
                pi = self.occupancy(np.sqrt(u), v)
                return pi**2 * c**2 * u * np.exp(-u / scale) / scale

            return _quad_segmented(integrand, 50.0 * scale, (u_star,))

        val = (1.0 - self.mu) * branch(v) + self.mu * branch(s + v)
        return 1.0 - val


def _checked_variance(v):
    if v <= 0.0:
        raise NonpositiveVariance("observation variance must be positive")
    return max(float(v), VARIANCE_FLOOR)


@dataclass
class DenoiserOutput:
    x_next: np.ndarray
    v_next: float
    phi_prime: float
    mmse: float


def orthogonal_nle(r, v, prior):
    """Divergence-free denoiser step on observation r = x + CN(0, v).

    Raises DegenerateDivergence when phihat' = mmse(v)/v is within 1e-12
    of one, i.e. the observation carries (numerically) no information.
    """
    v = _checked_variance(v)
    m = prior.mmse(v)
    phi_prime = m / v
    if phi_prime >= DIVERGENCE_CEILING:
        raise DegenerateDivergence("denoiser divergence too close to one")
    x_next = (prior.posterior_mean(r, v) - phi_prime * r) / (1.0 - phi_prime)
    v_next = max(1.0 / (1.0 / m - 1.0 / v), VARIANCE_FLOOR)
    return DenoiserOutput(x_next=x_next, v_next=v_next, phi_prime=phi_prime, mmse=m)


def nle_output_variance(v, prior):
    """Error variance of the orthogonalized denoiser at input variance v."""
    v = _checked_variance(v)
    m = prior.mmse(v)
    if m / v >= DIVERGENCE_CEILING:
        raise DegenerateDivergence("denoiser divergence too close to one")
    return max(1.0 / (1.0 / m - 1.0 / v), VARIANCE_FLOOR)


# ---------------------------------------------------------------------------
# Pairwise error covariance of two orthogonalized denoisers.
#
# Observations r_k = x + w_k with (w_1, w_2) jointly circular Gaussian,
# Var w_k = v_k, E{w_1 conj(w_2)} = c (real).  Writing a_k = mmse(v_k)/v_k,
# P_k = 1 - mmse(v_k), and Q = E{phihat_1(r_1) conj(phihat_2(r_2))},
#
#   E{(phi_1 - x) conj(phi_2 - x)}
#       = (Q - P_1 - P_2 + 1 - a_1 a_2 c) / ((1 - a_1)(1 - a_2)),
#
# using E{phihat_k conj(r_k)} = E{x conj(r_k)} = 1 exactly.  Only Q needs
# quadrature.  Conditioning on the spike pattern, (r_1, r_2) is circular
# Gaussian with covariance K; in polar coordinates the phase integral of
# exp(2 q rho_1 rho_2 cos) against exp(i (theta_1 - theta_2)) produces a
# modified Bessel factor I_1, leaving a 2-D radial integral:
#
#   E_K{h_1(|r_1|^2) h_2(|r_2|^2) r_1 conj(r_2)}
#     = (4 / det K) * int int h_1 h_2 rho_1^2 rho_2^2
#                       I_1(2 q rho_1 rho_2) e^{-a rho_1^2 - b rho_2^2}
#   with [a, -q; -q, b] = K^{-1}.
# ---------------------------------------------------------------------------

_GAUSS_NODES = 96


def _split_nodes(lo, hi, brk, x, wq):
    """Composite Gauss-Legendre nodes on [lo, hi] split at brk (clipped).

    lo/hi may be arrays (one window per row); returns node and weight arrays
    with two segments per row.  A breakpoint outside a window collapses one
    segment to zero width, which contributes zero weight.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    mid = np.clip(brk, lo, hi)
    segs = []
    wgts = []
    for a, b in ((lo, mid), (mid, hi)):
        segs.append(a[:, None] + 0.5 * (x[None, :] + 1.0) * (b - a)[:, None])
        wgts.append(0.5 * wq[None, :] * (b - a)[:, None])
    return np.concatenate(segs, axis=1), np.concatenate(wgts, axis=1)


def _radial_product_moment(h1, h2, K, brk1=0.0, brk2=0.0, nodes=_GAUSS_NODES):
    """E{h1(|r1|^2) h2(|r2|^2) r1 conj(r2)} for (r1, r2) ~ CN(0, K), K real.

    The combined radial exponent factors as
        -(rho_2 - |alpha| rho_1)^2 k11/det - rho_1^2 / k11,
    alpha = k12 / k11, so for each outer node the inner grid is centered on
    the conditional ridge |alpha| rho_1 with width sqrt(det / k11).  brk1 and
    brk2 are radii where h1 / h2 have sharp features (occupancy sigmoids);
    the composite rule places a segment boundary there.
    """
    k11, k12, k22 = K[0, 0], K[0, 1], K[1, 1]
    det = k11 * k22 - k12 * k12
    if k11 <= 0.0 or k22 <= 0.0 or det < -1e-9 * k11 * k22:
        raise NonpositiveVariance("joint covariance is not positive definite")
    if det <= 1e-12 * k11 * k22:
        # includes roundoff-negative determinants: rank-one geometry
        # rank-one covariance: r2 = alpha r1 exactly; adaptive 1-D rule
        alpha = k12 / k11

        def f(u):
            return h1(u) * h2(alpha**2 * u) * u * np.exp(-u / k11) / k11

        pts = (brk1**2, brk2**2 / max(alpha**2, 1e-300))
        return alpha * _quad_segmented(f, 45.0 * k11, pts)
    a = k22 / det
    b = k11 / det
    q = k12 / det
    x, wq = np.polynomial.legendre.leggauss(nodes)
    r1, w1 = _split_nodes(0.0, 9.0 * np.sqrt(k11), brk1, x, wq)
    r1 = r1[0]
    w1 = w1[0]
    ridge = np.abs(k12) / k11 * r1                 # conditional center per node
    half = 9.0 * np.sqrt(det / k11)
    lo = np.maximum(ridge - half, 0.0)
    hi = np.minimum(ridge + half, ridge + 9.0 * np.sqrt(k22))
    R2, W2 = _split_nodes(lo, hi, brk2, x, wq)     # one row per outer node
    R1 = r1[:, None]
    # i1e(z) = I_1(z) e^{-|z|}; the combined exponent is always <= 0 because
    # det K > 0 implies a b >= q^2.
    z = 2.0 * q * R1 * R2
    expo = -a * R1**2 - b * R2**2 + np.abs(z)
    core = np.sign(z) * i1e(np.abs(z)) * np.exp(expo)
    grid = h1(R1**2) * h2(R2**2) * R1**2 * R2**2 * core
    return (4.0 / det) * (w1 @ np.sum(grid * W2, axis=1))


def _branch_covariances(v1, v2, c, s):
    """Spike-pattern-conditional covariances of (r_1, r_2)."""
    k0 = np.array([[v1, c], [c, v2]])
    k1 = np.array([[v1 + s, c + s], [c + s, v2 + s]])
    return k0, k1


def posterior_mean_product(v1, v2, c, prior, nodes=_GAUSS_NODES):
    """Q = E{phihat(r_1; v_1) conj(phihat(r_2; v_2))} under joint noise."""
    s = prior.slab_var
    c1 = s / (s + v1)
    c2 = s / (s + v2)
    h1 = lambda u: prior.occupancy(np.sqrt(u), v1) * c1
    h2 = lambda u: prior.occupancy(np.sqrt(u), v2) * c2
    brk1 = np.sqrt(prior.occupancy_transition(v1))
    brk2 = np.sqrt(prior.occupancy_transition(v2))
    k0, k1 = _branch_covariances(v1, v2, c, s)
    q = prior.mu * _radial_product_moment(h1, h2, k1, brk1, brk2, nodes)
    if prior.mu < 1.0:
        q += (1.0 - prior.mu) * _radial_product_moment(h1, h2, k0, brk1, brk2, nodes)
    return q


def nle_cross_covariance(v1, v2, c, prior, nodes=_GAUSS_NODES):
    """E{(phi_1 - x) conj(phi_2 - x)} for orthogonalized denoisers applied
    to observations with input covariance [[v1, c], [c, v2]]."""
    # roundoff in upstream covariance tracking can push |corr| a hair
    # above 1; a correlation cannot exceed 1, so clamp to the boundary
    # (the rank-one path then handles the degenerate geometry)
    cmax = np.sqrt(v1 * v2)
    c = float(np.clip(c, -cmax, cmax))
    m1 = prior.mmse(v1)
    m2 = prior.mmse(v2)
    a1 = m1 / v1
    a2 = m2 / v2
    if a1 >= DIVERGENCE_CEILING or a2 >= DIVERGENCE_CEILING:
        raise DegenerateDivergence("denoiser divergence too close to one")
    p1 = 1.0 - m1
    p2 = 1.0 - m2
    q = posterior_mean_product(v1, v2, c, prior, nodes)
    return (q - p1 - p2 + 1.0 - a1 * a2 * c) / ((1.0 - a1) * (1.0 - a2))
