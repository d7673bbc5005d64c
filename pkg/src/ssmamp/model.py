"""Compressed-sensing measurement model with controllable conditioning.

The sensing matrix is A = U Sigma V' with U = I and V' = Pi F, where Pi is
a random permutation and F the unitary DFT.  Both A and A' therefore apply
in O(N log N) via the FFT; no dense matrix is ever formed.  Singular values
follow a geometric profile d_i / d_{i+1} = kappa^(1/J), scaled so that
sum d_i^2 = N, which makes the first spectral moment of A A' equal to one.

The module also builds the deterministic spectral tables (lambda_t, b_t,
w_t, wbar_{i,j}) that drive memory AMP and its state evolution, plus a
black-box power-iteration estimator of the lambda_t for operators whose
spectrum is unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import comb

from .errors import NonpositiveVariance


@dataclass
class SensingModel:
    """Matrix-free A = Sigma Pi F with geometric singular-value profile."""

    m: int
    n: int
    kappa: float
    d: np.ndarray          # singular values, length J = min(m, n)
    perm: np.ndarray       # permutation of range(n)
    inv_perm: np.ndarray = field(init=False)

    def __post_init__(self):
        self.inv_perm = np.argsort(self.perm)

    @property
    def j(self):
        return min(self.m, self.n)

    @property
    def delta(self):
        return self.m / self.n

    def apply_A(self, x):
        """y = A x, input length n, output length m."""
        u = np.fft.fft(x, norm="ortho")[self.perm]
        y = np.zeros(self.m, dtype=complex)
        y[: self.j] = self.d * u[: self.j]
        return y

    def apply_AH(self, y):
        """x = A' y, input length m, output length n."""
        w = np.zeros(self.n, dtype=complex)
        w[: self.j] = self.d * y[: self.j]
        return np.fft.ifft(w[self.inv_perm], norm="ortho")

    def to_spectral(self, x):
        """Coordinates of x in the right-singular basis (rows of V')."""
        return np.fft.fft(x, norm="ortho")[self.perm]

    def from_spectral(self, u):
        """Inverse of to_spectral."""
        return np.fft.ifft(u[self.inv_perm], norm="ortho")

    def condition_number(self):
        """d_max / d_min; equals kappa^((J-1)/J) for the geometric profile."""
        return float(self.d[0] / self.d[-1])


def build_sensing_model(m, n, kappa, seed):
    """Sample a SensingModel with condition control kappa >= 1."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    j = min(m, n)
    rng = np.random.default_rng(seed)
    # d_i = c * kappa^(-(i-1)/J), normalized so sum d_i^2 = n
    prof = kappa ** (-np.arange(j) / j)
    d = prof * np.sqrt(n / np.sum(prof**2))
    perm = rng.permutation(n)
    return SensingModel(m=m, n=n, kappa=float(kappa), d=d, perm=perm)


def sample_signal(n, mu, seed):
    """Bernoulli-Gaussian signal: x_i = b_i * g_i with P(b_i = 1) = mu and
    g_i ~ CN(0, 1/mu), so E|x_i|^2 = 1.  seed may be an int or a Generator."""
    rng = np.random.default_rng(seed)
    b = rng.random(n) < mu
    g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2 * mu)
    return b * g


@dataclass
class Instance:
    """One realization y = A x + n of the measurement model."""

    x: np.ndarray
    n: np.ndarray
    y: np.ndarray
    sigma2: float


def sample_instance(model, mu, snr_db, seed):
    """Draw signal and noise; SNR is 1/sigma2 since E|x_i|^2 = 1 and the
    spectrum is normalized to unit mean square."""
    rng = np.random.default_rng(seed)
    x = sample_signal(model.n, mu, rng)
    sigma2 = 10.0 ** (-snr_db / 10.0)
    noise = np.sqrt(sigma2 / 2) * (
        rng.standard_normal(model.m) + 1j * rng.standard_normal(model.m)
    )
    y = model.apply_A(x) + noise
    return Instance(x=x, n=noise, y=y, sigma2=sigma2)


@dataclass
class SpectralTables:
    """Deterministic polynomials of the spectrum used by memory AMP.

    lam[t]  = (1/N) sum_i d_i^(2t)          for t = 0..2T  (lam[0] = M/N)
    lam_dagger = (lam_max + lam_min) / 2 with lam_min = d_min^2 if M <= N
                 else 0
    b[t]    = sum_{i=0}^{t} C(t, i) (-1)^i lam_dagger^(t-i) lam[i]
            = (1/N) tr (lam_dagger I - A A')^t  padded with zero rows if M<N
    w[t]    = lam_dagger b[t] - b[t+1] = (1/N) tr A' B^t A,  B = ld I - A A'
    wbar(i, j) = lam_dagger w[i+j] - w[i+j+1] - w[i] w[j]
    """

    lam: np.ndarray
    lam_dagger: float
    lam_min: float
    lam_max: float
    b: np.ndarray
    w: np.ndarray

    def wbar(self, i, j):
        return self.lam_dagger * self.w[i + j] - self.w[i + j + 1] - self.w[i] * self.w[j]

    def wbar_matrix(self, size):
        idx = np.arange(size)
        s = idx[:, None] + idx[None, :]
        return self.lam_dagger * self.w[s] - self.w[s + 1] - np.outer(
            self.w[:size], self.w[:size]
        )


def _tables_from_lambda(lam, lam_dagger, lam_min, lam_max, T):
    lam = np.asarray(lam, dtype=float)
    tmax = 2 * T
    b = np.zeros(tmax + 1)
    for t in range(tmax + 1):
        i = np.arange(t + 1)
        b[t] = np.sum(comb(t, i) * (-1.0) ** i * lam_dagger ** (t - i) * lam[i])
    w = lam_dagger * b[:tmax] - b[1 : tmax + 1]
    return SpectralTables(
        lam=lam, lam_dagger=lam_dagger, lam_min=lam_min, lam_max=lam_max, b=b, w=w
    )


def exact_spectral_moments(model, T):
    """SpectralTables from the known singular values, valid through
    iteration T (lam up to 2T, b up to 2T, w up to 2T - 1).

    b and w are computed directly from the spectrum of B = ld I - A A'
    (eigenvalues ld - d_i^2, padded with ld for the zero rows when M > N);
    the binomial expansion in lam overflows for large T while these powers
    stay bounded by the spectral radius of B.
    """
    d2 = model.d.astype(float) ** 2
    n = model.n
    tmax = 2 * T
    lam_max = float(np.max(d2))
    lam_min = float(np.min(d2)) if model.m <= model.n else 0.0
    lam_dagger = 0.5 * (lam_max + lam_min)
    # eigenvalues of B on the range of A; powers in extended precision
    # since |mu|^(2T) can exceed the float64 range for long runs
    mu = (lam_dagger - d2).astype(np.longdouble)
    ld = np.longdouble(lam_dagger)
    n_zero = model.m - len(d2)                 # zero rows contribute ld each
    powers = np.ones_like(mu)
    lam = np.empty(tmax + 1, dtype=np.longdouble)
    b = np.empty(tmax + 1, dtype=np.longdouble)
    w = np.empty(tmax, dtype=np.longdouble)
    lam[0] = model.m / n
    b[0] = model.m / n
    d2_pow = np.ones_like(mu)
    d2l = d2.astype(np.longdouble)
    for t in range(1, tmax + 1):
        d2_pow *= d2l
        lam[t] = np.sum(d2_pow) / n
        powers *= mu
        b[t] = np.sum(powers) / n
        if n_zero:
            b[t] += n_zero * ld**t / n
    mu_pow = np.ones_like(mu)
    for t in range(tmax):
        w[t] = np.sum(d2l * mu_pow) / n
        mu_pow *= mu
    if max(np.abs(b).max(), np.abs(w).max(), np.abs(lam).max()) < 1e300:
        lam, b, w = lam.astype(float), b.astype(float), w.astype(float)
    return SpectralTables(
        lam=lam, lam_dagger=lam_dagger, lam_min=lam_min, lam_max=lam_max, b=b, w=w
    )


def estimate_spectral_moments(apply_A, apply_AH, m, n, T, seed):
    """Black-box estimate of lam[0..2T] using one random probe.

    s_0 ~ CN(0, I/N); s_t = A s_{t-1} for odd t, A' s_{t-1} for even t;
    lam_hat[t] = ||s_t||^2.  Also returns the spectral-radius upper bound
    lam_max_up = (N lam_hat[2T])^(1/(2T)), which dominates lam_max for any
    probe since ||(A A')^T s_0||^(1/T) <= lam_max ||s_0||^(1/T) is reversed
    in expectation; the bound holds because moments of growing order are
    dominated by the top eigenvalue.
    """
    rng = np.random.default_rng(seed)
    s = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2 * n)
    lam_hat = np.empty(2 * T + 1)
    lam_hat[0] = m / n
    for t in range(1, 2 * T + 1):
        s = apply_A(s) if t % 2 == 1 else apply_AH(s)
        lam_hat[t] = float(np.real(np.vdot(s, s)))
    lam_max_up = (n * lam_hat[2 * T]) ** (1.0 / (2 * T))
    return lam_hat, float(lam_max_up)


def tables_from_estimates(lam_hat, lam_max_up, m, n, T):
    """SpectralTables built from black-box moment estimates."""
    lam_min = 0.0  # unknown spectrum floor; safe lower bound
    lam_dagger = 0.5 * (lam_max_up + lam_min)
    return _tables_from_lambda(lam_hat, lam_dagger, lam_min, lam_max_up, T)


def mse_db(mse):
    """10 log10 of a mean-square error (guards the zero case)."""
    if mse <= 0:
        raise NonpositiveVariance("mse must be positive to express in dB")
    return 10.0 * np.log10(mse)
