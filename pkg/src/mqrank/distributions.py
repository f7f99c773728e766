"""Reference-distribution numerics for the test statistics.

Central and noncentral chi-square tails come from scipy. Tail
probabilities of positively weighted sums of independent (noncentral)
chi-square variables are computed by numerical inversion of the
characteristic function (Imhof's method):

    P(Q > x) = 1/2 + (1/pi) * int_0^inf sin(theta(u)) / (u * rho(u)) du,

    theta(u) = 1/2 * sum_i [ h_i * atan(l_i u) + z_i l_i u / (1 + l_i^2 u^2) ]
               - x u / 2,
    rho(u)   = prod_i (1 + l_i^2 u^2)^{h_i/4}
               * exp( 1/2 * sum_i z_i l_i^2 u^2 / (1 + l_i^2 u^2) ),

with weights l_i > 0, noncentralities z_i >= 0 and per-component degrees
of freedom h_i. The integrand oscillates at asymptotic frequency x/2 and
decays like u^(-1 - sum(h)/2), so the integral is split into a head,
integrated by adaptive Gauss-Kronrod over geometrically growing panels,
and a Fourier tail handled by QUADPACK's cosine/sine transform routine
(QAWF), which accelerates the oscillatory remainder. When the absolute
truncation bound already meets the tolerance before the first full
oscillation, the tail is dropped instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.stats import chi2, ncx2

from .exceptions import QuadratureFailure

# absolute error budget for imhof_upper; the contract promises 1e-6
_TAIL_TOL = 5e-8
_HEAD_EPSABS = 1e-11
_MAX_PANELS = 4000


@dataclass(frozen=True)
class WeightedChiSquareMixture:
    """Distribution of sum_i weights_i * chisq(dfs_i, noncentralities_i)."""

    weights: tuple
    noncentralities: tuple = None
    dfs: tuple = None

    def __post_init__(self):
        w = tuple(float(v) for v in np.atleast_1d(self.weights))
        z = self.noncentralities
        z = (0.0,) * len(w) if z is None else tuple(float(v) for v in np.atleast_1d(z))
        d = self.dfs
        d = (1,) * len(w) if d is None else tuple(int(v) for v in np.atleast_1d(d))
        if not (len(w) == len(z) == len(d)):
            raise ValueError("weights, noncentralities and dfs must have equal length")
        if any(v <= 0.0 for v in w):
            raise ValueError("mixture weights must be strictly positive")
        if any(v < 0.0 for v in z):
            raise ValueError("noncentralities must be nonnegative")
        if any(v < 1 for v in d):
            raise ValueError("degrees of freedom must be >= 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "noncentralities", z)
        object.__setattr__(self, "dfs", d)

    @property
    def k(self) -> int:
        return len(self.weights)

    def mean(self) -> float:
        w, z, d = map(np.asarray, (self.weights, self.noncentralities, self.dfs))
        return float(np.sum(w * (d + z)))

    def variance(self) -> float:
        w, z, d = map(np.asarray, (self.weights, self.noncentralities, self.dfs))
        return float(np.sum(w ** 2 * (2 * d + 4 * z)))


def chisq_upper(x: float, k: int) -> float:
    """Upper tail of the central chi-square with k degrees of freedom."""
    if k < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if x <= 0.0:
        return 1.0
    return float(chi2.sf(x, k))


def chisq_quantile(alpha: float, k: int) -> float:
    """x with chisq_upper(x, k) = alpha."""
    return float(chi2.isf(alpha, k))


def chisq_noncentral_upper(x: float, k: int, zeta: float) -> float:
    """Upper tail of the noncentral chi-square; zeta = 0 falls back to central."""
    if zeta < 0.0:
        raise ValueError("noncentrality must be nonnegative")
    if x <= 0.0:
        return 1.0
    if zeta == 0.0:
        return chisq_upper(x, k)
    return float(ncx2.sf(x, k, zeta))


def _imhof_parts(mix: WeightedChiSquareMixture):
    lam = np.asarray(mix.weights, dtype=float)
    zet = np.asarray(mix.noncentralities, dtype=float)
    dfs = np.asarray(mix.dfs, dtype=float)

    def phase_free(u):
        lu = lam * u
        return 0.5 * (np.sum(dfs * np.arctan(lu))
                      + np.sum(zet * lu / (1.0 + lu * lu)))

    def amplitude(u):
        lu2 = (lam * u) ** 2
        log_rho = (0.25 * np.sum(dfs * np.log1p(lu2))
                   + 0.5 * np.sum(zet * lu2 / (1.0 + lu2)))
        return np.exp(-log_rho) / u

    return lam, zet, dfs, phase_free, amplitude


def _truncation_point(mix: WeightedChiSquareMixture, tol: float) -> float:
    """U with (1/pi) * int_U^inf |integrand| du <= tol, ignoring oscillation.

    Uses (1 + l^2 u^2)^{1/4} >= sqrt(l u), so the envelope is bounded by
    u^(-1 - K/2) / prod l_i^{h_i/2} with K = sum h_i; the exponential
    noncentrality factor only shrinks it further.
    """
    lam = np.asarray(mix.weights, dtype=float)
    dfs = np.asarray(mix.dfs, dtype=float)
    ksum = float(dfs.sum())
    log_u = (2.0 / ksum) * (np.log(2.0 / (ksum * np.pi * tol))
                            - 0.5 * float(np.sum(dfs * np.log(lam))))
    return float(np.exp(min(log_u, 690.0)))


def _chernoff_tail_bound(mix: WeightedChiSquareMixture, x: float) -> float:
    """Upper bound on P(Q > x) from the MGF at t = 1/(4 max weight)."""
    lam = np.asarray(mix.weights, dtype=float)
    zet = np.asarray(mix.noncentralities, dtype=float)
    dfs = np.asarray(mix.dfs, dtype=float)
    t = 0.25 / float(np.max(lam))
    tl = t * lam
    log_mgf = float(-0.5 * np.sum(dfs * np.log1p(-2.0 * tl))
                    + np.sum(zet * tl / (1.0 - 2.0 * tl)))
    return float(np.exp(min(log_mgf - t * x, 0.0)))


def imhof_upper(mix: WeightedChiSquareMixture, x: float) -> float:
    """P(Q > x) for the weighted mixture, absolute error <= 1e-6.

    Raises QuadratureFailure when the quadrature cannot certify the
    tolerance.
    """
    x = float(x)
    if x <= 0.0:
        return 1.0
    # deep tail: when an exponential bound already certifies p < 1e-9,
    # skip the (increasingly oscillatory) inversion altogether
    if _chernoff_tail_bound(mix, x) < 1e-9:
        return 0.0

    lam, zet, dfs, phase_free, amplitude = _imhof_parts(mix)

    def integrand(u):
        return np.sin(phase_free(u) - 0.5 * x * u) * amplitude(u)

    w = 0.5 * x
    cycle = 2.0 * np.pi / w
    lmax = float(np.max(lam))
    u_amp = _truncation_point(mix, _TAIL_TOL)

    if u_amp <= cycle:
        upper, use_tail = u_amp, False
    else:
        upper, use_tail = max(4.0 / lmax, cycle), True

    head, head_err = _integrate_head(integrand, upper, cycle, lmax)

    tail = 0.0
    tail_err = 0.0
    if use_tail:
        tail, tail_err = _integrate_tail(phase_free, amplitude, upper, w)

    total_err = head_err + tail_err
    if not np.isfinite(total_err) or total_err > 5e-7:
        raise QuadratureFailure(
            f"estimated quadrature error {total_err:.2e} exceeds budget")
    p = 0.5 + (head + tail) / np.pi
    return float(min(1.0, max(0.0, p)))


def _integrate_head(integrand, upper, cycle, lmax):
    """Adaptive panels over (0, upper]: geometric growth, capped per cycle."""
    breaks = [0.0]
    s = min(0.5 / lmax, upper / 4.0)
    while s < upper:
        breaks.append(s)
        s *= 4.0
    breaks.append(upper)

    panels = []
    max_len = 25.0 * cycle
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a > max_len:
            m = int(np.ceil((b - a) / max_len))
            if len(panels) + m > _MAX_PANELS:
                raise QuadratureFailure("too many quadrature panels")
            edges = np.linspace(a, b, m + 1)
            panels.extend(zip(edges[:-1], edges[1:]))
        else:
            panels.append((a, b))
    if len(panels) > _MAX_PANELS:
        raise QuadratureFailure("too many quadrature panels")

    total = 0.0
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in panels:
            v, e = integrate.quad(integrand, a, b, limit=300,
                                  epsabs=_HEAD_EPSABS, epsrel=1e-10)
            total += v
            err += e
    return total, err


def _integrate_tail(phase_free, amplitude, upper, w):
    """Fourier tail from `upper`: sin(theta) split against cos/sin(w u).

    On poor convergence the transform is restarted further out, where the
    amplitude is smaller, and the skipped stretch is re-integrated with
    plain oscillation-resolving panels.
    """
    def amp_sin(u):
        return np.sin(phase_free(u)) * amplitude(u)

    def amp_cos(u):
        return np.cos(phase_free(u)) * amplitude(u)

    def full(u):
        return np.sin(phase_free(u) - w * u) * amplitude(u)

    start = upper
    for _ in range(3):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            c = integrate.quad(amp_sin, start, np.inf, weight="cos", wvar=w,
                               epsabs=1e-10, limlst=150, limit=200,
                               full_output=1)
            s = integrate.quad(amp_cos, start, np.inf, weight="sin", wvar=w,
                               epsabs=1e-10, limlst=150, limit=200,
                               full_output=1)
        val = c[0] - s[0]
        err = c[1] + s[1]
        if np.isfinite(err) and err <= 2e-8:
            if start > upper:
                cycle = 2.0 * np.pi / w
                m = int(np.ceil((start - upper) / (25.0 * cycle)))
                edges = np.linspace(upper, start, m + 1)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", integrate.IntegrationWarning)
                    for a, b in zip(edges[:-1], edges[1:]):
                        g, ge = integrate.quad(full, a, b, limit=300,
                                               epsabs=_HEAD_EPSABS, epsrel=1e-10)
                        val += g
                        err += ge
            return val, err
        start *= 16.0
    raise QuadratureFailure("oscillatory tail integration did not converge")


def mixture_quantile(mix: WeightedChiSquareMixture, alpha: float) -> float:
    """Critical value x with imhof_upper(mix, x) = alpha, within 1e-6 in p."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    hi = mix.mean() + 10.0 * np.sqrt(mix.variance())
    for _ in range(200):
        if imhof_upper(mix, hi) < alpha:
            break
        hi *= 2.0
    else:
        raise QuadratureFailure("failed to bracket the mixture quantile")
    return float(brentq(lambda t: imhof_upper(mix, t) - alpha, 0.0, hi,
                        xtol=1e-9, rtol=1e-12))
