"""Multivariate rank-score machinery for simultaneous quantile inference.

For each quantile level the target covariate is removed from the model,
the restricted fit's dual rank-scores are centered into score residuals,
and their inner product with the weighted projection residual of the
target on the nuisance design yields one entry of the score vector. Under
the intersection null the score vector is asymptotically centered normal
with covariance ``v_bar * bridge``, where ``bridge`` is the Brownian-bridge
covariance min(t_l, t_r) - t_l t_r of the chosen levels and ``v_bar`` the
mean-square projection residual. Quadratic forms in the score vector give
chi-square local tests (inverse-covariance weighting) or weighted
chi-square mixtures (any other positive-definite weighting).

Heteroscedasticity enters through the projection weights: per-observation
conditional densities at each level are estimated by a difference quotient
of restricted fits at tau +/- h (Hall-Sheather bandwidth), floored at 0.01,
and their reciprocals form the weighting of the projection. The density
scale cancels in the projection, so only relative weights matter. Because
the estimated weights differ across levels in finite samples, one
projection is computed per level and the covariance scalar averages the
per-level mean squares.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, t as student_t

from .datamodel import Dataset, HypothesisSubset, QuantileSpec, all_subsets, validate
from .distributions import (WeightedChiSquareMixture, chisq_noncentral_upper,
                            chisq_quantile, chisq_upper, imhof_upper,
                            mixture_quantile)
from .exceptions import (BandwidthInfeasible, NotPositiveDefinite, SingularA,
                         SingularProjection)
from .qrsolver import fit, rank_score_function

# floor and division guard for the difference-quotient density estimate
_DENSITY_FLOOR = 0.01
_DENOM_GUARD = 1e-8

# relative spread below which mixture weights are treated as equal, making
# the reference distribution an exactly scaled chi-square
_EQUAL_WEIGHT_RTOL = 1e-9


def hall_sheather_bandwidth(n: int, tau: float, alpha: float = 0.05) -> float:
    """Hall-Sheather rate-optimal bandwidth for quantile density estimation."""
    z_tau = norm.ppf(tau)
    num = 1.5 * norm.pdf(z_tau) ** 2
    den = 2.0 * z_tau ** 2 + 1.0
    return float(n ** (-1.0 / 3.0) * norm.ppf(1.0 - alpha / 2.0) ** (2.0 / 3.0)
                 * (num / den) ** (1.0 / 3.0))


def bandwidth(n: int, tau: float) -> tuple[float, bool]:
    """Usable difference-quotient bandwidth, shrunk when tau +/- h leaves (0,1)."""
    h = hall_sheather_bandwidth(n, tau)
    clipped = False
    if tau - h <= 0.0 or tau + h >= 1.0:
        h = 0.9 * min(tau, 1.0 - tau)
        clipped = True
    if tau - h <= 0.0 or tau + h >= 1.0 or h <= 0.0:
        raise BandwidthInfeasible(f"no usable bandwidth at tau={tau}, n={n}")
    return h, clipped


def bridge_covariance(taus) -> np.ndarray:
    """K x K matrix with entries min(t_l, t_r) - t_l * t_r."""
    t = np.asarray(taus, dtype=float)
    return np.minimum.outer(t, t) - np.outer(t, t)


@dataclass(frozen=True)
class SparsityEstimates:
    """Difference-quotient density estimates at one quantile level.

    f_hat holds the floored per-observation estimates; gamma_lo/gamma_hi
    are the restricted fits at tau -/+ bandwidth that form the quotient.
    """

    tau: float
    bandwidth: float
    f_hat: np.ndarray
    gamma_lo: np.ndarray
    gamma_hi: np.ndarray
    clipped: bool = False


def estimate_sparsity(Z: np.ndarray, y: np.ndarray, tau: float) -> SparsityEstimates:
    """Estimate conditional densities at the tau-th restricted quantile fit.

    The density at observation i is 2h over the fitted quantile spread
    z_i'(gamma(tau+h) - gamma(tau-h)), guarded by a small epsilon in the
    denominator and floored at 0.01 so nonpositive spreads cannot produce
    negative estimates.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n = Z.shape[0]
    h, clipped = bandwidth(n, tau)
    if clipped:
        warnings.warn(
            f"bandwidth at tau={tau} clipped to {h:.4g} to stay inside (0, 1)",
            RuntimeWarning, stacklevel=2)
    lo = fit(Z, y, tau - h)
    hi = fit(Z, y, tau + h)
    spread = Z @ (hi.gamma_hat - lo.gamma_hat)
    with np.errstate(divide="ignore"):
        f = 2.0 * h / (spread - _DENOM_GUARD)
    f_hat = np.maximum(_DENSITY_FLOOR, f)
    if not np.all(np.isfinite(f_hat)):
        raise BandwidthInfeasible(
            f"difference quotient collapsed at tau={tau}")
    return SparsityEstimates(tau=float(tau), bandwidth=h, f_hat=f_hat,
                             gamma_lo=lo.gamma_hat, gamma_hi=hi.gamma_hat,
                             clipped=clipped)


def weighted_projection(Z: np.ndarray, x: np.ndarray,
                        f_hat: np.ndarray) -> tuple[np.ndarray, float]:
    """Residual of the density-weighted projection of x on the columns of Z.

    Weights are the density estimates themselves (reciprocal conditional
    scales); any common factor cancels. Returns the residual vector and
    its mean square.
    """
    Z = np.asarray(Z, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.asarray(f_hat, dtype=float)
    n = Z.shape[0]
    Zw = Z * w[:, None]
    gram = Zw.T @ Z
    try:
        coef = np.linalg.solve(gram, Zw.T @ x)
    except np.linalg.LinAlgError as exc:
        raise SingularProjection("weighted nuisance Gram matrix is singular") from exc
    if not np.all(np.isfinite(coef)):
        raise SingularProjection("weighted projection produced non-finite coefficients")
    resid = x - Z @ coef
    return resid, float(resid @ resid / n)


@dataclass(frozen=True)
class RankScoreState:
    """Everything the subset tests reuse, computed once per dataset.

    score[j] is the normalized inner product of the j-th projection
    residual with the j-th centered dual vector; all 2^K - 1 subset
    statistics are quadratic forms in sub-vectors of it.
    """

    taus: tuple
    null_values: tuple
    score: np.ndarray
    bridge: np.ndarray
    v_bar: float
    v_per_tau: np.ndarray
    proj_resid: np.ndarray
    fits: tuple
    sparsity: tuple

    @property
    def k(self) -> int:
        return len(self.taus)

    @property
    def n(self) -> int:
        return self.proj_resid.shape[1]

    def covariance(self, subset: HypothesisSubset = None) -> np.ndarray:
        """Score covariance v_bar * bridge, optionally restricted to a subset."""
        a = self.v_bar * self.bridge
        if subset is None:
            return a
        pos = subset.positions()
        return a[np.ix_(pos, pos)]


def score_state(dataset: Dataset, spec: QuantileSpec) -> RankScoreState:
    """Fit all restricted models and assemble the shared test state.

    For each level the response is offset by x times the null value, the
    restricted model (nuisance design only) is fit, densities are
    estimated, and the projection residual and centered duals form the
    score entry. The K fits are independent and could run concurrently;
    they are cheap enough that this implementation keeps them serial.
    """
    validate(dataset, spec)
    n = dataset.n
    k = spec.k
    root_n = np.sqrt(n)

    score = np.empty(k)
    v_per_tau = np.empty(k)
    proj_resid = np.empty((k, n))
    fits = []
    sparsity = []
    for j, tau in enumerate(spec.taus):
        y_adj = dataset.y - dataset.x * spec.null_values[j]
        qfit = fit(dataset.Z, y_adj, tau)
        sp = estimate_sparsity(dataset.Z, y_adj, tau)
        resid, v_tau = weighted_projection(dataset.Z, dataset.x, sp.f_hat)
        b = rank_score_function(qfit)
        score[j] = resid @ b / root_n
        v_per_tau[j] = v_tau
        proj_resid[j] = resid
        fits.append(qfit)
        sparsity.append(sp)

    return RankScoreState(taus=spec.taus, null_values=spec.null_values,
                          score=score, bridge=bridge_covariance(spec.taus),
                          v_bar=float(v_per_tau.mean()), v_per_tau=v_per_tau,
                          proj_resid=proj_resid, fits=tuple(fits),
                          sparsity=tuple(sparsity))


# --- reference-distribution descriptors ------------------------------------

@dataclass(frozen=True)
class ChiSquareRef:
    df: int


@dataclass(frozen=True)
class WeightedChiSquareRef:
    weights: tuple


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    reference: object
    p_value: float
    subset: HypothesisSubset


# --- weighting matrices -----------------------------------------------------

@dataclass(frozen=True)
class ErrorFamily:
    """Assumed error distribution for density-reciprocal weighting."""

    name: str
    df: float = None

    def density_at_quantile(self, tau: float) -> float:
        if self.name == "normal":
            return float(norm.pdf(norm.ppf(tau)))
        if self.name == "t":
            return float(student_t.pdf(student_t.ppf(tau, self.df), self.df))
        raise ValueError(f"unknown error family {self.name!r}")


@dataclass(frozen=True)
class WeightingMatrix:
    """Positive-definite weighting of the score quadratic form.

    kind is one of "inverse" (inverse score covariance: the chi-square
    statistic), "identity", "diag-delta" (reciprocal bridge variances),
    "density" (squared reciprocal densities of an assumed error family at
    each level; misspecifying the family redistributes power against a
    blend of the assumed and true alternatives rather than the intended
    ones), or "custom" (explicit K x K matrix, subset via principal
    sub-matrices).
    """

    kind: str
    family: ErrorFamily = None
    matrix: np.ndarray = None

    @staticmethod
    def identity() -> "WeightingMatrix":
        return WeightingMatrix(kind="identity")

    @staticmethod
    def inverse() -> "WeightingMatrix":
        return WeightingMatrix(kind="inverse")

    @staticmethod
    def inverse_diag_delta() -> "WeightingMatrix":
        return WeightingMatrix(kind="diag-delta")

    @staticmethod
    def density_reciprocal(name: str, df: float = None) -> "WeightingMatrix":
        if name == "t" and (df is None or df <= 0):
            raise ValueError("t error family needs positive degrees of freedom")
        return WeightingMatrix(kind="density", family=ErrorFamily(name, df))

    @staticmethod
    def custom(matrix) -> "WeightingMatrix":
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("custom weighting must be a square matrix")
        _check_spd(m, what="custom weighting matrix")
        return WeightingMatrix(kind="custom", matrix=m)

    @staticmethod
    def parse(text: str) -> "WeightingMatrix":
        """Parse CLI-style names: identity | inverse | diag-delta |
        density:normal | density:t:<df>."""
        if text == "identity":
            return WeightingMatrix.identity()
        if text == "inverse":
            return WeightingMatrix.inverse()
        if text == "diag-delta":
            return WeightingMatrix.inverse_diag_delta()
        if text.startswith("density:"):
            parts = text.split(":")
            if parts[1] == "normal" and len(parts) == 2:
                return WeightingMatrix.density_reciprocal("normal")
            if parts[1] == "t" and len(parts) == 3:
                return WeightingMatrix.density_reciprocal("t", float(parts[2]))
            raise ValueError(f"unknown density weighting {text!r}")
        raise ValueError(f"unknown weighting {text!r}")

    def materialize(self, taus, v_bar: float, subset: HypothesisSubset) -> np.ndarray:
        """Weighting matrix for one subset of hypotheses.

        The "inverse" kind inverts the subset's own score covariance, so
        its generalized statistic reduces exactly to the chi-square one;
        every other kind restricts a fixed K x K specification to the
        subset's principal sub-matrix.
        """
        pos = subset.positions()
        taus = tuple(taus)
        if self.kind == "identity":
            b = np.eye(len(pos))
        elif self.kind == "inverse":
            delta_c = bridge_covariance(taus)[np.ix_(pos, pos)]
            if v_bar <= 1e-12:
                raise SingularProjection("projection scale is zero; cannot invert")
            b = np.linalg.inv(v_bar * delta_c)
            b = 0.5 * (b + b.T)
        elif self.kind == "diag-delta":
            t = np.asarray(taus)[pos]
            b = np.diag(1.0 / (t * (1.0 - t)))
        elif self.kind == "density":
            dens = np.array([self.family.density_at_quantile(taus[i]) for i in pos])
            b = np.diag(1.0 / dens ** 2)
        elif self.kind == "custom":
            if self.matrix.shape[0] != len(taus):
                raise ValueError(
                    f"custom weighting is {self.matrix.shape[0]}x"
                    f"{self.matrix.shape[0]} but K={len(taus)}")
            b = self.matrix[np.ix_(pos, pos)]
        else:
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        _check_spd(b, what=f"{self.kind} weighting matrix")
        return b


def _check_spd(b: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(b)):
        raise NotPositiveDefinite(f"{what} has non-finite entries")
    asym = np.max(np.abs(b - b.T))
    scale = max(1.0, float(np.max(np.abs(b))))
    if asym > 1e-10 * scale:
        raise NotPositiveDefinite(f"{what} is not symmetric (max asymmetry {asym:.2e})")
    eig = np.linalg.eigvalsh(0.5 * (b + b.T))
    if eig[0] <= 1e-10 * eig[-1] or eig[-1] <= 0.0:
        raise NotPositiveDefinite(
            f"{what} is not positive definite (eigenvalues {eig.min():.3e}"
            f" .. {eig.max():.3e})")


# --- test statistics ---------------------------------------------------------

def _check_subset(state: RankScoreState, subset: HypothesisSubset) -> None:
    if subset.indices[-1] > state.k:
        raise ValueError(f"subset {subset} references hypotheses beyond K={state.k}")


def statistic_standard(state: RankScoreState,
                       subset: HypothesisSubset) -> TestOutcome:
    """Chi-square local test: score sub-vector against its own covariance."""
    _check_subset(state, subset)
    pos = subset.positions()
    if state.v_bar <= 1e-12:
        raise SingularProjection(
            "target covariate lies in the span of the nuisance design")
    s_c = state.score[pos]
    a_c = state.covariance(subset)
    try:
        stat = float(s_c @ np.linalg.solve(a_c, s_c))
    except np.linalg.LinAlgError as exc:
        raise SingularA("score covariance sub-matrix is singular") from exc
    stat = max(stat, 0.0)
    k = subset.size
    return TestOutcome(statistic=stat, reference=ChiSquareRef(df=k),
                       p_value=chisq_upper(stat, k), subset=subset)


def _half_power(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root and inverse square root of an SPD matrix."""
    eigval, eigvec = np.linalg.eigh(a)
    if eigval[0] <= 0.0 or eigval[0] <= 1e-14 * eigval[-1]:
        raise SingularA("covariance matrix is numerically singular")
    root = np.sqrt(eigval)
    return (eigvec * root) @ eigvec.T, (eigvec / root) @ eigvec.T


def mixture_weights(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Eigenvalues of a^{1/2} b a^{1/2}, the mixture weights of the
    generalized statistic; same spectrum as b @ a but numerically symmetric."""
    a_half, _ = _half_power(a)
    sym = a_half @ b @ a_half
    lam = np.linalg.eigvalsh(0.5 * (sym + sym.T))
    if lam[0] <= 1e-12 * lam[-1]:
        raise NotPositiveDefinite("mixture weights are not all strictly positive")
    return lam


def statistic_generalized(state: RankScoreState, subset: HypothesisSubset,
                          weighting: WeightingMatrix) -> TestOutcome:
    """Weighted score quadratic form with a weighted chi-square reference.

    Equal mixture weights (in particular the inverse-covariance weighting)
    reduce exactly to a scaled chi-square, in which case the closed form
    replaces the numerical inversion.
    """
    _check_subset(state, subset)
    pos = subset.positions()
    if state.v_bar <= 1e-12:
        raise SingularProjection(
            "target covariate lies in the span of the nuisance design")
    b_c = weighting.materialize(state.taus, state.v_bar, subset)
    s_c = state.score[pos]
    stat = max(float(s_c @ b_c @ s_c), 0.0)
    a_c = state.covariance(subset)
    lam = mixture_weights(a_c, b_c)
    k = subset.size

    if lam[-1] - lam[0] <= _EQUAL_WEIGHT_RTOL * lam[-1]:
        c = float(lam.mean())
        reference = (ChiSquareRef(df=k) if abs(c - 1.0) <= _EQUAL_WEIGHT_RTOL
                     else WeightedChiSquareRef(weights=tuple(lam)))
        p = chisq_upper(stat / c, k)
    else:
        reference = WeightedChiSquareRef(weights=tuple(lam))
        p = imhof_upper(WeightedChiSquareMixture(weights=tuple(lam)), stat)
    return TestOutcome(statistic=stat, reference=reference, p_value=p,
                       subset=subset)


# --- analytic power ingredients ---------------------------------------------

def noncentrality_standard(g: np.ndarray, a: np.ndarray) -> float:
    """g' a^{-1} g: noncentrality of the chi-square statistic under local
    alternatives with mean vector g and covariance a."""
    g = np.asarray(g, dtype=float)
    a = np.asarray(a, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (a + a.T))
    if eig[0] <= 0.0 or eig[0] <= 1e-14 * eig[-1]:
        raise SingularA("covariance matrix is numerically singular")
    return float(g @ np.linalg.solve(a, g))


def noncentrality_generalized(g: np.ndarray, a: np.ndarray,
                              b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mixture weights and per-component noncentralities under alternatives.

    Components follow the eigenvectors of a^{1/2} b a^{1/2}; each
    noncentrality is the squared projection of the standardized mean
    a^{-1/2} g onto the corresponding eigenvector.
    """
    g = np.asarray(g, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_spd(b, what="weighting matrix")
    a_half, a_inv_half = _half_power(0.5 * (a + a.T))
    sym = a_half @ b @ a_half
    lam, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
    if lam[0] <= 1e-12 * lam[-1]:
        raise NotPositiveDefinite("mixture weights are not all strictly positive")
    g_z = a_inv_half @ g
    zetas = (vecs.T @ g_z) ** 2
    return lam, zetas


def analytic_power(taus, g, v_bar: float, weighting: WeightingMatrix,
                   alpha: float = 0.05) -> dict:
    """Asymptotic power of every subset test under a local alternative.

    ``g`` is the limiting mean of the score vector; the covariance is
    ``v_bar`` times the bridge covariance of the levels. Inverse-covariance
    weighting gives noncentral chi-square power in closed form; any other
    weighting compares the noncentral mixture against the null mixture's
    critical value. Equal mixture weights again use the exact scaled
    chi-square form, so the inverse weighting and the explicit standard
    path agree to floating-point precision.
    """
    taus = tuple(float(t) for t in taus)
    k = len(taus)
    g = np.asarray(g, dtype=float)
    if g.shape != (k,):
        raise ValueError(f"g must have one entry per quantile level, got "
                         f"{g.shape[0]} for K={k}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if v_bar <= 0.0:
        raise SingularProjection("score covariance scale must be positive")
    bridge = bridge_covariance(taus)

    out = {}
    for subset in all_subsets(k):
        pos = subset.positions()
        size = subset.size
        a_c = v_bar * bridge[np.ix_(pos, pos)]
        g_c = g[pos]
        if weighting.kind == "inverse":
            zeta = noncentrality_standard(g_c, a_c)
            crit = chisq_quantile(alpha, size)
            power = chisq_noncentral_upper(crit, size, zeta)
        else:
            b_c = weighting.materialize(taus, v_bar, subset)
            lam, zetas = noncentrality_generalized(g_c, a_c, b_c)
            if lam[-1] - lam[0] <= _EQUAL_WEIGHT_RTOL * lam[-1]:
                c = float(lam.mean())
                power = chisq_noncentral_upper(
                    chisq_quantile(alpha, size), size, float(zetas.sum()))
            else:
                null_mix = WeightedChiSquareMixture(weights=tuple(lam))
                crit = mixture_quantile(null_mix, alpha)
                alt_mix = WeightedChiSquareMixture(
                    weights=tuple(lam), noncentralities=tuple(zetas))
                power = imhof_upper(alt_mix, crit)
        out[subset] = float(power)
    return out
