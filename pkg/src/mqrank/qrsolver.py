"""Quantile regression by linear programming, with exact dual rank-scores.

The regression rank-scores are the dual solution of the quantile-loss
program. We solve the dual directly,

    maximize    a' y
    subject to  Z' a = (1 - tau) Z' 1,   0 <= a <= 1,

with a simplex method (HiGHS), so the returned vector is a vertex of the
dual polytope: at most p entries lie strictly inside (0, 1). The primal
coefficients fall out of the equality-constraint multipliers and, in the
generic case of exactly p interpolated observations, are polished to the
exact-fit solution of that p-by-p system. Strong duality ties the two
solutions together:

    sum_i rho_tau(y_i - z_i' gamma) = a' y - (1 - tau) * sum_i y_i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .exceptions import Degenerate, NotConverged

# entries of a within this distance of 0/1 are treated as at their bound
_BOUND_TOL = 1e-8

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass(frozen=True)
class QuantileFit:
    """One quantile-regression solve: primal coefficients and dual scores.

    a_hat lies in [0, 1]^n, satisfies Z' a_hat = (1 - tau) Z' 1 to solver
    tolerance, and has at most p entries strictly inside (0, 1).
    """

    tau: float
    gamma_hat: np.ndarray
    a_hat: np.ndarray
    objective: float

    @property
    def n(self) -> int:
        return self.a_hat.shape[0]


def quantile_loss(residuals: np.ndarray, tau: float) -> float:
    """Asymmetric absolute loss sum_i u_i (tau - 1{u_i < 0})."""
    u = np.asarray(residuals, dtype=float)
    return float(np.sum(u * (tau - (u < 0.0))))


def fit(Z: np.ndarray, y: np.ndarray, tau: float) -> QuantileFit:
    """Fit the tau-th quantile regression of y on Z.

    Parameters
    ----------
    Z : (n, p) design matrix, full column rank.
    y : (n,) response (already offset-adjusted if a nonzero null value is
        being tested).
    tau : quantile level in (0, 1).

    Raises
    ------
    Degenerate
        If rank(Z) < p or the LP solve fails structurally.
    NotConverged
        If the solver stops on its iteration cap.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = Z.shape
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    if n <= p:
        raise Degenerate(f"need n > p, got n={n}, p={p}")
    if np.linalg.matrix_rank(Z) < p:
        raise Degenerate("design matrix is rank deficient")

    rhs = (1.0 - tau) * Z.sum(axis=0)
    res = linprog(c=-y, A_eq=Z.T, b_eq=rhs, bounds=(0.0, 1.0),
                  method="highs-ds", options=_HIGHS_OPTIONS)
    if res.status == 1:
        raise NotConverged(f"simplex iteration cap reached at tau={tau}")
    if not res.success:
        raise Degenerate(f"LP solve failed at tau={tau}: {res.message}")

    a_hat = np.clip(res.x, 0.0, 1.0)
    gamma_hat = -np.asarray(res.eqlin.marginals, dtype=float)

    # Polish: with exactly p interpolated observations (the generic vertex),
    # the primal solution solves that square system exactly and the dual
    # satisfies its equality constraints to machine precision.
    interior = np.flatnonzero((a_hat > _BOUND_TOL) & (a_hat < 1.0 - _BOUND_TOL))
    if interior.size == p:
        Zh = Z[interior]
        try:
            gamma_exact = np.linalg.solve(Zh, y[interior])
        except np.linalg.LinAlgError:
            gamma_exact = None
        if gamma_exact is not None and np.all(np.isfinite(gamma_exact)):
            resid = y - Z @ gamma_exact
            scale = 1.0 + np.max(np.abs(y))
            sign_tol = 1e-9 * scale
            at_one = resid > sign_tol
            at_zero = resid < -sign_tol
            free = ~(at_one | at_zero)
            if free.sum() == p:
                try:
                    a_free = np.linalg.solve(Z[free].T, rhs - Z[at_one].sum(axis=0))
                except np.linalg.LinAlgError:
                    a_free = None
                if (a_free is not None and np.all(a_free > -1e-9)
                        and np.all(a_free < 1.0 + 1e-9)):
                    a_new = np.zeros(n)
                    a_new[at_one] = 1.0
                    a_new[free] = np.clip(a_free, 0.0, 1.0)
                    a_hat = a_new
                    gamma_hat = gamma_exact

    objective = quantile_loss(y - Z @ gamma_hat, tau)
    return QuantileFit(tau=float(tau), gamma_hat=gamma_hat, a_hat=a_hat,
                       objective=objective)


def rank_score_function(qfit: QuantileFit) -> np.ndarray:
    """Quantile score function b_i = a_i - (1 - tau), entries in [-(1-tau), tau]."""
    return qfit.a_hat - (1.0 - qfit.tau)


def dual_objective(qfit: QuantileFit, y: np.ndarray) -> float:
    """a' y - (1 - tau) sum(y); equals the primal loss at optimality."""
    y = np.asarray(y, dtype=float)
    return float(qfit.a_hat @ y - (1.0 - qfit.tau) * y.sum())
