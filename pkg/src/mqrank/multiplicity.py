"""Closed testing over all intersection hypotheses, plus step-down comparators.

The closed procedure rejects an individual hypothesis at level alpha when
every intersection hypothesis containing it is rejected by its local
test. Reporting adjusted p-values (the maximum local p over all subsets
containing the hypothesis) is decision-equivalent and strictly more
informative than the binary rule. All 2^K - 1 subsets are enumerated
outright: each one is a cheap quadratic form in the shared score vector,
and the generalized local tests admit no consonance shortcut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import HypothesisSubset, all_subsets
from .exceptions import TooManyHypotheses
from .rankscore import RankScoreState, WeightingMatrix, statistic_generalized

MAX_HYPOTHESES = 20


@dataclass(frozen=True)
class ClosureReport:
    """Local p-values for every nonempty subset plus per-hypothesis decisions."""

    k: int
    alpha: float
    local_p: dict
    adjusted_p: np.ndarray
    rejected: np.ndarray

    def subset_p(self, indices) -> float:
        return self.local_p[HypothesisSubset(tuple(indices))]


def closure_adjust(local_p: dict, k: int) -> np.ndarray:
    """Adjusted p-value of hypothesis j: max local p over subsets containing j."""
    adjusted = np.zeros(k)
    for subset, p in local_p.items():
        for j in subset.indices:
            if p > adjusted[j - 1]:
                adjusted[j - 1] = p
    return adjusted


def closed_test(state: RankScoreState, weighting: WeightingMatrix,
                alpha: float = 0.05) -> ClosureReport:
    """Evaluate the local test on every nonempty subset and close it.

    Subset evaluations are pure reads of the shared state; the report is a
    deterministic reduction independent of evaluation order.
    """
    k = state.k
    if k > MAX_HYPOTHESES:
        raise TooManyHypotheses(
            f"closed testing enumerates 2^K - 1 subsets; K={k} exceeds "
            f"the cap of {MAX_HYPOTHESES}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")

    local_p = {}
    for subset in all_subsets(k):
        outcome = statistic_generalized(state, subset, weighting)
        local_p[subset] = outcome.p_value

    adjusted = closure_adjust(local_p, k)
    return ClosureReport(k=k, alpha=alpha, local_p=local_p,
                         adjusted_p=adjusted, rejected=adjusted <= alpha)


def bonferroni(p) -> np.ndarray:
    """Bonferroni-adjusted p-values: K * p, clamped at 1."""
    p = np.asarray(p, dtype=float)
    return np.minimum(1.0, p * p.size)


def holm(p) -> np.ndarray:
    """Holm step-down adjusted p-values.

    Sort ascending, scale the i-th smallest by (K - i), enforce the
    running maximum so adjusted values are monotone in the raw ordering,
    clamp at 1, and undo the sort.
    """
    p = np.asarray(p, dtype=float)
    k = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * (k - np.arange(k))
    adjusted = np.minimum(1.0, np.maximum.accumulate(scaled))
    out = np.empty(k)
    out[order] = adjusted
    return out
