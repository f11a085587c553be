"""Joint distribution of order statistics from two independent groups.

For ``n1`` variables with CDF ``G1`` and ``n2`` with CDF ``G2`` (all
independent) :func:`joint_orderstat_cdf` returns

    P(Z_(1) <= c_1, ..., Z_(n) <= c_n),   n = n1 + n2,

by a dynamic program over the number of variables of each group that lie at
or below each threshold.  The event is equivalent to #{Z <= c_j} >= j for
every j, so after each threshold the states with fewer than ``j`` variables
below it are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DimensionError, DomainError, ParameterError
from .pvalue_model import AltPValueCdf, complement_cdf


@dataclass(frozen=True)
class TwoGroupSample:
    """``count_g1`` variables distributed as ``g1`` and ``count_g2`` as ``g2``."""

    count_g1: int
    count_g2: int
    g1: AltPValueCdf
    g2: AltPValueCdf

    def __post_init__(self):
        if self.count_g1 < 0 or self.count_g2 < 0:
            raise ParameterError("group sizes must be non-negative")

    @property
    def n(self) -> int:
        return self.count_g1 + self.count_g2

    def swapped(self) -> "TwoGroupSample":
        return TwoGroupSample(self.count_g2, self.count_g1, self.g2, self.g1)


def check_thresholds(c, n: int) -> np.ndarray:
    """Validate a threshold vector: length ``n``, non-decreasing, inside [0, 1]."""
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size != n:
        raise DimensionError(f"expected {n} thresholds, got {c.size}")
    if np.any(np.isnan(c)) or np.any(c < 0.0) or np.any(c > 1.0):
        raise DomainError("thresholds must lie in [0, 1]")
    if np.any(np.diff(c) < 0.0):
        raise DomainError("thresholds must be non-decreasing")
    return c


def _log_binom(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _spread_matrix(total: int, mass: float) -> np.ndarray:
    """Transition for one group across one interval of probability ``mass``.

    Entry [k, k'] is C(total - k', k - k') * mass**(k - k'): the weight of
    choosing which of the ``total - k'`` still unplaced variables fall into
    the interval.
    """
    k = np.arange(total + 1, dtype=float)
    step = k[:, None] - k[None, :]
    valid = step >= 0
    step = np.where(valid, step, 0.0)
    remaining = total - k[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = _log_binom(remaining, step)
        if mass > 0.0:
            logw = logw + step * np.log(mass)
        else:
            logw = np.where(step == 0, logw, -np.inf)
        out = np.where(valid, np.exp(logw), 0.0)
    return out


def joint_orderstat_cdf(sample: TwoGroupSample, c) -> float:
    """P(Z_(i) <= c_i for all i) for the independent two-group ``sample``.

    The state after threshold ``j`` is the pair (k1, k2) of group counts at
    or below ``c_j``; its weight sums, over the ways of choosing those
    variables, the probability that they land where they do.  Interval
    masses are G(c_j) - G(c_{j-1}) with the first interval [0, c_1].
    """
    n1, n2 = sample.count_g1, sample.count_g2
    c = check_thresholds(c, n1 + n2)
    n = n1 + n2
    if n == 0:
        return 1.0
    g1 = np.asarray(sample.g1(c), dtype=float).reshape(-1)
    g2 = np.asarray(sample.g2(c), dtype=float).reshape(-1)
    d1 = np.diff(np.concatenate(([0.0], g1)))
    d2 = np.diff(np.concatenate(([0.0], g2)))
    counts = np.add.outer(np.arange(n1 + 1), np.arange(n2 + 1))
    w = np.zeros((n1 + 1, n2 + 1))
    w[0, 0] = 1.0
    for j in range(n):
        w = _spread_matrix(n1, max(d1[j], 0.0)) @ w @ _spread_matrix(n2, max(d2[j], 0.0)).T
        w[counts < j + 1] = 0.0
    return float(min(max(w[n1, n2], 0.0), 1.0))


def upper_survival_orderstat(sample: TwoGroupSample, t_tail) -> float:
    """P(Z_(1) > s_1, ..., Z_(n) > s_n) for non-decreasing ``t_tail = s``.

    Reflecting every variable through 1 - Z turns the event into a lower
    joint CDF of the reflected sample at thresholds (1 - s_n, ..., 1 - s_1)
    with both distributions replaced by their complements.
    """
    s = check_thresholds(t_tail, sample.n)
    if sample.n == 0:
        return 1.0
    reflected = TwoGroupSample(
        sample.count_g1,
        sample.count_g2,
        complement_cdf(sample.g1),
        complement_cdf(sample.g2),
    )
    return joint_orderstat_cdf(reflected, (1.0 - s)[::-1])
