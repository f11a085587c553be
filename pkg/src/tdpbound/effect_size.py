"""Estimating the effect size from selected t-statistics.

For a one-sample t-test with ``nu = N - 1`` degrees of freedom and
noncentrality ``mu``,

    E[T] = mu * sqrt(nu / 2) * Gamma((nu - 1) / 2) / Gamma(nu / 2),

so the mean ``q`` of t-statistics believed to come from false nulls gives
``mu_hat = q * sqrt(2 / nu) * Gamma(nu / 2) / Gamma((nu - 1) / 2)`` and
``theta_hat = mu_hat * sqrt(2 / N)``.  Which statistics count as "from
false nulls" is decided by a :class:`ThresholdRule`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DimensionError, DomainError, ParameterError

RULE_KINDS = ("quantile", "fixed", "bonferroni", "sidak")


@dataclass(frozen=True)
class ThresholdRule:
    """How to pick the statistics used for the estimate.

    ``quantile``: t-values at or above the empirical ``value``-quantile of
    all t-values.  ``fixed``: p-values at or below ``value``.
    ``bonferroni``: p <= value / m.  ``sidak``: p <= 1 - (1 - value)**(1/m).
    """

    kind: str
    value: float

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in RULE_KINDS:
            raise ParameterError(f"unknown threshold rule {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not 0.0 < self.value < 1.0:
            raise ParameterError(f"rule parameter must lie in (0, 1), got {self.value}")

    @classmethod
    def parse(cls, text: str) -> "ThresholdRule":
        """Read ``"kind:value"``, e.g. ``"sidak:0.01"`` or ``"quantile:0.9"``."""
        kind, sep, value = text.partition(":")
        if not sep:
            raise ParameterError(f"threshold must look like kind:value, got {text!r}")
        try:
            return cls(kind.strip(), float(value))
        except ValueError as exc:
            raise ParameterError(f"bad threshold value in {text!r}") from exc

    def p_threshold(self, m: int) -> float:
        """The p-value cut-off ``h`` for the p-value based rules."""
        if m < 1:
            raise ParameterError("m must be positive")
        if self.kind == "fixed":
            return self.value
        if self.kind == "bonferroni":
            return self.value / m
        if self.kind == "sidak":
            # 1 - (1 - a)**(1/m) without cancellation for small a
            return -math.expm1(math.log1p(-self.value) / m)
        raise ParameterError("quantile rule has no p-value threshold")

    def __str__(self) -> str:
        return f"{self.kind}:{self.value:g}"


@dataclass(frozen=True)
class EffectSizeEstimate:
    theta_hat: float
    mu_hat: float
    n_selected: int
    rule: Optional[ThresholdRule]
    N: int
    nu: int

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "mu_hat": self.mu_hat,
            "n_selected": self.n_selected,
            "rule": None if self.rule is None else str(self.rule),
            "N": self.N,
            "nu": self.nu,
        }


def select_statistics(tvalues, pvalues, rule: ThresholdRule) -> np.ndarray:
    """The t-values kept by ``rule``, in their original order."""
    t = np.asarray(tvalues, dtype=float).reshape(-1)
    p = np.asarray(pvalues, dtype=float).reshape(-1)
    if t.shape != p.shape:
        raise DimensionError(f"{t.size} t-values but {p.size} p-values")
    if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("p-values must lie in [0, 1]")
    if t.size == 0:
        return t
    if rule.kind == "quantile":
        cut = np.quantile(t, rule.value)
        return t[t >= cut]
    return t[p <= rule.p_threshold(t.size)]


def mean_t_factor(nu: int) -> float:
    """E[T] / mu for a noncentral t with ``nu`` degrees of freedom (``nu > 1``)."""
    return math.sqrt(nu / 2.0) * math.exp(gammaln((nu - 1) / 2.0) - gammaln(nu / 2.0))


def estimate_theta(selected, N: int, rule: Optional[ThresholdRule] = None) -> EffectSizeEstimate:
    """Effect size from the mean of the selected t-statistics.

    An empty selection gives ``theta_hat = 0``.

    Raises:
        ParameterError: if ``N < 2``.
    """
    if N < 2:
        raise ParameterError(f"sample size must be >= 2, got {N}")
    nu = N - 1
    q = np.asarray(selected, dtype=float).reshape(-1)
    if q.size == 0:
        return EffectSizeEstimate(0.0, 0.0, 0, rule, N, nu)
    if nu == 1:
        # the mean of a t with one degree of freedom does not exist
        raise ParameterError("estimate needs N >= 3")
    q_bar = math.fsum(q.tolist()) / q.size
    mu_hat = q_bar / mean_t_factor(nu)
    theta_hat = mu_hat * math.sqrt(2.0 / N)
    return EffectSizeEstimate(theta_hat, mu_hat, int(q.size), rule, N, nu)


@dataclass(frozen=True)
class FallbackPolicy:
    """Optional repair of weak estimates.

    Rules in ``escalation`` are tried in order while the estimate is zero;
    a final estimate with ``|theta_hat| < min_abs`` is replaced by ``floor``.
    """

    escalation: tuple = ()
    min_abs: float = 0.4
    floor: float = 0.5


def estimate_with_policy(tvalues, pvalues, N: int, rule: ThresholdRule,
                         policy: Optional[FallbackPolicy] = None) -> tuple:
    """Select, estimate and (optionally) apply a fallback policy.

    Returns ``(estimate, theta_used)`` where ``theta_used`` is what the
    bound should be computed with.
    """
    est = estimate_theta(select_statistics(tvalues, pvalues, rule), N, rule)
    if policy is None:
        return est, est.theta_hat
    for nxt in policy.escalation:
        if est.n_selected > 0 and est.theta_hat != 0.0:
            break
        est = estimate_theta(select_statistics(tvalues, pvalues, nxt), N, nxt)
    theta = est.theta_hat
    if abs(theta) < policy.min_abs:
        theta = policy.floor
    return est, theta


def split_subjects(N: int, sizes: Sequence[int], seed: int) -> tuple:
    """Random disjoint index sets of the given sizes drawn from ``range(N)``.

    Each returned array is sorted.

    Raises:
        ParameterError: if the sizes are negative or add up to more than ``N``.
    """
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes) or sum(sizes) > N:
        raise ParameterError(f"cannot split {N} subjects into groups of sizes {sizes}")
    perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(N)
    out, start = [], 0
    for s in sizes:
        out.append(np.sort(perm[start:start + s]))
        start += s
    return tuple(out)
