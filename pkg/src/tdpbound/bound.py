"""Lower confidence bounds for the number of true discoveries.

For every candidate number of false nulls ``k`` the largest shrinkage
``gamma_k`` with P_k(k >= R * gamma_k) >= 1 - alpha is ``k / l_k``, where
``l_k`` is the smallest ``l >= k`` with P_k(R <= l) >= 1 - alpha
(``gamma_0`` is 1 or 0 depending on P_0(R = 0)).  The minimum ``gamma*``
over all candidates depends on the model only, so it can be computed
before the data are seen; the bound is ``ceil(r * gamma*)``.

Gammas are kept as :class:`fractions.Fraction` so that the ceiling of an
integer-valued ``r * gamma*`` is never pushed up by rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from ._numeric import CompensatedSum
from .errors import DimensionError, ParameterError
from .pvalue_model import AltPValueCdf
from .stepup import CriticalVector, RejectionEngine, RejectionPmf, stepup_reject

NO_LEVEL = -1


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")


def as_fraction(value) -> Fraction:
    """Exact rational for a target such as 0.95 (read as the decimal, not the float)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(repr(float(value)))


def scan_level(probs_descending: Iterable, alpha: float, floor: int) -> int:
    """min{l >= floor : P(R > l) <= alpha} from ``(l, P(R = l))`` pairs, l = m, m-1, ...

    The upper tail is accumulated with compensation and the scan stops at
    the first ``l`` whose tail exceeds ``alpha``; below it the tail only grows.
    """
    tail = CompensatedSum()
    best = None
    for ell, p in probs_descending:
        if ell < floor or tail.value > alpha:
            break
        best = ell
        tail.add(p)
    return best


def _gamma_from_level(m1: int, level: int) -> tuple:
    if m1 == 0:
        return (Fraction(1) if level == 0 else Fraction(0)), NO_LEVEL
    return Fraction(m1, level), level


def gamma_for(m1_candidate: int, f_alt: AltPValueCdf, cv: CriticalVector, alpha: float,
              engine: Optional[RejectionEngine] = None) -> tuple:
    """``(gamma, l)`` for one candidate number of false nulls.

    ``l`` is ``NO_LEVEL`` for ``m1_candidate == 0``.
    """
    _check_alpha(alpha)
    if not 0 <= m1_candidate <= cv.m:
        raise ParameterError("m1_candidate must lie in [0, m]")
    engine = engine or RejectionEngine(cv, f_alt)
    level = scan_level(engine.descend(m1_candidate, m1_candidate), alpha, floor=m1_candidate)
    return _gamma_from_level(m1_candidate, level)


def gamma_from_pmf(pmf: RejectionPmf, alpha: float) -> tuple:
    """Same as :func:`gamma_for` but from an already computed pmf."""
    _check_alpha(alpha)
    m1 = pmf.m1_candidate
    pairs = ((ell, pmf.probs[ell]) for ell in range(pmf.m, -1, -1))
    return _gamma_from_level(m1, scan_level(pairs, alpha, floor=m1))


@dataclass(frozen=True)
class GammaTable:
    """``gamma_k`` and ``l_k`` for k = 0..m, and their minimum ``gamma*``.

    With ``complete=False`` the sweep stopped early once the running minimum
    hit zero; unevaluated entries are ``None``.
    """

    alpha: float
    gammas: tuple
    ell: tuple
    gamma_star_exact: Fraction
    complete: bool = True

    @property
    def gamma_star(self) -> float:
        return float(self.gamma_star_exact)

    @property
    def m(self) -> int:
        return len(self.gammas) - 1

    @property
    def argmin(self) -> int:
        return next(k for k, g in enumerate(self.gammas) if g == self.gamma_star_exact)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "gamma_star": self.gamma_star,
            "gamma_star_fraction": str(self.gamma_star_exact),
            "gammas": [None if g is None else float(g) for g in self.gammas],
            "ell": list(self.ell),
            "complete": self.complete,
        }


def gamma_star(f_alt: AltPValueCdf, cv: CriticalVector, m: int, alpha: float,
               short_circuit: bool = False, engine: Optional[RejectionEngine] = None) -> GammaTable:
    """The full table of ``gamma_k`` over k = 0..m and its minimum.

    ``short_circuit=True`` stops as soon as some ``gamma_k`` is zero, since
    the minimum cannot drop any further.
    """
    _check_alpha(alpha)
    if cv.m != m:
        raise DimensionError(f"critical vector has length {cv.m}, expected {m}")
    engine = engine or RejectionEngine(cv, f_alt)
    gammas = [None] * (m + 1)
    ells = [NO_LEVEL] * (m + 1)
    lowest = Fraction(1)
    complete = True
    for k in range(m + 1):
        g, ell = gamma_for(k, f_alt, cv, alpha, engine=engine)
        gammas[k], ells[k] = g, ell
        lowest = min(lowest, g)
        if short_circuit and lowest == 0 and k < m:
            complete = False
            break
    return GammaTable(alpha, tuple(gammas), tuple(ells), lowest, complete)


def gamma_table_from_pmfs(pmfs: Sequence[RejectionPmf], alpha: float) -> GammaTable:
    """Build the table from pmfs for k = 0..m (as produced by a full sweep)."""
    gammas, ells = zip(*(gamma_from_pmf(p, alpha) for p in pmfs))
    return GammaTable(alpha, tuple(gammas), tuple(ells), min(gammas), True)


def meets_gamma_target(engine: RejectionEngine, alpha: float, target,
                       check_first: Sequence[int] = ()) -> tuple:
    """Decide ``gamma* >= target`` without building the whole table.

    ``gamma_k >= target`` is equivalent to P_k(R > floor(k / target)) <= alpha,
    so each candidate only needs the upper part of its pmf, and the first
    failing candidate settles the question.  Returns ``(ok, failing_k)``;
    ``check_first`` lists candidates to try before the rest.
    """
    _check_alpha(alpha)
    tau = as_fraction(target)
    if not 0 < tau <= 1:
        raise ParameterError("target must lie in (0, 1]")
    m = engine.m
    seen = set()
    order = [k for k in check_first if 0 <= k <= m] + list(range(m + 1))
    for k in order:
        if k in seen:
            continue
        seen.add(k)
        limit = min(m, math.floor(Fraction(k) / tau))
        level = scan_level(engine.descend(k, limit), alpha, floor=limit)
        if level != limit:
            return False, k
    return True, None


@dataclass(frozen=True)
class BoundResult:
    """Outcome of the bound computation for one set of p-values."""

    r: int
    gamma_star: float
    m1_hat: int
    tdp_hat: float
    table: GammaTable
    rejected: tuple = ()

    @property
    def m(self) -> int:
        return self.table.m

    @property
    def m0_hat(self) -> int:
        """Upper confidence bound for the number of true nulls."""
        return self.m - self.m1_hat

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "gamma_star": self.gamma_star,
            "gamma_star_fraction": str(self.table.gamma_star_exact),
            "m1_hat": self.m1_hat,
            "tdp_hat": self.tdp_hat,
            "m0_hat": self.m0_hat,
            "m": self.m,
        }


def bound_from_count(r: int, table: GammaTable) -> int:
    """``ceil(r * gamma*)`` computed exactly."""
    if not 0 <= r <= table.m:
        raise ParameterError("r must lie in [0, m]")
    return math.ceil(r * table.gamma_star_exact)


def compute_bound(pvalues, cv: CriticalVector, f_alt: AltPValueCdf, alpha: float,
                  table: Optional[GammaTable] = None) -> BoundResult:
    """Run the step-up test and turn its rejection count into a bound.

    Pass a precomputed ``table`` to reuse ``gamma*`` across datasets; it
    must come from the same ``cv``, ``f_alt`` and ``alpha``.
    """
    _check_alpha(alpha)
    p = np.asarray(pvalues, dtype=float).reshape(-1)
    if p.size != cv.m:
        raise DimensionError(f"{p.size} p-values for a critical vector of length {cv.m}")
    r, rejected = stepup_reject(p, cv)
    if table is None:
        table = gamma_star(f_alt, cv, cv.m, alpha)
    elif table.m != cv.m or table.alpha != alpha:
        raise ParameterError("precomputed gamma table does not match m/alpha")
    m1_hat = bound_from_count(r, table)
    return BoundResult(r, table.gamma_star, m1_hat, m1_hat / cv.m, table, tuple(int(i) for i in rejected))
