"""Choosing a critical vector from a parametric family.

The quality of a critical vector is summarised by the sum over all
candidate numbers of false nulls of E[R * gamma*] (to be maximised) and,
as a tie-breaker, the sum of Var[R * gamma*] (to be minimised).  Within a
family the usual rule is to take the largest ``lambda`` whose ``gamma*``
still reaches a target such as 1 or 0.95; for two-parameter families this
is repeated over a grid of ``beta`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bound import as_fraction, gamma_star, gamma_table_from_pmfs, meets_gamma_target
from .errors import DimensionError, ParameterError, TdpError, ValidityError
from .pvalue_model import AltPValueCdf
from .stepup import CriticalVector, RejectionEngine, lambda_range, make_critical_vector, rejection_moments

DEFAULT_BETA_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
# AORC's beta shifts the denominator m + beta - i(1 - lambda), so it only
# matters on the scale of m; its default grid adds these multiples of m.
AORC_BETA_SCALES = (0.1, 0.3, 1.0, 3.0, 10.0)
TWO_PARAMETER = ("aorc", "exp")
# AORC's lambda is read as an FDR level, so the default search stops at 1;
# LambdaSearch.hi widens it.
AORC_DEFAULT_HI = 1.0


def default_beta_grid(family: str, m: int) -> tuple:
    if family.lower() == "aorc":
        return DEFAULT_BETA_GRID + tuple(float(c * m) for c in AORC_BETA_SCALES)
    return DEFAULT_BETA_GRID


class TargetUnattainable(TdpError):
    """No ``lambda`` in the search range reaches the requested ``gamma*``."""

    def __init__(self, message: str, closest_gamma: Optional[float] = None):
        super().__init__(message)
        self.closest_gamma = closest_gamma


@dataclass(frozen=True)
class LambdaSearch:
    """Search range and resolution for ``lambda``; ``hi=None`` means family default."""

    lo: float = 0.0
    hi: Optional[float] = None
    tolerance: float = 1e-5
    grid_points: int = 21
    fallback_points: int = 201

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ParameterError("tolerance must be positive")
        if self.grid_points < 2 or self.fallback_points < 2:
            raise ParameterError("grids need at least two points")


@dataclass(frozen=True)
class CalibrationSpec:
    family: str
    m: int
    alpha: float
    f_alt: AltPValueCdf
    gamma_target: float = 1.0
    beta_grid: Optional[tuple] = None
    lambda_search: LambdaSearch = field(default_factory=LambdaSearch)
    tie_tolerance: float = 0.01

    def __post_init__(self):
        fam = self.family.lower()
        if fam not in ("bh", "by", "aorc", "exp"):
            raise ParameterError(f"cannot calibrate family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if self.beta_grid is None:
            object.__setattr__(self, "beta_grid", default_beta_grid(fam, self.m))
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        if self.m < 1:
            raise ParameterError("m must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha must lie in (0, 1)")
        if not self.gamma_target > 0:
            raise ParameterError("gamma_target must be positive")
        if fam in TWO_PARAMETER:
            if len(self.beta_grid) == 0:
                raise ParameterError("beta_grid must not be empty")
            if any(not (b >= 0 and math.isfinite(b)) for b in self.beta_grid):
                raise ParameterError("beta values must be finite and >= 0")
        if not self.tie_tolerance >= 0:
            raise ParameterError("tie_tolerance must be >= 0")

    def bounds(self) -> tuple:
        lo, hi = lambda_range(self.family, self.m)
        s = self.lambda_search
        lo = max(lo, s.lo)
        if s.hi is not None:
            hi = min(hi, s.hi)
        elif math.isinf(hi):
            hi = AORC_DEFAULT_HI
        if not lo <= hi:
            raise ParameterError(f"empty lambda range [{lo}, {hi}]")
        return lo, hi


@dataclass(frozen=True)
class LambdaResult:
    """Outcome of the largest-``lambda`` search for one ``beta``.

    ``lambda_fail`` is the nearest point above ``lam`` known to miss the
    target (``None`` when ``lam`` is the top of the range), and
    ``monotone`` records whether the coarse scan looked monotone.
    """

    lam: float
    beta: Optional[float]
    lambda_fail: Optional[float]
    monotone: bool
    trace: tuple


@dataclass(frozen=True)
class Objectives:
    gamma_star: float
    mean: float
    var: float


@dataclass(frozen=True)
class CalibrationResult:
    cv: CriticalVector
    gamma_star: float
    objective_mean: float
    objective_var: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "critical_vector": self.cv.describe(),
            "gamma_star": self.gamma_star,
            "objective_mean": self.objective_mean,
            "objective_var": self.objective_var,
            "diagnostics": self.diagnostics,
        }


def objectives(cv: CriticalVector, f_alt: AltPValueCdf, alpha: float) -> Objectives:
    """Both objectives from one sweep over the candidate numbers of false nulls."""
    engine = RejectionEngine(cv, f_alt)
    pmfs = [engine.pmf(k) for k in range(cv.m + 1)]
    g = gamma_table_from_pmfs(pmfs, alpha).gamma_star
    moments = [rejection_moments(p, g) for p in pmfs]
    return Objectives(
        gamma_star=g,
        mean=math.fsum(mu for mu, _ in moments),
        var=math.fsum(v for _, v in moments),
    )


def objective_sum_expectation(cv: CriticalVector, f_alt: AltPValueCdf, m: int, alpha: float) -> float:
    """Sum over k = 0..m of E_k[R * gamma*]."""
    _check_m(cv, m)
    return objectives(cv, f_alt, alpha).mean


def objective_sum_variance(cv: CriticalVector, f_alt: AltPValueCdf, m: int, alpha: float) -> float:
    """Sum over k = 0..m of Var_k[R * gamma*]."""
    _check_m(cv, m)
    return objectives(cv, f_alt, alpha).var


def _check_m(cv, m):
    if cv.m != m:
        raise DimensionError(f"critical vector has length {cv.m}, expected {m}")


def _params(lam: float, beta: Optional[float]) -> dict:
    return {"lambda": lam} if beta is None else {"lambda": lam, "beta": beta}


class _Predicate:
    """gamma*(lambda) >= target, remembering which candidates failed before."""

    def __init__(self, family, beta, spec: CalibrationSpec):
        self.family, self.beta, self.spec = family, beta, spec
        self.tau = as_fraction(spec.gamma_target)
        self.hint = []
        self.trace = []

    def __call__(self, lam: float) -> bool:
        try:
            cv = make_critical_vector(self.family, _params(lam, self.beta), self.spec.m)
        except ValidityError:
            self.trace.append((lam, False))
            return False
        engine = RejectionEngine(cv, self.spec.f_alt)
        ok, failing = meets_gamma_target(engine, self.spec.alpha, self.tau, self.hint)
        if failing is not None and failing not in self.hint:
            self.hint.insert(0, failing)
        self.trace.append((lam, ok))
        return ok


def _gamma_at(family, beta, lam, spec) -> Optional[float]:
    try:
        cv = make_critical_vector(family, _params(lam, beta), spec.m)
    except ValidityError:
        return None
    return gamma_star(spec.f_alt, cv, spec.m, spec.alpha).gamma_star


def max_lambda_for_target(family: str, beta: Optional[float], spec: CalibrationSpec) -> LambdaResult:
    """Largest ``lambda`` (to within the tolerance) with ``gamma* >= target``.

    A coarse grid is scanned first.  If the pass/fail pattern along it is a
    run of passes followed by fails, the boundary is refined by bisection;
    otherwise a finer grid is scanned and its largest passing point is
    returned without bisection.

    A target below 1 asks for a vector whose ``gamma*`` lies in
    ``[target, 1)``.  When ``gamma*`` drops from 1 straight past the target,
    the largest passing ``lambda`` is the ``gamma* = 1`` vector, and the
    target counts as unattainable for this ``beta``.

    Raises:
        TargetUnattainable: no grid point reaches the target (carries the
            largest ``gamma*`` seen), the target is skipped over as above
            (carries ``gamma*`` just past the boundary), or the target
            exceeds 1.
    """
    family = family.lower()
    lo, hi = spec.bounds()
    s = spec.lambda_search
    pred = _Predicate(family, beta, spec)
    if pred.tau > 1:
        raise TargetUnattainable(f"gamma* cannot exceed 1 (target {spec.gamma_target})",
                                 closest_gamma=_gamma_at(family, beta, lo, spec))

    grid = np.linspace(lo, hi, s.grid_points)
    passes = [pred(float(x)) for x in grid]
    if not any(passes):
        seen = [g for g in (_gamma_at(family, beta, float(x), spec) for x in grid) if g is not None]
        raise TargetUnattainable(
            f"{family} (beta={beta}) never reaches gamma*={spec.gamma_target} on [{lo}, {hi}]",
            closest_gamma=max(seen) if seen else None,
        )
    last = max(i for i, ok in enumerate(passes) if ok)
    monotone = all(passes[: last + 1]) and not any(passes[last + 1:])

    if not monotone:
        fine = np.linspace(lo, hi, s.fallback_points)
        fine_pass = [pred(float(x)) for x in fine]
        j = max(i for i, ok in enumerate(fine_pass) if ok)
        lam = float(fine[j])
        fail = float(fine[j + 1]) if j + 1 < len(fine) else None
        return _check_overshoot(LambdaResult(lam, beta, fail, False, tuple(pred.trace)), family, spec, pred)

    if last == len(grid) - 1:
        return _check_overshoot(LambdaResult(float(grid[-1]), beta, None, True, tuple(pred.trace)),
                                family, spec, pred)
    good, bad = float(grid[last]), float(grid[last + 1])
    while bad - good > s.tolerance:
        mid = 0.5 * (good + bad)
        if pred(mid):
            good = mid
        else:
            bad = mid
    return _check_overshoot(LambdaResult(good, beta, bad, True, tuple(pred.trace)), family, spec, pred)


def _check_overshoot(found: LambdaResult, family: str, spec: CalibrationSpec, pred: _Predicate) -> LambdaResult:
    if pred.tau == 1:
        return found
    cv = make_critical_vector(family, _params(found.lam, found.beta), spec.m)
    if meets_gamma_target(RejectionEngine(cv, spec.f_alt), spec.alpha, 1)[0]:
        past = None if found.lambda_fail is None else _gamma_at(family, found.beta, found.lambda_fail, spec)
        raise TargetUnattainable(
            f"{family} (beta={found.beta}) jumps from gamma*=1 past {spec.gamma_target} "
            f"at lambda={found.lam:.6g}",
            closest_gamma=past,
        )
    return found


def _evaluate(family, beta, spec) -> tuple:
    found = max_lambda_for_target(family, beta, spec)
    cv = make_critical_vector(family, _params(found.lam, beta), spec.m)
    return found, cv, objectives(cv, spec.f_alt, spec.alpha)


def select_critical_vector(spec: CalibrationSpec) -> CalibrationResult:
    """Calibrate ``spec.family`` to ``spec.gamma_target``.

    For aorc and exp every ``beta`` in the grid gets its own largest
    ``lambda``; combinations whose expectation objective lies within
    ``tie_tolerance`` (relative) of the best are compared on the variance
    objective, and remaining ties go to the smallest ``beta``, then the
    smallest ``lambda``.  A ``beta`` for which the target cannot be reached
    is skipped and listed in the diagnostics.
    """
    fam = spec.family
    if fam not in TWO_PARAMETER:
        found, cv, obj = _evaluate(fam, None, spec)
        diag = {"lambda": found.lam, "lambda_fail": found.lambda_fail,
                "monotone": found.monotone, "evaluations": len(found.trace)}
        return CalibrationResult(cv, obj.gamma_star, obj.mean, obj.var, diag)

    cells = []
    skipped = []
    for beta in spec.beta_grid:
        try:
            found, cv, obj = _evaluate(fam, float(beta), spec)
        except TargetUnattainable as exc:
            skipped.append({"beta": float(beta), "closest_gamma": exc.closest_gamma})
            continue
        cells.append((found, cv, obj))
    if not cells:
        closest = [s["closest_gamma"] for s in skipped if s["closest_gamma"] is not None]
        raise TargetUnattainable(
            f"{fam} cannot reach gamma*={spec.gamma_target} for any beta in the grid",
            closest_gamma=max(closest) if closest else None,
        )
    best = max(obj.mean for _, _, obj in cells)
    near = [c for c in cells if c[2].mean >= best * (1.0 - spec.tie_tolerance)]
    near.sort(key=lambda c: (c[2].var, c[0].beta, c[0].lam))
    found, cv, obj = near[0]
    diag = {
        "lambda": found.lam,
        "beta": found.beta,
        "lambda_fail": found.lambda_fail,
        "monotone": found.monotone,
        "grid": [
            {"beta": f.beta, "lambda": f.lam, "objective_mean": o.mean,
             "objective_var": o.var, "gamma_star": o.gamma_star}
            for f, _, o in cells
        ],
        "skipped": skipped,
    }
    return CalibrationResult(cv, obj.gamma_star, obj.mean, obj.var, diag)
