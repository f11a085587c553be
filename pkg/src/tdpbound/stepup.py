"""Critical vectors, the step-up rule and the exact law of its rejection count.

Under the two-group model (``m1`` p-values with CDF ``F``, ``m - m1``
uniform, all independent) the number ``R`` of step-up rejections satisfies

    P(R = l) = sum_j C(m0, j) C(m1, l - j) t_l^j F(t_l)^(l - j)
               * Psi_{m0 - j, m1 - l + j}(t_{l+1}, ..., t_m)

where ``Psi_{a, b}`` is the probability that the ``a + b`` non-rejected
p-values (``a`` uniform, ``b`` from ``F``) have ordered values strictly
above ``t_{l+1}, ..., t_m``.  :func:`rejection_pmf_direct` evaluates this
term by term through :mod:`.order_stats`.  :class:`RejectionEngine` gets
every ``Psi`` needed for one ``m1`` in a single top-down sweep: the
survival constraint for the remaining variables reads #{P > t_g} >= m - g + 1
for g = l + 1, ..., m, which does not depend on ``l`` except through its
range, so one recursion over g = m, m - 1, ..., 1 yields them all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from scipy.special import gammaln

from .errors import DimensionError, DomainError, ParameterError, ValidityError
from .order_stats import TwoGroupSample, upper_survival_orderstat
from .pvalue_model import AltPValueCdf

FAMILIES = ("bh", "by", "aorc", "exp", "custom")


@dataclass(frozen=True)
class CriticalVector:
    """Non-decreasing thresholds ``(t_1, ..., t_m)`` with their provenance."""

    values: tuple
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise DimensionError("a critical vector needs at least one threshold")
        if np.any(~np.isfinite(vals)) or np.any(vals < 0.0) or np.any(vals > 1.0):
            raise ValidityError("critical values must lie in [0, 1]")
        if np.any(np.diff(vals) < 0.0):
            raise ValidityError("critical values must be non-decreasing")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def describe(self) -> dict:
        return {"family": self.family, **{k: float(v) for k, v in sorted(self.params.items())}}


def harmonic_number(m: int) -> float:
    return math.fsum(1.0 / j for j in range(1, m + 1))


def lambda_range(family: str, m: int) -> tuple:
    """Admissible range of the ``lambda`` parameter of a family."""
    family = family.lower()
    if family in ("bh", "exp"):
        return (0.0, 1.0)
    if family == "by":
        return (0.0, harmonic_number(m))
    if family == "aorc":
        return (0.0, math.inf)
    raise ParameterError(f"family {family!r} has no lambda parameter")


def make_critical_vector(family: str, params: dict, m: int) -> CriticalVector:
    """Build ``(t_1, ..., t_m)`` for one of the families bh, by, aorc, exp.

    ``params`` holds ``lambda`` and, for aorc/exp, ``beta``.  ``custom``
    takes the thresholds themselves under ``values``.
    """
    family = family.lower()
    if m < 1:
        raise ParameterError("m must be at least 1")
    if family == "custom":
        vals = params.get("values")
        if vals is None or len(vals) != m:
            raise DimensionError("custom critical vector needs m values")
        return CriticalVector(tuple(vals), "custom", {})
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}")
    if "lambda" not in params:
        raise ParameterError("missing parameter 'lambda'")
    lam = float(params["lambda"])
    lo, hi = lambda_range(family, m)
    # BY's upper limit is a float sum; allow it to be hit from either side.
    if not (lo <= lam <= hi * (1 + 1e-12)) or math.isnan(lam):
        raise ParameterError(f"lambda={lam} outside [{lo}, {hi}] for {family}")
    i = np.arange(1, m + 1, dtype=float)
    kept = {"lambda": lam}
    if family == "bh":
        vals = i / m * lam
    elif family == "by":
        vals = np.minimum(i / m * lam / harmonic_number(m), 1.0)
    else:
        beta = float(params.get("beta", 1.0))
        if not beta >= 0.0 or math.isinf(beta):
            raise ParameterError(f"beta must be finite and >= 0, got {beta}")
        kept["beta"] = beta
        if family == "aorc":
            with np.errstate(divide="ignore", invalid="ignore"):
                # (m - i) + beta + i * lam avoids cancellation; t_m = 1 exactly when beta = 0
                vals = i * lam / ((m - i) + beta + i * lam)
        else:
            vals = lam * (i / m) ** beta
    if np.any(~np.isfinite(vals)):
        raise ValidityError(f"{family} with {kept} gives undefined critical values")
    return CriticalVector(tuple(vals), family, kept)


def stepup_reject(pvalues, cv: CriticalVector):
    """Step-up test: ``r = max{i : p_(i) <= t_i}`` (0 if no such i).

    Returns ``(r, rejected)`` where ``rejected`` holds the original indices
    of the ``r`` smallest p-values, ties kept in index order.
    """
    p = np.asarray(pvalues, dtype=float).reshape(-1)
    if p.size != cv.m:
        raise DimensionError(f"{p.size} p-values for a critical vector of length {cv.m}")
    if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    hits = np.nonzero(p[order] <= cv.array)[0]
    r = int(hits[-1]) + 1 if hits.size else 0
    return r, order[:r]


def stepup_count(pmatrix, thresholds) -> np.ndarray:
    """Number of step-up rejections for each row of a p-value matrix."""
    p = np.sort(np.asarray(pmatrix, dtype=float), axis=-1)
    ok = p <= np.asarray(thresholds, dtype=float)
    m = ok.shape[-1]
    last = m - np.argmax(ok[..., ::-1], axis=-1)
    return np.where(ok.any(axis=-1), last, 0)


@dataclass(frozen=True)
class TwoGroupModel:
    """``m`` independent p-values, ``m1_candidate`` of them distributed as ``f_alt``."""

    m: int
    m1_candidate: int
    f_alt: AltPValueCdf

    def __post_init__(self):
        if self.m < 1:
            raise ParameterError("m must be positive")
        if not 0 <= self.m1_candidate <= self.m:
            raise ParameterError("m1_candidate must lie in [0, m]")


@dataclass(frozen=True)
class RejectionPmf:
    """P(R = l) for l = 0..m under one two-group model."""

    probs: tuple
    m1_candidate: int = -1

    @property
    def m(self) -> int:
        return len(self.probs) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def total(self) -> float:
        return math.fsum(self.probs)

    def cdf(self, ell: int) -> float:
        return math.fsum(self.probs[: ell + 1])

    def tail(self, ell: int) -> float:
        """P(R > ell)."""
        return math.fsum(self.probs[ell + 1 :])


class RejectionEngine:
    """Exact law of the step-up rejection count for one (critical vector, F).

    Everything that does not depend on the number of alternatives is
    precomputed on construction, so sweeping ``m1`` over 0..m is cheap.
    The state after interval g is ``Psi(a, b)``: the probability that ``a``
    given uniform and ``b`` given alternative p-values all exceed ``t_g``
    while meeting the survival constraints above it.  Moving one interval
    down is a binomial convolution in each group, i.e. a product with a
    lower-triangular matrix whose leading blocks serve every group size.
    """

    # Psi values and transition weights below this are dropped.  Each dropped
    # weight enters a probability with a binomial factor of at most 2**m, so
    # the loss is below 2**m * 1e-140 (1e-110 at m = 100), and no product of
    # two kept numbers is subnormal.
    _FLUSH = 1e-140

    def __init__(self, cv: CriticalVector, f_alt: AltPValueCdf):
        self.cv = cv
        self.f_alt = f_alt
        m = cv.m
        self.m = m
        t = cv.array
        ft = np.asarray(f_alt(t), dtype=float).reshape(-1)
        self.t = t
        self.ft = ft
        self._lfact = gammaln(np.arange(m + 2, dtype=float) + 1.0)
        # log(0) is stored as 0 with a flag, so no 0 * inf ever appears
        self._zero_t, self._zero_f = t <= 0.0, ft <= 0.0
        self._log_t = np.log(np.where(self._zero_t, 1.0, t))
        self._log_f = np.log(np.where(self._zero_f, 1.0, ft))
        # interval g (1-based) is (t_g, t_{g+1}] with t_{m+1} = 1
        self._mass_t = np.maximum(np.append(t[1:], 1.0) - t, 0.0)
        self._mass_f = np.maximum(np.append(ft[1:], 1.0) - ft, 0.0)
        idx = np.arange(m + 1)
        lag = np.subtract.outer(idx, idx)
        self._lower = lag >= 0
        self._lag = np.where(self._lower, lag, 0)
        self._log_binom = np.where(
            self._lower, self._lfact[idx][:, None] - self._lfact[idx][None, :] - self._lfact[self._lag], -np.inf
        )
        # built on first use: early-stopping scans only reach the top intervals
        self._spread_cache = {}

    def _spread(self, g: int) -> tuple:
        """Transition matrices [a, a'] = C(a, a') * mass**(a - a') for interval g."""
        hit = self._spread_cache.get(g)
        if hit is None:
            hit = (self._spread_matrix(self._mass_t[g - 1]), self._spread_matrix(self._mass_f[g - 1]))
            self._spread_cache[g] = hit
        return hit

    def _spread_matrix(self, mass: float) -> np.ndarray:
        if mass > 0.0:
            out = np.exp(self._log_binom + self._lag * math.log(mass))
        else:
            out = np.eye(self.m + 1)
        out[out < self._FLUSH] = 0.0
        return out

    def _term(self, lc0, lc1, ell: int, psi_all: np.ndarray) -> float:
        """P(R = ell) from the Psi table valid above ``t_ell``.

        ``lc0``/``lc1`` hold log C(m0, j) and log C(m1, k).
        """
        m0, m1 = len(lc0) - 1, len(lc1) - 1
        j = np.arange(max(0, ell - m1), min(ell, m0) + 1)
        k = ell - j
        psi = psi_all[m0 - j, m1 - k]
        logw = lc0[j] + lc1[k]
        if ell > 0:
            logw += j * self._log_t[ell - 1] + k * self._log_f[ell - 1]
            if self._zero_t[ell - 1]:
                logw[j > 0] = -np.inf
            if self._zero_f[ell - 1]:
                logw[k > 0] = -np.inf
        return math.fsum(np.exp(logw) * psi)

    def descend(self, m1: int, floor: int = 0) -> Iterator[tuple]:
        """Yield ``(l, P(R = l))`` for l = m, m - 1, ..., ``floor``.

        P(R = l) only involves states with a + b = m - l, so a scan that
        stops at ``floor`` can drop every state with a + b > m - floor.
        """
        m = self.m
        if not 0 <= m1 <= m:
            raise ParameterError("m1 must lie in [0, m]")
        if not 0 <= floor <= m:
            raise ParameterError("floor must lie in [0, m]")
        m0 = m - m1
        n0, n1 = min(m0, m - floor), min(m1, m - floor)
        lf = self._lfact
        j0, j1 = np.arange(m0 + 1), np.arange(m1 + 1)
        lc0 = lf[m0] - lf[j0] - lf[m0 - j0]
        lc1 = lf[m1] - lf[j1] - lf[m1 - j1]
        psi = np.zeros((n0 + 1, n1 + 1))
        psi[0, 0] = 1.0
        yield m, self._term(lc0, lc1, m, psi)
        for g in range(m, floor, -1):
            st, sf = self._spread(g)
            psi = st[: n0 + 1, : n0 + 1] @ psi @ sf[: n1 + 1, : n1 + 1].T
            # a + b never decreases on the way down, so only the states with
            # a + b = m - g have just become infeasible
            s_bad = m - g
            a = np.arange(max(0, s_bad - n1), min(s_bad, n0) + 1)
            psi[a, s_bad - a] = 0.0
            psi[psi < self._FLUSH] = 0.0
            yield g - 1, self._term(lc0, lc1, g - 1, psi)

    def pmf(self, m1: int) -> RejectionPmf:
        probs = np.zeros(self.m + 1)
        for ell, p in self.descend(m1):
            probs[ell] = p
        probs = np.clip(probs, 0.0, 1.0)
        return RejectionPmf(tuple(probs.tolist()), m1)


def rejection_pmf(model: TwoGroupModel, cv: CriticalVector) -> RejectionPmf:
    """Exact P(R = l), l = 0..m, for the step-up test with ``cv`` under ``model``."""
    if model.m != cv.m:
        raise DimensionError(f"model has m={model.m} but critical vector has {cv.m}")
    return RejectionEngine(cv, model.f_alt).pmf(model.m1_candidate)


def rejection_pmf_direct(model: TwoGroupModel, cv: CriticalVector) -> RejectionPmf:
    """Term-by-term evaluation with one order-statistic call per (l, j).

    Much slower than :func:`rejection_pmf`; kept as an independent check.
    """
    if model.m != cv.m:
        raise DimensionError(f"model has m={model.m} but critical vector has {cv.m}")
    m, m1 = model.m, model.m1_candidate
    m0 = m - m1
    t = cv.array
    uniform = AltPValueCdf.uniform()
    ft = np.asarray(model.f_alt(t), dtype=float).reshape(-1)
    probs = []
    for ell in range(m + 1):
        terms = []
        for j in range(max(0, ell - m1), min(ell, m0) + 1):
            k = ell - j
            logw = (
                gammaln(m0 + 1) - gammaln(j + 1) - gammaln(m0 - j + 1)
                + gammaln(m1 + 1) - gammaln(k + 1) - gammaln(m1 - k + 1)
            )
            if j > 0:
                logw += j * math.log(t[ell - 1]) if t[ell - 1] > 0 else -math.inf
            if k > 0:
                logw += k * math.log(ft[ell - 1]) if ft[ell - 1] > 0 else -math.inf
            if logw == -math.inf:
                continue
            sample = TwoGroupSample(m0 - j, m1 - k, uniform, model.f_alt)
            psi = upper_survival_orderstat(sample, t[ell:])
            terms.append(math.exp(logw) * psi)
        probs.append(min(max(math.fsum(terms), 0.0), 1.0))
    return RejectionPmf(tuple(probs), m1)


def rejection_moments(pmf: RejectionPmf, gamma_star) -> tuple:
    """Mean and variance of ``R * gamma_star`` under ``pmf``."""
    g = float(gamma_star)
    if not 0.0 <= g <= 1.0:
        raise ParameterError("gamma_star must lie in [0, 1]")
    ell = np.arange(pmf.m + 1, dtype=float)
    p = pmf.array
    mean_r = math.fsum((ell * p).tolist())
    second = math.fsum((ell * ell * p).tolist())
    var_r = max(second - mean_r * mean_r, 0.0)
    return g * mean_r, g * g * var_r
