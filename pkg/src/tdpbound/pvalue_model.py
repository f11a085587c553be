"""Distributions of p-values under the alternative.

The p-value of a two-sided one-sample t-test with ``nu`` degrees of freedom
has CDF

    F(p) = P(|T| >= q),   q = t_nu^{-1}(1 - p/2),   T ~ noncentral t(nu, mu)

when the null hypothesis is false.  ``AltPValueCdf`` wraps this together
with the uniform (null) CDF, user-tabulated CDFs and the complement
transform ``t -> 1 - F(1 - t)`` used by the order-statistic machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import DomainError, ParameterError

# Probabilities produced by differences of tail terms are clamped to [0, 1]
# once they are within this distance of the boundary.
CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class TDistParams:
    """Degrees of freedom ``nu`` and noncentrality ``mu`` of a t-distribution."""

    nu: int
    mu: float = 0.0

    def __post_init__(self):
        if not isinstance(self.nu, (int, np.integer)) or self.nu < 1:
            raise ParameterError(f"nu must be a positive integer, got {self.nu!r}")
        if not math.isfinite(self.mu):
            raise ParameterError(f"mu must be finite, got {self.mu!r}")

    @classmethod
    def from_effect_size(cls, theta: float, n: int) -> "TDistParams":
        """One-sample t-test with ``n`` observations and effect size ``theta``.

        ``mu = theta * sqrt(n / 2)`` and ``nu = n - 1``.
        """
        if n < 2:
            raise ParameterError(f"sample size must be >= 2, got {n}")
        return cls(nu=int(n) - 1, mu=float(theta) * math.sqrt(n / 2.0))


def _clamp(values):
    arr = np.asarray(values, dtype=float)
    if np.any(np.isnan(arr)):
        raise ArithmeticError("probability evaluated to NaN")
    if np.any(arr < -CLAMP_TOL) or np.any(arr > 1 + CLAMP_TOL):
        raise ArithmeticError("probability left [0, 1] beyond rounding tolerance")
    return np.clip(arr, 0.0, 1.0)


def _check_params(params: TDistParams):
    if not isinstance(params, TDistParams):
        raise ParameterError("params must be a TDistParams instance")


def noncentral_t_cdf(x, params: TDistParams):
    """P(T <= x) for T noncentral-t(nu, mu).  Vectorised over ``x``.

    Infinite ``x`` saturates to 0/1; NaN raises.
    """
    _check_params(params)
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise DomainError("noncentral_t_cdf is undefined for NaN")
    if params.mu == 0.0:
        out = stats.t.cdf(x, params.nu)
    else:
        # reflected upper tail: scipy's nct.cdf can return NaN deep in the
        # lower tail where nct.sf does not
        out = stats.nct.sf(-x, params.nu, -params.mu)
    out = np.where(np.isposinf(x), 1.0, np.where(np.isneginf(x), 0.0, out))
    out = _clamp(out)
    return float(out) if out.ndim == 0 else out


def noncentral_t_sf(x, params: TDistParams):
    """Upper tail P(T > x); accurate far in the tail where 1 - cdf is not."""
    _check_params(params)
    x = np.asarray(x, dtype=float)
    if params.mu == 0.0:
        out = stats.t.sf(x, params.nu)
    else:
        out = stats.nct.sf(x, params.nu, params.mu)
    out = _clamp(out)
    return float(out) if out.ndim == 0 else out


def noncentral_t_quantile(p, params: TDistParams):
    """Inverse of :func:`noncentral_t_cdf` for ``p`` in the open interval (0, 1)."""
    _check_params(params)
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0)) or np.any(~(p < 1.0)):
        raise DomainError("quantile requires 0 < p < 1")
    if params.mu == 0.0:
        out = stats.t.ppf(p, params.nu)
    else:
        out = stats.nct.ppf(p, params.nu, params.mu)
    return float(out) if out.ndim == 0 else out


def alt_pvalue_cdf(p, params: TDistParams):
    """CDF of the two-sided t-test p-value when the statistic is noncentral.

    With ``q`` the central upper ``p/2`` quantile, the p-value is at most
    ``p`` exactly when ``|T| >= q``, so F(p) = P(T >= q) + P(T <= -q).
    The upper quantile is taken through ``isf`` to keep precision for the
    very small thresholds that step-up critical vectors start with, and the
    lower term is evaluated as P(-T >= q) with -T ~ noncentral t(nu, -mu).
    """
    _check_params(params)
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("p-values must lie in [0, 1]")
    if params.mu == 0.0:
        out = p.copy()
    else:
        with np.errstate(divide="ignore"):
            q = stats.t.isf(p / 2.0, params.nu)
        upper = stats.nct.sf(q, params.nu, params.mu)
        lower = stats.nct.sf(q, params.nu, -params.mu)
        out = np.where(p <= 0.0, 0.0, np.where(p >= 1.0, 1.0, upper + lower))
    out = _clamp(out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AltPValueCdf:
    """A CDF on [0, 1] for p-values of false null hypotheses.

    ``kind`` is one of ``"ttest"`` (needs ``params``), ``"uniform"`` or
    ``"custom"`` (needs ``grid``/``values``: a monotone table linearly
    interpolated).  ``complemented`` flips the CDF into t -> 1 - F(1 - t);
    use :func:`complement_cdf` rather than setting it by hand.
    """

    kind: str
    params: Optional[TDistParams] = None
    grid: Optional[tuple] = None
    values: Optional[tuple] = None
    complemented: bool = False
    _grid_arr: np.ndarray = field(init=False, repr=False, compare=False)
    _val_arr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "ttest":
            if self.params is None:
                raise ParameterError("ttest CDF needs TDistParams")
            _check_params(self.params)
        elif self.kind == "custom":
            if self.grid is None or self.values is None:
                raise ParameterError("custom CDF needs grid and values")
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.ndim != 1 or g.shape != v.shape or g.size < 2:
                raise ParameterError("grid and values must be 1-D of equal length >= 2")
            if g[0] != 0.0 or g[-1] != 1.0 or np.any(np.diff(g) <= 0):
                raise ParameterError("grid must increase strictly from 0 to 1")
            if v[0] != 0.0 or v[-1] != 1.0 or np.any(np.diff(v) < 0):
                raise ParameterError("values must be non-decreasing from 0 to 1")
            object.__setattr__(self, "_grid_arr", g)
            object.__setattr__(self, "_val_arr", v)
        elif self.kind != "uniform":
            raise ParameterError(f"unknown CDF kind {self.kind!r}")

    @classmethod
    def uniform(cls) -> "AltPValueCdf":
        return cls("uniform")

    @classmethod
    def ttest(cls, nu: int, mu: float) -> "AltPValueCdf":
        return cls("ttest", params=TDistParams(nu=nu, mu=mu))

    @classmethod
    def from_effect_size(cls, theta: float, n: int) -> "AltPValueCdf":
        """p-value CDF of a one-sample two-sided t-test; ``theta=0`` is uniform."""
        params = TDistParams.from_effect_size(theta, n)
        if params.mu == 0.0:
            return cls.uniform()
        return cls("ttest", params=params)

    @classmethod
    def tabulated(cls, grid, values) -> "AltPValueCdf":
        return cls("custom", grid=tuple(map(float, grid)), values=tuple(map(float, values)))

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform"

    def _base(self, p):
        if self.kind == "uniform":
            return np.array(p, dtype=float)
        if self.kind == "ttest":
            return np.asarray(alt_pvalue_cdf(p, self.params), dtype=float)
        return np.interp(p, self._grid_arr, self._val_arr)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise DomainError("CDF argument must lie in [0, 1]")
        if self.complemented:
            out = 1.0 - self._base(1.0 - p)
        else:
            out = self._base(p)
        out = _clamp(out)
        return float(out) if out.ndim == 0 else out

    def describe(self) -> dict:
        d = {"kind": self.kind, "complemented": self.complemented}
        if self.params is not None:
            d.update(nu=self.params.nu, mu=self.params.mu)
        return d


def complement_cdf(cdf: AltPValueCdf) -> AltPValueCdf:
    """The CDF of ``1 - P`` when ``P ~ cdf``: t -> 1 - cdf(1 - t).

    Applying it twice gives back an object equal to the input.
    """
    if cdf.kind == "uniform":
        return cdf
    return AltPValueCdf(
        kind=cdf.kind,
        params=cdf.params,
        grid=cdf.grid,
        values=cdf.values,
        complemented=not cdf.complemented,
    )
