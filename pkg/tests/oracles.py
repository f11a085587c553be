"""Independent reference computations used by the tests.

Nothing here calls the recursions under test.  The noncentral t comes from
a chi-square mixture integral, order-statistic and rejection-count
probabilities from enumerating which threshold interval each variable falls
in, and gamma values from a direct search over candidate shrinkage factors.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate, stats


def nct_cdf_quad(x: float, nu: int, mu: float) -> float:
    """P(T <= x) = E[Phi(x * sqrt(V / nu) - mu)] with V ~ chi2(nu).

    The integral is cut at chi-square quantiles 1e-17 and 1 - 1e-17 and split
    at the median, which keeps quad on the part of the axis that matters.
    """
    f = lambda v: stats.norm.cdf(x * math.sqrt(v / nu) - mu) * stats.chi2.pdf(v, nu)
    lo, mid, hi = stats.chi2.ppf(1e-17, nu), stats.chi2.median(nu), stats.chi2.isf(1e-17, nu)
    a = integrate.quad(f, lo, mid, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    b = integrate.quad(f, mid, hi, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    return a + b


def nct_sf_quad(x: float, nu: int, mu: float) -> float:
    f = lambda v: stats.norm.sf(x * math.sqrt(v / nu) - mu) * stats.chi2.pdf(v, nu)
    lo, mid, hi = stats.chi2.ppf(1e-17, nu), stats.chi2.median(nu), stats.chi2.isf(1e-17, nu)
    a = integrate.quad(f, lo, mid, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    b = integrate.quad(f, mid, hi, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    return a + b


def alt_cdf_quad(p: float, nu: int, mu: float) -> float:
    """P(two-sided p-value <= p) from the quadrature noncentral t."""
    q = stats.t.isf(p / 2.0, nu)
    return nct_sf_quad(q, nu, mu) + nct_sf_quad(q, nu, -mu)


def _interval_probs(cdf, cuts):
    """P(Z in (c_{i-1}, c_i]) for the partition of [0, 1] by ``cuts``."""
    edges = np.concatenate(([0.0], np.asarray(cuts, dtype=float), [1.0]))
    vals = np.array([cdf(e) for e in edges])
    vals[0], vals[-1] = 0.0, 1.0
    return np.maximum(np.diff(vals), 0.0)


def orderstat_cdf_enum(cdfs, c) -> float:
    """P(Z_(j) <= c_j for all j) by enumerating interval memberships.

    ``cdfs`` holds one CDF per variable.  Z_(j) <= c_j is the same as
    "at least j variables lie in [0, c_j]", which depends only on which
    interval of the partition by ``c`` each variable lands in.
    """
    n = len(cdfs)
    probs = [_interval_probs(f, c) for f in cdfs]
    total = 0.0
    for cells in itertools.product(range(n + 1), repeat=n):
        ok = all(sum(1 for k in cells if k <= j) >= j + 1 for j in range(n))
        if ok:
            total += math.prod(probs[i][k] for i, k in enumerate(cells))
    return total


def rejection_pmf_enum(t, f_alt, m1: int) -> np.ndarray:
    """Exact pmf of the step-up count by enumerating interval memberships.

    p_(i) <= t_i iff at least i p-values lie in [0, t_i], so R is a function
    of the cell each p-value falls in.  Feasible for m <= 6.
    """
    m = len(t)
    uni = _interval_probs(lambda x: x, t)
    alt = _interval_probs(lambda x: float(f_alt(x)), t)
    per_var = [alt] * m1 + [uni] * (m - m1)
    pmf = np.zeros(m + 1)
    for cells in itertools.product(range(m + 1), repeat=m):
        r = 0
        for i in range(m, 0, -1):
            if sum(1 for k in cells if k < i) >= i:
                r = i
                break
        pmf[r] += math.prod(per_var[v][k] for v, k in enumerate(cells))
    return pmf


def pmf_m2(t1: float, t2: float, g1, g2) -> np.ndarray:
    """Closed-form pmf of R for two p-values with CDFs ``g1``, ``g2``."""
    a1, a2, b1, b2 = g1(t1), g1(t2), g2(t1), g2(t2)
    p2 = a2 * b2
    p_min = 1.0 - (1.0 - a1) * (1.0 - b1)
    both_below_t2_and_min_below_t1 = a2 * b2 - (a2 - a1) * (b2 - b1)
    p1 = p_min - both_below_t2_and_min_below_t1
    return np.array([1.0 - p1 - p2, p1, p2])


def gamma_bruteforce(pmf, k: int, alpha: float) -> Fraction:
    """max{g in [0, 1] : P(R * g <= k) >= 1 - alpha} over exact candidates.

    P(R * g <= k) only changes at g = k / l, so the maximum is one of those
    values, 0 or 1.  Probabilities are summed with fsum.
    """
    m = len(pmf) - 1
    cands = {Fraction(0), Fraction(1)}
    cands |= {Fraction(k, ell) for ell in range(1, m + 1) if Fraction(k, ell) <= 1}
    best = None
    for g in sorted(cands):
        prob = math.fsum(pmf[ell] for ell in range(m + 1) if ell * g <= k)
        if prob >= 1.0 - alpha:
            best = g
    return best


def sample_pvalues(rng, n_rep: int, m: int, m1: int, nu: int, mu: float) -> np.ndarray:
    """``n_rep`` rows of m p-values: m1 from two-sided t-tests with noncentrality mu."""
    p = rng.random((n_rep, m))
    if m1:
        tt = stats.nct.rvs(nu, mu, size=(n_rep, m1), random_state=rng)
        p[:, :m1] = 2.0 * stats.t.sf(np.abs(tt), nu)
    return p


def stepup_count_loop(p, t) -> int:
    """Plain loop version of r = max{i : p_(i) <= t_i}."""
    ps = sorted(p)
    r = 0
    for i in range(len(ps)):
        if ps[i] <= t[i]:
            r = i + 1
    return r


def rejection_pmf_enum_batch(tmat, f_alt, m1: int) -> np.ndarray:
    """Row-wise :func:`rejection_pmf_enum` for a matrix of critical vectors.

    Every row of ``tmat`` is one critical vector; the CDFs are evaluated for
    all rows at once so that a fine parameter grid stays cheap.
    """
    tmat = np.atleast_2d(np.asarray(tmat, dtype=float))
    n, m = tmat.shape
    edges = np.hstack([np.zeros((n, 1)), tmat, np.ones((n, 1))])
    fa = np.asarray(f_alt(edges.ravel()), dtype=float).reshape(edges.shape)
    fa[:, 0], fa[:, -1] = 0.0, 1.0
    uni = np.maximum(np.diff(edges, axis=1), 0.0)
    alt = np.maximum(np.diff(fa, axis=1), 0.0)
    per_var = [alt] * m1 + [uni] * (m - m1)
    pmf = np.zeros((n, m + 1))
    for cells in itertools.product(range(m + 1), repeat=m):
        r = 0
        for i in range(m, 0, -1):
            if sum(1 for k in cells if k < i) >= i:
                r = i
                break
        pmf[:, r] += np.prod([per_var[v][:, k] for v, k in enumerate(cells)], axis=0)
    return pmf


def simes_rejects(p_subset, alpha: float) -> bool:
    """Simes local test: reject iff p_(j) <= j * alpha / n for some j."""
    ps = sorted(p_subset)
    n = len(ps)
    return any(ps[j] <= (j + 1) * alpha / n for j in range(n))


def gs_closed_testing(p, alpha: float) -> int:
    """True-discovery bound by closed testing with Simes local tests.

    An intersection survives closure iff some superset is not locally
    rejected, so the largest surviving intersection is the largest
    subset the Simes test keeps, and the bound is m minus its size.
    """
    m = len(p)
    for size in range(m, 0, -1):
        for idx in itertools.combinations(range(m), size):
            if not simes_rejects([p[i] for i in idx], alpha):
                return m - size
    return m
