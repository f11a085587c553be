"""Simes-based closed testing lower bound for the number of false nulls.

Closed testing with Simes local tests rejects an intersection hypothesis
``I`` only if every superset of ``I`` is rejected by the Simes test
(p_(j:J) <= j * alpha / |J| for some j).  The resulting lower bound for the
number of false nulls among all ``m`` hypotheses is the smallest ``m - |I|``
over intersections that survive.

:func:`gs_bound` uses the shortcut through ``h``, the size of the largest
intersection that the Simes test does not reject:

    h = max{i : p_(m - i + j) > j * alpha / i for j = 1..i}   (0 if none),
    d = max_u (1 - u + #{k : h * p_k <= u * alpha}),          d = m if h = 0.

:func:`gs_bound_oracle` enumerates all intersections instead and is the
reference the shortcut is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError, SizeError

ORACLE_MAX_M = 15


@dataclass(frozen=True)
class GsResult:
    d: int
    h: int
    alpha: float


def _check(p, alpha):
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise DomainError("p-values must lie in [0, 1]")
    return p


def _hommel_h(sorted_p: np.ndarray, alpha: float) -> np.ndarray:
    """Row-wise ``h`` for a (B, m) array of sorted p-values."""
    n_rows, m = sorted_p.shape
    h = np.zeros(n_rows, dtype=np.int64)
    for i in range(1, m + 1):
        crit = np.arange(1, i + 1) * alpha / i
        ok = np.all(sorted_p[:, m - i:] > crit, axis=1)
        h[ok] = i
    return h


def _discoveries(sorted_p: np.ndarray, h: np.ndarray, alpha: float) -> np.ndarray:
    n_rows, m = sorted_p.shape
    d = np.zeros(n_rows, dtype=np.int64)
    hp = sorted_p * h[:, None]
    for u in range(1, m + 1):
        count = np.sum(hp <= u * alpha, axis=1)
        d = np.maximum(d, 1 - u + count)
    d[h == 0] = m
    return d


def gs_bound_batch(pmatrix, alpha: float) -> tuple:
    """``(d, h)`` for each row of a (B, m) p-value array."""
    p = _check(pmatrix, alpha)
    if p.ndim != 2:
        raise ParameterError("expected a 2-D array of p-values")
    sp = np.sort(p, axis=1)
    h = _hommel_h(sp, alpha)
    return _discoveries(sp, h, alpha), h


def gs_bound(pvalues, alpha: float) -> GsResult:
    """Lower bound ``d`` for the number of false nulls, in O(m^2)."""
    p = _check(pvalues, alpha).reshape(1, -1)
    d, h = gs_bound_batch(p, alpha)
    return GsResult(int(d[0]), int(h[0]), alpha)


def gs_bound_oracle(pvalues, alpha: float) -> int:
    """Closed testing by brute force over all 2**m intersections.

    Raises:
        SizeError: if ``m > 15``.
    """
    p = _check(pvalues, alpha).reshape(-1)
    m = p.size
    if m > ORACLE_MAX_M:
        raise SizeError(f"exhaustive closed testing is limited to m <= {ORACLE_MAX_M}")
    if m == 0:
        return 0
    n_sets = 1 << m
    masks = np.arange(n_sets, dtype=np.int64)
    member = ((masks[:, None] >> np.arange(m)) & 1).astype(bool)
    # walk hypotheses in increasing p so cumulative counts give ranks in each set
    order = np.argsort(p, kind="stable")
    member_sorted = member[:, order]
    size = member.sum(axis=1)
    rank = np.cumsum(member_sorted, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        crit = rank * alpha / size[:, None]
    local_reject = np.any(member_sorted & (p[order][None, :] <= crit), axis=1)
    local_reject[0] = False  # the empty intersection is never rejected

    # survives[I]: some superset of I is not locally rejected
    survives = ~local_reject
    for b in range(m):
        bit = 1 << b
        without = masks[(masks & bit) == 0]
        survives[without] |= survives[without | bit]
    return int(np.min(m - size[survives]))
