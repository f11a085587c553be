"""Tests for the objectives and the calibration of critical vectors."""

import math

import numpy as np
import pytest

from oracles import gamma_bruteforce, pmf_m2, rejection_pmf_enum_batch
from tdpbound.bound import gamma_star
from tdpbound.calibration import (
    CalibrationSpec,
    LambdaSearch,
    TargetUnattainable,
    default_beta_grid,
    max_lambda_for_target,
    objective_sum_expectation,
    objective_sum_variance,
    objectives,
    select_critical_vector,
)
from tdpbound.errors import DimensionError, ParameterError
from tdpbound.pvalue_model import AltPValueCdf
from tdpbound.stepup import CriticalVector, make_critical_vector

OBJ_RTOL = 1e-12
GRID_STEP = 1e-4
LAMBDA_TOL = 1e-5

F_STRONG = AltPValueCdf.ttest(49, 4.0)
F_MID = AltPValueCdf.from_effect_size(0.8, 50)
U = AltPValueCdf.uniform()


def _full_gamma_grid(tmat, f, alpha):
    """Rows of ``tmat`` with gamma* = 1, from enumerated pmfs (m <= 4).

    gamma_k = 1 means P_k(R <= k) >= 1 - alpha, the brute-force condition
    at g = 1, checked for all rows at once.
    """
    m = tmat.shape[1]
    ok = np.ones(tmat.shape[0], dtype=bool)
    pmfs = []
    for k in range(m + 1):
        p = rejection_pmf_enum_batch(tmat, f, k)
        pmfs.append(p)
        ok &= p[:, : k + 1].sum(axis=1) >= 1.0 - alpha
    return ok, pmfs


class TestObjectives:
    def test_two_hypothesis_toy(self):
        # every pmf by the closed form, gammas by brute force, sums by hand
        t1, t2, alpha = 0.1, 0.3, 0.2
        f = AltPValueCdf.ttest(49, 2.0)
        pmfs = [pmf_m2(t1, t2, *([f] * k + [U] * (2 - k))) for k in range(3)]
        g = min(gamma_bruteforce(p, k, alpha) for k, p in enumerate(pmfs))
        r = np.arange(3)
        mean = sum(float(g) * (p @ r) for p in pmfs)
        var = sum(float(g) ** 2 * (p @ r**2 - (p @ r) ** 2) for p in pmfs)
        cv = CriticalVector((t1, t2))
        assert objective_sum_expectation(cv, f, 2, alpha) == pytest.approx(mean, rel=OBJ_RTOL)
        assert objective_sum_variance(cv, f, 2, alpha) == pytest.approx(var, rel=1e-10)

    def test_zero_vector(self):
        cv = CriticalVector((0.0,) * 6)
        assert objective_sum_expectation(cv, F_MID, 6, 0.2) == 0.0
        assert objective_sum_variance(cv, F_MID, 6, 0.2) == 0.0

    def test_gamma_zero_gives_zero(self):
        cv = make_critical_vector("bh", {"lambda": 0.9}, 8)
        assert gamma_star(F_MID, cv, 8, 0.2).gamma_star == 0.0
        assert objective_sum_expectation(cv, F_MID, 8, 0.2) == 0.0
        assert objective_sum_variance(cv, F_MID, 8, 0.2) == 0.0

    def test_dimension_check(self):
        with pytest.raises(DimensionError):
            objective_sum_expectation(CriticalVector((0.1, 0.2)), F_MID, 3, 0.2)


class TestLambdaSearch:
    def test_uniform_single_hypothesis(self):
        # m = 1, BH: gamma_0 = 1 needs t_1 <= alpha, gamma_1 = 1 always
        spec = CalibrationSpec("bh", 1, 0.2, U, 1.0)
        res = max_lambda_for_target("bh", None, spec)
        assert res.lam > 0.0
        assert res.lam == pytest.approx(0.2, abs=LAMBDA_TOL)

    def test_target_above_one(self):
        spec = CalibrationSpec("bh", 3, 0.2, F_STRONG, 1.1)
        with pytest.raises(TargetUnattainable):
            max_lambda_for_target("bh", None, spec)

    def test_bh_m3_against_fine_grid(self):
        spec = CalibrationSpec("bh", 3, 0.2, F_STRONG, 1.0)
        res = max_lambda_for_target("bh", None, spec)
        lams = np.arange(0, 10001) * GRID_STEP
        full, _ = _full_gamma_grid(np.outer(lams, [1 / 3, 2 / 3, 1.0]), F_STRONG, 0.2)
        ok = np.nonzero(full)[0]
        assert np.all(ok == np.arange(ok.size)), "gamma*(lambda) is not monotone on the grid"
        assert lams[ok[-1]] <= res.lam < lams[ok[-1]] + GRID_STEP

    def test_boundary_certificate(self):
        spec = CalibrationSpec("bh", 40, 0.2, F_MID, 0.9)
        res = max_lambda_for_target("bh", None, spec)
        assert res.monotone
        assert res.lambda_fail - res.lam <= LAMBDA_TOL
        ok_cv = make_critical_vector("bh", {"lambda": res.lam}, 40)
        bad_cv = make_critical_vector("bh", {"lambda": res.lambda_fail}, 40)
        assert 0.9 - 1e-9 <= gamma_star(F_MID, ok_cv, 40, 0.2).gamma_star < 1.0
        assert gamma_star(F_MID, bad_cv, 40, 0.2).gamma_star < 0.9

    def test_target_skipped_over(self):
        # constant thresholds: gamma* is 1 while P_0(R > 0) = 1 - (1 - lam)^m <= alpha, then 0
        spec = CalibrationSpec("exp", 10, 0.2, F_MID, 0.9)
        with pytest.raises(TargetUnattainable) as info:
            max_lambda_for_target("exp", 0.0, spec)
        assert info.value.closest_gamma == 0.0
        opt = max_lambda_for_target("exp", 0.0, CalibrationSpec("exp", 10, 0.2, F_MID, 1.0))
        assert opt.lam == pytest.approx(1 - 0.8 ** 0.1, abs=LAMBDA_TOL)

    def test_lower_target_lies_below_one(self):
        res = select_critical_vector(CalibrationSpec("exp", 15, 0.2, F_MID, 0.9))
        assert 0.9 <= res.gamma_star < 1.0
        assert 0.0 in [s["beta"] for s in res.diagnostics["skipped"]]

    def test_unattainable_reports_closest(self):
        # AORC with beta = 0 puts t_m at 1, so gamma_0 = 0 for every lambda > 0
        spec = CalibrationSpec("aorc", 5, 0.2, F_MID, 1.0)
        with pytest.raises(TargetUnattainable) as info:
            max_lambda_for_target("aorc", 0.0, spec)
        assert info.value.closest_gamma is not None and info.value.closest_gamma < 1.0


class TestSelection:
    def test_exp_beta_one_is_bh(self):
        f = F_MID
        bh = select_critical_vector(CalibrationSpec("bh", 10, 0.2, f, 1.0))
        ex = select_critical_vector(CalibrationSpec("exp", 10, 0.2, f, 1.0, beta_grid=(1.0,)))
        np.testing.assert_allclose(ex.cv.values, bh.cv.values, atol=1e-12)
        assert ex.objective_mean == pytest.approx(bh.objective_mean, rel=1e-12)

    def test_single_candidate(self):
        spec = CalibrationSpec("exp", 6, 0.2, F_MID, 1.0, beta_grid=(2.0,))
        res = select_critical_vector(spec)
        only = max_lambda_for_target("exp", 2.0, spec)
        assert res.diagnostics["beta"] == 2.0
        assert res.diagnostics["lambda"] == only.lam

    def test_aorc_toy_against_exhaustive_grid(self):
        m, alpha, betas = 3, 0.2, (0.0, 1.0, 2.0)
        spec = CalibrationSpec("aorc", m, alpha, F_STRONG, 1.0, beta_grid=betas)
        res = select_critical_vector(spec)

        # oracle: every (beta, lambda) cell on a 1e-4 grid over [0, 4]
        lams = np.arange(1, 40001) * GRID_STEP
        i = np.arange(1, m + 1)
        cells = []
        for beta in betas:
            tmat = i * lams[:, None] / ((m - i) + beta + i * lams[:, None])
            full, pmfs = _full_gamma_grid(tmat, F_STRONG, alpha)
            ok = np.nonzero(full)[0]
            if ok.size == 0:
                continue
            j = ok[-1]
            r = np.arange(m + 1)
            mean = sum(p[j] @ r for p in pmfs)
            var = sum(p[j] @ r**2 - (p[j] @ r) ** 2 for p in pmfs)
            cells.append((beta, lams[j], mean, var))
        assert 0.0 not in [c[0] for c in cells]
        best = max(c[2] for c in cells)
        near = sorted((c for c in cells if c[2] >= 0.99 * best), key=lambda c: (c[3], c[0]))
        beta_o, lam_o = near[0][0], near[0][1]
        assert res.diagnostics["beta"] == beta_o
        assert lam_o <= res.diagnostics["lambda"] < lam_o + GRID_STEP
        assert [s["beta"] for s in res.diagnostics["skipped"]] == [0.0]

    def test_objective_consistency(self):
        spec = CalibrationSpec("exp", 40, 0.2, F_MID, 0.9, beta_grid=(0.5, 2.0))
        res = select_critical_vector(spec)
        obj = objectives(res.cv, F_MID, 0.2)
        assert obj.mean == res.objective_mean and obj.var == res.objective_var
        assert res.gamma_star >= 0.9 - 1e-9

    def test_to_dict_is_plain(self):
        import json

        res = select_critical_vector(CalibrationSpec("bh", 5, 0.2, F_MID, 1.0))
        json.dumps(res.to_dict())


class TestSpecValidation:
    def test_bad_family(self):
        with pytest.raises(ParameterError):
            CalibrationSpec("custom", 5, 0.2, F_MID)

    def test_empty_beta_grid(self):
        with pytest.raises(ParameterError):
            CalibrationSpec("exp", 5, 0.2, F_MID, beta_grid=())

    def test_negative_beta(self):
        with pytest.raises(ParameterError):
            CalibrationSpec("aorc", 5, 0.2, F_MID, beta_grid=(-1.0,))

    def test_lambda_window(self):
        spec = CalibrationSpec("bh", 5, 0.2, F_MID, lambda_search=LambdaSearch(lo=0.1, hi=0.05))
        with pytest.raises(ParameterError):
            spec.bounds()

    def test_default_grids(self):
        assert default_beta_grid("exp", 100) == (0.0, 0.25, 0.5, 1.0, 2.0, 4.0)
        grid = default_beta_grid("aorc", 100)
        assert set((0.0, 0.25, 0.5, 1.0, 2.0, 4.0)) <= set(grid)
        assert max(grid) == pytest.approx(1000.0)
        assert all(math.isfinite(b) for b in grid)

    def test_aorc_lambda_ceiling(self):
        # lambda is an FDR level by default; an explicit window may go past 1
        assert CalibrationSpec("aorc", 5, 0.2, F_MID).bounds() == (0.0, 1.0)
        wide = CalibrationSpec("aorc", 5, 0.2, F_MID, lambda_search=LambdaSearch(hi=3.0))
        assert wide.bounds() == (0.0, 3.0)
