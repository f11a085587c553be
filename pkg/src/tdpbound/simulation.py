"""Monte Carlo evaluation of the bounds on simulated t-test data.

Each replication draws ``N`` subjects with ``m`` equicorrelated unit-variance
normal coordinates, the first ``m1`` of them shifted by ``theta / sqrt(2)``,
and turns every coordinate into a two-sided one-sample t-test p-value.
Every configured method then produces a lower bound for ``m1``; a
replication violates coverage when the bound exceeds ``m1``.

Replication ``b`` uses its own Philox stream keyed by ``(seed, b)``, so
results do not depend on chunking or on the number of worker processes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import stats

from .bound import GammaTable, bound_from_count, gamma_star
from .calibration import CalibrationResult, CalibrationSpec, select_critical_vector
from .errors import ParameterError
from .gs_baseline import gs_bound_batch
from .pvalue_model import AltPValueCdf
from .stepup import stepup_count

CHUNK = 500


@dataclass(frozen=True)
class MethodSpec:
    """A critical-vector family calibrated to a ``gamma*`` target."""

    family: str
    gamma_target: float = 1.0

    @property
    def label(self) -> str:
        suffix = "opt" if self.gamma_target == 1.0 else f"{self.gamma_target:g}"
        return f"{self.family.lower()}-{suffix}"

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        """``"bh-opt"``, ``"exp-0.95"`` or ``"aorc"`` (target 1)."""
        family, _, target = text.strip().partition("-")
        if target in ("", "opt"):
            return cls(family.lower(), 1.0)
        try:
            return cls(family.lower(), float(target))
        except ValueError as exc:
            raise ParameterError(f"bad method {text!r}") from exc


@dataclass(frozen=True)
class ScenarioConfig:
    m1: int = 10
    theta: float = 0.8
    N: int = 50
    m: int = 100
    rho: float = 0.0
    theta_assumed: Optional[float] = None
    alpha: float = 0.2
    B: int = 10_000
    methods: tuple = (MethodSpec("bh"), MethodSpec("by"), MethodSpec("aorc"), MethodSpec("exp"))
    gs: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise ParameterError("N must be at least 2")
        if self.m < 1 or not 0 <= self.m1 <= self.m:
            raise ParameterError("need m >= 1 and 0 <= m1 <= m")
        if self.rho < 0.0:
            raise ParameterError("negative correlation is not supported")
        if not self.rho < 1.0:
            raise ParameterError("rho must be < 1")
        if self.B < 1:
            raise ParameterError("B must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError("alpha must lie in (0, 1)")
        if self.theta_assumed is None:
            object.__setattr__(self, "theta_assumed", self.theta)
        object.__setattr__(self, "methods", tuple(
            MethodSpec.parse(x) if isinstance(x, str) else x for x in self.methods))

    @property
    def name(self) -> str:
        return (f"theta={self.theta:g},theta_assumed={self.theta_assumed:g},rho={self.rho:g},"
                f"m1={self.m1},N={self.N},m={self.m}")

    def f_alt(self) -> AltPValueCdf:
        return AltPValueCdf.from_effect_size(self.theta_assumed, self.N)


def parse_config(text: str, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Read ``key = value`` lines (``#`` comments allowed) over ``base``.

    ``methods`` takes a comma-separated list such as ``bh-opt, exp-0.95``.
    """
    base = base or ScenarioConfig()
    types = {f.name: f.type for f in fields(ScenarioConfig)}
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in types:
            raise ParameterError(f"line {lineno}: expected key = value with a known key, got {raw!r}")
        try:
            if key == "methods":
                updates[key] = tuple(MethodSpec.parse(v) for v in value.split(",") if v.strip())
            elif key == "gs":
                updates[key] = value.lower() in ("1", "true", "yes", "on")
            elif key in ("m1", "N", "m", "B", "seed"):
                updates[key] = int(value)
            elif key == "theta_assumed" and value.lower() == "none":
                updates[key] = None
            else:
                updates[key] = float(value)
        except ValueError as exc:
            raise ParameterError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    if "theta" in updates and "theta_assumed" not in updates:
        updates["theta_assumed"] = None
    if updates.get("theta_assumed", 0) is None:
        updates["theta_assumed"] = updates.get("theta", base.theta)
    return replace(base, **updates)


def _rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(rep,))))


def gen_dataset(config: ScenarioConfig, rep: int) -> np.ndarray:
    """The (N, m) data matrix of replication ``rep``."""
    if rep < 0:
        raise ParameterError("replication index must be non-negative")
    rng = _rng(config.seed, rep)
    shared = rng.standard_normal((config.N, 1))
    own = rng.standard_normal((config.N, config.m))
    x = math.sqrt(config.rho) * shared + math.sqrt(1.0 - config.rho) * own
    x[:, : config.m1] += config.theta / math.sqrt(2.0)
    return x


def ttest_maps(data) -> tuple:
    """Two-sided one-sample t-tests down the first axis.

    Accepts (N, m) or a stack (B, N, m).  A column with zero sample variance
    gets p = 0 if its mean is non-zero and p = 1 otherwise (t is then
    reported as +-inf or 0).
    """
    x = np.asarray(data, dtype=float)
    axis = x.ndim - 2
    n = x.shape[axis]
    if n < 2:
        raise ParameterError("t-tests need at least two observations")
    mean = x.mean(axis=axis)
    sd = x.std(axis=axis, ddof=1)
    flat = sd == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mean / (sd / math.sqrt(n))
    t = np.where(flat, np.where(mean != 0.0, np.copysign(np.inf, mean), 0.0), t)
    p = 2.0 * stats.t.sf(np.abs(t), n - 1)
    p = np.where(flat, np.where(mean != 0.0, 0.0, 1.0), p)
    return t, np.clip(p, 0.0, 1.0)


@dataclass(frozen=True)
class PreparedMethod:
    """A calibrated method and its bound for every possible rejection count."""

    spec: MethodSpec
    thresholds: np.ndarray
    bounds: np.ndarray
    gamma_star: float
    calibration: Optional[CalibrationResult] = None


def prepare_method(spec: MethodSpec, config: ScenarioConfig,
                   calibration: Optional[CalibrationResult] = None) -> PreparedMethod:
    """Calibrate (unless given) and tabulate ceil(r * gamma*) for r = 0..m.

    With ``theta_assumed == 0`` every hypothesis is taken to be null and the
    bound is 0 whatever the data.
    """
    m = config.m
    if config.theta_assumed == 0.0:
        return PreparedMethod(spec, np.zeros(m), np.zeros(m + 1, dtype=np.int64), 0.0, None)
    f_alt = config.f_alt()
    if calibration is None:
        calibration = select_critical_vector(
            CalibrationSpec(spec.family, m, config.alpha, f_alt, spec.gamma_target))
    table: GammaTable = gamma_star(f_alt, calibration.cv, m, config.alpha)
    bounds = np.array([bound_from_count(r, table) for r in range(m + 1)], dtype=np.int64)
    return PreparedMethod(spec, calibration.cv.array, bounds, table.gamma_star, calibration)


def _chunk_bounds(config: ScenarioConfig, prepared: Sequence[PreparedMethod], start: int, stop: int) -> dict:
    data = np.stack([gen_dataset(config, b) for b in range(start, stop)])
    _, p = ttest_maps(data)
    out = {}
    for pm in prepared:
        out[pm.spec.label] = pm.bounds[stepup_count(p, pm.thresholds)]
    if config.gs:
        out["gs"] = gs_bound_batch(p, config.alpha)[0]
    return out


def simulate_bounds(config: ScenarioConfig, prepared: Sequence[PreparedMethod], n_jobs: int = 1) -> Dict[str, np.ndarray]:
    """Per-replication bounds for every method, in replication order."""
    spans = [(s, min(s + CHUNK, config.B)) for s in range(0, config.B, CHUNK)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_chunk_bounds, [config] * len(spans), [prepared] * len(spans),
                                  [a for a, _ in spans], [b for _, b in spans]))
    else:
        parts = [_chunk_bounds(config, prepared, a, b) for a, b in spans]
    return {k: np.concatenate([part[k] for part in parts]) for k in parts[0]}


@dataclass(frozen=True)
class MethodSummary:
    method: str
    mean_bound: float
    empirical_variance: float
    violation_rate: float
    se_mean: float
    se_variance: float
    se_violation: float
    gamma_star: Optional[float] = None


def summarize(label: str, bounds: np.ndarray, m1: int, gamma: Optional[float] = None) -> MethodSummary:
    """Mean, variance and strict violation rate (bound > m1) with Monte Carlo errors."""
    x = np.asarray(bounds, dtype=np.int64)
    n = x.size
    # integer sums are exact, so the summary does not depend on chunking
    s1, s2 = int(x.sum()), int((x * x).sum())
    mean = s1 / n
    var = (s2 - s1 * s1 / n) / (n - 1) if n > 1 else 0.0
    viol = int(np.count_nonzero(x > m1)) / n
    dev = x - mean
    m4 = float(np.mean(dev ** 4))
    se_var = math.sqrt(max(m4 - var * var, 0.0) / n) if n > 1 else 0.0
    return MethodSummary(
        method=label,
        mean_bound=mean,
        empirical_variance=var,
        violation_rate=viol,
        se_mean=math.sqrt(var / n),
        se_variance=se_var,
        se_violation=math.sqrt(viol * (1.0 - viol) / n),
        gamma_star=gamma,
    )


@dataclass(frozen=True)
class ScenarioSummary:
    config: ScenarioConfig
    methods: tuple = field(default_factory=tuple)

    def __getitem__(self, label: str) -> MethodSummary:
        for s in self.methods:
            if s.method == label:
                return s
        raise KeyError(label)

    def rows(self) -> list:
        """Tidy rows: scenario, method, m1, statistic, value, mc_se."""
        out = []
        for s in self.methods:
            for stat, value, se in (
                ("mean_bound", s.mean_bound, s.se_mean),
                ("empirical_variance", s.empirical_variance, s.se_variance),
                ("violation_rate", s.violation_rate, s.se_violation),
            ):
                out.append({"scenario": self.config.name, "method": s.method, "m1": self.config.m1,
                            "statistic": stat, "value": repr(float(value)), "mc_se": repr(float(se))})
        return out

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()


CSV_FIELDS = ["scenario", "method", "m1", "statistic", "value", "mc_se"]


def run_scenario(config: ScenarioConfig, calibrations: Optional[dict] = None, n_jobs: int = 1) -> ScenarioSummary:
    """Simulate ``config.B`` replications and summarise every method.

    ``calibrations`` maps method labels to :class:`CalibrationResult` to skip
    calibrating; they must belong to ``config.theta_assumed``, ``m`` and ``alpha``.
    """
    calibrations = calibrations or {}
    prepared = [prepare_method(s, config, calibrations.get(s.label)) for s in config.methods]
    bounds = simulate_bounds(config, prepared, n_jobs=n_jobs)
    summaries = [summarize(pm.spec.label, bounds[pm.spec.label], config.m1, pm.gamma_star) for pm in prepared]
    if config.gs:
        summaries.append(summarize("gs", bounds["gs"], config.m1))
    return ScenarioSummary(config, tuple(summaries))
