# detection/harness.py
"""
Monte Carlo experiments: threshold calibration, risk estimation, sweeps and
the GLRT-versus-squared-sum comparison.

Determinism contract: trial t of phase p in experiment e draws from
split(master_seed, e, p, t); per-trial statistics are collected in trial
order, so results do not depend on the number of worker threads.
"""
import hashlib
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import binomtest

from .conf import setting
from .correlation import CorrelationModel, check_index_set, sample_alternative, sample_null
from .detectors import Detector, ThresholdKind, ThresholdRule, build_detector
from .exceptions import ConfigurationError, DetectionError, PreconditionError
from .families import FamilyKind, SetFamily, build_family
from .streams import PHASE_ALTERNATIVE, PHASE_AUX, PHASE_CALIBRATION, PHASE_NULL, trial_stream

logger = logging.getLogger(__name__)

# === Constants ===
MIN_EXCEEDANCES = 100
SWEEP_COLUMNS = [
    "n", "k", "rho", "family", "detector", "type1", "type2", "total",
    "ci1", "ci2", "seed", "citation_of_threshold", "threshold", "error",
]


class RiskMode(str, Enum):
    AVERAGE = "average"
    FIXED = "fixed"


# === Helper Functions ===
def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def experiment_id_for(config: dict) -> int:
    """Stable 63-bit stream counter derived from a cell configuration."""
    return int(config_digest(config)[:16], 16) >> 1


def wilson_interval(successes: int, trials: int):
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _map_trials(fn, trials: int, threads=None, progress=None):
    """fn(t) for t in range(trials), results in trial order."""
    threads = setting("DEFAULT_THREADS") if threads is None else max(1, int(threads))
    if threads == 1:
        results = []
        for t in range(trials):
            results.append(fn(t))
            if progress:
                progress(t + 1, trials)
        return results
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = [executor.submit(fn, t) for t in range(trials)]
        results = []
        for t, future in enumerate(futures):
            results.append(future.result())
            if progress:
                progress(t + 1, trials)
    return results


# === Domain types ===
@dataclass
class Experiment:
    model: CorrelationModel
    family: SetFamily
    detector: Detector
    trials: int
    alpha: float = field(default_factory=lambda: setting("DEFAULT_ALPHA"))
    master_seed: int = field(default_factory=lambda: setting("DEFAULT_SEED"))
    risk_mode: RiskMode = RiskMode.AVERAGE
    fixed_set: np.ndarray | None = None
    experiment_id: int = 0
    calibration_trials: int | None = None

    def __post_init__(self):
        self.risk_mode = RiskMode(self.risk_mode)
        if int(self.trials) < 1:
            raise ConfigurationError(f"trials must be at least 1, got {self.trials}")
        self.trials = int(self.trials)
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.family.n != self.model.n or self.family.k != self.model.k:
            raise ConfigurationError("Family and model disagree on n or k")
        if self.risk_mode is RiskMode.FIXED:
            if self.fixed_set is None:
                raise ConfigurationError("Fixed-set risk needs fixed_set")
            self.fixed_set = np.sort(check_index_set(self.fixed_set, self.model.n, self.model.k))
            if not self.family.contains(self.fixed_set):
                raise ConfigurationError("The fixed set is not a member of the family")

    def config(self) -> dict:
        out = {
            "model": self.model.describe(),
            "family": self.family.describe(),
            "detector": self.detector.to_config(),
            "trials": self.trials,
            "alpha": float(self.alpha),
            "seed": int(self.master_seed),
            "risk_mode": self.risk_mode.value,
            "experiment_id": int(self.experiment_id),
        }
        if self.fixed_set is not None:
            out["fixed_set"] = [int(i) + 1 for i in self.fixed_set]
        if self.calibration_trials is not None:
            out["calibration_trials"] = int(self.calibration_trials)
        return out

    @property
    def digest(self) -> str:
        return config_digest(self.config())


@dataclass
class RiskEstimate:
    type1: float
    type2: float
    total: float
    ci1: float
    ci2: float
    interval1: tuple
    interval2: tuple
    trials: int
    seed: int
    config_digest: str
    threshold: float
    threshold_source: str
    null_statistics: np.ndarray = field(repr=False, default=None)
    alternative_statistics: np.ndarray = field(repr=False, default=None)
    audit: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "type1": self.type1,
            "type2": self.type2,
            "total": self.total,
            "ci1": self.ci1,
            "ci2": self.ci2,
            "interval1": list(self.interval1),
            "interval2": list(self.interval2),
            "trials": self.trials,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "threshold": self.threshold,
            "threshold_source": self.threshold_source,
        }
        if self.audit is not None:
            out["audit"] = self.audit
        return out


# === Calibration ===
def calibrate(detector: Detector, trials: int, alpha: float, seed=None, experiment_id: int = 0, threads=None) -> float:
    """Null (1 - alpha) quantile of the detector statistic: analytic when known, else the ceil((1-alpha) T)-th order statistic."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    analytic = detector.analytic_quantile(alpha)
    if analytic is not None:
        logger.info(f"Calibrated {detector.name} analytically at alpha={alpha}: {analytic}")
        return float(analytic)
    trials = int(trials)
    if trials * alpha < MIN_EXCEEDANCES - 1e-9:
        raise PreconditionError(
            f"Calibration needs trials >= 100/alpha = {math.ceil(MIN_EXCEEDANCES / alpha)}, got {trials}",
            trials=trials,
            alpha=alpha,
        )
    seed = setting("DEFAULT_SEED") if seed is None else int(seed)
    n = detector.model.n

    def null_statistic(t):
        return detector.statistic(sample_null(n, trial_stream(seed, experiment_id, PHASE_CALIBRATION, t)))

    values = np.sort(np.asarray(_map_trials(null_statistic, trials, threads), dtype=np.float64))
    rank = trials - math.floor(alpha * trials + 1e-9)
    threshold = float(values[rank - 1])
    logger.info(f"Calibrated {detector.name} on {trials} null trials at alpha={alpha}: {threshold}")
    return threshold


def resolve_threshold(experiment: Experiment, threads=None):
    """(threshold, source); always computed before any alternative draw."""
    detector = experiment.detector
    rule = detector.threshold_rule
    if rule.kind is ThresholdKind.FIXED:
        return float(rule.value), "fixed"
    if rule.kind is ThresholdKind.PAPER:
        return detector.paper_threshold()
    alpha = float(rule.alpha if rule.alpha is not None else experiment.alpha)
    if detector.analytic_quantile(alpha) is not None:
        return calibrate(detector, 0, alpha), "calibrated:chi2"
    trials = rule.null_trials or experiment.calibration_trials
    if trials is None:
        trials = max(experiment.trials, math.ceil(MIN_EXCEEDANCES / alpha))
    threshold = calibrate(detector, trials, alpha, experiment.master_seed, experiment.experiment_id, threads)
    return threshold, "calibrated:empirical"


# === Risk estimation ===
def estimate_risk(experiment: Experiment, threads=None, progress=None) -> RiskEstimate:
    model, family, detector = experiment.model, experiment.family, experiment.detector
    seed, eid, trials = int(experiment.master_seed), int(experiment.experiment_id), experiment.trials
    logger.info(f"Estimating risk of {detector.name} on {family!r}, rho={model.rho}, {trials} trials")
    threshold, source = resolve_threshold(experiment, threads)

    def null_statistic(t):
        return detector.statistic(sample_null(model.n, trial_stream(seed, eid, PHASE_NULL, t)))

    def alternative_statistic(t):
        rng = trial_stream(seed, eid, PHASE_ALTERNATIVE, t)
        S = experiment.fixed_set if experiment.risk_mode is RiskMode.FIXED else family.sample_member(rng)
        return detector.statistic(sample_alternative(model, S, rng))

    def report(done, total):
        if progress:
            progress(done, 2 * trials)

    null_values = np.asarray(_map_trials(null_statistic, trials, threads, report), dtype=np.float64)

    def report_alternative(done, total):
        if progress:
            progress(trials + done, 2 * trials)

    alt_values = np.asarray(_map_trials(alternative_statistic, trials, threads, report_alternative), dtype=np.float64)

    false_alarms = int(np.count_nonzero(null_values > threshold))
    misses = int(np.count_nonzero(~(alt_values > threshold)))
    interval1 = wilson_interval(false_alarms, trials)
    interval2 = wilson_interval(misses, trials)
    type1, type2 = false_alarms / trials, misses / trials
    audit = None
    if getattr(detector, "verify", False):
        audit = {"checks": detector.audit.checks, "mismatches": detector.audit.mismatches}
    estimate = RiskEstimate(
        type1=type1,
        type2=type2,
        total=type1 + type2,
        ci1=(interval1[1] - interval1[0]) / 2.0,
        ci2=(interval2[1] - interval2[0]) / 2.0,
        interval1=interval1,
        interval2=interval2,
        trials=trials,
        seed=seed,
        config_digest=experiment.digest,
        threshold=float(threshold),
        threshold_source=source,
        null_statistics=null_values,
        alternative_statistics=alt_values,
        audit=audit,
    )
    logger.info(f"Risk of {detector.name}: type1={type1}, type2={type2}")
    return estimate


# === Sweeps ===
def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _family_spec(entry) -> dict:
    return {"kind": entry} if isinstance(entry, str) else dict(entry)


def _detector_spec(entry) -> dict:
    return {"name": entry} if isinstance(entry, str) else dict(entry)


def expand_grid(grid: dict) -> list:
    """Cells of the grid in canonical order, independent of how the axes were declared."""
    for axis in ("n", "k", "rho", "detector", "family"):
        if axis not in grid or not _as_list(grid[axis]):
            raise ConfigurationError(f"Grid axis {axis!r} is missing or empty")
    cells = []
    for n, k, rho, detector, family in itertools.product(
        _as_list(grid["n"]), _as_list(grid["k"]), _as_list(grid["rho"]),
        _as_list(grid["detector"]), _as_list(grid["family"]),
    ):
        cells.append({
            "n": int(n),
            "k": int(k),
            "rho": float(rho),
            "family": _family_spec(family),
            "detector": _detector_spec(detector),
        })
    unique = {canonical_json(cell): cell for cell in cells}
    return [unique[key] for key in sorted(unique, key=lambda key: _cell_sort_key(unique[key]))]


def _cell_sort_key(cell):
    return (
        canonical_json(cell["family"]),
        canonical_json(cell["detector"]),
        cell["n"],
        cell["k"],
        cell["rho"],
    )


def experiment_from_cell(cell: dict, trials: int, seed: int, alpha=None, risk_mode=RiskMode.AVERAGE, fixed_set=None):
    family_spec = dict(cell["family"])
    kind = family_spec.pop("kind")
    family_spec.pop("n", None)
    family_spec.pop("k", None)
    family = build_family(kind, n=cell["n"], k=cell["k"], **family_spec)
    model = CorrelationModel(cell["n"], cell["k"], cell["rho"])
    detector_spec = dict(cell["detector"])
    name = detector_spec.pop("name")
    threshold_rule = ThresholdRule.from_dict(detector_spec.pop("threshold_rule", None))
    detector = build_detector(name, model, family, threshold_rule, **detector_spec.pop("params", {}), **detector_spec)
    return Experiment(
        model=model,
        family=family,
        detector=detector,
        trials=trials,
        alpha=setting("DEFAULT_ALPHA") if alpha is None else alpha,
        master_seed=seed,
        risk_mode=risk_mode,
        fixed_set=fixed_set,
        experiment_id=experiment_id_for(cell),
    )


def risk_row(cell: dict, estimate: RiskEstimate | None = None, error: str = "") -> dict:
    row = {
        "n": cell["n"],
        "k": cell["k"],
        "rho": cell["rho"],
        "family": cell["family"]["kind"],
        "detector": cell["detector"]["name"],
    }
    if estimate is not None:
        row.update({
            "type1": estimate.type1,
            "type2": estimate.type2,
            "total": estimate.total,
            "ci1": estimate.ci1,
            "ci2": estimate.ci2,
            "seed": estimate.seed,
            "citation_of_threshold": estimate.threshold_source,
            "threshold": estimate.threshold,
        })
    row["error"] = error
    return row


def experiment_row(experiment: Experiment, estimate: RiskEstimate) -> dict:
    cell = {
        "n": experiment.model.n,
        "k": experiment.model.k,
        "rho": experiment.model.rho,
        "family": {"kind": experiment.family.kind.value},
        "detector": {"name": experiment.detector.name},
    }
    return risk_row(cell, estimate)


def sweep(grid: dict, trials: int, seed=None, alpha=None, threads=None, progress=None) -> list:
    """One row per grid cell; a failing cell becomes an error row and the sweep continues."""
    seed = setting("DEFAULT_SEED") if seed is None else int(seed)
    cells = expand_grid(grid)
    rows = []
    for index, cell in enumerate(cells, start=1):
        try:
            estimate = estimate_risk(experiment_from_cell(cell, trials, seed, alpha), threads=threads)
            rows.append(risk_row(cell, estimate))
        except DetectionError as e:
            logger.warning(f"Sweep cell {cell} failed: {e}")
            rows.append(risk_row(cell, error=f"{type(e).__name__}: {e}"))
        except Exception as e:
            logger.exception(f"Sweep cell {cell} raised {type(e).__name__}")
            rows.append(risk_row(cell, error=f"{type(e).__name__}: {e}"))
        logger.info(f"Sweep cell {index}/{len(cells)} done")
        if progress:
            progress(index, len(cells))
    return rows


# === Comparisons ===
def reproduce_glrt_suboptimality(n, k, rho, trials, seed=None, family="ksets", alpha=0.05, threads=None) -> list:
    """GLRT over k-sets against the squared-sum test, both calibrated at alpha, uniform-prior risk."""
    if FamilyKind(family) is not FamilyKind.KSETS:
        raise PreconditionError("The GLRT comparison is specific to the k-sets family", family=str(family))
    n, k, rho = int(n), int(k), float(rho)
    if not rho < 0.6:
        raise PreconditionError(f"Needs rho < 0.6, got {rho}", rho=rho)
    if k > n ** 0.7:
        raise PreconditionError(f"Needs k <= n^0.7 = {n ** 0.7:.4g}, got k={k}", k=k, n=n)
    if rho * k * k / n < 2.0:
        raise PreconditionError(
            f"Needs rho k^2 / n >= 2 for the squared-sum test to have power, got {rho * k * k / n:.4g}",
            signal=rho * k * k / n,
        )
    seed = setting("DEFAULT_SEED") if seed is None else int(seed)
    grid = {
        "n": [n],
        "k": [k],
        "rho": [rho],
        "family": ["ksets"],
        "detector": [
            {"name": "glrt", "threshold_rule": {"kind": "calibrated", "alpha": alpha}},
            {"name": "squared_sum", "threshold_rule": {"kind": "calibrated", "alpha": alpha}},
        ],
    }
    return sweep(grid, trials, seed, alpha=alpha, threads=threads)


@dataclass(frozen=True)
class ConcentrationCheck:
    k: int
    rho: float
    t: float
    frequency: float
    stderr: float
    bound: float
    trials: int

    @property
    def holds(self) -> bool:
        return self.frequency <= self.bound + 3.0 * self.stderr

    def to_dict(self):
        return {
            "k": self.k, "rho": self.rho, "t": self.t, "frequency": self.frequency,
            "stderr": self.stderr, "bound": self.bound, "trials": self.trials, "holds": self.holds,
        }


def concentration_check(k, rho, t, trials, seed=None, experiment_id: int = 0) -> ConcentrationCheck:
    """Frequency of #{i: |X_i - mean| > t} >= k/2 for an equicorrelated block, against 2(1 - rho)/t^2."""
    model = CorrelationModel(k, k, rho)
    seed = setting("DEFAULT_SEED") if seed is None else int(seed)
    S = np.arange(model.k)
    hits = 0
    for trial in range(int(trials)):
        X = sample_alternative(model, S, trial_stream(seed, experiment_id, PHASE_AUX, trial))
        if np.count_nonzero(np.abs(X - X.mean()) > t) >= k / 2.0:
            hits += 1
    frequency = hits / trials
    return ConcentrationCheck(
        k=int(k),
        rho=model.rho,
        t=float(t),
        frequency=frequency,
        stderr=math.sqrt(frequency * (1.0 - frequency) / trials),
        bound=2.0 * (1.0 - model.rho) / (t * t),
        trials=int(trials),
    )
