# detection/detectors.py
"""
Test statistics and their threshold rules.

Module-level functions compute the raw statistics with per-family fast
engines (prefix sums for intervals and boxes, sorted windows for k-sets,
plain enumeration otherwise). Detector classes pair a statistic with the
rule that fixes its rejection threshold; a detector rejects iff the
statistic is strictly above the threshold.
"""
import logging
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.special import logsumexp, ndtr
from scipy.stats import chi2

from .conf import setting
from .correlation import (
    CorrelationModel,
    check_index_set,
    check_observation,
    check_rho,
    log_det_AS,
    quad_form,
    quad_form_from_sums,
    quad_form_scale,
)
from .exceptions import ConfigurationError, PreconditionError, UnsupportedModeError
from .families import CircularIntervals, Hypercubes, KSets, SetFamily

logger = logging.getLogger(__name__)

# === Constants ===
ENGINE_AUTO = "auto"
ENGINE_SORTED = "sorted"
ENGINE_ENUMERATE = "enumerate"
AUDIT_REL_TOL = 1e-9


# === Window engines ===
def _prefixed_cumsum(values, axis):
    shape = list(values.shape)
    shape[axis] = 1
    return np.concatenate([np.zeros(shape), np.cumsum(values, axis=axis)], axis=axis)


def circular_window_sums(values, width: int, axis: int = -1) -> np.ndarray:
    """Sums over the circular windows [i, i + width) along axis, indexed by window start i."""
    size = values.shape[axis]
    wrapped = np.concatenate([values, np.take(values, np.arange(width - 1), axis=axis)], axis=axis)
    c = _prefixed_cumsum(wrapped, axis)
    upper = np.take(c, np.arange(width, width + size), axis=axis)
    lower = np.take(c, np.arange(size), axis=axis)
    return upper - lower


def window_sums(values, width: int) -> np.ndarray:
    """Sums over the windows [i, i + width), i = 0..len - width."""
    c = _prefixed_cumsum(np.asarray(values, dtype=np.float64), 0)
    return c[width:] - c[:c.size - width]


def member_sums(X, family: SetFamily, power: int = 1) -> np.ndarray:
    """Sum of X**power over every member, in enumeration order."""
    values = X if power == 1 else X ** power
    if isinstance(family, CircularIntervals):
        if family.circular:
            return circular_window_sums(values, family.k)
        return window_sums(values, family.k)
    if isinstance(family, Hypercubes):
        box = values.reshape(family.shape)
        for axis, side in enumerate(family.sides):
            box = circular_window_sums(box, side, axis=axis)
        return box.ravel()
    members = family.members_array()
    return values[members].sum(axis=1)


def _check_family_observation(X, family: SetFamily):
    X = check_observation(X)
    if X.size != family.n:
        raise ConfigurationError(
            f"Observation has length {X.size}, family expects n={family.n}", length=int(X.size), n=family.n
        )
    return X


def _sorted_window_g(X, k: int, rho: float) -> float:
    u = np.sort(X)
    c = 1.0 + rho * (k - 1)
    totals = window_sums(u, k)
    squares = window_sums(u * u, k)
    return float(np.max(np.square(totals) - c * squares))


# === Statistics ===
def squared_sum_stat(X) -> float:
    total = float(np.sum(check_observation(X)))
    return total * total


def glrt_stat(X, family: SetFamily, rho: float, engine: str = ENGINE_AUTO) -> float:
    """max over the family of X^T (I - A_S^{-1}) X."""
    rho = check_rho(rho, open_interval=True)
    X = _check_family_observation(X, family)
    k = family.k
    if isinstance(family, KSets) and engine in (ENGINE_AUTO, ENGINE_SORTED):
        return quad_form_scale(k, rho) * _sorted_window_g(X, k, rho)
    if engine == ENGINE_ENUMERATE:
        members = family.members_array()
        xs = X[members]
        values = quad_form_from_sums(xs.sum(axis=1), (xs * xs).sum(axis=1), k, rho)
    else:
        values = quad_form_from_sums(member_sums(X, family), member_sums(X, family, power=2), k, rho)
    return float(np.max(values))


def local_sq_stat(X, family: SetFamily, engine: str = ENGINE_AUTO) -> float:
    """max over the family of (sum_{i in S} X_i)^2."""
    X = _check_family_observation(X, family)
    if isinstance(family, KSets) and engine != ENGINE_ENUMERATE:
        u = np.sort(X)
        k = family.k
        return max(float(u[-k:].sum()) ** 2, float(u[:k].sum()) ** 2)
    if engine == ENGINE_ENUMERATE:
        totals = X[family.members_array()].sum(axis=1)
    else:
        totals = member_sums(X, family)
    return float(np.max(np.square(totals)))


@dataclass(frozen=True)
class ScanResult:
    value: float
    start: int
    stop: int
    padded: bool


def dyadic_scan_stat(X) -> ScanResult:
    """max over dyadic intervals of length >= 2 of (sum X_I)^2 / |I|, with the maximizing [start, stop)."""
    X = check_observation(X)
    n = X.size
    size = 1 << max(1, (n - 1).bit_length())
    sums = np.zeros(size)
    sums[:n] = X
    min_length = min(2, n)
    best = ScanResult(-math.inf, 0, 0, size != n)
    length = 1
    while sums.size > 1:
        sums = sums[0::2] + sums[1::2]
        length *= 2
        starts = np.arange(sums.size) * length
        effective = np.clip(n - starts, 0, length)
        valid = effective >= min_length
        if not valid.any():
            continue
        stats = np.full(sums.size, -math.inf)
        stats[valid] = np.square(sums[valid]) / effective[valid]
        i = int(np.argmax(stats))
        if stats[i] > best.value:
            best = ScanResult(float(stats[i]), int(starts[i]), int(min(starts[i] + length, n)), size != n)
    return best


def dyadic_interval_count(n: int) -> int:
    size = 1 << max(1, (n - 1).bit_length())
    count, length = 0, 2
    while length <= size:
        starts = np.arange(size // length) * length
        count += int(np.sum(np.clip(n - starts, 0, length) >= min(2, n)))
        length *= 2
    return count


def gof_counts(X, m: int) -> np.ndarray:
    """Histogram of Phi(X_i) over m equal bins, left-closed right-open, last bin closed."""
    m = int(m)
    if m < 2:
        raise ConfigurationError(f"Bin count m must be at least 2, got {m}", m=m)
    H = ndtr(check_observation(X))
    bins = np.minimum((H * m).astype(np.int64), m - 1)
    return np.bincount(bins, minlength=m)


def gof_stat(X, m: int) -> int:
    return int(gof_counts(X, m).max())


def gof_threshold(n: int, m: int) -> float:
    return n / m + math.sqrt(3.0 * n * math.log(m) / m)


def gof_small_k_threshold(n: int, m: int, k: int, alpha: float) -> int:
    """Smallest l with m * 2 (n/m)^l / l! <= alpha; valid while n/m <= 1/2."""
    p = n / m
    if p > 0.5:
        raise PreconditionError(
            f"Binomial-tail rule needs n/m <= 1/2 (got {p:.4g}); use the Bernstein threshold n/m + sqrt(3 n log(m)/m)",
            n=n,
            m=m,
        )
    log_alpha = math.log(alpha)
    ell = 1
    while math.log(m) + math.log(2.0) + ell * math.log(p) - math.lgamma(ell + 1) > log_alpha:
        ell += 1
    if ell > k:
        logger.warning(f"Binomial-tail threshold l*={ell} exceeds k={k}; the anomalous set alone cannot fill a bin")
    return ell


def gof_dyadic_stat(X, m: int) -> float:
    """max over dyadic groups of adjacent bins of the standardized excess (B_I - n|I|/m) / sqrt(n|I|/m)."""
    counts = gof_counts(X, m).astype(np.float64)
    n = counts.sum()
    size = 1 << max(0, (int(m) - 1).bit_length())
    sums = np.zeros(size)
    sums[:m] = counts
    best, width = -math.inf, 1
    while True:
        starts = np.arange(sums.size) * width
        bins = np.clip(m - starts, 0, width)
        valid = bins > 0
        expected = n * bins[valid] / m
        best = max(best, float(np.max((sums[valid] - expected) / np.sqrt(expected))))
        if sums.size == 1:
            return best
        sums = sums[0::2] + sums[1::2]
        width *= 2


@dataclass(frozen=True)
class Decision:
    reject: bool
    statistic_value: float
    threshold: float
    argmax: tuple | None = None

    @classmethod
    def evaluate(cls, value, threshold, argmax=None):
        # ties accept
        return cls(bool(value > threshold), float(value), float(threshold), argmax)

    def to_dict(self):
        out = asdict(self)
        if self.argmax is None:
            out.pop("argmax")
        else:
            out["argmax"] = list(self.argmax)
        return out


def np_singleton_threshold(k: int, rho: float, rule: str = "likelihood") -> float:
    if rule == "likelihood":
        return log_det_AS(k, rho)
    if rule == "proof":
        # tau_k = -rho k + rho t_k sqrt(k) + t_k with t_k = log k
        t_k = math.log(k)
        return -rho * k + rho * t_k * math.sqrt(k) + t_k
    raise ConfigurationError(f"Unknown singleton rule {rule!r}")


def np_singleton_stat(X, S, rho, rule: str = "likelihood") -> Decision:
    rho = check_rho(rho, open_interval=True)
    S = check_index_set(S, np.asarray(X).size)
    return Decision.evaluate(quad_form(X, S, rho), np_singleton_threshold(S.size, rho, rule))


def bayes_log_lr(X, family: SetFamily, rho: float) -> float:
    """log L(X), L = (1/N) sum_S Z_S / E_0 Z_S."""
    rho = check_rho(rho, open_interval=True)
    X = _check_family_observation(X, family)
    members = family.members_array()
    xs = X[members]
    q = quad_form_from_sums(xs.sum(axis=1), (xs * xs).sum(axis=1), family.k, rho)
    return float(logsumexp(0.5 * q) - math.log(members.shape[0]) - 0.5 * log_det_AS(family.k, rho))


def bayes_lr_stat(X, family: SetFamily, rho: float) -> float:
    log_value = bayes_log_lr(X, family, rho)
    return math.exp(log_value) if log_value < 709.0 else math.inf


# === Threshold rules ===
class ThresholdKind(str, Enum):
    PAPER = "paper"
    CALIBRATED = "calibrated"
    FIXED = "fixed"


@dataclass(frozen=True)
class ThresholdRule:
    kind: ThresholdKind = ThresholdKind.CALIBRATED
    value: float | None = None
    alpha: float | None = None
    null_trials: int | None = None
    formula: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ThresholdKind(self.kind))
        if self.kind is ThresholdKind.FIXED and self.value is None:
            raise ConfigurationError("A fixed threshold rule needs a value")

    @classmethod
    def from_dict(cls, data):
        return cls(**(data or {}))

    def to_dict(self):
        out = {"kind": self.kind.value}
        for key in ("value", "alpha", "null_trials", "formula"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out


@dataclass
class EngineAudit:
    """Agreement between the sorted-window k-set engine and brute force."""

    checks: int = 0
    mismatches: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, agreed: bool):
        with self._lock:
            self.checks += 1
            if not agreed:
                self.mismatches += 1

    @property
    def fallback(self) -> bool:
        return self.mismatches > 0


# === Detectors ===
class Detector(ABC):
    name: str = ""
    requires_rho = False
    requires_k = False
    requires_family = False

    def __init__(self, model: CorrelationModel, family: SetFamily | None = None, threshold_rule=None, **params):
        self.model = model
        self.family = family
        if isinstance(threshold_rule, dict):
            threshold_rule = ThresholdRule.from_dict(threshold_rule)
        self.threshold_rule = threshold_rule or ThresholdRule(alpha=setting("DEFAULT_ALPHA"))
        self.params = params
        if self.requires_family:
            if family is None:
                raise ConfigurationError(f"Detector {self.name} needs a set family")
            if family.n != model.n or family.k != model.k:
                raise ConfigurationError(
                    f"Family dimensions (n={family.n}, k={family.k}) do not match the model (n={model.n}, k={model.k})"
                )
        if self.requires_rho and model.rho <= 0.0:
            raise ConfigurationError(f"Detector {self.name} needs rho in (0, 1)", rho=model.rho)

    @abstractmethod
    def statistic(self, X) -> float:
        ...

    def evaluate(self, X):
        """(statistic value, argmax or None)."""
        return self.statistic(X), None

    def decide(self, X, threshold: float) -> Decision:
        value, argmax = self.evaluate(X)
        return Decision.evaluate(value, threshold, argmax)

    def paper_threshold(self):
        """(threshold, citation) from the closed-form rule, if the detector has one."""
        raise UnsupportedModeError(f"Detector {self.name} has no closed-form threshold; calibrate it instead")

    def analytic_quantile(self, alpha: float):
        return None

    def to_config(self) -> dict:
        return {"name": self.name, "params": dict(self.params), "threshold_rule": self.threshold_rule.to_dict()}

    def __repr__(self):
        return f"{type(self).__name__}(n={self.model.n}, k={self.model.k}, rho={self.model.rho})"


class SquaredSumDetector(Detector):
    name = "squared_sum"

    def statistic(self, X):
        return squared_sum_stat(X)

    def paper_threshold(self):
        n, k, rho = self.model.n, self.model.k, self.model.rho
        t_n = self.params.get("t_n")
        if t_n is None:
            if rho <= 0.0:
                raise ConfigurationError("Give t_n, or declare rho > 0 so that t_n = sqrt(rho k^2 / n)")
            t_n = math.sqrt(rho * k * k / n)
        return n * float(t_n), "formula:n*t_n"

    def analytic_quantile(self, alpha):
        # (sum X)^2 / n ~ chi2_1 under the null
        return self.model.n * float(chi2.ppf(1.0 - alpha, 1))


class GlrtDetector(Detector):
    name = "glrt"
    requires_rho = True
    requires_k = True
    requires_family = True

    def __init__(self, model, family=None, threshold_rule=None, **params):
        super().__init__(model, family, threshold_rule, **params)
        self.audit = EngineAudit()
        verify = params.get("verify")
        if verify is None:
            verify = isinstance(family, KSets) and family.size() <= setting("KSET_VERIFY_LIMIT")
        self.verify = bool(verify) and isinstance(family, KSets)

    def statistic(self, X):
        rho = self.model.rho
        if not self.verify:
            return glrt_stat(X, self.family, rho)
        fast = glrt_stat(X, self.family, rho, engine=ENGINE_SORTED)
        exact = glrt_stat(X, self.family, rho, engine=ENGINE_ENUMERATE)
        agreed = math.isclose(fast, exact, rel_tol=AUDIT_REL_TOL, abs_tol=1e-12)
        self.audit.record(agreed)
        if not agreed:
            logger.warning(f"Sorted-window k-set GLRT disagrees with brute force ({fast} vs {exact}); using brute force")
        return exact

    def paper_threshold(self):
        rho, k = self.model.rho, self.model.k
        log_n = self.family.log_size()
        formula = self.params.get("formula", "auto")
        if formula == "auto":
            formula = "small" if log_n <= k else "large"
        if formula == "small":
            return -rho * k + rho * math.sqrt(5.0 * k * log_n) + 2.0 * log_n, "formula:small-class"
        if formula == "large":
            if log_n <= 0.0:
                raise PreconditionError("The large-class GLRT threshold needs N >= 2")
            # eta = (1 - rho) N^{2/k} log(N) / k
            log_eta = math.log1p(-rho) + 2.0 * log_n / k + math.log(log_n) - math.log(k)
            return -log_n / math.exp(0.5 * log_eta), "formula:large-class"
        raise ConfigurationError(f"Unknown GLRT formula {formula!r}")


class LocalSquaredSumDetector(Detector):
    name = "local_sq"
    requires_k = True
    requires_family = True

    def statistic(self, X):
        return local_sq_stat(X, self.family)

    def paper_threshold(self):
        return 2.0 * self.model.k * self.family.log_size(), "formula:2k*log(N)"


class DyadicScanDetector(Detector):
    name = "dyadic"

    def statistic(self, X):
        return dyadic_scan_stat(X).value

    def evaluate(self, X):
        result = dyadic_scan_stat(X)
        return result.value, (result.start, result.stop)

    def paper_threshold(self):
        # per-window chi2_1 scale, union over the dyadic windows
        return 2.0 * math.log(dyadic_interval_count(self.model.n)), "formula:2*log(dyadic count)"


class GofDetector(Detector):
    name = "gof"

    @property
    def bins(self) -> int:
        if "m" not in self.params:
            raise ConfigurationError("The goodness-of-fit detector needs the bin count m")
        return int(self.params["m"])

    def statistic(self, X):
        return float(gof_stat(X, self.bins))

    def paper_threshold(self):
        n, m = self.model.n, self.bins
        if self.threshold_rule.formula == "binomial-tail":
            alpha = self.threshold_rule.alpha or setting("DEFAULT_ALPHA")
            # reject iff max count >= l*
            return gof_small_k_threshold(n, m, self.model.k, alpha) - 1.0, "formula:binomial-tail"
        return gof_threshold(n, m), "formula:n/m+sqrt(3n*log(m)/m)"


class GofDyadicDetector(GofDetector):
    name = "gof_dyadic"

    def statistic(self, X):
        return gof_dyadic_stat(X, self.bins)

    def paper_threshold(self):
        return Detector.paper_threshold(self)


class BayesLrDetector(Detector):
    """Likelihood ratio under the uniform prior; the statistic is log L, rejecting when L > 1."""

    name = "bayes_lr"
    requires_rho = True
    requires_k = True
    requires_family = True

    def __init__(self, model, family=None, threshold_rule=None, **params):
        super().__init__(model, family, threshold_rule, **params)
        family.members_array()

    def statistic(self, X):
        return bayes_log_lr(X, self.family, self.model.rho)

    def paper_threshold(self):
        return 0.0, "formula:L>1"


class NpSingletonDetector(Detector):
    name = "np_singleton"
    requires_rho = True
    requires_k = True

    def __init__(self, model, family=None, threshold_rule=None, **params):
        super().__init__(model, family, threshold_rule, **params)
        if "set" in params:
            S = [int(i) - 1 for i in params["set"]]
        elif family is not None and family.size() == 1:
            S = next(iter(family.enumerate_members()))
        else:
            raise ConfigurationError("The singleton test needs the anomalous set (params.set, 1-based)")
        self.S = check_index_set(S, model.n, model.k)

    def statistic(self, X):
        return quad_form(X, self.S, self.model.rho)

    def paper_threshold(self):
        rule = self.params.get("rule", "likelihood")
        return np_singleton_threshold(self.model.k, self.model.rho, rule), f"formula:singleton-{rule}"


DETECTORS = {
    cls.name: cls
    for cls in (
        SquaredSumDetector,
        GlrtDetector,
        LocalSquaredSumDetector,
        DyadicScanDetector,
        GofDetector,
        GofDyadicDetector,
        BayesLrDetector,
        NpSingletonDetector,
    )
}


def build_detector(name, model, family=None, threshold_rule=None, **params) -> Detector:
    try:
        cls = DETECTORS[name]
    except KeyError as exc:
        raise ConfigurationError(f"Unknown detector {name!r}; choose one of {sorted(DETECTORS)}") from exc
    return cls(model, family, threshold_rule, **params)
