# detection/bounds.py
"""
Bayes-risk lower bounds driven by the overlap moment generating function.

For any a > 0 the risk of every test is at least
P{|N(0,1)| <= a} (1 - sqrt(E exp(nu_a Z) - 1) / 2), where Z is the overlap of
two independent uniform members of the family. At a = 1 the rounded
constants 0.6 / 0.3 are used.
"""
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .correlation import RHO_CEILING, check_rho
from .exceptions import ConfigurationError, PreconditionError, UnsupportedModeError
from .families import FamilyKind, OverlapMode, SetFamily

logger = logging.getLogger(__name__)

# === Constants ===
HEADLINE_MASS = 0.6
HEADLINE_SLOPE = 0.3
BOUNDARY_SLACK = 1e-12
A_GRID = np.logspace(-2.0, 1.0, 121)

CITATIONS = {
    FamilyKind.EXPLICIT: "bound-disjoint",
    FamilyKind.INTERVALS: "bound-intervals",
    FamilyKind.KSETS: "bound-ksets",
    FamilyKind.MATCHINGS: "bound-matchings",
    FamilyKind.TREES: "bound-trees",
}


def nu(rho, a=1.0) -> float:
    """nu_a = rho a^2 / (1 + rho) - log(1 - rho^2) / 2."""
    rho = check_rho(rho)
    a = float(a)
    if not a > 0.0:
        raise ConfigurationError(f"a must be positive, got {a}", a=a)
    return rho * a * a / (1.0 + rho) - 0.5 * math.log1p(-rho * rho)


def rho_for_nu(target, a=1.0) -> float:
    """The rho with nu_a(rho) = target; nu_a is increasing in rho."""
    target = float(target)
    if target <= 0.0:
        return 0.0
    upper = RHO_CEILING
    if nu(upper, a) < target:
        raise PreconditionError(f"nu_a cannot reach {target} for rho < 1", target=target)
    return float(brentq(lambda rho: nu(rho, a) - target, 0.0, upper, xtol=1e-15, rtol=1e-14))


def normal_mass(a) -> float:
    """P{|N(0,1)| <= a}."""
    return float(2.0 * ndtr(a) - 1.0)


@dataclass(frozen=True)
class BoundReport:
    nu_a: float
    a: float
    mgf_value: float
    lower_bound: float
    raw_bound: float
    mode: OverlapMode
    regime_notes: tuple = ()
    family: dict = field(default_factory=dict)
    rho: float = 0.0
    citation: str | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mode"] = self.mode.value
        out["regime_notes"] = list(self.regime_notes)
        # JSON has no infinity
        if math.isinf(self.mgf_value):
            out["mgf_value"] = "inf"
        if math.isinf(self.raw_bound):
            out["raw_bound"] = "-inf"
        return out


def risk_floor(log_mgf: float, a=1.0):
    """(mgf value, unclipped floor) for a given log E exp(nu_a Z)."""
    mass, slope = (HEADLINE_MASS, HEADLINE_SLOPE) if a == 1.0 else (normal_mass(a), 0.5 * normal_mass(a))
    if math.isinf(log_mgf):
        return math.inf, -math.inf
    mgf_value = math.exp(log_mgf) if log_mgf < 709.0 else math.inf
    return mgf_value, mass - slope * math.sqrt(max(math.expm1(log_mgf), 0.0))


def bayes_lower_bound(family: SetFamily, rho, a=1.0, mode=OverlapMode.EXACT, pairs=None, seed=None) -> BoundReport:
    mode = OverlapMode(mode)
    rho = check_rho(rho)
    nu_a = nu(rho, a)
    notes = []
    log_mgf = family.overlap_log_mgf(nu_a, mode, pairs=pairs, seed=seed)
    mgf_value, raw = risk_floor(log_mgf, a)
    if math.isinf(log_mgf):
        notes.append("overlap MGF is infinite; no risk floor")
    lower = min(1.0, max(0.0, raw))
    if raw <= 0.0:
        notes.append("bound is vacuous at these parameters")
    if mode is OverlapMode.MONTE_CARLO:
        notes.append("overlap MGF estimated by simulation; the floor is approximate")
    if family.kind is FamilyKind.TREES:
        notes.append("spanning trees are not a symmetric family: this floors the uniform-prior risk, hence the worst-case risk")

    if family.kind is FamilyKind.EXPLICIT:
        citation = CITATIONS[family.kind] if family.is_disjoint else None
    else:
        citation = CITATIONS.get(family.kind, "bound-hypercubes")
    report = BoundReport(
        nu_a=nu_a,
        a=float(a),
        mgf_value=mgf_value,
        lower_bound=lower,
        raw_bound=raw,
        mode=mode,
        regime_notes=tuple(notes),
        family={"kind": family.kind.value, "n": family.n, "k": family.k, "N": str(family.size())},
        rho=rho,
        citation=citation,
    )
    logger.debug(f"Bound for {family!r} at rho={rho}, a={a}: {lower}")
    return report


def optimize_a(family: SetFamily, rho, mode=OverlapMode.EXACT, pairs=None, seed=None, grid=None) -> BoundReport:
    """Best bound over a log grid of a (a = 1 always included)."""
    grid = A_GRID if grid is None else np.asarray(grid, dtype=np.float64)
    best = bayes_lower_bound(family, rho, 1.0, mode, pairs=pairs, seed=seed)
    for a in grid:
        report = bayes_lower_bound(family, rho, float(a), mode, pairs=pairs, seed=seed)
        if report.lower_bound > best.lower_bound:
            best = report
    return best


@dataclass(frozen=True)
class CorollaryCheck:
    condition_holds: bool
    guaranteed_bound: float
    citation: str
    condition: str

    def to_dict(self):
        return asdict(self)


def corollary_condition(kind, n, k, rho, N=None) -> CorollaryCheck:
    """Closed-form sufficient condition for a constant risk floor, per family kind."""
    kind = FamilyKind(kind)
    n, k = int(n), int(k)
    rho = check_rho(rho)
    nu_1 = nu(rho)
    if kind is FamilyKind.EXPLICIT:
        # disjoint families
        if N is None:
            raise ConfigurationError("The disjoint-family condition needs the family size N")
        holds = nu_1 <= math.log(int(N)) / k * (1.0 + BOUNDARY_SLACK)
        return CorollaryCheck(holds, HEADLINE_SLOPE if holds else 0.0, CITATIONS[kind], "nu(rho) <= log(N)/k")
    if kind is FamilyKind.INTERVALS:
        holds = 2 * k <= n and nu_1 <= math.log(n / (2.0 * k)) / k * (1.0 + BOUNDARY_SLACK)
        return CorollaryCheck(holds, HEADLINE_SLOPE if holds else 0.0, CITATIONS[kind], "nu(rho) <= log(n/(2k))/k")
    if kind is FamilyKind.KSETS:
        excess = math.expm1(nu_1)
        limit = math.inf if excess == 0.0 else math.log(2.0) / excess
        holds = k * k / n <= limit * (1.0 + BOUNDARY_SLACK)
        return CorollaryCheck(holds, HEADLINE_SLOPE if holds else 0.0, CITATIONS[kind], "k^2/n <= ln2/(exp(nu(rho)) - 1)")
    if kind is FamilyKind.MATCHINGS:
        holds = rho <= 0.5
        return CorollaryCheck(holds, HEADLINE_SLOPE if holds else 0.0, CITATIONS[kind], "rho <= 1/2")
    if kind is FamilyKind.TREES:
        holds = rho <= 0.4
        return CorollaryCheck(holds, 0.15 if holds else 0.0, CITATIONS[kind], "rho <= 0.4")
    raise UnsupportedModeError(f"No closed-form sufficient condition for {kind.value}", family=kind.value)
