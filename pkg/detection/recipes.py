# detection/recipes.py
"""
Named desk-scale reproductions.

Each recipe pins its parameters, runs through the harness or the bounds
module, and returns CSV-ready rows carrying the expected outcome and whether
it held on this run.
"""
import logging
import math
from dataclasses import dataclass

from .bounds import bayes_lower_bound, corollary_condition, nu, rho_for_nu, risk_floor
from .conf import setting
from .exceptions import ConfigurationError
from .families import ExplicitFamily, FamilyKind, OverlapMode, build_family
from .harness import estimate_risk, experiment_from_cell, reproduce_glrt_suboptimality, risk_row

logger = logging.getLogger(__name__)

# === Constants ===
BOUND_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Recipe:
    name: str
    description: str
    trials: int
    runner: object

    def run(self, seed=None, threads=None, trials=None):
        seed = setting("DEFAULT_SEED") if seed is None else int(seed)
        trials = self.trials if trials is None else int(trials)
        logger.info(f"Running recipe {self.name} with seed={seed}, trials={trials}")
        rows = self.runner(seed=seed, threads=threads, trials=trials)
        for row in rows:
            row.setdefault("recipe", self.name)
        return rows


def _risk_cells(cells, seed, threads, trials, alpha=None):
    rows = []
    for cell in cells:
        estimate = estimate_risk(experiment_from_cell(cell, trials, seed, alpha), threads=threads)
        rows.append(risk_row(cell, estimate))
    return rows


def _mark(row, expectation, holds):
    row["expectation"] = expectation
    row["holds"] = bool(holds)
    return row


# === Risk recipes ===
def _np_singleton(seed, threads, trials):
    n = k = 1000
    members = [list(range(1, n + 1))]
    rows = _risk_cells(
        [
            {
                "n": n, "k": k, "rho": rho,
                "family": {"kind": "explicit", "members": members},
                "detector": {"name": "np_singleton", "threshold_rule": {"kind": "paper"}},
            }
            for rho in (0.1, 1e-5)
        ],
        seed, threads, trials,
    )
    _mark(rows[0], "total < 0.05 at rho*k = 100", rows[0]["total"] < 0.05)
    _mark(rows[1], "total > 0.9 at rho*k = 0.01", rows[1]["total"] > 0.9)
    return rows


def _squared_sum(seed, threads, trials):
    detector = {"name": "squared_sum", "threshold_rule": {"kind": "calibrated", "alpha": 0.05}}
    strong = {"n": 10_000, "k": 500, "rho": 0.5, "family": {"kind": "ksets"}, "detector": detector}
    # rho k^2 / n = 0.01 with rho at its ceiling
    weak = {"n": 10_000, "k": 10, "rho": 1.0 - 1e-12, "family": {"kind": "ksets"}, "detector": detector}
    rows = _risk_cells([strong, weak], seed, threads, trials, alpha=0.05)
    _mark(rows[0], "total < 0.10 at rho*k^2/n = 12.5", rows[0]["total"] < 0.10)
    _mark(rows[1], "total > 0.9 at rho*k^2/n = 0.01", rows[1]["total"] > 0.9)
    return rows


def _glrt_small_class(seed, threads, trials):
    cells = [
        {
            "n": 10_000, "k": 200, "rho": rho,
            "family": {"kind": "intervals"},
            "detector": {"name": "glrt", "params": {"formula": "small"}, "threshold_rule": {"kind": "paper"}},
        }
        for rho in (0.5, 0.9)
    ]
    rows = _risk_cells(cells, seed, threads, trials)
    for row in rows:
        _mark(row, "type1 <= 0.05 under the small-class threshold", row["type1"] <= 0.05)
    return rows


def _local_squared_sum(seed, threads, trials):
    n, k = 10_000, 200
    rho = 10.0 * math.log(n) / k
    cell = {
        "n": n, "k": k, "rho": rho,
        "family": {"kind": "intervals"},
        "detector": {"name": "local_sq", "threshold_rule": {"kind": "paper"}},
    }
    rows = _risk_cells([cell], seed, threads, trials)
    return [_mark(rows[0], "total < 0.1 at rho = 10 log(N)/k", rows[0]["total"] < 0.1)]


def _gof(seed, threads, trials):
    cell = {
        "n": 100_000, "k": 50, "rho": 1.0 - 1e-8,
        "family": {"kind": "ksets"},
        "detector": {"name": "gof", "params": {"m": 2000}, "threshold_rule": {"kind": "paper"}},
    }
    rows = _risk_cells([cell], seed, threads, trials)
    row = rows[0]
    return [_mark(row, "rejection rate > 0.95 under the alternative and < 0.05 under the null",
                  row["type2"] < 0.05 and row["type1"] < 0.05)]


def _glrt_ksets(seed, threads, trials):
    rows = reproduce_glrt_suboptimality(10_000, 400, 0.5, trials, seed, alpha=0.05, threads=threads)
    by_detector = {row["detector"]: row for row in rows}
    gap = by_detector["glrt"]["total"] - by_detector["squared_sum"]["total"]
    for row in rows:
        _mark(row, "risk(glrt) - risk(squared_sum) > 0.2", gap > 0.2)
    return rows


# === Bound recipes ===
def _bound_row(family, rho, expectation, floor):
    check = corollary_condition(
        family.kind, family.n, family.k, rho, N=family.size() if family.kind is FamilyKind.EXPLICIT else None
    )
    rows = []
    modes = [OverlapMode.COROLLARY_BOUND]
    if family.kind in (FamilyKind.INTERVALS, FamilyKind.KSETS, FamilyKind.EXPLICIT):
        modes.insert(0, OverlapMode.EXACT)
    for mode in modes:
        report = bayes_lower_bound(family, rho, 1.0, mode)
        rows.append(_floor_row(family, rho, mode.value, report.nu_a, report.mgf_value, report.lower_bound, check))
    if family.kind is FamilyKind.INTERVALS and family.circular:
        # mass 2/N on every overlap 1..k; it dominates the exact law
        nu_1 = nu(rho)
        mgf_value, raw = risk_floor(family.stated_overlap_log_mgf(nu_1))
        rows.append(_floor_row(family, rho, "stated", nu_1, mgf_value, min(1.0, max(0.0, raw)), check))
    for row in rows:
        _mark(row, expectation, check.condition_holds and row["lower_bound"] >= floor - BOUND_TOLERANCE)
    return rows


def _floor_row(family, rho, mode, nu_value, mgf_value, lower_bound, check):
    return {
        "family": family.kind.value,
        "n": family.n,
        "k": family.k,
        "rho": rho,
        "mode": mode,
        "nu": nu_value,
        "mgf": mgf_value,
        "lower_bound": lower_bound,
        "condition": check.condition,
        "condition_holds": check.condition_holds,
        "guaranteed_bound": check.guaranteed_bound,
        "citation": check.citation,
    }


def _bound_disjoint(seed, threads, trials):
    count, k = 100, 10
    family = ExplicitFamily.disjoint(count, k)
    rho = rho_for_nu(math.log(count) / k)
    return _bound_row(family, rho, "bound >= 0.3 at nu(rho) = log(N)/k", 0.3)


def _bound_intervals(seed, threads, trials):
    n, k = 1000, 10
    rho = rho_for_nu(math.log(n / (2.0 * k)) / k)
    return _bound_row(build_family("intervals", n=n, k=k), rho, "bound >= 0.3 at nu(rho) = log(n/(2k))/k", 0.3)


def _bound_ksets(seed, threads, trials):
    n, k = 1000, 10
    # k^2/n = ln2/(exp(nu) - 1)
    rho = rho_for_nu(math.log1p(math.log(2.0) * n / (k * k)))
    return _bound_row(build_family("ksets", n=n, k=k), rho, "bound >= 0.3 at k^2/n = ln2/(exp(nu) - 1)", 0.3)


def _bound_matchings(seed, threads, trials):
    return _bound_row(build_family("matchings", k=10), 0.5, "bound >= 0.3 at rho = 1/2", 0.3)


def _bound_trees(seed, threads, trials):
    return _bound_row(build_family("trees", k=10), 0.4, "bound >= 0.15 at rho = 0.4", 0.15)


RECIPES = {
    recipe.name: recipe
    for recipe in (
        Recipe("np-singleton", "Singleton likelihood ratio test at rho*k = 100 and 0.01", 1000, _np_singleton),
        Recipe("squared-sum", "Squared-sum test in and out of the rho*k^2/n regime", 1000, _squared_sum),
        Recipe("glrt-small-class", "GLRT over intervals with the small-class threshold", 200, _glrt_small_class),
        Recipe("local-squared-sum", "Localized squared-sum over intervals", 1000, _local_squared_sum),
        Recipe("gof", "Histogram goodness-of-fit test with nearly perfect correlation", 200, _gof),
        Recipe("glrt-ksets", "GLRT over k-sets against the squared-sum test", 500, _glrt_ksets),
        Recipe("bound-disjoint", "Risk floor for disjoint families", 0, _bound_disjoint),
        Recipe("bound-intervals", "Risk floor for intervals", 0, _bound_intervals),
        Recipe("bound-ksets", "Risk floor for k-sets", 0, _bound_ksets),
        Recipe("bound-matchings", "Risk floor for perfect matchings", 0, _bound_matchings),
        Recipe("bound-trees", "Risk floor for spanning trees", 0, _bound_trees),
    )
}


def run_recipe(name, seed=None, threads=None, trials=None) -> list:
    try:
        recipe = RECIPES[name]
    except KeyError as exc:
        raise ConfigurationError(f"Unknown recipe {name!r}; choose one of {sorted(RECIPES)}", recipe=name) from exc
    return recipe.run(seed=seed, threads=threads, trials=trials)
