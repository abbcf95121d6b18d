import math

from django.test import SimpleTestCase, tag

from detection.bounds import (
    BoundReport,
    bayes_lower_bound,
    corollary_condition,
    normal_mass,
    nu,
    optimize_a,
    rho_for_nu,
)
from detection.correlation import CorrelationModel
from detection.detectors import ThresholdRule, build_detector
from detection.exceptions import ConfigurationError, UnsupportedModeError
from detection.families import (
    CircularIntervals,
    ExplicitFamily,
    Hypercubes,
    KSets,
    OverlapMode,
    PerfectMatchings,
    SpanningTrees,
)
from detection.harness import Experiment, estimate_risk
from detection.recipes import run_recipe


class NuTests(SimpleTestCase):
    def test_value(self):
        self.assertAlmostEqual(nu(0.5), 0.4771743696, places=8)
        self.assertEqual(nu(0.0), 0.0)
        self.assertAlmostEqual(nu(0.5, a=2.0), 2.0 / 1.5 - 0.5 * math.log(0.75))

    def test_monotone_in_rho(self):
        values = [nu(rho / 20) for rho in range(20)]
        self.assertEqual(values, sorted(values))
        self.assertEqual(len(set(values)), len(values))

    def test_inverse(self):
        for target in (0.01, 0.3, 2.0, 5.0):
            self.assertAlmostEqual(nu(rho_for_nu(target)), target, places=10)
        self.assertEqual(rho_for_nu(0.0), 0.0)

    def test_bad_a(self):
        with self.assertRaises(ConfigurationError):
            nu(0.5, a=0.0)

    def test_normal_mass(self):
        self.assertAlmostEqual(normal_mass(1.0), 0.6826894921, places=9)


class LowerBoundTests(SimpleTestCase):
    def test_no_correlation_gives_headline_mass(self):
        report = bayes_lower_bound(KSets(100, 10), 0.0)
        self.assertEqual(report.lower_bound, 0.6)
        self.assertEqual(report.mgf_value, 1.0)

    def test_disjoint_family_at_the_boundary(self):
        family = ExplicitFamily.disjoint(100, 10)
        rho = rho_for_nu(math.log(100) / 10)
        exact = bayes_lower_bound(family, rho)
        self.assertGreaterEqual(exact.lower_bound, 0.3)
        self.assertEqual(exact.citation, "bound-disjoint")
        corollary = bayes_lower_bound(family, rho, mode=OverlapMode.COROLLARY_BOUND)
        self.assertAlmostEqual(corollary.lower_bound, 0.3, places=9)

    def test_ksets_at_the_boundary(self):
        n, k = 1000, 10
        # k^2 / n = ln 2 / (e^nu - 1)
        rho = rho_for_nu(math.log1p(math.log(2.0) * n / (k * k)))
        check = corollary_condition("ksets", n, k, rho)
        self.assertTrue(check.condition_holds)
        self.assertEqual(check.citation, "bound-ksets")
        report = bayes_lower_bound(KSets(n, k), rho, mode=OverlapMode.COROLLARY_BOUND)
        self.assertGreaterEqual(report.lower_bound, 0.3)
        self.assertFalse(corollary_condition("ksets", n, k, min(0.99, rho * 1.2)).condition_holds)

    def test_matchings(self):
        report = bayes_lower_bound(PerfectMatchings(10), 0.5, mode=OverlapMode.COROLLARY_BOUND)
        self.assertGreaterEqual(report.lower_bound, 0.3)
        self.assertEqual(report.citation, "bound-matchings")
        self.assertTrue(corollary_condition("matchings", 100, 10, 0.5).condition_holds)
        self.assertFalse(corollary_condition("matchings", 100, 10, 0.51).condition_holds)

    def test_trees(self):
        report = bayes_lower_bound(SpanningTrees(10), 0.4, mode=OverlapMode.COROLLARY_BOUND)
        self.assertGreaterEqual(report.lower_bound, 0.15)
        self.assertTrue(any("symmetric" in note for note in report.regime_notes))
        check = corollary_condition("trees", 55, 10, 0.4)
        self.assertEqual((check.condition_holds, check.guaranteed_bound), (True, 0.15))

    def test_intervals_condition(self):
        n, k = 1000, 10
        rho = rho_for_nu(math.log(n / (2.0 * k)) / k) * (1 - 1e-9)
        self.assertTrue(corollary_condition("intervals", n, k, rho).condition_holds)
        report = bayes_lower_bound(CircularIntervals(n, k), rho, mode=OverlapMode.COROLLARY_BOUND)
        self.assertGreaterEqual(report.lower_bound, 0.3)
        self.assertFalse(corollary_condition("intervals", 15, 10, 0.01).condition_holds)

    def test_explicit_condition_needs_size(self):
        with self.assertRaises(ConfigurationError):
            corollary_condition("explicit", 1000, 10, 0.3)
        self.assertTrue(corollary_condition("explicit", 1000, 10, 0.1, N=100).condition_holds)
        with self.assertRaises(UnsupportedModeError):
            corollary_condition("hypercubes", 100, 4, 0.1)

    def test_bound_mode_is_weaker_than_exact(self):
        families = [CircularIntervals(200, 8), KSets(200, 8), Hypercubes(10, [2, 2]), ExplicitFamily.disjoint(20, 5)]
        for family in families:
            for rho in (0.05, 0.2, 0.5):
                exact = bayes_lower_bound(family, rho).lower_bound
                bound = bayes_lower_bound(family, rho, mode="bound").lower_bound
                self.assertLessEqual(bound, exact + 1e-12, (family, rho))

    def test_vacuous_bound_is_clipped(self):
        report = bayes_lower_bound(ExplicitFamily.disjoint(2, 10), 0.9)
        self.assertEqual(report.lower_bound, 0.0)
        self.assertLess(report.raw_bound, 0.0)
        self.assertIn("bound is vacuous at these parameters", report.regime_notes)

    def test_infinite_mgf(self):
        report = bayes_lower_bound(KSets(20, 3), 0.5, a=100.0, mode=OverlapMode.COROLLARY_BOUND)
        self.assertEqual(report.mgf_value, math.inf)
        self.assertEqual(report.lower_bound, 0.0)
        payload = report.to_dict()
        self.assertEqual((payload["mgf_value"], payload["raw_bound"]), ("inf", "-inf"))

    def test_general_a_uses_normal_mass(self):
        report = bayes_lower_bound(KSets(50, 5), 0.0, a=2.0)
        self.assertAlmostEqual(report.lower_bound, normal_mass(2.0))

    def test_report_fields(self):
        report = bayes_lower_bound(KSets(1000, 500), 0.01, mode=OverlapMode.COROLLARY_BOUND)
        self.assertIsInstance(report, BoundReport)
        payload = report.to_dict()
        self.assertEqual(payload["family"]["N"], str(math.comb(1000, 500)))
        self.assertEqual(payload["mode"], "bound")
        self.assertIsNone(bayes_lower_bound(ExplicitFamily([[0, 1], [1, 2]]), 0.3).citation)

    def test_monte_carlo_note(self):
        report = bayes_lower_bound(PerfectMatchings(5), 0.3, mode="montecarlo", pairs=500, seed=1)
        self.assertTrue(any("simulation" in note for note in report.regime_notes))

    def test_optimize_a(self):
        family = ExplicitFamily.disjoint(50, 4)
        base = bayes_lower_bound(family, 0.3)
        best = optimize_a(family, 0.3)
        self.assertGreaterEqual(best.lower_bound, base.lower_bound)

    def test_bound_is_nonincreasing_in_rho(self):
        family = KSets(200, 8)
        bounds = [bayes_lower_bound(family, rho / 10).lower_bound for rho in range(10)]
        for previous, current in zip(bounds, bounds[1:]):
            self.assertLessEqual(current, previous + 1e-12)


class BoundRecipeTests(SimpleTestCase):
    def test_interval_floor_rows(self):
        rows = run_recipe("bound-intervals")
        self.assertEqual([row["mode"] for row in rows], ["exact", "bound", "stated"])
        for row in rows:
            self.assertTrue(row["holds"], row)
        exact, bound, stated = (row["lower_bound"] for row in rows)
        self.assertLessEqual(bound, stated + 1e-12)
        self.assertLessEqual(stated, exact + 1e-12)


@tag("slow")
class BayesRiskTests(SimpleTestCase):
    def test_likelihood_ratio_risk_respects_the_floor(self):
        family = ExplicitFamily.disjoint(4, 3)
        model = CorrelationModel(12, 3, 0.6)
        detector = build_detector("bayes_lr", model, family, ThresholdRule(kind="paper"))
        estimate = estimate_risk(Experiment(model, family, detector, trials=4000, master_seed=9))
        floor = bayes_lower_bound(family, 0.6).lower_bound
        self.assertGreaterEqual(estimate.total, floor - 2.0 * (estimate.ci1 + estimate.ci2))
