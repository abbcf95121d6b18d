import contextlib
import csv
import io
import json
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from detection.cli import run
from detection.detectors import gof_threshold
from detection.utils import dump_observation, load_observation


class CommandLineTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name)
        settings_override = self.settings(CORRDETECT={"RUNS_DIR": str(self.path / "runs"), "DEFAULT_THREADS": 1})
        settings_override.enable()
        self.addCleanup(settings_override.disable)

    def invoke(self, *argv):
        stdout, stderr = io.StringIO(), io.StringIO()
        with contextlib.redirect_stderr(io.StringIO()):
            code = run(list(argv), stdout=stdout, stderr=stderr)
        return code, stdout.getvalue(), stderr.getvalue()

    def write_config(self, name, config):
        path = self.path / name
        path.write_text(json.dumps(config), encoding="utf-8")
        return str(path)

    def test_bound_reports_citation_and_condition(self):
        code, out, _ = self.invoke("bound", "--family", "ksets", "--n", "1000", "--k", "10", "--rho", "0.2")
        self.assertEqual(code, 0)
        report = json.loads(out)
        self.assertEqual(report["citation"], "bound-ksets")
        self.assertTrue(report["condition"]["condition_holds"])
        self.assertGreaterEqual(report["lower_bound"], 0.3)
        # resolved config lands under RUNS_DIR when printing to stdout
        self.assertEqual(len(list((self.path / "runs").glob("*.config.json"))), 1)

    def test_bound_csv_row(self):
        code, out, _ = self.invoke(
            "bound", "--family", "matchings", "--k", "10", "--rho", "0.5", "--mode", "bound", "--format", "csv"
        )
        self.assertEqual(code, 0)
        (row,) = csv.DictReader(io.StringIO(out))
        self.assertEqual(row["citation"], "bound-matchings")
        self.assertEqual(row["condition"], "true")

    def test_sample_then_test(self):
        observation = self.path / "x.bin"
        code, _, _ = self.invoke(
            "sample", "--n", "100", "--k", "5", "--rho", "0.9", "--family", "ksets",
            "--hypothesis", "alternative", "--seed", "3", "--output", observation,
        )
        self.assertEqual(code, 0)
        X = load_observation(observation.read_bytes())
        self.assertEqual(X.shape, (100,))
        sidecar = json.loads(Path(f"{observation}.config.json").read_text(encoding="utf-8"))
        self.assertEqual(sidecar["seed"], 3)
        self.assertEqual(len(sidecar["set"]), 5)

        code, out, _ = self.invoke("test", "--observation", observation, "--detector", "gof", "--m", "10")
        self.assertEqual(code, 0)
        decision = json.loads(out)
        self.assertAlmostEqual(decision["threshold"], gof_threshold(100, 10))
        self.assertEqual(decision["detector"], "gof")
        self.assertEqual(decision["reject"], decision["statistic_value"] > decision["threshold"])

    def test_sample_is_seeded(self):
        first, second = self.path / "a.bin", self.path / "b.bin"
        for target in (first, second):
            self.invoke("sample", "--n", "20", "--k", "2", "--rho", "0.3", "--seed", "9", "--output", target)
        self.assertEqual(first.read_bytes(), second.read_bytes())

    def test_sample_needs_output(self):
        code, _, err = self.invoke("sample", "--n", "20", "--k", "2", "--rho", "0.3")
        self.assertEqual(code, 2)
        self.assertIn("--output", err)

    def test_fixed_threshold_flag(self):
        observation = self.path / "zeros.bin"
        observation.write_bytes(dump_observation(np.zeros(16)))
        code, out, _ = self.invoke(
            "test", "--observation", observation, "--detector", "squared_sum", "--threshold", "-1"
        )
        self.assertEqual(code, 0)
        decision = json.loads(out)
        self.assertTrue(decision["reject"])
        self.assertEqual(decision["citation"], "fixed")

    def test_calibrate_squared_sum(self):
        code, out, _ = self.invoke("calibrate", "--n", "50", "--k", "5", "--rho", "0.3", "--detector", "squared_sum")
        self.assertEqual(code, 0)
        result = json.loads(out)
        self.assertEqual(result["source"], "analytic")
        self.assertAlmostEqual(result["threshold"], 50 * 3.841458820694124)

    def test_risk_writes_row_and_sidecar(self):
        output = self.path / "risk.csv"
        code, _, _ = self.invoke(
            "risk", "--n", "30", "--k", "5", "--rho", "0.5", "--family", "intervals",
            "--detector", "local_sq", "--threshold-kind", "paper", "--trials", "40", "--seed", "1",
            "--output", output,
        )
        self.assertEqual(code, 0)
        (row,) = csv.DictReader(io.StringIO(output.read_text(encoding="utf-8")))
        self.assertEqual(row["citation_of_threshold"], "formula:2k*log(N)")
        self.assertEqual(row["detector"], "local_sq")
        self.assertTrue(Path(f"{output}.config.json").exists())

    def test_sweep_from_config(self):
        config = self.write_config("grid.json", {
            "grid": {"n": [20], "k": [2], "rho": [0.5], "family": ["ksets"], "detector": ["squared_sum"]},
            "trials": 20,
            "seed": 4,
        })
        code, out, _ = self.invoke("sweep", "--config", config)
        self.assertEqual(code, 0)
        rows = list(csv.DictReader(io.StringIO(out)))
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows[0]["citation_of_threshold"], "calibrated:chi2")

    def test_reproduce_is_deterministic(self):
        first = self.invoke("reproduce", "bound-ksets", "--seed", "5")
        second = self.invoke("reproduce", "bound-ksets", "--seed", "5")
        self.assertEqual(first[0], 0)
        self.assertEqual(first[1], second[1])
        rows = list(csv.DictReader(io.StringIO(first[1])))
        self.assertEqual({row["citation"] for row in rows}, {"bound-ksets"})
        self.assertTrue(all(row["holds"] == "true" for row in rows))

    def test_reproduce_help_lists_recipes(self):
        with contextlib.redirect_stdout(io.StringIO()) as help_text:
            code, _, _ = self.invoke("reproduce", "--help")
        self.assertEqual(code, 0)
        self.assertIn("glrt-ksets", help_text.getvalue())
        self.assertIn("Risk floor for spanning trees", help_text.getvalue())

    def test_unknown_key_is_named(self):
        config = self.write_config("bad.json", {"model": {"n": 10, "k": 2, "rho": 0.5}, "detector": {"name": "squared_sum"}, "bogus": 1})
        code, _, err = self.invoke("risk", "--config", config)
        self.assertEqual(code, 2)
        self.assertIn("bogus", err)

    def test_malformed_detector_params_are_rejected(self):
        config = self.write_config("grid.json", {
            "grid": {
                "n": [20],
                "k": [2],
                "rho": [0.5],
                "family": ["ksets"],
                "detector": [{"name": "gof", "params": {"m": "ten"}}],
            },
            "trials": 20,
        })
        code, out, err = self.invoke("sweep", "--config", config)
        self.assertEqual(code, 2)
        self.assertEqual(out, "")
        self.assertIn('"m"', err)
        self.assertNotIn("Traceback", err)

    def test_unknown_flag_is_a_usage_error(self):
        code, _, _ = self.invoke("bound", "--family", "ksets", "--bogus")
        self.assertEqual(code, 2)

    def test_unsupported_mode_exits_three(self):
        code, _, err = self.invoke("bound", "--family", "matchings", "--k", "4", "--rho", "0.3")
        self.assertEqual(code, 3)
        self.assertIn("UnsupportedModeError", err)

    def test_enumeration_cap_exits_four(self):
        observation = self.path / "x.bin"
        observation.write_bytes(dump_observation(np.zeros(100)))
        code, _, err = self.invoke(
            "test", "--observation", observation, "--detector", "bayes_lr", "--family", "ksets", "--k", "10",
            "--rho", "0.5",
        )
        self.assertEqual(code, 4)
        self.assertIn("EnumerationCapExceeded", err)

    def test_truncated_observation(self):
        observation = self.path / "short.bin"
        observation.write_bytes(dump_observation(np.ones(4))[:-8])
        code, _, _ = self.invoke("test", "--observation", observation, "--detector", "squared_sum")
        self.assertEqual(code, 2)


class ObservationFormatTests(SimpleTestCase):
    def test_layout(self):
        data = dump_observation([1.5, -math.inf])
        self.assertEqual(data[:8], (2).to_bytes(8, "little"))
        self.assertEqual(len(data), 24)
        np.testing.assert_array_equal(load_observation(data), [1.5, -math.inf])
