import csv
import io
import json
import tempfile
from unittest import mock

from django.test import TestCase
from rest_framework import status
from rest_framework.test import APIClient

from detection.models import ExperimentRun
from detection.tasks import run_experiment_task

RISK_CONFIG = {
    "model": {"n": 20, "k": 2, "rho": 0.5},
    "family": {"kind": "ksets"},
    "detector": {"name": "squared_sum"},
    "trials": 30,
    "seed": 7,
}


class ExperimentRunApiTests(TestCase):
    def setUp(self):
        self.client = APIClient()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        override = self.settings(CORRDETECT={"RUNS_DIR": self.tmp.name, "DEFAULT_THREADS": 1})
        override.enable()
        self.addCleanup(override.disable)
        patcher = mock.patch("detection.views.run_experiment_task.delay")
        self.delay = patcher.start()
        self.delay.return_value = mock.Mock(id="task-1")
        self.addCleanup(patcher.stop)

    def create_run(self, kind="risk", config=None):
        response = self.client.post(
            "/api/detection/runs", {"kind": kind, "config": config or RISK_CONFIG}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_201_CREATED, response.content)
        return response.json()["tracking_id"]

    def test_create_queues_task(self):
        tracking_id = self.create_run()
        run = ExperimentRun.objects.get(tracking_id=tracking_id)
        self.delay.assert_called_once_with(run.id)
        self.assertEqual(run.status, ExperimentRun.STATUS_PENDING)
        self.assertEqual(run.celery_task_id, "task-1")
        self.assertEqual(run.seed, 7)
        # defaults are filled into the stored config
        self.assertEqual(run.config["risk_mode"], "average")

    def test_invalid_config_names_the_key(self):
        config = dict(RISK_CONFIG, bogus=True)
        response = self.client.post("/api/detection/runs", {"kind": "risk", "config": config}, format="json")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertIn("bogus", json.dumps(response.json()))
        self.assertFalse(ExperimentRun.objects.exists())

    def test_finished_run_serves_results(self):
        tracking_id = self.create_run()
        run = ExperimentRun.objects.get(tracking_id=tracking_id)
        run_experiment_task.apply(args=(run.id,))
        run.refresh_from_db()
        self.assertEqual(run.status, ExperimentRun.STATUS_FINISHED)
        self.assertEqual(run.progress_percent, 100.0)

        status_response = self.client.get(f"/api/detection/runs/{tracking_id}/status")
        self.assertEqual(status_response.json()["status"], "finished")

        csv_response = self.client.get(f"/api/detection/runs/{tracking_id}/result", {"format": "csv"})
        self.assertEqual(csv_response["Content-Type"], "text/csv")
        (row,) = csv.DictReader(io.StringIO(csv_response.content.decode("utf-8")))
        self.assertEqual(row["detector"], "squared_sum")
        self.assertEqual(row["citation_of_threshold"], "calibrated:chi2")

        json_response = self.client.get(f"/api/detection/runs/{tracking_id}/result")
        self.assertEqual(json_response.json()["result"], run.result)

    def test_results_are_reproducible_across_runs(self):
        first = self.create_run()
        second = self.create_run()
        for tracking_id in (first, second):
            run_experiment_task.apply(args=(ExperimentRun.objects.get(tracking_id=tracking_id).id,))
        results = [ExperimentRun.objects.get(tracking_id=t).result for t in (first, second)]
        self.assertEqual(results[0], results[1])
        digests = {ExperimentRun.objects.get(tracking_id=t).config_digest for t in (first, second)}
        self.assertEqual(len(digests), 1)

    def test_failed_run_keeps_the_error(self):
        config = {
            "model": {"n": 20, "k": 2, "rho": 0.5},
            "detector": {"name": "local_sq", "threshold_rule": {"kind": "calibrated", "null_trials": 10}},
            "trials": 10,
        }
        tracking_id = self.create_run(config=config)
        run = ExperimentRun.objects.get(tracking_id=tracking_id)
        result = run_experiment_task.apply(args=(run.id,))
        self.assertTrue(result.failed())
        self.assertEqual(result.state, "FAILURE")
        run.refresh_from_db()
        self.assertEqual(run.status, ExperimentRun.STATUS_FAILED)
        self.assertIn("trials", run.error_message)

    def test_unfinished_result_is_refused(self):
        tracking_id = self.create_run()
        response = self.client.get(f"/api/detection/runs/{tracking_id}/result")
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)

    @mock.patch("detection.views.AsyncResult")
    def test_cancel(self, async_result):
        tracking_id = self.create_run()
        response = self.client.post(f"/api/detection/runs/{tracking_id}/cancel")
        self.assertEqual(response.json()["status"], "canceled")
        async_result.assert_called_once_with("task-1")
        # a canceled run is skipped by the worker
        run = ExperimentRun.objects.get(tracking_id=tracking_id)
        run_experiment_task.apply(args=(run.id,))
        run.refresh_from_db()
        self.assertEqual(run.status, ExperimentRun.STATUS_CANCELED)
        again = self.client.post(f"/api/detection/runs/{tracking_id}/cancel")
        self.assertEqual(again.status_code, status.HTTP_400_BAD_REQUEST)

    def test_list_and_retrieve(self):
        tracking_id = self.create_run()
        listing = self.client.get("/api/detection/runs")
        self.assertEqual([item["tracking_id"] for item in listing.json()], [tracking_id])
        detail = self.client.get(f"/api/detection/runs/{tracking_id}")
        self.assertEqual(detail.json()["config"]["seed"], 7)
        self.assertEqual(self.client.get("/api/detection/runs/not-a-uuid").status_code, status.HTTP_404_NOT_FOUND)

    def test_sweep_and_reproduce_runs(self):
        sweep_config = {
            "grid": {"n": [20], "k": [2], "rho": [0.5], "family": ["ksets"], "detector": ["squared_sum"]},
            "trials": 20,
        }
        for kind, config in (("sweep", sweep_config), ("reproduce", {"recipe": "bound-trees"})):
            run = ExperimentRun.objects.get(tracking_id=self.create_run(kind, config))
            run_experiment_task.apply(args=(run.id,))
            run.refresh_from_db()
            self.assertEqual(run.status, ExperimentRun.STATUS_FINISHED, run.error_message)
            self.assertTrue(run.result.startswith(("n,", "family,")))


class BoundApiTests(TestCase):
    def setUp(self):
        self.client = APIClient()

    def test_bound(self):
        response = self.client.post(
            "/api/detection/bounds", {"family": {"kind": "ksets", "n": 1000, "k": 10}, "rho": 0.2}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_200_OK)
        report = response.json()
        self.assertEqual(report["citation"], "bound-ksets")
        self.assertEqual(report["family"]["N"], str(263409560461970212832400))

    def test_bound_errors(self):
        response = self.client.post(
            "/api/detection/bounds", {"family": {"kind": "matchings", "k": 4}, "rho": 0.3}, format="json"
        )
        self.assertEqual(response.status_code, status.HTTP_400_BAD_REQUEST)
        self.assertEqual(response.json()["error"], "UnsupportedModeError")
        invalid = self.client.post("/api/detection/bounds", {"family": {"kind": "ksets"}, "rho": 1.5}, format="json")
        self.assertEqual(invalid.status_code, status.HTTP_400_BAD_REQUEST)

    def test_health(self):
        self.assertEqual(self.client.get("/api/health/").status_code, status.HTTP_200_OK)
