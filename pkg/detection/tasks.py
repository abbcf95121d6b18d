# detection/tasks.py
import logging

from celery import shared_task

from .harness import SWEEP_COLUMNS, estimate_risk, experiment_row, sweep
from .models import ExperimentRun
from .recipes import run_recipe
from .serializers import ExperimentConfigSerializer
from .utils import export_rows_to_csv

logger = logging.getLogger(__name__)


# === Helper Functions ===
def progress_updater(run):
    """Callback storing whole-percent progress on the run, capped below 100 until it finishes."""
    def update(done, total):
        percent = min(float(int(100 * done / total)), 99.0)
        if percent > run.progress_percent:
            run.progress_percent = percent
            run.save(update_fields=['progress_percent', 'updated_at'])
    return update


def execute_run(run):
    """Rows for a run, from its validated config."""
    config = run.config
    progress = progress_updater(run)
    if run.kind == ExperimentRun.KIND_RISK:
        serializer = ExperimentConfigSerializer(data=config)
        serializer.is_valid(raise_exception=True)
        experiment = serializer.save()
        return [experiment_row(experiment, estimate_risk(experiment, progress=progress))], SWEEP_COLUMNS
    if run.kind == ExperimentRun.KIND_SWEEP:
        rows = sweep(config['grid'], config['trials'], config['seed'], config['alpha'], progress=progress)
        return rows, SWEEP_COLUMNS
    return run_recipe(config['recipe'], seed=config['seed'], trials=config.get('trials')), None


# === Main Task ===
@shared_task
def run_experiment_task(run_id):
    run = None
    try:
        run = ExperimentRun.objects.get(id=run_id)
        if run.status == ExperimentRun.STATUS_CANCELED:
            logger.info(f"Run {run.tracking_id} was canceled before it started")
            return
        run.status = ExperimentRun.STATUS_RUNNING
        run.save()

        rows, columns = execute_run(run)

        run.result = export_rows_to_csv(rows, columns).decode('utf-8')
        run.status = ExperimentRun.STATUS_FINISHED
        run.progress_percent = 100.0
        run.save()
        logger.info(f"Run {run.tracking_id} finished with {len(rows)} rows")

    except Exception as exc:
        if run is not None:
            run.status = ExperimentRun.STATUS_FAILED
            run.error_message = str(exc)
            run.save()
        logger.error(f"Run {run_id} failed: {exc}")
        raise exc
