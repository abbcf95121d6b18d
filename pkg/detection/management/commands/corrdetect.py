# detection/management/commands/corrdetect.py
"""
Command-line front door: sample, test, calibrate, risk, bound, sweep, reproduce.

Every subcommand accepts a JSON --config whose keys are validated by the
matching serializer; flags override config values. The fully resolved
config is echoed next to the output (or under RUNS_DIR when writing to
stdout). Numeric failures exit with the error JSON as the message.
"""
import argparse
import json
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from detection.bounds import corollary_condition
from detection.conf import setting
from detection.correlation import sample_observation
from detection.detectors import ThresholdKind
from detection.exceptions import DetectionError, UnsupportedModeError
from detection.families import FamilyKind
from detection.harness import (
    SWEEP_COLUMNS,
    calibrate,
    config_digest,
    estimate_risk,
    experiment_row,
    sweep,
)
from detection.recipes import RECIPES, run_recipe
from detection.serializers import (
    BoundRequestSerializer,
    ExperimentConfigSerializer,
    ReproduceConfigSerializer,
    SampleConfigSerializer,
    SweepConfigSerializer,
    TestConfigSerializer,
)
from detection.streams import PHASE_AUX, trial_stream
from detection.utils import dump_observation, export_rows_to_csv, export_to_json, load_observation

logger = logging.getLogger(__name__)

# === Constants ===
USAGE_ERROR = 2


def _int_list(text):
    try:
        return [int(token) for token in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# === Parsers ===
def _common_flags():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--threads", type=int, help="Worker threads; results do not depend on it")
    parser.add_argument("--output", help="Output path (default: stdout)")
    parser.add_argument("--format", choices=["csv", "json"], help="Output format")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials")
    parser.add_argument("--alpha", type=float, help="Size of calibrated tests")
    return parser


def _model_flags():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--n", type=int)
    parser.add_argument("--k", type=int)
    parser.add_argument("--rho", type=float)
    parser.add_argument("--family", choices=[kind.value for kind in FamilyKind])
    parser.add_argument("--grid", type=int, help="Hypercube lattice side m")
    parser.add_argument("--sides", type=_int_list, help="Hypercube box sides")
    parser.add_argument("--members-file", help="Explicit family file (1-based indices)")
    parser.add_argument("--non-circular", action="store_true", help="Intervals without wrap-around")
    return parser


def _detector_flags():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--detector")
    parser.add_argument("--m", type=int, help="Histogram bins of the goodness-of-fit tests")
    parser.add_argument(
        "--formula", choices=["auto", "small", "large", "binomial-tail"], help="Closed-form threshold variant"
    )
    parser.add_argument("--t-n", type=float, dest="t_n", help="Squared-sum threshold scale")
    parser.add_argument("--set", type=_int_list, help="Anomalous set of the singleton test (1-based)")
    parser.add_argument("--rule", choices=["likelihood", "proof"], help="Singleton threshold rule")
    parser.add_argument("--threshold-kind", choices=[kind.value for kind in ThresholdKind])
    parser.add_argument("--threshold", type=float, help="Fixed threshold value")
    return parser


class Command(BaseCommand):
    help = "Simulate, test and bound correlation detection problems."

    def add_arguments(self, parser):
        common, model, detector = _common_flags(), _model_flags(), _detector_flags()
        subparsers = parser.add_subparsers(dest="subcommand", required=True)

        sample = subparsers.add_parser("sample", parents=[common, model], help="Draw one observation")
        sample.add_argument("--hypothesis", choices=["null", "alternative"])
        sample.add_argument("--fixed-set", type=_int_list, help="Anomalous set (1-based)")

        test = subparsers.add_parser("test", parents=[common, model, detector], help="Run a detector on a saved observation")
        test.add_argument("--observation", help="Binary observation file")

        subparsers.add_parser("calibrate", parents=[common, model, detector], help="Null quantile of a detector")

        risk = subparsers.add_parser("risk", parents=[common, model, detector], help="Estimate type I and II errors")
        risk.add_argument("--risk-mode", choices=["average", "fixed"])
        risk.add_argument("--fixed-set", type=_int_list, help="Anomalous set for fixed-set risk (1-based)")

        bound = subparsers.add_parser("bound", parents=[common, model], help="Bayes risk lower bound")
        bound.add_argument("--a", type=float)
        bound.add_argument("--mode", choices=["exact", "bound", "montecarlo"])
        bound.add_argument("--optimize-a", action="store_true")
        bound.add_argument("--pairs", type=int, help="Member pairs for the Monte Carlo overlap law")

        subparsers.add_parser("sweep", parents=[common], help="Risk table over a parameter grid")

        reproduce = subparsers.add_parser(
            "reproduce",
            parents=[common],
            help="Run a named reproduction",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="recipes:\n" + "\n".join(f"  {name:<20}{recipe.description}" for name, recipe in sorted(RECIPES.items())),
        )
        reproduce.add_argument("recipe", help=f"One of: {', '.join(sorted(RECIPES))}")

    def handle(self, *args, **options):
        self.parser = self.create_parser("manage.py", "corrdetect")
        handler = getattr(self, f"handle_{options['subcommand']}")
        try:
            handler(options)
        except DetectionError as e:
            logger.error(f"{options['subcommand']} failed: {e}")
            raise CommandError(json.dumps(e.as_dict(), default=str), returncode=e.exit_code)
        except OSError as e:
            raise CommandError(f"I/O error: {e}", returncode=USAGE_ERROR)

    # === Config plumbing ===
    def load_config(self, options) -> dict:
        if not options.get("config"):
            return {}
        try:
            config = json.loads(Path(options["config"]).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise CommandError(f"{self.parser.format_usage()}Cannot read config {options['config']}: {e}", returncode=USAGE_ERROR)
        if not isinstance(config, dict):
            raise CommandError(f"{self.parser.format_usage()}Config must be a JSON object", returncode=USAGE_ERROR)
        return config

    def validate(self, serializer_class, config):
        serializer = serializer_class(data=config)
        if not serializer.is_valid():
            raise CommandError(
                f"{self.parser.format_usage()}Invalid config: {json.dumps(serializer.errors)}",
                returncode=USAGE_ERROR,
            )
        return serializer

    @staticmethod
    def resolved(serializer) -> dict:
        # serializer.data would render the saved domain object
        return dict(serializer.to_representation(serializer.validated_data))

    @staticmethod
    def overlay(config, options, *keys):
        for key in keys:
            if options.get(key) is not None:
                config[key] = options[key]
        return config

    @staticmethod
    def model_config(config, options):
        model = dict(config.get("model", {}))
        for key in ("n", "k", "rho"):
            if options.get(key) is not None:
                model[key] = options[key]
        if model:
            config["model"] = model
        return config

    @staticmethod
    def family_config(config, options, key="family"):
        family = dict(config.get(key, {}))
        if options.get("family"):
            family["kind"] = options["family"]
        if options.get("grid") is not None:
            family["m"] = options["grid"]
        if options.get("sides"):
            family["sides"] = options["sides"]
        if options.get("members_file"):
            family["path"] = options["members_file"]
        if options.get("non_circular"):
            family["circular"] = False
        if family:
            config[key] = family
        return config

    @staticmethod
    def detector_config(config, options, default_kind=None):
        detector = dict(config.get("detector", {}))
        if options.get("detector"):
            detector["name"] = options["detector"]
        params = dict(detector.get("params", {}))
        for key in ("m", "formula", "t_n", "set", "rule"):
            if options.get(key) is not None:
                params[key] = options[key]
        rule = dict(detector.get("threshold_rule", {}))
        if params.get("formula") == "binomial-tail":
            # a threshold-rule variant of the goodness-of-fit test
            rule["formula"] = params.pop("formula")
        if params:
            detector["params"] = params
        if options.get("threshold") is not None:
            rule.update(kind=ThresholdKind.FIXED.value, value=options["threshold"])
        elif options.get("threshold_kind"):
            rule["kind"] = options["threshold_kind"]
        elif not rule and default_kind:
            rule["kind"] = default_kind
        if rule:
            detector["threshold_rule"] = rule
        if detector:
            config["detector"] = detector
        return config

    def emit(self, options, payload: bytes, resolved: dict):
        resolved = json.loads(json.dumps(resolved, default=str))
        sidecar = export_to_json(resolved)
        output = options.get("output")
        if output:
            Path(output).write_bytes(payload)
            Path(f"{output}.config.json").write_bytes(sidecar)
            return
        runs_dir = Path(setting("RUNS_DIR"))
        runs_dir.mkdir(parents=True, exist_ok=True)
        (runs_dir / f"{config_digest(resolved)}.config.json").write_bytes(sidecar)
        self.stdout.write(payload.decode("utf-8"), ending="")

    def emit_rows(self, options, rows, resolved, columns=None, default_format="csv"):
        fmt = options.get("format") or default_format
        payload = export_rows_to_csv(rows, columns) if fmt == "csv" else export_to_json(rows)
        self.emit(options, payload, resolved)

    # === Subcommands ===
    def handle_sample(self, options):
        config = self.load_config(options)
        self.overlay(config, options, "seed", "hypothesis")
        if options.get("fixed_set"):
            config["set"] = options["fixed_set"]
        self.family_config(self.model_config(config, options), options)
        serializer = self.validate(SampleConfigSerializer, config)
        if not options.get("output"):
            raise CommandError("sample writes a binary file; give --output", returncode=USAGE_ERROR)
        model, family, hypothesis, fixed = serializer.save()
        rng = trial_stream(serializer.validated_data["seed"], 0, PHASE_AUX, 0)
        S = None
        if hypothesis.value == "alternative":
            S = family.sample_member(rng) if fixed is None else fixed
        X = sample_observation(model, hypothesis, rng, S)
        resolved = self.resolved(serializer)
        if S is not None:
            resolved["set"] = [int(i) + 1 for i in sorted(S)]
        self.emit(options, dump_observation(X), resolved)

    def handle_test(self, options):
        config = self.load_config(options)
        self.overlay(config, options, "seed", "trials", "alpha", "observation", "k", "rho")
        self.family_config(config, options)
        self.detector_config(config, options, default_kind=ThresholdKind.PAPER.value)
        serializer = self.validate(TestConfigSerializer, config)
        data = serializer.validated_data
        X = load_observation(Path(data["observation"]).read_bytes())
        detector = serializer.build(X)
        rule = detector.threshold_rule
        if rule.kind is ThresholdKind.FIXED:
            threshold, source = rule.value, "fixed"
        elif rule.kind is ThresholdKind.PAPER:
            threshold, source = detector.paper_threshold()
        else:
            alpha = rule.alpha if rule.alpha is not None else data["alpha"]
            threshold = calibrate(detector, rule.null_trials or data["trials"], alpha, data["seed"], threads=options.get("threads"))
            source = "calibrated"
        decision = detector.decide(X, threshold).to_dict()
        decision.update(detector=detector.name, n=int(X.size), citation=source)
        self.emit(options, export_to_json(decision), self.resolved(serializer))

    def handle_calibrate(self, options):
        config = self.load_config(options)
        self.overlay(config, options, "seed", "trials", "alpha")
        self.family_config(self.model_config(config, options), options)
        self.detector_config(config, options)
        serializer = self.validate(ExperimentConfigSerializer, config)
        experiment = serializer.save()
        detector = experiment.detector
        alpha = detector.threshold_rule.alpha or experiment.alpha
        threshold = calibrate(
            detector, experiment.trials, alpha, experiment.master_seed, experiment.experiment_id, options.get("threads")
        )
        result = {
            "detector": detector.name,
            "threshold": threshold,
            "alpha": alpha,
            "trials": experiment.trials,
            "seed": experiment.master_seed,
            "source": "analytic" if detector.analytic_quantile(alpha) is not None else "empirical",
        }
        self.emit(options, export_to_json(result), self.resolved(serializer))

    def handle_risk(self, options):
        config = self.load_config(options)
        self.overlay(config, options, "seed", "trials", "alpha", "risk_mode")
        if options.get("fixed_set"):
            config["fixed_set"] = options["fixed_set"]
        self.family_config(self.model_config(config, options), options)
        self.detector_config(config, options)
        serializer = self.validate(ExperimentConfigSerializer, config)
        experiment = serializer.save()
        estimate = estimate_risk(experiment, threads=options.get("threads"))
        if (options.get("format") or "csv") == "csv":
            self.emit_rows(options, [experiment_row(experiment, estimate)], self.resolved(serializer), SWEEP_COLUMNS)
        else:
            self.emit(options, export_to_json(estimate.to_dict()), self.resolved(serializer))

    def handle_bound(self, options):
        config = self.load_config(options)
        self.overlay(config, options, "seed", "rho", "a", "mode", "pairs")
        if options.get("optimize_a"):
            config["optimize_a"] = True
        family = dict(config.get("family", {}))
        for key in ("n", "k"):
            if options.get(key) is not None:
                family[key] = options[key]
        config["family"] = family
        self.family_config(config, options)
        serializer = self.validate(BoundRequestSerializer, config)
        report = serializer.save()
        data = serializer.validated_data
        try:
            check = corollary_condition(
                data["family"]["kind"], report.family["n"], report.family["k"], report.rho, N=int(report.family["N"])
            ).to_dict()
        except UnsupportedModeError:
            check = None
        if (options.get("format") or "json") == "json":
            out = report.to_dict()
            out["condition"] = check
            self.emit(options, export_to_json(out), self.resolved(serializer))
            return
        row = {
            "family": report.family["kind"],
            "rho": report.rho,
            "mode": report.mode.value,
            "bound": report.lower_bound,
            "condition": "" if check is None else check["condition_holds"],
            "citation": report.citation,
        }
        self.emit_rows(options, [row], self.resolved(serializer))

    def handle_sweep(self, options):
        config = self.load_config(options)
        self.overlay(config, options, "seed", "trials", "alpha")
        serializer = self.validate(SweepConfigSerializer, config)
        data = serializer.validated_data
        rows = sweep(data["grid"], data["trials"], data["seed"], data["alpha"], threads=options.get("threads"))
        self.emit_rows(options, rows, self.resolved(serializer), SWEEP_COLUMNS)

    def handle_reproduce(self, options):
        config = self.load_config(options)
        config["recipe"] = options["recipe"]
        self.overlay(config, options, "seed", "trials")
        serializer = self.validate(ReproduceConfigSerializer, config)
        data = serializer.validated_data
        rows = run_recipe(data["recipe"], seed=data["seed"], threads=options.get("threads"), trials=data.get("trials"))
        self.emit_rows(options, rows, self.resolved(serializer))
