# detection/conf.py
import os

from django.conf import settings

# Library defaults, used as-is when Django settings are not configured.
DEFAULTS = {
    "DEFAULT_SEED": 20120101,
    "DEFAULT_ALPHA": 0.05,
    "ENUMERATION_CAP": 10_000_000,
    "KSET_VERIFY_LIMIT": 100_000,
    "OVERLAP_PAIRS": 100_000,
    "DEFAULT_THREADS": os.cpu_count() or 1,
    "RUNS_DIR": "runs",
}


def setting(name):
    if name not in DEFAULTS:
        raise KeyError(f"Unknown detection setting: {name}")
    if settings.configured:
        return getattr(settings, "CORRDETECT", {}).get(name, DEFAULTS[name])
    return DEFAULTS[name]
