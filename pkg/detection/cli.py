# detection/cli.py
"""Standalone entry point: `python -m detection.cli <subcommand> ...` (same as `manage.py corrdetect`)."""
import os
import sys

import django


def run(argv=None, stdout=None, stderr=None) -> int:
    """Dispatch argv to the corrdetect command and return its exit code."""
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "corrDetect.settings")
    django.setup()
    from detection.management.commands.corrdetect import Command

    argv = sys.argv[1:] if argv is None else [str(arg) for arg in argv]
    command = Command(stdout=stdout or sys.stdout, stderr=stderr or sys.stderr)
    try:
        command.run_from_argv(["corrdetect", "corrdetect", *argv])
    except SystemExit as e:
        # argparse usage errors exit 2, CommandError exits with its returncode
        return e.code if isinstance(e.code, int) else 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
