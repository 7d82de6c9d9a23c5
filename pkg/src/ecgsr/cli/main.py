"""``esr`` command line entry point.

    esr <synth|prepare|train-judge|train-sr|evaluate|sweep|report> --config PATH [--jobs N] [--seed S]

Success exits 0 and prints the written paths. Failures print one JSON line
``{"error": <kind>, "message": ...}`` on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..signal_data import DataError
from ..trainer import ConfigError as TrainingConfigError
from .commands import COMMANDS, PARALLEL, DependencyError
from .config import ConfigError, load_config

EXIT_CODES = {"config": 2, "data": 3, "dependency": 4, "runtime": 1}


def build_parser():
    p = argparse.ArgumentParser(prog="esr", description="ECG super-resolution experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="key = value experiment file (defaults apply when omitted)")
    p.add_argument("--jobs", type=int, default=1, help="folds trained in parallel")
    p.add_argument("--seed", type=int, default=None, help="overrides ESR_SEED and the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(kind, message):
    print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)
    return EXIT_CODES[kind]


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = load_config(args.config, args.seed)
        fn = COMMANDS[args.command]
        written = fn(cfg, jobs=args.jobs) if args.command in PARALLEL else fn(cfg)
    except (ConfigError, TrainingConfigError) as exc:
        return _fail("config", exc)
    except DataError as exc:
        return _fail("data", exc)
    except DependencyError as exc:
        return _fail("dependency", exc)
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        return _fail("runtime", exc)
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
