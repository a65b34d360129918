"""``sim`` command line.

    sim <experiment> --config run.json [--out DIR] [--threads K]
    sim validate --config run.json
    sim paper-params [--four-qubit] [--out FILE]

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence.
Failures print a one-line JSON error record on stderr (and write
``error.json`` into the output directory when one was given).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .circuit import CircuitValidationError
from .config import EXPERIMENTS, ConfigError, load_config, reference_config
from .pulses import NonConvergenceError

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3


def _threads(arg: int | None) -> int:
    if arg is not None:
        if arg < 1:
            raise ConfigError("--threads", "must be a positive integer")
        return arg
    env = os.environ.get("SIM_THREADS")
    if env:
        try:
            k = int(env)
        except ValueError:
            raise ConfigError("SIM_THREADS", f"not an integer: {env!r}") from None
        if k < 1:
            raise ConfigError("SIM_THREADS", "must be a positive integer")
        return k
    return os.cpu_count() or 1


def _error(kind: str, code: int, message: str, field: str | None, out: Path | None, **extra) -> int:
    rec = {"status": "error", "error": kind, "exit_code": code, "message": message, "field": field, **extra}
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sim", description="Cavity-bus tunable-coupler simulator")
    sub = ap.add_subparsers(dest="command", required=True)
    for exp in EXPERIMENTS:
        p = sub.add_parser(exp, help=f"run the {exp} experiment")
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", default=None, help="output directory (default: out/<experiment>)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (fallback: SIM_THREADS)")
    p = sub.add_parser("validate", help="schema and physics checks, no simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--margin", type=float, default=0.03, help="collision margin in GHz")
    p = sub.add_parser("paper-params", help="print the reference-device configuration")
    p.add_argument("--four-qubit", action="store_true")
    p.add_argument("--out", default=None, help="write to this file instead of stdout")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "paper-params":
        text = json.dumps(reference_config(args.four_qubit), indent=2, sort_keys=True) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    out = Path(args.out) if getattr(args, "out", None) else None
    try:
        if args.command == "validate":
            from .experiments import dumps, validation_report

            run = load_config(args.config)
            sys.stdout.write(dumps(validation_report(run, args.margin)))
            return EXIT_OK

        from .experiments import RUNNERS, Artifacts

        threads = _threads(args.threads)
        run = load_config(args.config, experiment=args.command)
        out = out or Path(run.document.get("output_dir", Path("out") / args.command))
        art = Artifacts(out, run, args.command)
        summary = RUNNERS[args.command](run, art, threads)
        art.manifest(summary, threads)
        print(json.dumps({"status": "ok", "experiment": args.command, "out": str(out)}, sort_keys=True))
        return EXIT_OK
    except ConfigError as exc:
        return _error("validation", EXIT_INVALID, exc.message, exc.field, out)
    except CircuitValidationError as exc:
        return _error("validation", EXIT_INVALID, str(exc), f"circuit.{exc.field}", out)
    except NonConvergenceError as exc:
        return _error("non-convergence", EXIT_NONCONVERGED, str(exc), None, out, delta=exc.delta)


if __name__ == "__main__":
    sys.exit(main())
