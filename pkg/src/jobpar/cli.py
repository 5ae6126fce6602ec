"""Command-line entry point: ``jobpar runexp | list-kinds | emit-default``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (KIND_DESCRIPTIONS, ExperimentIOError, ValidationError, emit_default,
                          run_experiment, validate_spec)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jobpar", description="Run parallel-server experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("runexp", help="run the experiment described by a config file")
    r.add_argument("config", type=Path)
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--threads", type=int, default=1, help="replica-level worker threads")
    r.add_argument("--out", type=Path, default=Path("."), help="output directory")
    sub.add_parser("list-kinds", help="list experiment kinds")
    e = sub.add_parser("emit-default", help="print the default config of a kind")
    e.add_argument("kind")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-kinds":
        for kind, text in KIND_DESCRIPTIONS.items():
            print(f"{kind:16s} {text}")
        return EXIT_OK
    if args.command == "emit-default":
        try:
            sys.stdout.write(emit_default(args.kind))
        except ValidationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        return EXIT_OK

    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        spec = validate_spec(text)
        if args.seed is not None:
            if args.seed < 0:
                raise ValidationError("seed must be nonnegative", path="seed")
            spec.seed = args.seed
        if args.threads < 1:
            raise ValidationError("threads must be at least 1", path="--threads")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        table = run_experiment(spec, out_dir=args.out, threads=args.threads)
    except ExperimentIOError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {table.rows} rows to {args.out / spec.output_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
