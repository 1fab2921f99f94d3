"""Shim command line.

    solution-shim <mode> <program> <input-file> [--entry NAME] [--timeout S]
                  [--mem MB] [--max-output-bytes N]

Prints one JSON ShimResult document on stdout and exits 0 whenever the
candidate ran at all; a nonzero exit with a stderr diagnostic means the shim
itself failed, which the evaluator treats as an infrastructure error.
"""

from __future__ import annotations

import argparse
import sys

from . import DEFAULT_MAX_OUTPUT_BYTES, DEFAULT_MEM_MB, DEFAULT_TIMEOUT_S, run_one


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="solution-shim", description=__doc__)
    parser.add_argument("mode", choices=("stdio", "functional"))
    parser.add_argument("program")
    parser.add_argument("input_file")
    parser.add_argument("--entry", default=None, help="entry point for functional mode")
    parser.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT_S, help="wall timeout, seconds")
    parser.add_argument("--mem", type=int, default=DEFAULT_MEM_MB, help="memory ceiling, MB")
    parser.add_argument("--max-output-bytes", type=int, default=DEFAULT_MAX_OUTPUT_BYTES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = run_one(
            mode=args.mode,
            program=args.program,
            input_path=args.input_file,
            entry=args.entry,
            timeout_s=args.timeout,
            mem_mb=args.mem,
            max_output_bytes=args.max_output_bytes,
        )
    except Exception as exc:
        print(f"shim failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(result.to_json() + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
