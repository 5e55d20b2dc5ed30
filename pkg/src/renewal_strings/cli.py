"""Command-line front end: generate, detect, hough, evaluate, render.

Exit status is 0 on success, 2 for usage, configuration or input errors and
1 for anything unexpected.
"""

from __future__ import annotations

import argparse
import collections
import dataclasses
import logging
import os
import sys
from typing import Optional, Sequence

from . import catalog as cat_io
from .config import RunConfig, load_config
from .detector import flag, sweep
from .errors import RenewalStringsError
from .evaluation import confusion, significance_table
from .generator import sample_plate
from .hough import accumulate, line_reference
from .render import write_svg

logger = logging.getLogger("renewal_strings")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    pass


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise _UsageError(f"--{name.rstrip('_').replace('_', '-')} is required for {args.command}")


def _read(path: str):
    if not os.path.isfile(path):
        raise _UsageError(f"input not found: {path}")
    return cat_io.read_catalog(path)


def cmd_generate(args, cfg: RunConfig) -> int:
    _require(args, "out")
    gen = cfg.generator
    if args.seed is not None:
        gen = dataclasses.replace(gen, seed=args.seed)
    plate = sample_plate(gen)
    cat_io.write_catalog(plate, args.out)
    counts = collections.Counter(int(v) for v in plate.labels)
    for code in sorted(counts):
        print(f"{cat_io.label_name(code)}\t{counts[code]}")
    return EXIT_OK


def cmd_detect(args, cfg: RunConfig) -> int:
    _require(args, "in_", "out")
    catalog = _read(args.in_)
    result = sweep(catalog, cfg.detector, threads=args.threads)
    if args.threshold is not None:
        result = flag(result, args.threshold)
    cat_io.write_catalog(catalog, args.out, detections=result)
    print(f"DET={result.n_flagged} TOT={len(catalog)}")
    return EXIT_OK


def cmd_hough(args, cfg: RunConfig) -> int:
    _require(args, "in_", "out")
    catalog = _read(args.in_)
    run = cfg.hough
    result = accumulate(catalog, run.config)
    result.to_csv(args.out, only_flagged=cfg.io.hough_dump != "all")
    refs = [line_reference(result, a, x, y) for a, x, y in run.truth_tracks]
    table = significance_table(result, refs, run.levels)
    if args.table:
        table.to_csv(args.table)
    sys.stdout.write(table.text())
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    _require(args, "in_", "truth")
    _, flags, _ = cat_io.read_detections(args.in_)
    if not os.path.isfile(args.truth):
        raise _UsageError(f"input not found: {args.truth}")
    truth = cat_io.read_catalog(args.truth)
    if len(truth) != len(flags):
        raise _UsageError(f"{len(flags)} detections but {len(truth)} truth records")
    try:
        summary = confusion(flags, truth.labels)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    if args.out:
        summary.to_csv(args.out)
    sys.stdout.write(summary.text())
    return EXIT_OK


def cmd_render(args, cfg: RunConfig) -> int:
    _require(args, "in_", "out")
    catalog = _read(args.in_)
    flags = None
    try:
        _, flags, _ = cat_io.read_detections(args.in_)
    except RenewalStringsError:
        logger.info("no detection columns in %s; drawing unflagged", args.in_)
    write_svg(args.out, catalog, flags, scale=cfg.io.render_scale, min_radius=cfg.io.render_min_radius)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "detect": cmd_detect,
    "hough": cmd_hough,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renewal-strings",
                                description="Detect faint point tracks in object catalogs.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--in", dest="in_", metavar="PATH", help="input catalog CSV")
    p.add_argument("--out", metavar="PATH", help="output file")
    p.add_argument("--truth", metavar="PATH", help="labeled catalog for evaluate")
    p.add_argument("--table", metavar="PATH", help="hough: also write the significance table as CSV")
    p.add_argument("--seed", type=int, help="override generator.seed")
    p.add_argument("--threshold", type=float, help="override the flag threshold")
    p.add_argument("--threads", type=int, default=1, help="worker threads for the sweep (default 1)")
    return p


def _setup_logging() -> None:
    level = os.environ.get("RENEWAL_STRINGS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (_UsageError, RenewalStringsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        logger.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
