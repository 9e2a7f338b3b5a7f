"""Command-line entry points: ``estimate``, ``bcf``, ``eval`` and ``viz``.

Exit codes: 0 success, 2 bad arguments or configuration, 3 I/O error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .config import CONFIG_ENV, ConfigError, RunConfig
from .io import read_flo, read_image, read_occlusion, write_flo, write_image, write_occlusion
from .metrics import best_candidate_flow, eval_metrics
from .pipeline import build_candidates, estimate_flow
from .viz import flow_to_color

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("candflow")


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = RunConfig.load(getattr(args, "config", None))
    if getattr(args, "profile", None):
        cfg.aggregation.profile = args.profile
    if getattr(args, "seed", None) is not None:
        cfg.matching.seed = args.seed
    if getattr(args, "strategy", None):
        cfg.matching.strategy = args.strategy
    if getattr(args, "no_median", False):
        cfg.median.enabled = False
    return cfg.validate()


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join(missing)}")


def cmd_estimate(args) -> int:
    cfg = _config(args)
    if args.dump_config:
        sys.stdout.write(cfg.to_ini())
        return EXIT_OK
    _require(args, "frame1", "frame2", "out")
    img1, img2 = read_image(args.frame1), read_image(args.frame2)
    res = estimate_flow(img1, img2, cfg, verbose=args.verbose, emit=print if args.verbose else None)
    if not np.all(np.isfinite(res.flow)):
        raise FloatingPointError("estimated flow contains non-finite values")
    write_flo(res.flow, args.out)
    if args.occ_out:
        write_occlusion(res.occ, args.occ_out)
    return EXIT_OK


def cmd_bcf(args) -> int:
    cfg = _config(args)
    img1, img2 = read_image(args.frame1), read_image(args.frame2)
    gt = read_flo(args.gt)
    if gt.shape[:2] != img1.shape[:2]:
        raise UsageError("ground truth and frames differ in size")
    stage = build_candidates(img1, img2, cfg)
    cands = stage.initial if args.no_extension else stage.extended
    write_flo(best_candidate_flow(cands, gt), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    est, gt = read_flo(args.est), read_flo(args.gt)
    if est.shape != gt.shape:
        raise UsageError(f"flow sizes differ: {est.shape[:2]} vs {gt.shape[:2]}")
    occ = read_occlusion(args.occ_gt) if args.occ_gt else None
    rep = eval_metrics(est, gt, occ)
    if args.json:
        print(json.dumps(rep.to_dict(), indent=2))
    else:
        print("\n".join(rep.lines()))
    return EXIT_OK


def cmd_viz(args) -> int:
    if args.max_norm is not None and args.max_norm <= 0:
        raise UsageError("--max-norm must be positive")
    write_image(flow_to_color(read_flo(args.flow), args.max_norm), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="candflow", description="Two-frame optical flow by candidate aggregation.")
    sub = ap.add_subparsers(dest="command", required=True)

    def config_opts(p):
        p.add_argument("--config", help=f"INI config file (default: ${CONFIG_ENV} or built-in defaults)")
        p.add_argument("--profile", choices=["sintel", "middlebury"], help="energy weight profile")
        p.add_argument("--seed", type=int, help="seed of the randomized matcher")
        p.add_argument("--strategy", choices=["exhaustive", "randomized"], help="patch search strategy")

    p = sub.add_parser("estimate", help="estimate flow and occlusions for a frame pair")
    p.add_argument("--frame1")
    p.add_argument("--frame2")
    p.add_argument("--out", help="output .flo")
    p.add_argument("--occ-out", help="output occlusion PNG (255 = occluded)")
    p.add_argument("--verbose", action="store_true", help="print the energy trace")
    p.add_argument("--no-median", action="store_true", help="skip weighted median post-processing")
    p.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")
    config_opts(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bcf", help="best candidate flow against ground truth")
    p.add_argument("--frame1", required=True)
    p.add_argument("--frame2", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-extension", action="store_true",
                   help="use only the patch candidates, without exemplar and camera candidates")
    config_opts(p)
    p.set_defaults(func=cmd_bcf)

    p = sub.add_parser("eval", help="endpoint-error report")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--occ-gt", help="ground-truth occlusion PNG (255 = occluded)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("viz", help="colour-code a flow field")
    p.add_argument("--flow", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-norm", type=float)
    p.set_defaults(func=cmd_viz)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, AssertionError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
