"""Command-line interface.

Subcommands: fit, eval, synth, sweep, smooth. Exit codes: 0 success,
1 usage/config error, 2 input parse error, 3 run completed with unfittable
frames.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import io as pio
from . import pipeline
from .errors import ConfigError, KeypointParseError, PersposeError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_UNFITTABLE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_common(sub):
    sub.add_argument("--config", help="JSON run configuration")
    sub.add_argument("--keypoints", help="keypoint document or directory")
    sub.add_argument("--init", help="initial-parameter sidecar JSON")
    sub.add_argument("--gt", help="ground-truth JSON")
    sub.add_argument("--report", help="existing fit report JSON")
    sub.add_argument("--focal", type=float, help="explicit focal length in pixels")
    sub.add_argument("--iterations", type=int, help="optimizer iterations per stage")
    sub.add_argument("--projection", choices=["full", "weak"])
    sub.add_argument("--camera-center", choices=["image", "bbox"])
    sub.add_argument("--smoothing", action="store_true", help="enable temporal smoothing")
    sub.add_argument("--no-smoothing", action="store_true", help="disable temporal smoothing")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--out", help="output directory")


def build_parser():
    parser = _Parser(prog="perspose",
                     description="Fit a 3D body skeleton to 2D keypoints under a "
                                 "full-perspective camera model")
    subs = parser.add_subparsers(dest="command", required=True)
    subs.add_parser("fit", help="fit a sequence and write a report")
    subs.add_parser("eval", help="score an existing report against ground truth")
    subs.add_parser("synth", help="generate a synthetic sequence bundle")
    subs.add_parser("sweep", help="sweep focal factor, iterations or camera center")
    subs.add_parser("smooth", help="temporally smooth an existing report")
    for name, sub in subs.choices.items():
        _add_common(sub)
        if name == "sweep":
            sub.add_argument("--sweep", dest="sweep_kind",
                             choices=["focal", "iterations", "center"])
            sub.add_argument("--values", help="comma-separated sweep values")
    return parser


def _apply_overrides(cfg, args):
    if args.keypoints:
        cfg.keypoints_path = args.keypoints
    if args.init:
        cfg.init_path = args.init
    if args.gt:
        cfg.gt_path = args.gt
    if args.report:
        cfg.report_path = args.report
    if args.focal is not None:
        cfg.focal_source = pio.FocalSource(mode="explicit", value=args.focal)
    if args.iterations is not None:
        cfg.fit = dataclasses.replace(cfg.fit, iterations=args.iterations)
    if args.projection:
        cfg.projection_mode = args.projection
    if args.camera_center:
        mode = {"image": "image_center", "bbox": "bbox_center"}[args.camera_center]
        cfg.fit = dataclasses.replace(cfg.fit, camera_center_mode=mode)
    if args.smoothing:
        cfg.smoothing_enabled = True
    if args.no_smoothing:
        cfg.smoothing_enabled = False
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out:
        cfg.out_dir = args.out
    if getattr(args, "sweep_kind", None):
        values = None
        if getattr(args, "values", None):
            raw = args.values.split(",")
            if args.sweep_kind == "center":
                values = [v.strip() for v in raw]
            elif args.sweep_kind == "iterations":
                values = [int(v) for v in raw]
            else:
                values = [float(v) for v in raw]
        cfg.sweep = pio.SweepSpec(kind=args.sweep_kind, values=values)
    return cfg


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        cfg = pio.load_run_config(args.config) if args.config else pio.RunConfig()
        cfg = _apply_overrides(cfg, args)
        if args.command == "synth":
            report = pipeline.run_synth(cfg)
            print(f"wrote {report['n_frames']} frames to {cfg.out_dir}")
        elif args.command == "fit":
            report, unfittable = pipeline.run_fit(cfg)
            _print_metrics(report.get("metrics"))
            print(f"fit {report['n_frames']} frames ({unfittable} unfittable) -> {cfg.out_dir}")
            if unfittable:
                return EXIT_UNFITTABLE
        elif args.command == "eval":
            report = pipeline.run_eval(cfg)
            _print_metrics(report.get("metrics"))
        elif args.command == "smooth":
            report = pipeline.run_smooth(cfg)
            _print_metrics(report.get("metrics"))
            print(f"smoothed report -> {cfg.out_dir}")
        elif args.command == "sweep":
            report = pipeline.run_sweep(cfg)
            for row in report["rows"]:
                print(f"{report['sweep']}={row['value']}: "
                      f"MPJPE={row['mpjpe']:.2f}mm MPJAE={row['mpjae']:.2f}deg")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeypointParseError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except PersposeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def _print_metrics(metrics):
    if not metrics:
        return
    print(
        "MPJPE {mpjpe:.2f}mm  MPJPE_PA {mpjpe_pa:.2f}mm  PCK {pck:.2f}%  "
        "AUC {auc:.4f}  MPJAE {mpjae:.2f}deg  MPJAE_PA {mpjae_pa:.2f}deg".format(**metrics)
    )


if __name__ == "__main__":
    sys.exit(main())
