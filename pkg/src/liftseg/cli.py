"""Command-line interface.

Subcommands: lift-gabor, lift-cnn, segment, evaluate, pipeline.
Exit codes: 0 success, 2 usage/validation error, 3 numerical failure.
Validation happens before any output file is created; only the pipeline
command retains partial outputs (with a "failed_stage" report entry).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from liftseg import __version__
from liftseg.cnn import CnnConfig, train_decomposition
from liftseg.energy import energy
from liftseg.errors import NumericalError, ValidationError
from liftseg.fileio import (
    load_image,
    load_label_map,
    read_feature_stack,
    save_label_png,
    save_overlay_png,
    write_feature_stack,
    write_network_params,
)
from liftseg.gabor import GaborSpec, lift_gabor
from liftseg.metrics import evaluate, extract_labels, render_overlay
from liftseg.model import SolverConfig
from liftseg.solver import feature_init, primal_dual_segment


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_loss_trace(path, trace):
    with open(path, "w") as fh:
        fh.write("iteration,loss\n")
        for i, value in enumerate(trace):
            fh.write(f"{i},{value!r}\n")


def _load_spec_file(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read spec {path}: {exc}") from exc
    return GaborSpec.from_json(text)


def cmd_lift_gabor(args):
    spec = _load_spec_file(args.spec)
    image = load_image(args.input)
    stack = lift_gabor(image, spec)
    write_feature_stack(args.output, stack)
    return 0


def cmd_lift_cnn(args):
    config = CnnConfig(
        k=args.k,
        alpha1=args.alpha1,
        alpha2=args.alpha2,
        iterations=args.iters,
        learning_rate=args.lr,
        seed=args.seed,
    )
    image = load_image(args.input)
    params, stack, trace = train_decomposition(image, config)
    write_feature_stack(args.output, stack)
    if args.save_params:
        write_network_params(args.save_params, params)
    if args.loss_trace:
        _write_loss_trace(args.loss_trace, trace)
    return 0


def _segment_stack(stack, config, init):
    u0 = np.zeros_like(stack) if init == "zero" else feature_init(stack)
    start = time.perf_counter()
    u, constants, trace = primal_dual_segment(stack, config, u0=u0)
    runtime = time.perf_counter() - start
    labels = extract_labels(u)
    breakdown = energy(u, stack, config.lam)
    report = {
        "k": int(stack.shape[0]),
        "height": int(stack.shape[1]),
        "width": int(stack.shape[2]),
        "energy": breakdown.to_dict(),
        "trace": trace.to_dict(),
        "runtime_seconds": runtime,
        "solver_config": config.to_dict(),
    }
    return u, labels, report


def cmd_segment(args):
    if not args.lam > 0:
        raise ValidationError("lambda must be > 0")
    if args.max_iter < 1:
        raise ValidationError("max-iter must be >= 1")
    config = SolverConfig(lam=args.lam, max_iter=args.max_iter, tol=args.tol)
    stack = read_feature_stack(args.features)
    u, labels, report = _segment_stack(stack, config, args.init)
    if args.output_labels:
        save_label_png(labels, args.output_labels)
    if args.output_soft:
        write_feature_stack(args.output_soft, u)
    if args.report:
        _write_json(args.report, report)
    return 0


def cmd_evaluate(args):
    pred = load_label_map(args.pred)
    truth = load_label_map(args.truth)
    matching = "best-permutation" if args.matching == "best" else args.matching
    report = evaluate(pred, truth, matching)
    payload = report.to_dict()
    payload["matching"] = matching
    _write_json(args.report, payload)
    return 0


def _pipeline_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed config JSON: {exc}") from exc
    lifting = cfg.get("lifting")
    if lifting not in ("gabor", "cnn"):
        raise ValidationError('config "lifting" must be "gabor" or "cnn"')
    if lifting == "gabor":
        if "gabor_spec" not in cfg:
            raise ValidationError('gabor lifting requires a "gabor_spec" entry')
        spec = GaborSpec.from_dict(cfg["gabor_spec"])
        cnn_cfg = None
    else:
        spec = None
        cnn_cfg = CnnConfig.from_dict(cfg.get("cnn", {}))
    solver_cfg = SolverConfig.from_dict(cfg.get("solver", {}))
    init = cfg.get("init", "features")
    if init not in ("features", "zero"):
        raise ValidationError('config "init" must be "features" or "zero"')
    truth = cfg.get("truth")
    return lifting, spec, cnn_cfg, solver_cfg, init, truth


def cmd_pipeline(args):
    lifting, spec, cnn_cfg, solver_cfg, init, truth_path = _pipeline_config(args.config)
    image = load_image(args.input)
    truth = load_label_map(truth_path) if truth_path else None

    outdir = Path(args.outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise ValidationError(f"output directory not writable: {exc}") from exc

    report = {"input": str(args.input), "lifting": lifting}
    report_path = outdir / "report.json"

    def fail(stage, exc, code):
        report["failed_stage"] = stage
        report["error"] = str(exc)
        _write_json(report_path, report)
        print(f"error in stage {stage}: {exc}", file=sys.stderr)
        return code

    try:
        if lifting == "gabor":
            stack = lift_gabor(image, spec)
        else:
            _, stack, trace = train_decomposition(image, cnn_cfg)
            report["final_loss"] = trace[-1]
        write_feature_stack(outdir / "features.fstk", stack)
    except ValidationError as exc:
        return fail("lifting", exc, 2)
    except NumericalError as exc:
        return fail("lifting", exc, 3)

    try:
        u, labels, seg_report = _segment_stack(stack, solver_cfg, init)
        report.update(seg_report)
        write_feature_stack(outdir / "soft_labels.fstk", u)
        save_label_png(labels, outdir / "labels.png")
        save_overlay_png(render_overlay(image, labels), outdir / "overlay.png")
    except ValidationError as exc:
        return fail("segment", exc, 2)
    except NumericalError as exc:
        return fail("segment", exc, 3)

    if truth is not None:
        try:
            ev = evaluate(labels, truth, "best-permutation")
            payload = ev.to_dict()
            payload["matching"] = "best-permutation"
            report["evaluation"] = payload
        except ValidationError as exc:
            return fail("evaluate", exc, 2)

    _write_json(report_path, report)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="liftseg",
        description="Unsupervised multiphase segmentation via feature lifting "
                    "and primal-dual TV minimization.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lift-gabor", help="lift an image with a Gabor filter bank")
    p.add_argument("--input", required=True, help="PNG or PGM image")
    p.add_argument("--spec", required=True, help="filter bank JSON")
    p.add_argument("--output", required=True, help="output FSTK path")
    p.set_defaults(func=cmd_lift_gabor)

    p = sub.add_parser("lift-cnn", help="lift an image with a per-image trained network")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--alpha1", type=float, default=0.25)
    p.add_argument("--alpha2", type=float, default=0.25)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="output FSTK path")
    p.add_argument("--save-params", help="optional network parameter file")
    p.add_argument("--loss-trace", help="optional CSV loss trace")
    p.set_defaults(func=cmd_lift_cnn)

    p = sub.add_parser("segment", help="segment a feature stack")
    p.add_argument("--features", required=True, help="input FSTK path")
    p.add_argument("--lambda", dest="lam", type=float, default=0.2)
    p.add_argument("--max-iter", type=int, default=3000)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--init", choices=["features", "zero"], default="features")
    p.add_argument("--output-labels", help="label map PNG")
    p.add_argument("--output-soft", help="soft labels FSTK")
    p.add_argument("--report", help="JSON report path")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("evaluate", help="compare predicted and truth label maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--matching", choices=["fixed", "best"], default="best")
    p.add_argument("--report", required=True, help="JSON report path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="lift, segment, and optionally evaluate")
    p.add_argument("--input", required=True)
    p.add_argument("--config", required=True, help="pipeline JSON config")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
