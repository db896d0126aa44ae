"""Command-line driver.

Subcommands: render, optimize, judge, compare, gradcheck, consistency,
gen-data.  Every run echoes its fully resolved config into the output
directory, errors leave as one machine-readable JSON line on stderr, and
exit codes are scriptable: 0 ok, 2 validation, 3 judge, 4 numeric, 5
gradcheck failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import load_config
from .datagen import generate
from .dataset import serialize_csv
from .errors import JudgeError, NumericError, ValidationError, VizgradError
from .image import encode_png, write_vgimg
from .optim import (
    Objective,
    evaluate_consistency,
    gradcheck,
    optimize_comparative,
    optimize_gradient,
    optimize_spsa,
)
from .params import ParamVector, constrain, harden
from .render import render

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_JUDGE = 3
EXIT_NUMERIC = 4
EXIT_GRADCHECK = 5

OPTIMIZERS = {
    "gradient": optimize_gradient,
    "spsa": optimize_spsa,
    "comparative": optimize_comparative,
}


def _exit_code(e: Exception) -> int:
    if isinstance(e, NumericError):
        return EXIT_NUMERIC
    if isinstance(e, JudgeError):
        return EXIT_JUDGE
    return EXIT_VALIDATION


def _emit_error(e: Exception) -> None:
    line = json.dumps({"error": type(e).__name__, "message": str(e)}, sort_keys=True)
    print(line, file=sys.stderr)


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _prepare_outdir(cfg) -> str:
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "resolved.json"), cfg.resolved())
    return out


def _hard_realized(cfg, raw: np.ndarray):
    """Zero-noise, hardened realization: the committed design at raw."""
    return harden(constrain(ParamVector(cfg.schema, np.asarray(raw, dtype=np.float64))))


def _render_at(cfg, dataset, raw: np.ndarray):
    realized = _hard_realized(cfg, raw)
    img = render(dataset, cfg.spec, realized, smoothing=cfg.smoothing,
                 threads=cfg.effective_threads(), marks_only=cfg.marks_only)
    return img, realized


def _write_image(img, out: str, stem: str, vgimg: bool = False) -> None:
    with open(os.path.join(out, f"{stem}.png"), "wb") as f:
        f.write(encode_png(img))
    if vgimg:
        write_vgimg(img, os.path.join(out, f"{stem}.vgimg"))


def _realized_json(realized) -> dict:
    out = {}
    for s in realized.schema.specs:
        v = realized.values[s.name]
        if isinstance(v, (int, np.integer)):
            out[s.name] = int(v)
        elif isinstance(v, np.ndarray):
            out[s.name] = [float(x) for x in v]
        else:
            out[s.name] = float(v)
    return out


def _objective(cfg, dataset, judge) -> Objective:
    return Objective(dataset=dataset, spec=cfg.spec, judge=judge, goal=cfg.goal,
                     penalty_weight=cfg.penalty_weight, smoothing=cfg.smoothing,
                     marks_only=cfg.marks_only)


def run_render(cfg) -> int:
    out = _prepare_outdir(cfg)
    dataset = cfg.load_dataset()
    img, _ = _render_at(cfg, dataset, cfg.init_raw)
    _write_image(img, out, "chart", vgimg=True)
    return EXIT_OK


def run_judge(cfg, args) -> int:
    out = _prepare_outdir(cfg)
    dataset = cfg.load_dataset()
    judge = cfg.build_judge(args.transcript, _transcript_mode(args))
    if getattr(judge, "comparative", False):
        raise ValidationError("judge subcommand needs a scoring judge; use compare")
    img, _ = _render_at(cfg, dataset, cfg.init_raw)
    j = judge.judge(img)
    _write_image(img, out, "chart")
    _write_json(os.path.join(out, "judgment.json"),
                {"score": j.score, "rationale": j.rationale})
    return EXIT_OK


def run_compare(cfg, args) -> int:
    if cfg.compare_raw is None:
        raise ValidationError("compare needs 'compare_raw' in the config")
    out = _prepare_outdir(cfg)
    dataset = cfg.load_dataset()
    judge = cfg.build_judge(args.transcript, _transcript_mode(args))
    if not getattr(judge, "comparative", False):
        raise ValidationError("compare subcommand needs a comparative judge")
    img_a, _ = _render_at(cfg, dataset, cfg.init_raw)
    img_b, _ = _render_at(cfg, dataset, cfg.compare_raw)
    pref = judge.compare(img_a, img_b)
    _write_image(img_a, out, "first")
    _write_image(img_b, out, "second")
    _write_json(os.path.join(out, "preference.json"),
                {"choice": pref.choice, "confidence": pref.confidence})
    return EXIT_OK


def run_optimize(cfg, args) -> int:
    out = _prepare_outdir(cfg)
    dataset = cfg.load_dataset()
    judge = cfg.build_judge(args.transcript, _transcript_mode(args))
    obj = _objective(cfg, dataset, judge)
    p0 = cfg.initial_point()
    threads = cfg.effective_threads()

    img0, _ = _render_at(cfg, dataset, cfg.init_raw)
    _write_image(img0, out, "initial")

    trace = OPTIMIZERS[cfg.optimizer.kind](obj, p0, cfg.optimizer, threads=threads)

    best_raw = trace.best_raw if trace.best_raw is not None else cfg.init_raw
    img_best, best_realized = _render_at(cfg, dataset, best_raw)
    _write_image(img_best, out, "best")
    trace.write_jsonl(os.path.join(out, "trace.jsonl"))
    summary = trace.summary()
    summary["best_raw"] = [float(v) for v in best_raw]
    summary["hardened_params"] = _realized_json(best_realized)
    _write_json(os.path.join(out, "summary.json"), summary)

    if trace.status == "error" and trace.error:
        kind = trace.error.split(":", 1)[0]
        return EXIT_NUMERIC if kind == "NumericError" else EXIT_JUDGE
    return EXIT_OK


def run_gradcheck(cfg, args) -> int:
    if not cfg.has_params:
        raise ValidationError("nothing to check: the config declares no parameters")
    out = _prepare_outdir(cfg)
    dataset = cfg.load_dataset()
    judge = cfg.build_judge(args.transcript, _transcript_mode(args))
    obj = _objective(cfg, dataset, judge)
    report = gradcheck(obj, cfg.initial_point(), seed=cfg.seed, h=args.step,
                       threads=cfg.effective_threads())
    _write_json(os.path.join(out, "gradcheck.json"), report)
    return EXIT_OK if report["pass"] else EXIT_GRADCHECK


def run_consistency(cfg, args) -> int:
    out = _prepare_outdir(cfg)
    dataset = cfg.load_dataset()
    judge = cfg.build_judge(args.transcript, _transcript_mode(args))
    obj = _objective(cfg, dataset, judge)
    report = evaluate_consistency(obj, cfg.initial_point(), args.replicates,
                                  seed=cfg.seed, threads=cfg.effective_threads())
    _write_json(os.path.join(out, "consistency.json"), report)
    return EXIT_JUDGE if report["incomplete"] else EXIT_OK


def run_gen_data(args) -> int:
    kwargs = {}
    if args.kind == "blobs":
        kwargs = {"blobs": args.blobs, "spread": args.spread}
    elif args.kind == "correlated":
        kwargs = {"rho": args.rho}
    d = generate(args.kind, args.n, args.seed, **kwargs)
    text = serialize_csv(d)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        parent = os.path.dirname(os.path.abspath(args.out))
        os.makedirs(parent, exist_ok=True)
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    return EXIT_OK


def _transcript_mode(args) -> str | None:
    if getattr(args, "record", False) and getattr(args, "replay", False):
        raise ValidationError("--record and --replay are mutually exclusive")
    if getattr(args, "record", False):
        return "record"
    if getattr(args, "replay", False):
        return "replay"
    return None


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="JSON run config")
    sub.add_argument("--seed", type=int, default=None, help="override config seed")
    sub.add_argument("--threads", type=int, default=None, help="override config threads")
    sub.add_argument("--out", default=None, help="override config output_dir")
    sub.add_argument("--transcript", default=None, help="judge transcript JSONL path")
    sub.add_argument("--record", action="store_true", help="record remote replies")
    sub.add_argument("--replay", action="store_true", help="replay recorded replies")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="vizgrad",
        description="Optimize visualization parameters against a judged goal.",
    )
    sp = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("render", "rasterize the configured chart"),
        ("optimize", "run the configured optimizer"),
        ("judge", "score the configured chart"),
        ("compare", "compare init_raw against compare_raw"),
        ("gradcheck", "audit gradients against finite differences"),
        ("consistency", "bootstrap-stability report"),
    ):
        sub = sp.add_parser(name, help=helptext)
        _add_common(sub)
        if name == "gradcheck":
            sub.add_argument("--step", type=float, default=1e-3,
                             help="finite-difference step")
        if name == "consistency":
            sub.add_argument("--replicates", type=int, default=20,
                             help="bootstrap replicate count")
    g = sp.add_parser("gen-data", help="write a synthetic dataset CSV")
    g.add_argument("--kind", required=True, choices=("blobs", "correlated", "uniform"))
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="CSV path, or - for stdout")
    g.add_argument("--blobs", type=int, default=3)
    g.add_argument("--spread", type=float, default=0.08)
    g.add_argument("--rho", type=float, default=0.8)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-data":
            return run_gen_data(args)
        cfg = load_config(args.config, seed=args.seed, threads=args.threads)
        if args.out is not None:
            cfg.output_dir = args.out
            cfg.doc["output_dir"] = args.out
        if args.transcript is not None and _transcript_mode(args) is None:
            raise ValidationError("--transcript needs --record or --replay")
        if args.command == "render":
            return run_render(cfg)
        if args.command == "optimize":
            return run_optimize(cfg, args)
        if args.command == "judge":
            return run_judge(cfg, args)
        if args.command == "compare":
            return run_compare(cfg, args)
        if args.command == "gradcheck":
            return run_gradcheck(cfg, args)
        if args.command == "consistency":
            return run_consistency(cfg, args)
        raise ValidationError(f"unknown command {args.command!r}")
    except VizgradError as e:
        _emit_error(e)
        return _exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
