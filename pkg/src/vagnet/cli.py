"""Operator entry point: train, eval, infer, flops, and synth subcommands.

Exit codes are a stable contract for automation: 0 success, 2 for any input,
format, or configuration problem, 3 for a numeric failure (NaN/Inf). Every
run prints its resolved configuration to stderr before doing work. The
VAGNET_THREADS environment variable caps the eval scoring worker threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, metrics, model, training
from ._kernels import backend
from .errors import InputError, NumericError


def _print_config(args: argparse.Namespace, extra: dict | None = None) -> None:
    doc = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in sorted(vars(args).items()) if k != "func"}
    doc.update(extra or {})
    doc["kernel_backend"] = backend()
    print(f"resolved config: {json.dumps(doc, sort_keys=True)}", file=sys.stderr)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d-model", type=int, default=256, help="head width")
    p.add_argument("--u", type=int, default=15,
                   help="window lookback: frames before the current one")
    p.add_argument("--v", type=int, default=20,
                   help="temporal neighbors in the frame graph")
    p.add_argument("--layers", type=int, default=2, help="encoder layers")
    p.add_argument("--heads", type=int, default=4, help="attention heads")
    p.add_argument("--d-hidden", type=int, default=128, help="classifier hidden width")
    p.add_argument("--no-positional-encoding", action="store_true",
                   help="disable the sinusoidal position table")


def _model_config(args: argparse.Namespace, d_in: int) -> model.ModelConfig:
    return model.ModelConfig(
        d_in=d_in, d_model=args.d_model, layers=args.layers, heads=args.heads,
        lookback=args.u, neighbors=args.v, d_hidden=args.d_hidden,
        positional_encoding=not args.no_positional_encoding)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("VAGNET_THREADS", "1")))
    except ValueError:
        return 1


# --- subcommands ----------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    manifest = dataio.load_manifest(args.manifest)
    train_entries = manifest.split("train")
    if not train_entries:
        raise InputError(f"{args.manifest}: no entries tagged split=train")
    clips = [e.load() for e in train_entries]
    val_clips = [e.load() for e in manifest.split("test")]
    config = _model_config(args, d_in=clips[0].D)
    tcfg = training.TrainConfig(epochs=args.epochs, lr=args.lr, seed=args.seed,
                                eval_every=args.eval_every,
                                checkpoint_dir=args.out)
    _print_config(args, {"d_in": clips[0].D, "train_clips": len(clips),
                         "val_clips": len(val_clips)})
    _, log = training.train(clips, config, tcfg, val_dataset=val_clips or None)
    print(f"trained {args.epochs} epochs over {len(clips)} clips; "
          f"final mean loss {log.epoch_losses[-1]:.6f}")
    print(f"checkpoint: {Path(args.out) / 'checkpoint.vagw'}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config, params = dataio.read_checkpoint(args.checkpoint)
    manifest = dataio.load_manifest(args.manifest)
    entries = manifest.split(args.split) if args.split else manifest.entries
    if not entries:
        raise InputError(f"{args.manifest}: no entries for split {args.split!r}")
    clips = [e.load() for e in entries]
    dims = {c.D for c in clips}
    if dims != {config.d_in}:
        raise InputError(f"checkpoint expects d_in={config.d_in} but manifest "
                         f"features have D={sorted(dims)}")
    _print_config(args, {"model": config.to_dict(), "clips": len(clips)})
    grid = metrics.default_threshold_grid(args.grid)
    scored = training.score_clips(params, config, clips, max_workers=_threads())
    report = metrics.evaluate(scored, grid=grid)
    if args.out:
        report.write(args.out)
    print(f"AP={report.ap:.4f} mTTA={report.mtta:.3f}s")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    config, params = dataio.read_checkpoint(args.checkpoint)
    clip = dataio.read_features(args.features)
    if clip.D != config.d_in:
        raise InputError(f"checkpoint expects d_in={config.d_in} but features "
                         f"have D={clip.D}")
    _print_config(args, {"model": config.to_dict(), "frames": clip.T})
    t0 = time.perf_counter()
    if args.stream:
        # causality makes prefix scoring exact: frame t only sees frames <= t
        for t in range(clip.T):
            prefix = dataio.FeatureSequence(
                data=clip.data[: t + 1], fps=clip.fps, label=0, tau=None,
                group_id=clip.group_id)
            prob = model.forward(prefix, params, config).probs[-1]
            print(f"{t} {prob:.6f}", flush=True)
    else:
        trace = model.forward(clip, params, config)
        for t, prob in enumerate(trace.probs):
            print(f"{t} {prob:.6f}")
    if args.timing:
        ms = (time.perf_counter() - t0) * 1000.0 / clip.T
        print(f"timing: {ms:.3f} ms/frame head inference ({backend()} kernels, "
              f"{'streaming' if args.stream else 'batch'})", file=sys.stderr)
    return 0


def cmd_flops(args: argparse.Namespace) -> int:
    config = _model_config(args, d_in=args.d_in)
    _print_config(args)
    breakdown = model.flop_breakdown(config, frames=args.frames)
    print(f"{'stage':<12} {'GFLOPs/frame':>12}")
    for name, flops in breakdown.stages():
        print(f"{name:<12} {flops / 1e9:>12.3f}")
    print(f"{'total':<12} {breakdown.total / 1e9:>12.3f}")
    print("head only; backbone feature extraction is not included")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = dataio.SyntheticSpec(n_clips=args.n_clips, dim=args.dim,
                                frames=args.frames, fps=args.fps, seed=args.seed,
                                drift=args.drift, noise=args.noise)
    _print_config(args)
    manifest = dataio.synth_to_dir(spec, args.out, test_fraction=args.test_frac)
    print(f"wrote {args.n_clips} clips and {manifest}")
    return 0


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vagnet",
        description="Accident-anticipation head over dash-cam feature files.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a manifest's train split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for checkpoint and log")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--eval-every", type=int, default=0,
                   help="epochs between validation passes (0 = off)")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", default=None, help="report file (JSON)")
    p.add_argument("--split", default="test")
    p.add_argument("--grid", type=int, default=99,
                   help="number of evenly spaced TTA thresholds")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="print the per-frame risk trace of one file")
    p.add_argument("features", help="a VAGF feature file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stream", action="store_true",
                   help="emit each frame as soon as its window is available")
    p.add_argument("--timing", action="store_true",
                   help="report measured ms/frame on stderr")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("flops", help="analytic per-frame FLOP table for the head")
    p.add_argument("--d-in", type=int, default=768, help="backbone feature width")
    p.add_argument("--frames", type=int, default=50, help="clip length in frames")
    _add_model_flags(p)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("synth", help="generate a synthetic dataset + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--n-clips", type=int, default=200)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--drift", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--test-frac", type=float, default=0.2)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
