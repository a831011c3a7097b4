"""Command-line entry point.

Subcommands:
    simulate     render a synthetic scene and generate events from it
    reconstruct  train networks on events and emit frames + checkpoints
    enhance      emit derivative-based denoised event frames
    evaluate     score prediction frames against reference frames
    selftest     run the closed-loop verification pipeline

Every run writes a manifest JSON next to its outputs with the resolved
configuration, seeds, and versions, sufficient to reproduce it exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EvreconError, InvalidDimensions
from .events import (
    FrameTimestamps,
    parse_events,
    read_times,
    write_events,
    write_times,
)
from .pgm import read_frame_dir, write_frame_dir
from .reconstruct import (
    LogVideo,
    ToneMapConfig,
    anchor_offset,
    enhance_events,
    enhancement_to_bytes,
    sample_video,
    tone_map,
)
from .metrics import evaluate_frames
from .simulate import SCENE_KINDS, SimConfig, log_intensity, render_scene, simulate_events
from .siren import load_checkpoint, save_checkpoint
from .training import Partition, TrainConfig, train_ensemble


@dataclass
class RunManifest:
    """Reproducibility record written atomically alongside outputs."""

    subcommand: str
    config: dict
    inputs: list
    outputs: list
    seed: int | None
    versions: dict
    wall_clock_s: float
    created_unix: float

    def write(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        tmp.replace(path)


def _manifest(subcommand, config, inputs, outputs, seed, started) -> RunManifest:
    return RunManifest(
        subcommand=subcommand,
        config=config,
        inputs=[str(p) for p in inputs],
        outputs=[str(p) for p in outputs],
        seed=seed,
        versions={
            "evrecon": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        wall_clock_s=time.perf_counter() - started,
        created_unix=time.time(),
    )


def _manifest_path(out) -> Path:
    out = Path(out)
    if out.suffix:  # file target: manifest is a sibling
        return out.parent / (out.name + ".manifest.json")
    return out / "manifest.json"


# -- config file -------------------------------------------------------------

_TUPLE_KEYS = {"refine_at_iters"}
_INT_KEYS = {
    "stages_s", "total_iters", "lr_decay_every", "seed",
    "hidden_features", "hidden_layers",
}


def parse_config_file(path) -> dict:
    """Read the flat `key = value` training-config format.

    Blank lines and `#` comments are ignored. Values: numbers, `all`
    (full-batch), or comma-separated integer lists (refine_at_iters).
    Keys mirror TrainConfig fields.
    """
    known = {f.name for f in fields(TrainConfig)}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in _TUPLE_KEYS:
            out[key] = tuple(int(v) for v in val.split(",") if v.strip()) if val else ()
        elif key == "batch_frames":
            out[key] = None if val == "all" else int(val)
        elif key in _INT_KEYS:
            out[key] = int(val)
        else:
            out[key] = float(val)
    return out


def _train_config(args) -> TrainConfig:
    kw = parse_config_file(args.config) if args.config else {}
    if getattr(args, "threshold", None) is not None:
        kw["threshold_C"] = args.threshold
    if getattr(args, "lambda_reg", None) is not None:
        kw["lambda_reg"] = args.lambda_reg
    if args.seed is not None:
        kw["seed"] = args.seed
    return TrainConfig(**kw)


def _parse_size(text: str) -> tuple:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise InvalidDimensions(f"--size expects WxH, got {text!r}") from None
    return w, h


def _read_stream(args):
    return parse_events(
        Path(args.events).read_text(),
        polarity_encoding=args.polarity,
        width=args.width,
        height=args.height,
    )


def _requested_times(args, t_start, t_end) -> FrameTimestamps:
    if args.timestamps:
        return read_times(args.timestamps)
    fps = args.fps or 30.0
    n = max(2, int(math.floor((t_end - t_start) * fps)) + 1)
    return FrameTimestamps(t_start + np.arange(n) / fps)


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    w, h = _parse_size(args.size)
    video = render_scene(args.scene, w, h, args.duration, args.fps, seed=args.seed or 0)
    sim = SimConfig(
        threshold_C=args.threshold,
        noise_rate=args.noise,
        rng_seed=args.seed or 0,
    )
    stream = simulate_events(video, sim)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(write_events(stream, polarity_encoding=args.polarity))
    outputs = [out]
    if args.dump_frames:
        bytes_ = tone_map(LogVideo(log_intensity(video, sim.log_eps), video.times),
                          ToneMapConfig(args.gamma))
        write_frame_dir(args.dump_frames, bytes_, video.times)
        outputs.append(args.dump_frames)
    cfg = {
        "scene": args.scene, "size": args.size, "duration": args.duration,
        "fps": args.fps, "threshold_C": args.threshold, "noise_rate": args.noise,
        "polarity": args.polarity, "events": len(stream),
    }
    _manifest("simulate", cfg, [], outputs, args.seed, started).write(_manifest_path(out))
    print(f"simulate: wrote {len(stream)} events to {out}")
    return 0


def _write_partitions(partitions, out_dir: Path) -> list:
    meta = []
    for p in partitions:
        name = f"partition_{p.index:03d}.npz"
        save_checkpoint(p.model, out_dir / name)
        meta.append({
            "index": p.index,
            "core_span": list(p.core_span),
            "span": list(p.span),
            "checkpoint": name,
        })
        if p.report is not None:
            with open(out_dir / f"report_{p.index:03d}.csv", "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["iteration", "temporal", "regularization", "total", "stack_T"])
                for i, (lt, lr, tot, t_sz) in enumerate(
                    zip(p.report.temporal, p.report.regularization,
                        p.report.total, p.report.stack_sizes)
                ):
                    wr.writerow([i, f"{lt:.12g}", f"{lr:.12g}", f"{tot:.12g}", t_sz])
    (out_dir / "partitions.json").write_text(json.dumps(meta, indent=2) + "\n")
    return [out_dir / m["checkpoint"] for m in meta]


def load_partitions(run_dir) -> list:
    """Rehydrate trained partitions from a reconstruct output directory."""
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / "partitions.json").read_text())
    return [
        Partition(
            index=m["index"],
            core_span=tuple(m["core_span"]),
            span=tuple(m["span"]),
            model=load_checkpoint(run_dir / m["checkpoint"]),
        )
        for m in meta
    ]


def cmd_reconstruct(args) -> int:
    started = time.perf_counter()
    stream = _read_stream(args)
    cfg = _train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    partitions = train_ensemble(stream, cfg, threads=args.threads)
    outputs = _write_partitions(partitions, out)

    times = _requested_times(args, stream.t_start, stream.t_end)
    video = anchor_offset(sample_video(partitions, times))
    bytes_ = tone_map(video, ToneMapConfig(args.gamma))
    write_frame_dir(out, bytes_, times.times)
    outputs.append(out / "times.txt")
    _manifest(
        "reconstruct",
        {**{f.name: getattr(cfg, f.name) for f in fields(TrainConfig)},
         "gamma": args.gamma, "frames": len(times), "threads": args.threads},
        [args.events],
        outputs,
        cfg.seed,
        started,
    ).write(_manifest_path(out))
    print(f"reconstruct: trained {len(partitions)} partition(s), "
          f"wrote {len(times)} frames to {out}")
    return 0


def cmd_enhance(args) -> int:
    started = time.perf_counter()
    if args.checkpoints:
        partitions = load_partitions(args.checkpoints)
        t_lo = partitions[0].span[0]
        t_hi = partitions[-1].span[1]
        inputs = [args.checkpoints]
    else:
        if not args.events:
            print("enhance: need --events (to train) or --checkpoints", file=sys.stderr)
            return 2
        stream = _read_stream(args)
        cfg = _train_config(args)
        partitions = train_ensemble(stream, cfg, threads=args.threads)
        t_lo, t_hi = stream.t_start, stream.t_end
        inputs = [args.events]
    times = _requested_times(args, t_lo, t_hi)
    grids = enhance_events(partitions, times, args.window_dt)
    out = Path(args.out)
    bytes_ = enhancement_to_bytes(grids, scale=args.scale)
    write_frame_dir(out, bytes_, times.times)
    _manifest(
        "enhance",
        {"window_dt": args.window_dt, "scale": args.scale, "frames": len(times)},
        inputs,
        [out],
        args.seed,
        started,
    ).write(_manifest_path(out))
    print(f"enhance: wrote {len(times)} enhancement frames to {out}")
    return 0


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    pred, pred_times = read_frame_dir(args.pred)
    ref, _ = read_frame_dir(args.ref)
    report = evaluate_frames(pred, ref, times=pred_times, apply_clahe=not args.no_clahe)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["frame_index", "time", "mse", "ssim"])
        for i, (t, m, s) in enumerate(
            zip(report.times, report.mse_per_frame, report.ssim_per_frame)
        ):
            wr.writerow([i, f"{t:.9f}", f"{m:.9g}", f"{s:.9g}"])
    _manifest(
        "evaluate",
        {"clahe": report.clahe_applied, "frames": report.num_frames},
        [args.pred, args.ref],
        [out],
        None,
        started,
    ).write(_manifest_path(out))
    print(f"evaluate: {report.num_frames} frames  "
          f"mean MSE {report.mean_mse:.6f}  mean SSIM {report.mean_ssim:.6f}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest(quick=args.quick, threads=args.threads, out=args.out)
    width = max(len(r.name) for r in results)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:<{width}}  {r.detail}")
        ok &= r.passed
    print("selftest:", "all checks passed" if ok else "FAILURES above")
    return 0 if ok else 1


# -- argument parsing --------------------------------------------------------


def _add_common(p, seed_default=None):
    p.add_argument("--seed", type=int, default=seed_default, help="RNG seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for independent partitions")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="evrecon",
        description="Self-supervised event-to-video reconstruction toolkit",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="render a scene and generate events")
    ps.add_argument("--scene", choices=SCENE_KINDS, default="translating_gradient")
    ps.add_argument("--size", default="64x64", help="sensor size WxH")
    ps.add_argument("--duration", type=float, default=2.0, help="seconds")
    ps.add_argument("--fps", type=float, default=240.0, help="render rate")
    ps.add_argument("--threshold", type=float, default=0.25, help="contrast threshold C")
    ps.add_argument("--noise", type=float, default=0.0, help="noise events/pixel/s")
    ps.add_argument("--polarity", choices=("signed", "zero_one"), default="zero_one")
    ps.add_argument("--gamma", type=float, default=0.6, help="tone-map gamma for dumps")
    ps.add_argument("--dump-frames", default=None, help="also dump rendered frames here")
    ps.add_argument("--out", required=True, help="output events text file")
    _add_common(ps)
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("reconstruct", help="train on events, emit frames")
    pr.add_argument("--events", required=True, help="input events text file")
    pr.add_argument("--config", default=None, help="training config file")
    pr.add_argument("--polarity", choices=("signed", "zero_one"), default="zero_one")
    pr.add_argument("--width", type=int, default=None, help="sensor width override")
    pr.add_argument("--height", type=int, default=None, help="sensor height override")
    pr.add_argument("--threshold", type=float, default=None, help="contrast threshold C")
    pr.add_argument("--lambda", dest="lambda_reg", type=float, default=None,
                    help="spatial regularization weight")
    pr.add_argument("--timestamps", default=None, help="times.txt of output frames")
    pr.add_argument("--fps", type=float, default=None, help="output frame rate")
    pr.add_argument("--gamma", type=float, default=0.6, help="tone-map gamma")
    pr.add_argument("--out", required=True, help="output directory")
    _add_common(pr)
    pr.set_defaults(func=cmd_reconstruct)

    pe = sub.add_parser("enhance", help="derivative-based event enhancement")
    pe.add_argument("--events", default=None, help="events file (trains first)")
    pe.add_argument("--checkpoints", default=None, help="reconstruct output dir to reuse")
    pe.add_argument("--config", default=None, help="training config file")
    pe.add_argument("--polarity", choices=("signed", "zero_one"), default="zero_one")
    pe.add_argument("--width", type=int, default=None)
    pe.add_argument("--height", type=int, default=None)
    pe.add_argument("--threshold", type=float, default=None)
    pe.add_argument("--window-dt", dest="window_dt", type=float, required=True,
                    help="time window the enhanced frames represent (seconds)")
    pe.add_argument("--scale", type=float, default=None, help="gray mapping full scale")
    pe.add_argument("--timestamps", default=None)
    pe.add_argument("--fps", type=float, default=None)
    pe.add_argument("--out", required=True, help="output directory")
    _add_common(pe)
    pe.set_defaults(func=cmd_enhance)

    pv = sub.add_parser("evaluate", help="score prediction frames against reference")
    pv.add_argument("--pred", required=True, help="prediction frame directory")
    pv.add_argument("--ref", required=True, help="reference frame directory")
    pv.add_argument("--no-clahe", action="store_true", help="skip CLAHE preprocessing")
    pv.add_argument("--out", required=True, help="output CSV path")
    pv.set_defaults(func=cmd_evaluate)

    pt = sub.add_parser("selftest", help="closed-loop verification")
    pt.add_argument("--quick", action="store_true",
                    help="reduced fixture and relaxed thresholds, finishes fast")
    pt.add_argument("--out", default=None, help="directory for artifacts (optional)")
    _add_common(pt)
    pt.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EvreconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
