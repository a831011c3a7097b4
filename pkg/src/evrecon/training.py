"""Fit time -> frame networks to event-frame stacks.

The objective per iteration is

    L = L_temp + lambda * L_reg

where L_temp is the mean squared residual between each bin's accumulated
log-intensity change and the network's time derivative at the bin midpoint
times the bin duration, and L_reg penalizes spatial forward differences of
the emitted frames. Both are means over pixels and sampled bins, so the
regularization weight transfers across resolutions.

Training is coarse-to-fine: the stack starts at the configured uniform bin
width and is bisected at the scheduled iterations, doubling its temporal
resolution each time. Long streams are cut into fixed-length partitions
(one independent network each, trainable in parallel) whose spans overlap
so reconstruction can stitch them seamlessly.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateFrame, DivergedTraining, IndexOutOfRange
from .events import EventStream
from .frames import EventFrameStack, refine_bins, stack_uniform
from .siren import AdamState, SirenModel, adam_step, init_siren

_DIVERGENCE_FACTOR = 1e6


@dataclass
class TrainConfig:
    """Hyper-parameters of the optimization.

    Defaults: contrast threshold 1.0 (0.25 suits low-threshold sensors),
    1/32 s initial bins refined at iterations 100 and 200 (3 stages), 300
    Adam iterations at lr 1e-4 decayed by 0.95 every 10 steps, spatial
    weight 0.05, 5 s partitions with 0.5 s overlap, full-batch sampling.
    """

    lambda_reg: float = 0.05
    threshold_C: float = 1.0
    initial_bin: float = 1.0 / 32.0
    stages_s: int = 3
    refine_at_iters: tuple = (100, 200)
    total_iters: int = 300
    lr: float = 1e-4
    lr_decay: float = 0.95
    lr_decay_every: int = 10
    partition_tau: float = 5.0
    overlap: float = 0.5
    batch_frames: int | None = None  # None = all frames every iteration
    seed: int = 0
    hidden_features: int = 512
    hidden_layers: int = 3
    omega0: float = 30.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        self.refine_at_iters = tuple(int(i) for i in self.refine_at_iters)
        if self.lambda_reg < 0:
            raise ValueError("lambda_reg must be >= 0")
        if self.threshold_C <= 0 or self.initial_bin <= 0:
            raise ValueError("threshold_C and initial_bin must be positive")
        if self.stages_s < 1:
            raise ValueError("stages_s must be >= 1")
        if len(self.refine_at_iters) != self.stages_s - 1:
            raise ValueError("refine_at_iters must list stages_s - 1 iterations")
        if any(b <= a for a, b in zip(self.refine_at_iters, self.refine_at_iters[1:])):
            raise ValueError("refine_at_iters must be strictly increasing")
        if self.refine_at_iters and self.refine_at_iters[-1] >= self.total_iters:
            raise ValueError("refinements must happen before total_iters")
        if not self.partition_tau > self.overlap >= 0:
            raise ValueError("need partition_tau > overlap >= 0")
        if self.batch_frames is not None and self.batch_frames < 1:
            raise ValueError("batch_frames must be >= 1 or None")

    def layer_sizes(self, num_pixels: int) -> list:
        return [1] + [self.hidden_features] * self.hidden_layers + [num_pixels]


@dataclass
class TrainReport:
    """Loss history and bookkeeping from one partition's training."""

    temporal: list = field(default_factory=list)
    regularization: list = field(default_factory=list)
    total: list = field(default_factory=list)
    stack_sizes: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    final_T: int = 0


@dataclass
class Partition:
    """One sub-sequence: its time spans, event stack, and network.

    stack is None for partitions rehydrated from checkpoints (sampling
    needs only the model and spans).
    """

    index: int
    core_span: tuple  # [core start, core end): this partition owns these times
    span: tuple  # trained span including overlap margins
    model: SirenModel
    stack: EventFrameStack | None = None
    report: TrainReport | None = None


def temporal_loss(model: SirenModel, stack: EventFrameStack, frame_indices):
    """Mean squared temporal residual over the selected bins.

    For each index k the network's per-second tangent at the bin midpoint
    is scaled by the bin duration to predict that bin's ΔL. Returns
    (loss, seeds, aux) where seeds is the (K, H, W) gradient of the loss
    with respect to the per-second tangents, and aux carries the forward
    results (t_norm, frames, cache) so callers can reuse the pass.
    """
    idx = np.asarray(frame_indices, dtype=np.int64)
    if idx.ndim != 1 or len(idx) == 0:
        raise IndexOutOfRange("need at least one frame index")
    if idx.min() < 0 or idx.max() >= stack.num_frames:
        raise IndexOutOfRange(
            f"indices outside [0, {stack.num_frames}): {idx.min()}..{idx.max()}"
        )
    mids = stack.midpoints[idx]
    durs = stack.durations[idx]
    target = stack.counts[idx] * stack.threshold_C

    t_norm = model.normalize_time(mids)
    frames, tangents, cache = model.forward_with_tangent(t_norm, want_cache=True)
    tangents_sec = tangents * model.time_slope
    pred = tangents_sec * durs[:, None, None]
    resid = target - pred
    n = resid.size
    loss = float(np.sum(resid * resid) / n)
    seeds_dtangent_sec = (-2.0 / n) * resid * durs[:, None, None]
    aux = {"t_norm": t_norm, "frames": frames, "cache": cache}
    return loss, seeds_dtangent_sec, aux


def spatial_reg_loss(frame: np.ndarray):
    """Mean squared forward difference along x plus along y, with its exact
    gradient with respect to the frame."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2 or f.shape[1] < 2:
        raise DegenerateFrame(f"need at least 2x2 frame, got shape {f.shape}")
    loss, grad = _spatial_reg_batch(f[None])
    return loss, grad[0]


def _spatial_reg_batch(frames: np.ndarray):
    """Batched spatial regularizer: mean over x-sites of Dx^2 plus mean
    over y-sites of Dy^2, averaged over the batch."""
    k, h, w = frames.shape
    if h < 2 or w < 2:
        raise DegenerateFrame(f"need at least 2x2 frames, got {h}x{w}")
    dx = frames[:, :, 1:] - frames[:, :, :-1]
    dy = frames[:, 1:, :] - frames[:, :-1, :]
    nx = k * h * (w - 1)
    ny = k * (h - 1) * w
    loss = float(np.sum(dx * dx) / nx + np.sum(dy * dy) / ny)
    grad = np.zeros_like(frames)
    gx = (2.0 / nx) * dx
    gy = (2.0 / ny) * dy
    grad[:, :, 1:] += gx
    grad[:, :, :-1] -= gx
    grad[:, 1:, :] += gy
    grad[:, :-1, :] -= gy
    return loss, grad


def _sample_indices(num_frames: int, batch_frames, rng) -> np.ndarray:
    if batch_frames is None or batch_frames >= num_frames:
        return np.arange(num_frames)
    return np.sort(rng.choice(num_frames, size=batch_frames, replace=False))


def train_partition(partition: Partition, cfg: TrainConfig, stream: EventStream) -> TrainReport:
    """Run the full schedule on one partition, in place.

    The stream is needed to rebuild the stack at each refinement. Raises
    DivergedTraining when the loss goes non-finite or explodes.
    """
    model = partition.model
    params = model.parameters()
    adam = AdamState.for_params(
        params,
        lr=cfg.lr,
        beta1=cfg.adam_beta1,
        beta2=cfg.adam_beta2,
        eps=cfg.adam_eps,
        decay_rate=cfg.lr_decay,
        decay_every=cfg.lr_decay_every,
    )
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, partition.index, 0xB1]))
    refine_at = set(cfg.refine_at_iters)
    report = TrainReport()
    started = time.perf_counter()
    initial_loss = None

    for it in range(cfg.total_iters):
        if it in refine_at:
            partition.stack = refine_bins(partition.stack, stream)
        stack = partition.stack
        idx = _sample_indices(stack.num_frames, cfg.batch_frames, rng)
        l_temp, seeds_sec, aux = temporal_loss(model, stack, idx)
        seeds_tan = seeds_sec * model.time_slope
        if cfg.lambda_reg > 0:
            l_reg, dframes = _spatial_reg_batch(aux["frames"])
            seeds_frame = cfg.lambda_reg * dframes
        else:
            l_reg = 0.0
            seeds_frame = np.zeros_like(aux["frames"])
        total = l_temp + cfg.lambda_reg * l_reg

        if not math.isfinite(total):
            raise DivergedTraining(it, "non-finite loss", partition=partition.index)
        if initial_loss is None:
            initial_loss = total
        elif initial_loss > 0 and total > _DIVERGENCE_FACTOR * initial_loss:
            raise DivergedTraining(
                it, f"loss {total:.3e} exceeds 1e6 x initial {initial_loss:.3e}",
                partition=partition.index,
            )

        grads = model.backward(aux["t_norm"], seeds_frame, seeds_tan, cache=aux["cache"])
        adam_step(adam, params, grads)

        report.temporal.append(l_temp)
        report.regularization.append(l_reg)
        report.total.append(total)
        report.stack_sizes.append(stack.num_frames)

    report.wall_clock_s = time.perf_counter() - started
    report.final_T = partition.stack.num_frames
    partition.report = report
    return report


def build_partitions(stream: EventStream, cfg: TrainConfig) -> list:
    """Cut the stream into N = ceil(duration / tau) partitions with fresh
    stacks and networks.

    Core spans tile the stream window; trained spans extend half the
    overlap past each interior boundary, so adjacent partitions share
    exactly `overlap` seconds. Streams shorter than tau yield N = 1.
    """
    if stream.duration <= 0:
        raise ValueError("stream window must have positive duration")
    n = max(1, math.ceil(stream.duration / cfg.partition_tau))
    half = cfg.overlap / 2.0
    seeds = np.random.SeedSequence(cfg.seed).spawn(n)
    partitions = []
    for i in range(n):
        core_lo = stream.t_start + i * cfg.partition_tau
        core_hi = min(stream.t_start + (i + 1) * cfg.partition_tau, stream.t_end)
        span_lo = core_lo - half if i > 0 else core_lo
        span_hi = core_hi + half if i < n - 1 else core_hi
        span_lo = max(span_lo, stream.t_start)
        span_hi = min(span_hi, stream.t_end)
        piece = stream.slice_time(span_lo, span_hi, include_hi=(i == n - 1))
        stack = stack_uniform(piece, cfg.initial_bin, cfg.threshold_C)
        model = init_siren(
            cfg.layer_sizes(stream.height * stream.width),
            omega0=cfg.omega0,
            seed=seeds[i],
            height=stream.height,
            width=stream.width,
            t_domain=(span_lo, span_hi),
        )
        partitions.append(
            Partition(index=i, core_span=(core_lo, core_hi), span=(span_lo, span_hi),
                      model=model, stack=stack)
        )
    return partitions


def train_ensemble(stream: EventStream, cfg: TrainConfig, threads: int = 1) -> list:
    """Train one network per partition; partitions are independent, so any
    thread count yields the same result."""
    partitions = build_partitions(stream, cfg)
    pieces = [
        stream.slice_time(p.span[0], p.span[1], include_hi=(p.index == len(partitions) - 1))
        for p in partitions
    ]

    def run(i: int):
        try:
            train_partition(partitions[i], cfg, pieces[i])
        except DivergedTraining as exc:
            exc.partition = partitions[i].index
            raise

    if threads > 1 and len(partitions) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(len(partitions))))
    else:
        for i in range(len(partitions)):
            run(i)
    return partitions
