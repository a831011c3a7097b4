"""Sine-activated MLP mapping a scalar time to a full log-intensity frame,
with bespoke differentiation.

Two derivative paths are wired by hand and cross-checked against finite
differences in the test suite:

* a forward-mode tangent pass propagating d/dt alongside the activations
  (one extra set of matmuls, exact for the scalar time input), and
* a reverse-mode pass through the joint (output, tangent) computation that
  yields parameter gradients of any loss built from both — the piece a
  derivative-supervised objective needs.

All arithmetic is float64. Layer l < L-1 computes a = sin(omega0 * (W x + b));
the output layer is affine. Initialization follows the sine-network
convention: first layer U(-1/n_in, 1/n_in), later layers
U(-sqrt(6/n_in)/omega0, +sqrt(6/n_in)/omega0), zero biases, so hidden
sine arguments keep unit-scale variance at init.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    InvalidArchitecture,
    NonFiniteGradient,
    NonFiniteOutput,
    ShapeMismatch,
)

CHECKPOINT_VERSION = 1


@dataclass
class ForwardCache:
    """Intermediates of one batched forward-with-tangent pass, consumed by
    the reverse pass."""

    x: np.ndarray  # (K, 1) inputs
    acts: list  # per sine layer: activations (K, n)
    acts_dot: list  # per sine layer: d(activation)/dt_norm (K, n)
    coss: list  # per sine layer: cos(omega0 * z) (K, n)
    zdots: list  # per sine layer: d(pre-activation)/dt_norm (K, n)


@dataclass
class SirenModel:
    """Parameters of the time -> frame network.

    t_domain maps physical seconds affinely onto the network input range
    [-1, 1]; tangents returned by forward_with_tangent are with respect to
    the normalized input (multiply by `time_slope` for per-second rates).
    """

    layer_sizes: list
    omega0: float
    weights: list
    biases: list
    height: int
    width: int
    t_domain: tuple

    @property
    def num_pixels(self) -> int:
        return self.height * self.width

    @property
    def time_slope(self) -> float:
        """d(t_norm)/d(t_seconds) of the affine input map."""
        lo, hi = self.t_domain
        return 2.0 / (hi - lo)

    def normalize_time(self, t_seconds) -> np.ndarray:
        lo, hi = self.t_domain
        return (np.asarray(t_seconds, dtype=np.float64) - lo) * (2.0 / (hi - lo)) - 1.0

    def parameters(self) -> list:
        """Flat parameter list [W0, b0, W1, b1, ...] (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "SirenModel":
        return SirenModel(
            list(self.layer_sizes),
            self.omega0,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.height,
            self.width,
            tuple(self.t_domain),
        )

    # -- forward passes -----------------------------------------------------

    def _as_batch(self, t_norm) -> tuple[np.ndarray, bool]:
        t = np.asarray(t_norm, dtype=np.float64)
        scalar = t.ndim == 0
        return t.reshape(-1, 1), scalar

    def forward(self, t_norm) -> np.ndarray:
        """Frame(s) at normalized time(s): (H, W) for a scalar input,
        (K, H, W) for a length-K array."""
        x, scalar = self._as_batch(t_norm)
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.sin(self.omega0 * (a @ w.T + b))
        y = a @ self.weights[-1].T + self.biases[-1]
        if not np.all(np.isfinite(y)):
            raise NonFiniteOutput("forward pass produced NaN/Inf")
        y = y.reshape(-1, self.height, self.width)
        return y[0] if scalar else y

    def forward_with_tangent(self, t_norm, want_cache: bool = False):
        """(frame, dframe/dt_norm) at the given time(s); the frame matches
        forward() bit for bit. Optionally returns the cache for backward."""
        x, scalar = self._as_batch(t_norm)
        a = x
        a_dot = np.ones_like(x)
        acts, acts_dot, coss, zdots = [], [], [], []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w.T + b
            z_dot = a_dot @ w.T
            c = np.cos(self.omega0 * z)
            a = np.sin(self.omega0 * z)
            a_dot = self.omega0 * c * z_dot
            acts.append(a)
            acts_dot.append(a_dot)
            coss.append(c)
            zdots.append(z_dot)
        y = a @ self.weights[-1].T + self.biases[-1]
        y_dot = a_dot @ self.weights[-1].T
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(y_dot))):
            raise NonFiniteOutput("tangent pass produced NaN/Inf")
        shape = (self.height, self.width) if scalar else (-1, self.height, self.width)
        frame = y.reshape(shape)
        tangent = y_dot.reshape(shape)
        if want_cache:
            return frame, tangent, ForwardCache(x, acts, acts_dot, coss, zdots)
        return frame, tangent

    # -- reverse pass -------------------------------------------------------

    def backward(self, t_norm, dloss_dframe, dloss_dtangent=None, cache: ForwardCache | None = None):
        """Parameter gradients of
        loss = sum(dloss_dframe * frame) + sum(dloss_dtangent * tangent),
        where tangent is d frame / d t_norm. Returns a list matching
        parameters(). Recomputes the forward pass unless a cache from
        forward_with_tangent(..., want_cache=True) is supplied.
        """
        x, _ = self._as_batch(t_norm)
        k = x.shape[0]
        gy = np.asarray(dloss_dframe, dtype=np.float64).reshape(k, -1)
        if gy.shape[1] != self.num_pixels:
            raise ShapeMismatch(
                f"dloss_dframe has {gy.shape[1]} pixels, model emits {self.num_pixels}"
            )
        if dloss_dtangent is None:
            gy_dot = np.zeros_like(gy)
        else:
            gy_dot = np.asarray(dloss_dtangent, dtype=np.float64).reshape(k, -1)
            if gy_dot.shape != gy.shape:
                raise ShapeMismatch("dloss_dtangent shape differs from dloss_dframe")
        if cache is None:
            _, _, cache = self.forward_with_tangent(t_norm, want_cache=True)
        elif cache.x.shape[0] != k:
            raise ShapeMismatch("cache batch size differs from t_norm")

        omega = self.omega0
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)

        a_last = cache.acts[-1]
        a_dot_last = cache.acts_dot[-1]
        w_out = self.weights[-1]
        grads_w[-1] = gy.T @ a_last + gy_dot.T @ a_dot_last
        grads_b[-1] = gy.sum(axis=0)
        u = gy @ w_out
        u_dot = gy_dot @ w_out

        for l in range(len(self.weights) - 2, -1, -1):
            c = cache.coss[l]
            s = cache.acts[l]  # sin(omega * z)
            z_dot = cache.zdots[l]
            s_z = u * (omega * c) - u_dot * (omega * omega) * s * z_dot
            s_zdot = u_dot * (omega * c)
            a_prev = cache.acts[l - 1] if l > 0 else cache.x
            a_prev_dot = cache.acts_dot[l - 1] if l > 0 else np.ones_like(cache.x)
            grads_w[l] = s_z.T @ a_prev + s_zdot.T @ a_prev_dot
            grads_b[l] = s_z.sum(axis=0)
            if l > 0:
                w = self.weights[l]
                u = s_z @ w
                u_dot = s_zdot @ w

        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend((gw, gb))
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient("backward pass produced NaN/Inf")
        return grads


def init_siren(
    layer_sizes,
    omega0: float = 30.0,
    seed: int = 0,
    height: int | None = None,
    width: int | None = None,
    t_domain: tuple = (-1.0, 1.0),
) -> SirenModel:
    """Build a network with sine-net initialization, deterministic per seed.

    layer_sizes runs input through output, e.g. [1, 512, 512, 512, H*W].
    height/width default to a 1 x n_out frame when not given.
    """
    sizes = [int(n) for n in layer_sizes]
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise InvalidArchitecture(f"bad layer sizes {sizes}")
    if sizes[0] != 1:
        raise InvalidArchitecture("time-conditioned network needs exactly 1 input")
    if omega0 <= 0:
        raise InvalidArchitecture("omega0 must be positive")
    if height is None or width is None:
        height, width = 1, sizes[-1]
    if height * width != sizes[-1]:
        raise InvalidArchitecture(
            f"output size {sizes[-1]} does not match {height}x{width} frame"
        )
    lo, hi = t_domain
    if not hi > lo:
        raise InvalidArchitecture("t_domain must have positive length")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if l == 0:
            bound = 1.0 / n_in
        else:
            bound = np.sqrt(6.0 / n_in) / omega0
        weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        biases.append(np.zeros(n_out, dtype=np.float64))
    return SirenModel(sizes, float(omega0), weights, biases, height, width, (float(lo), float(hi)))


# -- Adam ------------------------------------------------------------------


@dataclass
class AdamState:
    """Adam moments plus a stepwise exponential learning-rate schedule
    (lr *= decay_rate after every decay_every-th step)."""

    m: list
    v: list
    step: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_rate: float = 1.0
    decay_every: int = 10

    @classmethod
    def for_params(
        cls,
        params,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        decay_rate: float = 1.0,
        decay_every: int = 10,
    ) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            step=0,
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            decay_rate=decay_rate,
            decay_every=decay_every,
        )


def adam_step(state: AdamState, params, grads):
    """One in-place Adam update with bias correction; returns (params, state).

    The learning rate is multiplied by decay_rate after every
    decay_every-th step, so steps 1..10 use lr0, steps 11..20 use
    lr0*decay, and so on.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeMismatch("params/grads do not match optimizer state")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    if state.decay_rate != 1.0 and state.step % state.decay_every == 0:
        state.lr *= state.decay_rate
    return params, state


# -- checkpoints -------------------------------------------------------------


def save_checkpoint(model: SirenModel, path) -> None:
    """Write an npz checkpoint that round-trips the model bit-exactly.

    Layout: version, layer_sizes, omega0, t_domain, height, width, and
    w{i}/b{i} arrays per layer.
    """
    arrays = {
        "version": np.asarray(CHECKPOINT_VERSION),
        "layer_sizes": np.asarray(model.layer_sizes, dtype=np.int64),
        "omega0": np.asarray(model.omega0, dtype=np.float64),
        "t_domain": np.asarray(model.t_domain, dtype=np.float64),
        "height": np.asarray(model.height, dtype=np.int64),
        "width": np.asarray(model.width, dtype=np.int64),
    }
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)


def load_checkpoint(path) -> SirenModel:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = [int(n) for n in data["layer_sizes"]]
        weights = [data[f"w{i}"].astype(np.float64, copy=True) for i in range(len(sizes) - 1)]
        biases = [data[f"b{i}"].astype(np.float64, copy=True) for i in range(len(sizes) - 1)]
        return SirenModel(
            sizes,
            float(data["omega0"]),
            weights,
            biases,
            int(data["height"]),
            int(data["width"]),
            tuple(float(v) for v in data["t_domain"]),
        )
