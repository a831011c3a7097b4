"""Minimal portable graymap (PGM) I/O for 8-bit frames.

Binary P5 is written; both P5 and ASCII P2 are read. Output is byte-exact
and dependency free, which keeps frame artifacts diffable in tests.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np


def write_pgm(path, frame: np.ndarray) -> None:
    """Write a uint8 H x W array as binary PGM (P5, maxval 255)."""
    arr = np.asarray(frame)
    if arr.ndim != 2:
        raise ValueError(f"expected 2-D frame, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.integer) and arr.min() >= 0 and arr.max() <= 255:
            arr = arr.astype(np.uint8)
        else:
            raise ValueError("frame must be uint8 (or integer within [0, 255])")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit PGM (P5 binary or P2 ASCII) into a uint8 array."""
    data = Path(path).read_bytes()
    # header: magic, width, height, maxval, separated by whitespace/comments
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.match(rb"\s*(#[^\n]*\n|\S+)", data[pos:])
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        tok = m.group(1)
        pos += m.end()
        if not tok.startswith(b"#"):
            tokens.append(tok)
    magic = tokens[0]
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    if magic == b"P5":
        raster = data[pos + 1 : pos + 1 + w * h]  # single whitespace after maxval
        if len(raster) < w * h:
            raise ValueError(f"{path}: truncated PGM raster")
        return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()
    if magic == b"P2":
        vals = np.array(data[pos:].split(), dtype=np.int64)
        if vals.size != w * h:
            raise ValueError(f"{path}: expected {w * h} samples, got {vals.size}")
        return vals.astype(np.uint8).reshape(h, w)
    raise ValueError(f"{path}: unsupported magic {magic!r}")


def frame_filename(index: int) -> str:
    return f"frame_{index:06d}.pgm"


def write_frame_dir(out_dir, frames: np.ndarray, times: np.ndarray) -> None:
    """Write frames as frame_%06d.pgm plus a times.txt sidecar."""
    from .events import write_times

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_pgm(out / frame_filename(i), frame)
    write_times(out / "times.txt", np.asarray(times))


def read_frame_dir(in_dir) -> tuple[np.ndarray, np.ndarray]:
    """Read a directory written by write_frame_dir. Returns (frames, times)."""
    from .events import read_times

    src = Path(in_dir)
    paths = sorted(src.glob("frame_*.pgm"))
    if not paths:
        raise FileNotFoundError(f"no frame_*.pgm files in {src}")
    frames = np.stack([read_pgm(p) for p in paths])
    times_path = src / "times.txt"
    if times_path.exists():
        times = read_times(times_path).times
        if len(times) != len(frames):
            raise ValueError(f"{src}: times.txt length {len(times)} != {len(frames)} frames")
    else:
        times = np.arange(len(frames), dtype=np.float64)
    return frames, times
