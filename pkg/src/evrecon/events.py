"""Event stream parsing, validation, and serialization.

Text format: one event per line, `t x y p`, whitespace separated. An
optional header line `# width W height H` fixes the sensor size; without
it the size is inferred as max coordinate + 1. Polarities are stored
internally as {-1, +1}; inputs using {0, 1} are remapped at parse time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable, Union

import numpy as np

from .errors import (
    EmptyStream,
    InvalidDimensions,
    MalformedLine,
    PolarityOutOfRange,
    UnsortedStream,
)

POLARITY_ENCODINGS = ("signed", "zero_one")


@dataclass(frozen=True)
class Event:
    """A single polarity impulse: time in seconds, pixel column/row, sign."""

    t: float
    x: int
    y: int
    polarity: int

    def __post_init__(self):
        if self.polarity not in (-1, 1):
            raise PolarityOutOfRange(f"polarity must be -1 or +1, got {self.polarity}")
        if self.t < 0:
            raise ValueError(f"event time must be non-negative, got {self.t}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"pixel coordinates must be non-negative, got ({self.x}, {self.y})")


@dataclass
class EventStream:
    """Time-ordered events on a fixed sensor grid.

    Columns are stored as parallel arrays (t float64 seconds, x/y int64,
    polarity int64 in {-1,+1}) for vectorized accumulation. `t_start` and
    `t_end` bound the observation window; they may extend beyond the first
    and last event.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    polarity: np.ndarray
    width: int
    height: int
    t_start: float
    t_end: float

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.polarity = np.asarray(self.polarity, dtype=np.int64)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.polarity) == n):
            raise ValueError("event columns must have equal length")
        if self.width < 1 or self.height < 1:
            raise InvalidDimensions(f"sensor must be at least 1x1, got {self.width}x{self.height}")
        if n:
            if np.any(np.diff(self.t) < 0):
                raise UnsortedStream("event timestamps decrease")
            if not np.all((self.polarity == 1) | (self.polarity == -1)):
                raise PolarityOutOfRange("polarities must be -1 or +1")
            if self.x.max() >= self.width or self.y.max() >= self.height:
                raise InvalidDimensions(
                    f"event coordinates exceed sensor {self.width}x{self.height}"
                )
            if self.x.min() < 0 or self.y.min() < 0:
                raise InvalidDimensions("negative event coordinates")
            if self.t[0] < self.t_start or self.t[-1] > self.t_end:
                raise ValueError("event times fall outside [t_start, t_end]")
        if self.t_end < self.t_start:
            raise ValueError("t_end must be >= t_start")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def __getitem__(self, i: int) -> Event:
        return Event(float(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.polarity[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.t_start == other.t_start
            and self.t_end == other.t_end
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.polarity, other.polarity)
        )

    def slice_time(self, lo: float, hi: float, include_hi: bool = False) -> "EventStream":
        """Events with t in [lo, hi), or [lo, hi] when include_hi.

        The returned stream's window is exactly [lo, hi].
        """
        side = "right" if include_hi else "left"
        i0 = np.searchsorted(self.t, lo, side="left")
        i1 = np.searchsorted(self.t, hi, side=side)
        return EventStream(
            t=self.t[i0:i1].copy(),
            x=self.x[i0:i1].copy(),
            y=self.y[i0:i1].copy(),
            polarity=self.polarity[i0:i1].copy(),
            width=self.width,
            height=self.height,
            t_start=lo,
            t_end=hi,
        )


@dataclass(frozen=True)
class FrameTimestamps:
    """Strictly increasing times at which output frames are requested."""

    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=np.float64))
        if self.times.ndim != 1 or len(self.times) == 0:
            raise ValueError("need a 1-D, non-empty array of times")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("frame times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)


def _map_polarity(p_raw: np.ndarray, encoding: str) -> np.ndarray:
    if encoding == "signed":
        bad = ~((p_raw == 1) | (p_raw == -1))
        if np.any(bad):
            raise PolarityOutOfRange(
                f"signed encoding expects -1/+1, got {p_raw[bad][0]}"
            )
        return p_raw
    if encoding == "zero_one":
        bad = ~((p_raw == 0) | (p_raw == 1))
        if np.any(bad):
            raise PolarityOutOfRange(
                f"zero_one encoding expects 0/1, got {p_raw[bad][0]}"
            )
        return np.where(p_raw == 0, -1, 1)
    raise ValueError(f"unknown polarity encoding {encoding!r}")


def parse_events(
    source: Union[str, IO[str], Iterable[str]],
    polarity_encoding: str = "zero_one",
    width: int | None = None,
    height: int | None = None,
) -> EventStream:
    """Parse a text event recording into an EventStream.

    `source` is a string, an open text file, or an iterable of lines.
    Sensor size comes from (in priority order) the width/height arguments,
    a `# width W height H` header line, or max coordinate + 1. The stream
    window is [first event t, last event t]. An empty input yields an
    empty stream with a zero-length window.
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = source

    ts, xs, ys, ps = [], [], [], []
    header_w = header_h = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = line[1:].split()
            if len(fields) == 4 and fields[0] == "width" and fields[2] == "height":
                try:
                    header_w, header_h = int(fields[1]), int(fields[3])
                except ValueError:
                    raise MalformedLine(lineno, raw, "bad header") from None
            continue
        fields = line.split()
        if len(fields) != 4:
            raise MalformedLine(lineno, raw, f"expected 4 fields, got {len(fields)}")
        try:
            t = float(fields[0])
            x = int(fields[1])
            y = int(fields[2])
            p = int(fields[3])
        except ValueError as exc:
            raise MalformedLine(lineno, raw, str(exc)) from None
        if ts and t < ts[-1]:
            raise UnsortedStream(f"line {lineno}: timestamp {t} after {ts[-1]}")
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(p)

    t_arr = np.asarray(ts, dtype=np.float64)
    x_arr = np.asarray(xs, dtype=np.int64)
    y_arr = np.asarray(ys, dtype=np.int64)
    p_arr = _map_polarity(np.asarray(ps, dtype=np.int64), polarity_encoding)

    w = width if width is not None else header_w
    h = height if height is not None else header_h
    if w is None:
        w = int(x_arr.max()) + 1 if len(x_arr) else 1
    if h is None:
        h = int(y_arr.max()) + 1 if len(y_arr) else 1

    t0 = float(t_arr[0]) if len(t_arr) else 0.0
    t1 = float(t_arr[-1]) if len(t_arr) else 0.0
    return EventStream(t_arr, x_arr, y_arr, p_arr, width=w, height=h, t_start=t0, t_end=t1)


def write_events(
    stream: EventStream,
    polarity_encoding: str = "zero_one",
    include_header: bool = True,
) -> str:
    """Serialize a stream to the text format.

    Timestamps are written with 9 decimal places, so parse(write(s))
    reproduces s to nanosecond resolution. Event order is preserved.
    """
    if polarity_encoding not in POLARITY_ENCODINGS:
        raise ValueError(f"unknown polarity encoding {polarity_encoding!r}")
    out = []
    if include_header:
        out.append(f"# width {stream.width} height {stream.height}")
    if polarity_encoding == "zero_one":
        p_out = (stream.polarity > 0).astype(np.int64)
    else:
        p_out = stream.polarity
    for t, x, y, p in zip(stream.t, stream.x, stream.y, p_out):
        out.append(f"{t:.9f} {x} {y} {p}")
    return "\n".join(out) + "\n"


def read_times(path) -> FrameTimestamps:
    """Read a times.txt sidecar: one time (seconds) per line."""
    with open(path) as fh:
        vals = [float(line) for line in fh if line.strip()]
    return FrameTimestamps(np.asarray(vals))


def write_times(path, times: FrameTimestamps | np.ndarray) -> None:
    arr = times.times if isinstance(times, FrameTimestamps) else np.asarray(times)
    with open(path, "w") as fh:
        for t in arr:
            fh.write(f"{t:.9f}\n")


def require_nonempty(stream: EventStream) -> None:
    if len(stream) == 0:
        raise EmptyStream("operation requires at least one event")
