"""Shared domain types: event streams, bit streams, optical waveforms, histograms.

Everything here is an immutable value after construction; operations are pure
functions, so instances can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

# Event polarity, as encoded in the CSV wire format.
POS = 1
NEG = -1

# Waveform levels.
ON = 1
OFF = 0

# BitStream origins.
PAYLOAD = "payload"
LINE_CODED = "line_coded"

EVENT_CSV_HEADER = "t_us,x,y,p"


class ConfigError(ValueError):
    """A configuration value or operation precondition is invalid."""


class CsvFormatError(ValueError):
    """An event CSV file violates the wire schema."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class Event(NamedTuple):
    """One brightness-change detection: integer-microsecond timestamp,
    pixel coordinates, and polarity (POS=+1, NEG=-1)."""

    t: int
    x: int
    y: int
    p: int


class EventStream:
    """Time-sorted sequence of events stored as parallel numpy arrays.

    Sortedness (ties allowed) is validated on construction. An optional
    declared sensor geometry bounds the coordinates.
    """

    __slots__ = ("t", "x", "y", "p", "width", "height")

    def __init__(self, t, x, y, p, width=None, height=None):
        self.t = np.asarray(t, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.int32)
        self.y = np.asarray(y, dtype=np.int32)
        self.p = np.asarray(p, dtype=np.int8)
        self.width = width
        self.height = height
        n = self.t.size
        if not (self.x.size == self.y.size == self.p.size == n):
            raise ValueError("event field arrays must have equal length")
        if n:
            if self.t.min() < 0:
                raise ValueError("event timestamps must be non-negative")
            bad = np.nonzero(np.diff(self.t) < 0)[0]
            if bad.size:
                i = int(bad[0]) + 1
                raise ValueError(
                    f"events not sorted at index {i}: "
                    f"t={int(self.t[i])} < t={int(self.t[i - 1])}"
                )
            if not np.isin(self.p, (POS, NEG)).all():
                raise ValueError("polarity values must be +1 or -1")
            if width is not None and self.x.max() >= width:
                raise ValueError(f"x coordinate out of declared width {width}")
            if height is not None and self.y.max() >= height:
                raise ValueError(f"y coordinate out of declared height {height}")

    @classmethod
    def from_events(cls, events: Iterable[Event], width=None, height=None):
        evts = list(events)
        return cls(
            [e.t for e in evts],
            [e.x for e in evts],
            [e.y for e in evts],
            [e.p for e in evts],
            width=width,
            height=height,
        )

    @classmethod
    def empty(cls, width=None, height=None):
        return cls([], [], [], [], width=width, height=height)

    def __len__(self):
        return int(self.t.size)

    def __getitem__(self, i) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def select(self, mask) -> "EventStream":
        """Order-preserving subset by boolean mask."""
        return EventStream(
            self.t[mask], self.x[mask], self.y[mask], self.p[mask],
            width=self.width, height=self.height,
        )


def merge_streams(streams) -> EventStream:
    """Merge sorted event streams into one sorted stream.

    Stable within equal timestamps: earlier streams come first, and each
    stream's internal order is preserved. Rejects unsorted input with a
    diagnostic naming the stream and offending index.
    """
    streams = list(streams)
    for si, s in enumerate(streams):
        t = np.asarray(s.t if isinstance(s, EventStream) else [e.t for e in s])
        if t.size:
            bad = np.nonzero(np.diff(t) < 0)[0]
            if bad.size:
                i = int(bad[0]) + 1
                raise ValueError(f"input stream {si} not sorted at index {i}")
    streams = [
        s if isinstance(s, EventStream) else EventStream.from_events(s)
        for s in streams
    ]
    if not streams:
        return EventStream.empty()
    t = np.concatenate([s.t for s in streams])
    x = np.concatenate([s.x for s in streams])
    y = np.concatenate([s.y for s in streams])
    p = np.concatenate([s.p for s in streams])
    order = np.argsort(t, kind="stable")
    return EventStream(t[order], x[order], y[order], p[order])


def write_events_csv(stream: EventStream, path):
    """Write the event CSV wire format: header `t_us,x,y,p`, polarity +-1."""
    with open(path, "w") as f:
        f.write(EVENT_CSV_HEADER + "\n")
        for i in range(len(stream)):
            f.write(
                f"{int(stream.t[i])},{int(stream.x[i])},"
                f"{int(stream.y[i])},{int(stream.p[i])}\n"
            )


def read_events_csv(path) -> EventStream:
    """Parse the event CSV wire format; raises CsvFormatError naming the
    offending line number on any schema violation."""
    t, x, y, p = [], [], [], []
    with open(path) as f:
        header = f.readline().strip()
        if header != EVENT_CSV_HEADER:
            raise CsvFormatError(
                f"missing or wrong header (expected '{EVENT_CSV_HEADER}')",
                line_number=1,
            )
        for ln, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise CsvFormatError(f"line {ln}: expected 4 fields", line_number=ln)
            try:
                ti, xi, yi, pi = (int(v) for v in parts)
            except ValueError:
                raise CsvFormatError(
                    f"line {ln}: non-integer field", line_number=ln
             ) from None
            if ti < 0:
                raise CsvFormatError(f"line {ln}: negative timestamp", line_number=ln)
            if pi not in (POS, NEG):
                raise CsvFormatError(
                    f"line {ln}: polarity must be 1 or -1, got {pi}", line_number=ln
                )
            t.append(ti)
            x.append(xi)
            y.append(yi)
            p.append(pi)
    try:
        return EventStream(t, x, y, p)
    except ValueError as e:
        raise CsvFormatError(str(e)) from None


@dataclass(frozen=True, eq=False)
class BitStream:
    """Ordered 0/1 sequence tagged with its origin (payload vs line-coded)."""

    bits: np.ndarray
    origin: str = PAYLOAD

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.size and not np.isin(bits, (0, 1)).all():
            raise ValueError("bit values must be 0 or 1")
        object.__setattr__(self, "bits", bits)
        if self.origin not in (PAYLOAD, LINE_CODED):
            raise ValueError(f"unknown bit stream origin {self.origin!r}")

    def __len__(self):
        return int(self.bits.size)


@dataclass(frozen=True, eq=False)
class OpticalWaveform:
    """Piecewise-constant LED intensity: (t_us, level) transitions plus the
    two intensity levels. Level before the first transition is the complement
    of that transition's level (OFF if there are no transitions)."""

    transitions: tuple
    on_intensity: float = 1.0
    off_intensity: float = 0.0

    def __post_init__(self):
        trans = tuple((float(t), int(level)) for t, level in self.transitions)
        object.__setattr__(self, "transitions", trans)
        if self.on_intensity <= 0:
            raise ValueError("on_intensity must be > 0")
        # off == on is tolerated so degenerate zero-contrast links can run.
        if not 0 <= self.off_intensity <= self.on_intensity:
            raise ValueError("need 0 <= off_intensity <= on_intensity")
        prev_t = -math.inf
        prev_level = None
        for t, level in trans:
            if level not in (ON, OFF):
                raise ValueError(f"level must be ON or OFF, got {level}")
            if t <= prev_t:
                raise ValueError("transition times must be strictly increasing")
            if level == prev_level:
                raise ValueError("consecutive transition levels must alternate")
            prev_t, prev_level = t, level

    @property
    def initial_level(self) -> int:
        if not self.transitions:
            return OFF
        return ON if self.transitions[0][1] == OFF else OFF

    def duration_us(self) -> float:
        return self.transitions[-1][0] if self.transitions else 0.0

    def transition_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.transitions], dtype=float)

    def level_at(self, t_us: float) -> int:
        level = self.initial_level
        for tt, lv in self.transitions:
            if tt <= t_us:
                level = lv
            else:
                break
        return level


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Uniformly sampled real-valued signal with its time base."""

    t0_us: float
    dt_us: float
    values: np.ndarray

    def __post_init__(self):
        if self.dt_us <= 0:
            raise ConfigError("sample step must be positive")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self):
        return int(self.values.size)

    def times(self) -> np.ndarray:
        return self.t0_us + self.dt_us * np.arange(self.values.size)


def sample_waveform(w: OpticalWaveform, dt_us: float, t0_us: float,
                    t1_us: float) -> SampledSignal:
    """Sample a piecewise-constant waveform on a uniform grid over [t0, t1)."""
    if dt_us <= 0:
        raise ConfigError("sample step must be positive")
    if t1_us <= t0_us:
        raise ConfigError("need t1 > t0")
    n = int(math.ceil((t1_us - t0_us) / dt_us))
    times = t0_us + dt_us * np.arange(n)
    trans_t = w.transition_times()
    if trans_t.size == 0:
        levels = np.full(n, w.initial_level, dtype=np.int8)
    else:
        idx = np.searchsorted(trans_t, times, side="right")
        trans_levels = np.array([lv for _, lv in w.transitions], dtype=np.int8)
        levels = np.where(idx == 0, w.initial_level, trans_levels[idx - 1])
    values = np.where(levels == ON, w.on_intensity, w.off_intensity)
    return SampledSignal(t0_us=t0_us, dt_us=dt_us, values=values)


@dataclass(frozen=True, eq=False)
class EventHistogram:
    """Per-polarity binned event counts over time."""

    bin_width_us: float
    t0_us: float
    pos_counts: np.ndarray
    neg_counts: np.ndarray

    def __post_init__(self):
        if self.bin_width_us <= 0:
            raise ValueError("bin_width_us must be positive")
        pos = np.asarray(self.pos_counts, dtype=np.int64)
        neg = np.asarray(self.neg_counts, dtype=np.int64)
        if pos.shape != neg.shape:
            raise ValueError("pos_counts and neg_counts must have equal length")
        if pos.size and (pos.min() < 0 or neg.min() < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "pos_counts", pos)
        object.__setattr__(self, "neg_counts", neg)

    @property
    def n_bins(self) -> int:
        return int(self.pos_counts.size)

    def bin_centers(self) -> np.ndarray:
        return self.t0_us + self.bin_width_us * (np.arange(self.n_bins) + 0.5)
