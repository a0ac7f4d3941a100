"""Receiver chain: crop -> bin -> smooth -> peak detect -> toggle demodulation.

Toggle demodulation treats positive peaks as set pulses and negative peaks
as reset pulses of a flip-flop; the bit clock samples that state once per
symbol. Timing comes either from a fixed nominal grid or from a
second-order digital PLL tracking the merged peak train, which coasts
(flywheel) through symbols with no usable peak.

Sampling conventions: the nominal grid samples at slot ends
(t_start + (k+1)*T), which reads slot k after its own transition peak and
before the next one; the DPLL samples at tracked slot centers, half a
period after the boundary estimate it locks onto. Both read the same state
on a clean signal.

When POS and NEG peaks share a timestamp the NEG (reset) wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .signals import (
    LINE_CODED,
    NEG,
    POS,
    BitStream,
    ConfigError,
    EventHistogram,
    EventStream,
)

DEFAULT_BIN_FRACTION = 8   # bin width = symbol period / 8
DEFAULT_SEP_FRACTION = 2   # peak separation = symbol period / 2


@dataclass(frozen=True)
class RoI:
    """Inclusive pixel rectangle around the light source."""

    x_min: int
    x_max: int
    y_min: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ConfigError("RoI rectangle is empty")


@dataclass(frozen=True, eq=False)
class PeakList:
    """Strictly increasing peak times of one polarity."""

    times_us: np.ndarray
    polarity: int

    def __post_init__(self):
        t = np.asarray(self.times_us, dtype=float)
        if t.size and (np.diff(t) <= 0).any():
            raise ValueError("peak times must be strictly increasing")
        if self.polarity not in (POS, NEG):
            raise ValueError("polarity must be POS or NEG")
        object.__setattr__(self, "times_us", t)

    def __len__(self):
        return int(self.times_us.size)


@dataclass
class DpllState:
    """Loop state: period/phase estimate and gains."""

    period_us: float
    phase_us: float
    kp: float
    kf: float
    lock: bool = False

    def __post_init__(self):
        if self.period_us <= 0:
            raise ConfigError("period_us must be positive")
        if not 0 < self.kp < 1:
            raise ConfigError("need 0 < kp < 1")
        if not 0 <= self.kf < self.kp:
            raise ConfigError("need 0 <= kf < kp")


@dataclass(frozen=True)
class DemodConfig:
    nominal_symbol_rate_hz: float
    bin_width_us: float | None = None            # default: symbol period / 8
    smooth_kernel: str = "moving_average"        # or "gaussian"
    smooth_width_bins: int = 3
    peak_min_separation_us: float | None = None  # default: symbol period / 2
    peak_threshold: float = 0.5
    use_dpll: bool = True
    kp: float = 0.1
    kf: float = 0.01

    def __post_init__(self):
        if self.nominal_symbol_rate_hz <= 0:
            raise ConfigError("nominal_symbol_rate_hz must be positive")
        period = self.symbol_period_us
        if self.resolved_bin_width_us <= 0:
            raise ConfigError("bin_width_us must be positive")
        if self.resolved_bin_width_us > period / 4:
            raise ConfigError("bin_width_us must be <= symbol period / 4")
        if self.smooth_kernel not in ("moving_average", "gaussian"):
            raise ConfigError(f"unknown smoothing kernel {self.smooth_kernel!r}")
        if self.smooth_width_bins < 1:
            raise ConfigError("smooth_width_bins must be >= 1")
        if self.resolved_peak_min_separation_us < 2 * self.resolved_bin_width_us:
            raise ConfigError("peak_min_separation_us must be >= 2 bins")
        if not 0 < self.peak_threshold <= 1:
            raise ConfigError("peak_threshold must be in (0, 1]")
        if not 0 < self.kp < 1:
            raise ConfigError("need 0 < kp < 1")
        if not 0 <= self.kf < self.kp:
            raise ConfigError("need 0 <= kf < kp")

    @property
    def symbol_period_us(self) -> float:
        return 1e6 / self.nominal_symbol_rate_hz

    @property
    def resolved_bin_width_us(self) -> float:
        if self.bin_width_us is not None:
            return self.bin_width_us
        return self.symbol_period_us / DEFAULT_BIN_FRACTION

    @property
    def resolved_peak_min_separation_us(self) -> float:
        if self.peak_min_separation_us is not None:
            return self.peak_min_separation_us
        return self.symbol_period_us / DEFAULT_SEP_FRACTION


def crop_roi(events: EventStream, roi: RoI) -> EventStream:
    """Order-preserving filter to events inside the rectangle."""
    mask = (
        (events.x >= roi.x_min) & (events.x <= roi.x_max)
        & (events.y >= roi.y_min) & (events.y <= roi.y_max)
    )
    return events.select(mask)


def bin_events(events: EventStream, bin_width_us: float, t0_us: float,
               t1_us: float) -> EventHistogram:
    """Count events per polarity in uniform bins over [t0, t1)."""
    if t1_us <= t0_us:
        raise ConfigError("need t1 > t0")
    if bin_width_us <= 0:
        raise ConfigError("bin width must be positive")
    n_bins = int(math.ceil((t1_us - t0_us) / bin_width_us))
    t = events.t
    in_range = (t >= t0_us) & (t < t1_us)
    idx = ((t[in_range] - t0_us) / bin_width_us).astype(np.int64)
    idx = np.minimum(idx, n_bins - 1)
    p = events.p[in_range]
    pos = np.bincount(idx[p == POS], minlength=n_bins)
    neg = np.bincount(idx[p == NEG], minlength=n_bins)
    return EventHistogram(
        bin_width_us=bin_width_us, t0_us=t0_us, pos_counts=pos, neg_counts=neg
    )


def _kernel(cfg: DemodConfig) -> np.ndarray:
    w = cfg.smooth_width_bins
    if cfg.smooth_kernel == "moving_average":
        return np.full(w, 1.0 / w)
    sigma = (w - 1) / 2.0
    if sigma == 0:
        return np.array([1.0])
    radius = int(math.ceil(3 * sigma))
    xs = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def smooth(hist: EventHistogram, cfg: DemodConfig):
    """Same-length convolution of each polarity's counts with the normalized
    smoothing kernel (zero-padded edges)."""
    k = _kernel(cfg)
    pos = np.convolve(hist.pos_counts.astype(float), k, mode="same")
    neg = np.convolve(hist.neg_counts.astype(float), k, mode="same")
    return pos, neg


def detect_peaks(series, cfg: DemodConfig, t0_us: float = 0.0,
                 polarity: int = POS) -> PeakList:
    """Local maxima above peak_threshold x global max, thinned to the
    configured minimum separation (larger peaks win); plateaus resolve to
    their center bin. Peak time is the bin center."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ConfigError("series must be non-empty")
    top = series.max()
    if top <= 0:
        return PeakList(np.array([]), polarity)
    bin_w = cfg.resolved_bin_width_us
    distance = max(1, int(round(cfg.resolved_peak_min_separation_us / bin_w)))
    idx, _ = find_peaks(series, height=cfg.peak_threshold * top, distance=distance)
    times = t0_us + (idx + 0.5) * bin_w
    return PeakList(times, polarity)


def _merge_peaks(pos: PeakList, neg: PeakList):
    """Merged peak times and sampled states; NEG sorts after POS on ties so
    the reset wins."""
    times = np.concatenate([pos.times_us, neg.times_us])
    states = np.concatenate([
        np.ones(len(pos), dtype=np.uint8),
        np.zeros(len(neg), dtype=np.uint8),
    ])
    tie = np.concatenate([
        np.zeros(len(pos), dtype=np.int8),
        np.ones(len(neg), dtype=np.int8),
    ])
    order = np.lexsort((tie, times))
    return times[order], states[order]


def _dpll_run(peak_times: np.ndarray, nominal_period_us: float, kp: float,
              kf: float, t_start: float, n_slots: int):
    """Second-order loop over expected slot boundaries.

    For each boundary, the nearest peak within +-period/2 (and not already
    consumed) yields a phase error e; phase += kp*e, period += kf*e. With no
    peak the loop coasts on its period estimate. Sampling instants are the
    tracked slot centers, forced strictly increasing.

    Returns (instants, final DpllState, matched slot count).
    """
    state = DpllState(
        period_us=nominal_period_us, phase_us=t_start, kp=kp, kf=kf
    )
    if n_slots <= 0:
        raise ConfigError("n_slots must be positive")
    times = np.asarray(peak_times, dtype=float)
    period = float(nominal_period_us)
    expected = float(t_start)
    lo = 0            # first peak index not yet behind the window
    min_idx = 0       # peaks below this are consumed and cannot re-match
    n_peaks = times.size
    instants = np.empty(n_slots)
    prev_instant = -math.inf
    matched = 0
    run_hits = 0
    run_misses = 0
    lock = False
    for k in range(n_slots):
        half = period / 2.0
        while lo < n_peaks and times[lo] < expected - half:
            lo += 1
        cand = max(lo, min_idx)
        best = None
        # nearest of the two peaks bracketing `expected`
        j = cand
        while j < n_peaks and times[j] <= expected:
            j += 1
        for c in (j - 1, j):
            if min_idx <= c < n_peaks:
                d = times[c] - expected
                if abs(d) <= half and (best is None or abs(d) < abs(best[0])):
                    best = (d, c)
        if best is not None:
            err, c = best
            expected += kp * err
            period += kf * err
            period = min(max(period, 0.5 * nominal_period_us),
                         1.5 * nominal_period_us)
            min_idx = c + 1
            matched += 1
            run_hits += 1
            run_misses = 0
        else:
            run_misses += 1
            run_hits = 0
        if run_hits >= 8:
            lock = True
        if run_misses >= 8:
            lock = False
        inst = expected + period / 2.0
        if inst <= prev_instant:
            inst = np.nextafter(prev_instant, math.inf)
        instants[k] = inst
        prev_instant = inst
        expected += period
    state.period_us = period
    state.phase_us = expected + period / 2.0  # next slot center
    state.lock = lock
    return instants, state, matched


def dpll_track(peak_times, nominal_period_us: float, kp: float, kf: float,
               t_start: float, n_slots: int) -> np.ndarray:
    """Sampling instants from the DPLL; see _dpll_run for the loop law."""
    instants, _, _ = _dpll_run(
        np.asarray(peak_times, dtype=float), nominal_period_us, kp, kf,
        t_start, n_slots,
    )
    return instants


def _sample_states(merged_times: np.ndarray, merged_states: np.ndarray,
                   instants: np.ndarray) -> np.ndarray:
    """State of the set/reset flip-flop at each instant (0 before any peak)."""
    idx = np.searchsorted(merged_times, instants, side="right") - 1
    bits = np.zeros(instants.size, dtype=np.uint8)
    have = idx >= 0
    bits[have] = merged_states[idx[have]]
    return bits


def sample_toggle_state(pos: PeakList, neg: PeakList, instants) -> np.ndarray:
    """Flip-flop state (set by POS, reset by NEG, 0 before any peak) sampled
    at arbitrary instants; a peak exactly at an instant counts."""
    merged_times, merged_states = _merge_peaks(pos, neg)
    return _sample_states(merged_times, merged_states,
                          np.asarray(instants, dtype=float))


def toggle_demodulate(pos: PeakList, neg: PeakList, cfg: DemodConfig,
                      t_start: float, n_bits: int,
                      stats: dict | None = None) -> BitStream:
    """Sample the set/reset state once per symbol; see module docstring for
    the two timing modes."""
    if n_bits <= 0:
        raise ConfigError("n_bits must be positive")
    period = cfg.symbol_period_us
    merged_times, merged_states = _merge_peaks(pos, neg)
    if cfg.use_dpll:
        instants, state, matched = _dpll_run(
            merged_times, period, cfg.kp, cfg.kf, t_start, n_bits
        )
        if stats is not None:
            stats["dpll_matched_slots"] = matched
            stats["dpll_lock"] = state.lock
            stats["dpll_final_period_us"] = state.period_us
    else:
        instants = t_start + period * np.arange(1, n_bits + 1)
    bits = _sample_states(merged_times, merged_states, instants)
    return BitStream(bits, origin=LINE_CODED)


def demodulate(events: EventStream, cfg: DemodConfig, roi: RoI, n_bits: int,
               t_start: float = 0.0, stats: dict | None = None) -> BitStream:
    """Full receiver chain over an event stream.

    Bins are aligned to t_start, so translating all events and t_start
    together leaves the output unchanged. If `stats` is given it is filled
    with chain diagnostics (event/peak counts, DPLL lock info).
    """
    if n_bits <= 0:
        raise ConfigError("n_bits must be positive")
    cropped = crop_roi(events, roi)
    period = cfg.symbol_period_us
    t1 = t_start + (n_bits + 2) * period
    hist = bin_events(cropped, cfg.resolved_bin_width_us, t_start, t1)
    pos_s, neg_s = smooth(hist, cfg)
    pos_peaks = detect_peaks(pos_s, cfg, t0_us=t_start, polarity=POS)
    neg_peaks = detect_peaks(neg_s, cfg, t0_us=t_start, polarity=NEG)
    if stats is not None:
        stats["n_events"] = len(cropped)
        stats["pos_peaks"] = len(pos_peaks)
        stats["neg_peaks"] = len(neg_peaks)
    return toggle_demodulate(pos_peaks, neg_peaks, cfg, t_start, n_bits,
                             stats=stats)
