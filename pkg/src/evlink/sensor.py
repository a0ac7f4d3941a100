"""Event-based vision sensor model.

Per-pixel pipeline, evaluated on a uniform sample grid:

    L = log(irradiance + eps) + noise
      -> first-order low-pass (cutoff lp_cutoff_hz)
      -> change detector against a reference level: +theta_on crossing emits
         POS and resets the reference, -theta_off emits NEG and resets;
         comparisons are suppressed for refractory_us after each event.

Event timestamps are quantized to integer microseconds on emission, and the
refractory rule is enforced on the quantized timestamps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.signal import lfilter

from .signals import (
    NEG,
    OFF,
    ON,
    POS,
    ConfigError,
    EventStream,
    OpticalWaveform,
    SampledSignal,
    merge_streams,
    sample_waveform,
)

INTENSITY_FLOOR_FRACTION = 1e-6  # of full scale, added before the log

# Parameter factors drawn from the array spread never shrink below this.
_MIN_SPREAD_FACTOR = 0.05


@dataclass(frozen=True)
class PixelParams:
    theta_on: float
    theta_off: float
    lp_cutoff_hz: float
    refractory_us: float = 0.0
    noise_sigma: float = 0.0
    sample_dt_us: float | None = None  # default: 1/(10 * lp_cutoff_hz)

    def __post_init__(self):
        if self.theta_on <= 0 or self.theta_off <= 0:
            raise ConfigError("contrast thresholds must be positive")
        if self.lp_cutoff_hz <= 0:
            raise ConfigError("lp_cutoff_hz must be positive")
        if self.refractory_us < 0:
            raise ConfigError("refractory_us must be >= 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.sample_dt_us is not None:
            if self.sample_dt_us <= 0:
                raise ConfigError("sample_dt_us must be positive")
            if self.sample_dt_us > self.max_sample_dt_us:
                raise ConfigError(
                    f"sample_dt_us={self.sample_dt_us} too coarse to resolve "
                    f"the {self.lp_cutoff_hz} Hz filter "
                    f"(max {self.max_sample_dt_us:.4g} us)"
                )

    @property
    def max_sample_dt_us(self) -> float:
        return 1e6 / (10.0 * self.lp_cutoff_hz)

    @property
    def resolved_sample_dt_us(self) -> float:
        return self.sample_dt_us if self.sample_dt_us is not None else self.max_sample_dt_us

    @property
    def tau_us(self) -> float:
        """Low-pass filter time constant."""
        return 1e6 / (2.0 * math.pi * self.lp_cutoff_hz)


@dataclass(frozen=True)
class ArraySpread:
    """Relative per-pixel std for each pixel parameter, plus the draw seed."""

    theta_on: float = 0.0
    theta_off: float = 0.0
    lp_cutoff: float = 0.0
    refractory: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.name != "seed" and getattr(self, f.name) < 0:
                raise ConfigError(f"spread {f.name} must be >= 0")

    @property
    def is_zero(self) -> bool:
        return all(
            getattr(self, f.name) == 0 for f in fields(self) if f.name != "seed"
        )


def _lowpass(x: np.ndarray, dt_us: float, tau_us: float) -> np.ndarray:
    """First-order (single pole) low-pass, started settled at x[0]."""
    alpha = dt_us / (tau_us + dt_us)
    b = [alpha]
    a = [1.0, alpha - 1.0]
    zi = np.array([(1.0 - alpha) * x[0]])
    y, _ = lfilter(b, a, x, zi=zi)
    return y


def _scan_events(sig: np.ndarray, theta_on: float, theta_off: float,
                 t0_us: float, dt_us: float, refractory_us: float):
    """Reference-reset threshold detector over the filtered signal.

    Returns (quantized event times, polarities). Scans in adaptively sized
    chunks so both event-dense and event-sparse signals stay near O(n) in
    numpy. The dead time is enforced on the quantized (integer-microsecond)
    timestamps, which is what downstream consumers see.
    """
    t_out: list[int] = []
    pol_out: list[int] = []
    n = sig.size
    if n == 0:
        return np.array(t_out, dtype=np.int64), np.array(pol_out, dtype=np.int8)
    ref = sig[0]
    i = 1
    chunk = 64
    next_ok_t = -np.inf
    while i < n:
        j = min(i + chunk, n)
        seg = sig[i:j]
        pos_hit = seg - ref >= theta_on
        hit = pos_hit | (ref - seg >= theta_off)
        if refractory_us > 0 and next_ok_t > -np.inf:
            hit = hit & (np.rint(t0_us + np.arange(i, j) * dt_us) >= next_ok_t)
        k = int(np.argmax(hit))
        if not hit[k]:
            i = j
            chunk = min(chunk * 4, 1 << 20)
            continue
        at = i + k
        t_evt = int(np.rint(t0_us + at * dt_us))
        t_out.append(t_evt)
        pol_out.append(POS if pos_hit[k] else NEG)
        ref = sig[at]
        next_ok_t = t_evt + refractory_us
        i = at + 1
        chunk = 64
    return np.array(t_out, dtype=np.int64), np.array(pol_out, dtype=np.int8)


def simulate_pixel(irradiance: SampledSignal, params: PixelParams,
                   x: int = 0, y: int = 0, seed=None) -> EventStream:
    """Run one pixel over a sampled irradiance signal; returns sorted events."""
    dt = irradiance.dt_us
    if dt <= 0:
        raise ConfigError("sample step must be positive")
    if dt > params.max_sample_dt_us * (1 + 1e-9):
        raise ConfigError(
            f"sample step {dt} us too coarse for cutoff {params.lp_cutoff_hz} Hz"
        )
    values = irradiance.values
    if values.size == 0:
        return EventStream.empty()

    full_scale = float(values.max())
    eps = INTENSITY_FLOOR_FRACTION * (full_scale if full_scale > 0 else 1.0)
    log_l = np.log(values + eps)
    if params.noise_sigma > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        log_l = log_l + rng.normal(0.0, params.noise_sigma, log_l.size)
    filtered = _lowpass(log_l, dt, params.tau_us)

    t_evt, pol = _scan_events(
        filtered, params.theta_on, params.theta_off,
        irradiance.t0_us, dt, params.refractory_us,
    )
    n = t_evt.size
    return EventStream(
        t_evt,
        np.full(n, x, dtype=np.int32),
        np.full(n, y, dtype=np.int32),
        pol,
    )


def _spread_params(base: PixelParams, spread: ArraySpread, pixel_index: int) -> PixelParams:
    if spread.is_zero:
        return base
    rng = np.random.default_rng(np.random.SeedSequence([spread.seed, pixel_index]))

    def draw(rel):
        return max(1.0 + rng.normal(0.0, rel), _MIN_SPREAD_FACTOR) if rel > 0 else 1.0

    return replace(
        base,
        theta_on=base.theta_on * draw(spread.theta_on),
        theta_off=base.theta_off * draw(spread.theta_off),
        lp_cutoff_hz=base.lp_cutoff_hz * draw(spread.lp_cutoff),
        refractory_us=base.refractory_us * draw(spread.refractory),
        noise_sigma=base.noise_sigma * draw(spread.noise_sigma),
        sample_dt_us=None,
    )


def pixel_grid(n_pixels: int, x0: int = 0, y0: int = 0):
    """Compact square-ish layout for n lit pixels: (x, y) per pixel index."""
    side = int(math.ceil(math.sqrt(n_pixels)))
    return [(x0 + i % side, y0 + i // side) for i in range(n_pixels)]


def simulate_array(irradiance: SampledSignal, base: PixelParams,
                   spread: ArraySpread, n_pixels: int, seed=0) -> EventStream:
    """Simulate n pixels with per-pixel parameter spread and merge the events.

    Per-pixel noise streams are seeded from (seed, pixel_index), so the
    result does not depend on evaluation order.
    """
    if n_pixels < 1:
        raise ConfigError("n_pixels must be >= 1")
    coords = pixel_grid(n_pixels)
    streams = []
    for i, (px, py) in enumerate(coords):
        params = _spread_params(base, spread, i)
        # Pixel cutoff drawn above the base value must still be resolved by
        # the shared sample grid; cap it at what the grid supports.
        max_cutoff = 1e6 / (10.0 * irradiance.dt_us)
        if params.lp_cutoff_hz > max_cutoff:
            params = replace(params, lp_cutoff_hz=max_cutoff)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        streams.append(simulate_pixel(irradiance, params, x=px, y=py, seed=rng))
    return merge_streams(streams)


def square_wave(freq_hz: float, duration_us: float,
                log_contrast: float = 1.0) -> OpticalWaveform:
    """Symmetric square wave starting ON at t=0 with the given log-intensity
    contrast (off level 1.0)."""
    if freq_hz <= 0:
        raise ConfigError("frequency must be positive")
    half = 5e5 / freq_hz
    n_edges = int(math.ceil(duration_us / half))
    transitions = tuple(
        (k * half, ON if k % 2 == 0 else OFF) for k in range(n_edges)
    )
    return OpticalWaveform(
        transitions, on_intensity=math.exp(log_contrast), off_intensity=1.0
    )


def frequency_response(base: PixelParams, freqs_hz, duration_us: float,
                       seed: int = 0):
    """Event counts for a unit-log-contrast square wave at each frequency.

    Returns a list of (pos_count, neg_count). The sample step is tightened
    per frequency so the stimulus itself stays resolved.
    """
    for f in freqs_hz:
        if f <= 0:
            raise ConfigError("frequencies must be positive")
    results = []
    if duration_us <= 0:
        return [(0, 0) for _ in freqs_hz]
    for i, f in enumerate(freqs_hz):
        dt = min(base.resolved_sample_dt_us, 1e6 / (10.0 * f))
        wave = square_wave(f, duration_us)
        sig = sample_waveform(wave, dt, 0.0, duration_us)
        params = replace(base, sample_dt_us=None)
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        events = simulate_pixel(
            SampledSignal(0.0, dt, sig.values), params, seed=rng
        )
        pos = int(np.count_nonzero(events.p == POS))
        results.append((pos, len(events) - pos))
    return results
