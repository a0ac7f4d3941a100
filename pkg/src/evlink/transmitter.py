"""NRZ OOK transmitter with microcontroller timing imperfections.

Edge timing model: ideal edge at k/symbol_rate, plus Gaussian jitter, then
snapped to the timer quantum grid, then clamped so edges stay strictly
increasing (minimum gap = 1% of the symbol period).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import OFF, ON, BitStream, ConfigError, OpticalWaveform

MIN_GAP_FRACTION = 0.01


@dataclass(frozen=True)
class TxConfig:
    symbol_rate_hz: float
    jitter_sigma_us: float = 0.0
    timer_quantum_us: float = 0.0
    on_intensity: float = 1.0
    off_intensity: float = 0.0

    def __post_init__(self):
        if self.symbol_rate_hz <= 0:
            raise ConfigError("symbol_rate_hz must be positive")
        if self.jitter_sigma_us < 0:
            raise ConfigError("jitter_sigma_us must be >= 0")
        if self.timer_quantum_us < 0:
            raise ConfigError("timer_quantum_us must be >= 0")
        if self.on_intensity <= 0:
            raise ConfigError("on_intensity must be positive")
        # off == on is allowed: it models a zero-contrast (broken) link.
        if not 0 <= self.off_intensity <= self.on_intensity:
            raise ConfigError("need 0 <= off_intensity <= on_intensity")

    @property
    def symbol_period_us(self) -> float:
        return 1e6 / self.symbol_rate_hz


def modulate_ook(bits, cfg: TxConfig, seed=None) -> OpticalWaveform:
    """Turn line bits into an optical waveform (NRZ: 1->ON, 0->OFF).

    Consecutive equal bits produce no transition. The waveform starts OFF
    before t=0, so a leading 1 bit yields a transition at t=0.
    """
    arr = bits.bits if isinstance(bits, BitStream) else np.asarray(bits, dtype=np.uint8)
    if arr.size == 0:
        raise ConfigError("bit stream must be non-empty")
    period = cfg.symbol_period_us

    prev = np.concatenate(([0], arr[:-1]))
    change_idx = np.nonzero(arr != prev)[0]
    if change_idx.size == 0:
        return OpticalWaveform((), cfg.on_intensity, cfg.off_intensity)

    ideal = change_idx * period
    realized = ideal.astype(float)
    if cfg.jitter_sigma_us > 0:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        realized = realized + rng.normal(0.0, cfg.jitter_sigma_us, realized.size)
    if cfg.timer_quantum_us > 0:
        realized = np.round(realized / cfg.timer_quantum_us) * cfg.timer_quantum_us

    min_gap = MIN_GAP_FRACTION * period
    realized[0] = max(realized[0], 0.0)
    for i in range(1, realized.size):
        if realized[i] < realized[i - 1] + min_gap:
            realized[i] = realized[i - 1] + min_gap

    levels = np.where(arr[change_idx] == 1, ON, OFF)
    transitions = tuple((float(t), int(lv)) for t, lv in zip(realized, levels))
    return OpticalWaveform(transitions, cfg.on_intensity, cfg.off_intensity)
