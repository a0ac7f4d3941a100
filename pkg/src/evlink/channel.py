"""Free-space channel: inverse-square geometric loss plus ambient light.

The same irradiance waveform is delivered to every lit pixel; per-pixel
variation belongs to the sensor model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .signals import ConfigError, OpticalWaveform


@dataclass(frozen=True)
class ChannelConfig:
    distance_m: float
    reference_distance_m: float
    ambient_irradiance: float = 0.0
    n_lit_pixels: int = 1

    def __post_init__(self):
        if self.distance_m <= 0 or self.reference_distance_m <= 0:
            raise ConfigError("distances must be positive")
        if self.ambient_irradiance < 0:
            raise ConfigError("ambient_irradiance must be >= 0")
        if self.n_lit_pixels < 1:
            raise ConfigError("n_lit_pixels must be >= 1")

    @property
    def geometric_scale(self) -> float:
        return (self.reference_distance_m / self.distance_m) ** 2


@dataclass(frozen=True, eq=False)
class ReceivedIrradiance:
    """Per-pixel irradiance waveform; identical copy at each lit pixel."""

    waveform: OpticalWaveform
    n_pixels: int


def apply_channel(w: OpticalWaveform, cfg: ChannelConfig) -> ReceivedIrradiance:
    """Scale the signal by inverse-square loss and add ambient irradiance."""
    s = cfg.geometric_scale
    received = OpticalWaveform(
        w.transitions,
        on_intensity=w.on_intensity * s + cfg.ambient_irradiance,
        off_intensity=w.off_intensity * s + cfg.ambient_irradiance,
    )
    return ReceivedIrradiance(waveform=received, n_pixels=cfg.n_lit_pixels)


def contrast_ratio(w: OpticalWaveform, cfg: ChannelConfig) -> float:
    """Received (on+ambient)/(off+ambient); a usable link needs this > 1."""
    s = cfg.geometric_scale
    num = w.on_intensity * s + cfg.ambient_irradiance
    den = w.off_intensity * s + cfg.ambient_irradiance
    if den == 0:
        return math.inf
    return num / den
