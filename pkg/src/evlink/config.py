"""Flat key=value experiment config files.

One dotted key per line (`tx.symbol_rate_hz=50000`), `#` comments and blank
lines ignored. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from .channel import ChannelConfig
from .demod import DemodConfig
from .harness import LinkConfig
from .sensor import ArraySpread, PixelParams
from .signals import ConfigError
from .transmitter import TxConfig

_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"expected integer, got {v}")
    return int(f)


def _bool(v):
    try:
        return _BOOL[v.strip().lower()]
    except KeyError:
        raise ValueError(f"expected boolean, got {v!r}") from None


def _str(v):
    return v.strip()


# key -> (section, field, parser); None section collects link-level fields
_SCHEMA = {
    "tx.symbol_rate_hz": ("tx", "symbol_rate_hz", _float),
    "tx.jitter_sigma_us": ("tx", "jitter_sigma_us", _float),
    "tx.timer_quantum_us": ("tx", "timer_quantum_us", _float),
    "tx.on_intensity": ("tx", "on_intensity", _float),
    "tx.off_intensity": ("tx", "off_intensity", _float),
    "ch.distance_m": ("ch", "distance_m", _float),
    "ch.reference_distance_m": ("ch", "reference_distance_m", _float),
    "ch.ambient_irradiance": ("ch", "ambient_irradiance", _float),
    "ch.n_lit_pixels": ("ch", "n_lit_pixels", _int),
    "px.theta_on": ("px", "theta_on", _float),
    "px.theta_off": ("px", "theta_off", _float),
    "px.lp_cutoff_hz": ("px", "lp_cutoff_hz", _float),
    "px.refractory_us": ("px", "refractory_us", _float),
    "px.noise_sigma": ("px", "noise_sigma", _float),
    "px.sample_dt_us": ("px", "sample_dt_us", _float),
    "spread.theta_on": ("spread", "theta_on", _float),
    "spread.theta_off": ("spread", "theta_off", _float),
    "spread.lp_cutoff": ("spread", "lp_cutoff", _float),
    "spread.refractory": ("spread", "refractory", _float),
    "spread.noise_sigma": ("spread", "noise_sigma", _float),
    "spread.seed": ("spread", "seed", _int),
    "dm.nominal_symbol_rate_hz": ("dm", "nominal_symbol_rate_hz", _float),
    "dm.bin_width_us": ("dm", "bin_width_us", _float),
    "dm.smooth_kernel": ("dm", "smooth_kernel", _str),
    "dm.smooth_width_bins": ("dm", "smooth_width_bins", _int),
    "dm.peak_min_separation_us": ("dm", "peak_min_separation_us", _float),
    "dm.peak_threshold": ("dm", "peak_threshold", _float),
    "dm.use_dpll": ("dm", "use_dpll", _bool),
    "dm.kp": ("dm", "kp", _float),
    "dm.kf": ("dm", "kf", _float),
    "link.payload_bits": (None, "payload_bits", _int),
    "link.n_trials": (None, "n_trials", _int),
    "link.master_seed": (None, "master_seed", _int),
}

# A sane desk-scale clean link; config files override what they name.
DEFAULTS = {
    "tx.symbol_rate_hz": "50000",
    "tx.on_intensity": "100.0",
    "tx.off_intensity": "1.0",
    "ch.distance_m": "100",
    "ch.reference_distance_m": "100",
    "ch.n_lit_pixels": "4",
    "px.theta_on": "0.4",
    "px.theta_off": "0.4",
    "px.lp_cutoff_hz": "400000",
    "link.payload_bits": "8000",
    "link.n_trials": "10",
    "link.master_seed": "12345",
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse flat key=value lines into a {key: raw string} dict."""
    raw = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{ln}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{ln}: unknown config key {key!r}")
        raw[key] = value.strip()
    return raw


def load_config_file(path) -> dict:
    with open(path) as f:
        return parse_config_text(f.read(), source=str(path))


def build_link_config(raw: dict) -> LinkConfig:
    """Assemble a LinkConfig from raw key strings over the defaults."""
    merged = dict(DEFAULTS)
    merged.update(raw)
    sections: dict = {"tx": {}, "ch": {}, "px": {}, "spread": {}, "dm": {},
                      None: {}}
    for key, value in merged.items():
        section, field, parse = _SCHEMA[key]
        try:
            sections[section][field] = parse(value)
        except ValueError as e:
            raise ConfigError(f"config key {key}: {e}") from None

    tx = TxConfig(**sections["tx"])
    dm_kwargs = sections["dm"]
    dm_kwargs.setdefault("nominal_symbol_rate_hz", tx.symbol_rate_hz)
    return LinkConfig(
        tx=tx,
        ch=ChannelConfig(**sections["ch"]),
        px=PixelParams(**sections["px"]),
        spread=ArraySpread(**sections["spread"]),
        dm=DemodConfig(**dm_kwargs),
        **sections[None],
    )


def load_link_config(path) -> LinkConfig:
    return build_link_config(load_config_file(path))


def default_config_text() -> str:
    """The defaults in config-file form, for `evlink simulate --init`."""
    lines = ["# evlink experiment configuration"]
    lines += [f"{k}={v}" for k, v in DEFAULTS.items()]
    return "\n".join(lines) + "\n"
