"""Experiment harness: seeded end-to-end BER trials, parameter sweeps,
DPLL ablation, and net-rate arithmetic.

Every trial is fully determined by (master_seed, trial_index); sweeps pair
the DPLL on/off branches on identical seeds so the comparison is matched.
"""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass

import numpy as np

from . import line_coding
from .channel import ChannelConfig, apply_channel
from .demod import (
    DemodConfig,
    PeakList,
    RoI,
    demodulate,
    dpll_track,
    sample_toggle_state,
)
from .sensor import ArraySpread, PixelParams, simulate_array
from .signals import (
    NEG,
    POS,
    BitStream,
    ConfigError,
    EventStream,
    sample_waveform,
)
from .transmitter import TxConfig, modulate_ook

HDFEC_BER_LIMIT = 1e-3  # 7% hard-decision FEC threshold

SWEEP_AXES = ("symbol_rate", "distance", "jitter")
SWEEP_CSV_HEADER = "axis_value,dpll,ber,bit_errors,bits,flags"


@dataclass(frozen=True)
class LinkConfig:
    """Complete description of one simulated link experiment."""

    tx: TxConfig
    ch: ChannelConfig
    px: PixelParams
    spread: ArraySpread
    dm: DemodConfig
    payload_bits: int = 8000
    n_trials: int = 10
    master_seed: int = 12345

    def __post_init__(self):
        if self.payload_bits <= 0 or self.payload_bits % 8 != 0:
            raise ConfigError("payload_bits must be positive and divisible by 8")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")

    @property
    def payload_len(self) -> int:
        return self.payload_bits // 8

    @property
    def n_line_bits(self) -> int:
        return line_coding.SYNC_BITS + 10 * self.payload_len


@dataclass(frozen=True)
class BerResult:
    bit_errors: int
    bits_compared: int
    ber: float
    dpll_enabled: bool | None = None
    flags: tuple = ()
    trials: tuple = ()

    def __post_init__(self):
        if self.bits_compared <= 0:
            raise ValueError("bits_compared must be positive")
        if not 0 <= self.ber <= 1:
            raise ValueError("ber out of range")

    def to_dict(self) -> dict:
        d = {
            "bit_errors": int(self.bit_errors),
            "bits_compared": int(self.bits_compared),
            "ber": float(self.ber),
            "dpll_enabled": self.dpll_enabled,
            "flags": list(self.flags),
        }
        if self.trials:
            d["trials"] = [t.to_dict() for t in self.trials]
        return d


def compute_ber(tx_bits, rx_bits, dpll_enabled=None, flags=()) -> BerResult:
    """Hamming distance over equal-length bit streams."""
    a = tx_bits.bits if isinstance(tx_bits, BitStream) else np.asarray(tx_bits, dtype=np.uint8)
    b = rx_bits.bits if isinstance(rx_bits, BitStream) else np.asarray(rx_bits, dtype=np.uint8)
    if a.size != b.size:
        raise ValueError(f"bit stream length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("bit streams must be non-empty")
    errors = int(np.count_nonzero(a != b))
    return BerResult(
        bit_errors=errors,
        bits_compared=int(a.size),
        ber=errors / a.size,
        dpll_enabled=dpll_enabled,
        flags=tuple(flags),
    )


def passes_hdfec(ber: float) -> bool:
    return ber < HDFEC_BER_LIMIT


def net_rate(gross_bps: float, line_overhead: float = 8 / 10,
             fec_overhead: float = 0.07) -> float:
    """Net data rate after line-code rate and FEC overhead."""
    if gross_bps <= 0:
        raise ConfigError("gross_bps must be positive")
    return gross_bps * line_overhead * (1.0 - fec_overhead)


def _trial_seeds(master_seed: int, trial_index: int):
    ss = np.random.SeedSequence([int(master_seed), int(trial_index)])
    s_payload, s_tx, s_sensor = ss.generate_state(3, dtype=np.uint32)
    return int(s_payload), int(s_tx), int(s_sensor)


def _payload_to_bits(payload: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(payload, dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class TrialArtifacts:
    """Everything one trial produced, for dumping and debugging."""

    result: BerResult
    payload: bytes
    decoded: bytes
    events: EventStream
    stats: dict


def run_trial_artifacts(cfg: LinkConfig, trial_index: int) -> TrialArtifacts:
    """One full trial: payload -> frame -> LED -> channel -> sensor ->
    demodulate -> align -> decode -> payload BER."""
    s_payload, s_tx, s_sensor = _trial_seeds(cfg.master_seed, trial_index)

    payload = np.random.default_rng(s_payload).integers(
        0, 256, cfg.payload_len, dtype=np.uint8
    ).tobytes()
    line_bits = line_coding.frame_payload(payload)

    wave = modulate_ook(line_bits, cfg.tx, seed=s_tx)
    received = apply_channel(wave, cfg.ch)

    dt = cfg.px.resolved_sample_dt_us
    period = cfg.tx.symbol_period_us
    t1 = cfg.n_line_bits * period + 4 * period
    irr = sample_waveform(received.waveform, dt, 0.0, t1)
    events = simulate_array(irr, cfg.px, cfg.spread, received.n_pixels,
                            seed=s_sensor)

    side = int(math.ceil(math.sqrt(received.n_pixels)))
    roi = RoI(0, side - 1, 0, side - 1)
    n_demod = cfg.n_line_bits + 2 * line_coding.SYNC_BITS  # slack past the frame
    stats: dict = {}
    rx_bits = demodulate(events, cfg.dm, roi, n_demod, t_start=0.0, stats=stats)

    flags = []
    decoded = bytes(cfg.payload_len)
    try:
        payload_bits, offset = line_coding.align_and_extract(rx_bits)
        stats["sync_offset"] = offset
        n_avail = (len(payload_bits) // 10) * 10
        n_want = 10 * cfg.payload_len
        usable = payload_bits.bits[:min(n_avail, n_want)]
        if usable.size:
            got, group_flags = line_coding.decode_8b10b(usable)
            decoded = got + bytes(cfg.payload_len - len(got))
            stats["flagged_groups"] = int(group_flags.sum())
            if usable.size < n_want:
                flags.append("truncated_frame")
        else:
            flags.append("empty_frame")
    except line_coding.AlignmentError:
        flags.append("alignment_failure")
        stats["flagged_groups"] = cfg.payload_len

    result = compute_ber(
        _payload_to_bits(payload), _payload_to_bits(decoded),
        dpll_enabled=cfg.dm.use_dpll, flags=flags,
    )
    return TrialArtifacts(result=result, payload=payload, decoded=decoded,
                          events=events, stats=stats)


def run_trial(cfg: LinkConfig, trial_index: int) -> BerResult:
    return run_trial_artifacts(cfg, trial_index).result


def aggregate(trials, dpll_enabled=None) -> BerResult:
    """Reduce per-trial results (in trial order) into one BerResult."""
    trials = tuple(trials)
    if not trials:
        raise ValueError("no trials to aggregate")
    errors = sum(t.bit_errors for t in trials)
    bits = sum(t.bits_compared for t in trials)
    flags = tuple(f for t in trials for f in t.flags)
    return BerResult(
        bit_errors=errors,
        bits_compared=bits,
        ber=errors / bits,
        dpll_enabled=dpll_enabled,
        flags=flags,
        trials=trials,
    )


def run_link(cfg: LinkConfig) -> BerResult:
    """Run all configured trials and aggregate."""
    results = [run_trial(cfg, i) for i in range(cfg.n_trials)]
    return aggregate(results, dpll_enabled=cfg.dm.use_dpll)


def _with_axis_value(cfg: LinkConfig, axis: str, value: float) -> LinkConfig:
    if axis == "symbol_rate":
        # Demod timing defaults (bin width, peak separation) re-derive from
        # the new rate.
        tx = dataclasses.replace(cfg.tx, symbol_rate_hz=value)
        dm = dataclasses.replace(
            cfg.dm, nominal_symbol_rate_hz=value,
            bin_width_us=None, peak_min_separation_us=None,
        )
        return dataclasses.replace(cfg, tx=tx, dm=dm)
    if axis == "distance":
        return dataclasses.replace(
            cfg, ch=dataclasses.replace(cfg.ch, distance_m=value)
        )
    if axis == "jitter":
        return dataclasses.replace(
            cfg, tx=dataclasses.replace(cfg.tx, jitter_sigma_us=value)
        )
    raise ConfigError(f"unknown sweep axis {axis!r} (want one of {SWEEP_AXES})")


@dataclass(frozen=True)
class SweepRow:
    axis: str
    value: float
    dpll: bool
    result: BerResult


def sweep(cfg: LinkConfig, axis: str, values, dpll: str = "both"):
    """One aggregated BerResult row per (axis value, DPLL setting).

    The on/off branches of each value share trial seeds, so an A/B
    comparison sees identical noise realizations.
    """
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    if dpll not in ("on", "off", "both"):
        raise ConfigError("dpll must be 'on', 'off', or 'both'")
    dpll_settings = {"on": [True], "off": [False], "both": [True, False]}[dpll]
    rows = []
    for vi, value in enumerate(values):
        base = _with_axis_value(cfg, axis, value)
        seed = int(np.random.SeedSequence(
            [cfg.master_seed, vi]).generate_state(1, dtype=np.uint32)[0])
        for use_dpll in dpll_settings:
            variant = dataclasses.replace(
                base,
                dm=dataclasses.replace(base.dm, use_dpll=use_dpll),
                master_seed=seed,
            )
            rows.append(SweepRow(
                axis=axis, value=float(value), dpll=use_dpll,
                result=run_link(variant),
            ))
    return rows


def sweep_rows_to_csv(rows) -> str:
    """CSV table `axis_value,dpll,ber,bit_errors,bits,flags` (flags is the
    number of flagged trials)."""
    out = io.StringIO()
    out.write(SWEEP_CSV_HEADER + "\n")
    for r in rows:
        flagged = sum(1 for t in r.result.trials if t.flags)
        out.write(
            f"{r.value:g},{'on' if r.dpll else 'off'},{r.result.ber:.10g},"
            f"{r.result.bit_errors},{r.result.bits_compared},{flagged}\n"
        )
    return out.getvalue()


def _strictify(times: np.ndarray) -> np.ndarray:
    """Nudge duplicate sorted times up one ulp so PeakList accepts them."""
    out = np.sort(times)
    for i in range(1, out.size):
        if out[i] <= out[i - 1]:
            out[i] = np.nextafter(out[i - 1], math.inf)
    return out


def synthetic_peak_trial(n_bits: int, symbol_rate_hz: float,
                         jitter_frac: float, peak_loss: float,
                         use_dpll: bool, seed: int,
                         kp: float = 0.1, kf: float = 0.01) -> BerResult:
    """Demod-level DPLL ablation trial on a synthetic peak train.

    Line bits come from 8b/10b-encoding a random payload (realistic run
    lengths). Each bit transition produces a peak at its slot boundary plus
    Gaussian jitter of jitter_frac * symbol period. The timing train fed to
    the DPLL additionally loses `peak_loss` of its peaks, exercising the
    flywheel; the set/reset data path keeps the full peak lists. Both
    branches draw from the same seed, so on/off comparisons are paired.
    """
    if n_bits <= 0:
        raise ConfigError("n_bits must be positive")
    draw = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    payload = draw.integers(
        0, 256, max((n_bits + 9) // 10, 1), dtype=np.uint8
    ).tobytes()
    bits = line_coding.encode_8b10b(payload).bits[:n_bits]

    period = 1e6 / symbol_rate_hz
    prev = np.concatenate(([0], bits[:-1]))
    change = np.nonzero(bits != prev)[0]
    t_peaks = change * period + draw.normal(0.0, jitter_frac * period, change.size)
    loss_draw = draw.random(t_peaks.size)

    pol = bits[change]
    pos = PeakList(_strictify(t_peaks[pol == 1]), POS)
    neg = PeakList(_strictify(t_peaks[pol == 0]), NEG)

    if use_dpll:
        timing_train = _strictify(t_peaks[loss_draw >= peak_loss])
        instants = dpll_track(timing_train, period, kp, kf, 0.0, n_bits)
    else:
        instants = period * np.arange(1, n_bits + 1)
    rx = sample_toggle_state(pos, neg, instants)
    return compute_ber(bits, rx, dpll_enabled=use_dpll)
