"""Command-line interface.

Commands: simulate, sweep, freq-response, decode, selftest. Exit codes:
0 success, 1 runtime failure (e.g. no sync found while decoding), 2 usage
or configuration error. All commands honor --seed for bit-identical reruns.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

import numpy as np

from . import config as cfgmod
from . import harness, line_coding
from .demod import RoI, demodulate
from .sensor import frequency_response
from .signals import ConfigError, CsvFormatError, read_events_csv, write_events_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load_cfg(path, seed=None, trials=None):
    cfg = cfgmod.load_link_config(path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=seed)
    if trials is not None:
        cfg = dataclasses.replace(cfg, n_trials=trials)
    return cfg


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _parse_values(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad numeric list: {text!r}") from None
    if not values:
        raise ConfigError("empty value list")
    return values


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args.config, args.seed, args.trials)
    artifacts0 = None
    results = []
    for i in range(cfg.n_trials):
        art = harness.run_trial_artifacts(cfg, i)
        if i == 0:
            artifacts0 = art
        results.append(art.result)
    agg = harness.aggregate(results, dpll_enabled=cfg.dm.use_dpll)
    _write_json(args.out, agg.to_dict())
    if args.dump_events:
        write_events_csv(artifacts0.events, args.dump_events)
    if args.dump_payload:
        with open(args.dump_payload, "wb") as f:
            f.write(artifacts0.payload)
    print(f"ber={agg.ber:.3e} errors={agg.bit_errors}/{agg.bits_compared} "
          f"dpll={'on' if cfg.dm.use_dpll else 'off'} -> {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args.config, args.seed, args.trials)
    values = _parse_values(args.values)
    rows = harness.sweep(cfg, args.axis, values, dpll=args.dpll)
    csv_text = harness.sweep_rows_to_csv(rows)
    with open(args.out, "w") as f:
        f.write(csv_text)
    print(f"{len(rows)} sweep rows -> {args.out}")
    return EXIT_OK


def cmd_freq_response(args) -> int:
    cfg = _load_cfg(args.config, args.seed)
    if args.freqs:
        freqs = _parse_values(args.freqs)
    else:
        freqs = list(np.logspace(3, 5, 13))
    counts = frequency_response(cfg.px, freqs, args.duration_us,
                                seed=cfg.master_seed)
    with open(args.out, "w") as f:
        f.write("freq_hz,pos_count,neg_count,events_per_toggle\n")
        for freq, (p, n) in zip(freqs, counts):
            toggles = 2.0 * freq * args.duration_us / 1e6
            per = (p + n) / toggles if toggles > 0 else 0.0
            f.write(f"{freq:g},{p},{n},{per:.6g}\n")
    print(f"{len(freqs)} frequencies -> {args.out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg = _load_cfg(args.config)
    events = read_events_csv(args.events_csv)
    payload_len = args.n_bits // 8
    if args.n_bits <= 0 or args.n_bits % 8 != 0:
        raise ConfigError("--n-bits must be positive and divisible by 8")
    n_line = line_coding.SYNC_BITS + 10 * payload_len
    n_demod = n_line + 2 * line_coding.SYNC_BITS

    roi = RoI(0, 10 ** 9, 0, 10 ** 9) if args.full_sensor else _roi_from(events)
    stats: dict = {}
    rx_bits = demodulate(events, cfg.dm, roi, n_demod, t_start=0.0, stats=stats)

    flags = []
    payload = bytes(payload_len)
    exit_code = EXIT_OK
    if stats.get("pos_peaks", 0) + stats.get("neg_peaks", 0) == 0:
        flags.append("no_peaks")
    else:
        try:
            payload_bits, offset = line_coding.align_and_extract(rx_bits)
            stats["sync_offset"] = offset
            usable = payload_bits.bits[:10 * payload_len]
            usable = usable[:(usable.size // 10) * 10]
            if usable.size:
                got, group_flags = line_coding.decode_8b10b(usable)
                payload = got + bytes(payload_len - len(got))
                stats["flagged_groups"] = int(group_flags.sum())
        except line_coding.AlignmentError:
            flags.append("alignment_failure")
            exit_code = EXIT_RUNTIME

    with open(args.out, "wb") as f:
        f.write(payload)
    stats["flags"] = flags
    _write_json(args.out + ".stats.json", _jsonable(stats))
    print(f"decoded {payload_len} bytes -> {args.out} "
          f"(flags: {','.join(flags) or 'none'})")
    return exit_code


def _roi_from(events):
    if len(events) == 0:
        return RoI(0, 0, 0, 0)
    return RoI(int(events.x.min()), int(events.x.max()),
               int(events.y.min()), int(events.y.max()))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def cmd_selftest(args) -> int:
    cfg = cfgmod.build_link_config({})
    cfg = dataclasses.replace(cfg, n_trials=1, payload_bits=1600)
    result = harness.run_trial(cfg, 0)
    print(f"selftest clean-link ber={result.ber:.3e} "
          f"({result.bit_errors}/{result.bits_compared})")
    if result.ber == 0.0:
        print("selftest: PASS")
        return EXIT_OK
    print("selftest: FAIL (expected zero errors on the clean link)")
    return EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="evlink",
        description="Event-camera optical link simulator and offline demodulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded BER trials")
    sim.add_argument("config", help="flat key=value experiment config")
    sim.add_argument("--seed", type=int, help="override link.master_seed")
    sim.add_argument("--trials", type=int, help="override link.n_trials")
    sim.add_argument("--out", default="ber.json", help="BER result JSON path")
    sim.add_argument("--dump-events", metavar="CSV",
                     help="write trial 0's event stream as CSV")
    sim.add_argument("--dump-payload", metavar="BIN",
                     help="write trial 0's payload bytes")
    sim.set_defaults(func=cmd_simulate)

    sw = sub.add_parser("sweep", help="BER sweep over one axis")
    sw.add_argument("config")
    sw.add_argument("--axis", required=True, choices=harness.SWEEP_AXES)
    sw.add_argument("--values", required=True,
                    help="comma-separated axis values")
    sw.add_argument("--dpll", default="both", choices=("on", "off", "both"))
    sw.add_argument("--seed", type=int)
    sw.add_argument("--trials", type=int)
    sw.add_argument("--out", default="sweep.csv")
    sw.set_defaults(func=cmd_sweep)

    fr = sub.add_parser("freq-response",
                        help="event counts vs LED blink frequency")
    fr.add_argument("config")
    fr.add_argument("--freqs", help="comma-separated frequencies in Hz "
                                    "(default: 13 points, 1 kHz to 100 kHz)")
    fr.add_argument("--duration-us", type=float, default=2e5)
    fr.add_argument("--seed", type=int)
    fr.add_argument("--out", default="freq_response.csv")
    fr.set_defaults(func=cmd_freq_response)

    de = sub.add_parser("decode", help="demodulate a recorded event CSV")
    de.add_argument("events_csv")
    de.add_argument("config")
    de.add_argument("--n-bits", type=int, required=True,
                    help="payload bits to recover")
    de.add_argument("--out", default="payload.bin")
    de.add_argument("--full-sensor", action="store_true",
                    help="skip RoI cropping")
    de.set_defaults(func=cmd_decode)

    st = sub.add_parser("selftest", help="quick clean-link sanity check")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, CsvFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
