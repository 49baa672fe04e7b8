"""Command-line front end.

Exit codes: 0 success, 2 usage or validation error, 3 infeasible sizing,
4 I/O failure, 5 trace parse or segmentation failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, keys_help, numeric_keys, resolve_key
from .errors import ConfigError, InfeasibleError, InsufficientDataError, TraceFormatError
from .motion import read_trace, sample_actuation, format_trace, synthesize_trace
from .rng import derive_rng, root_seed
from .sim import replay_trace, simulate_deployment, summary_csv, summary_table
from .sizing import size_system
from .transaction import LoRaConfig, RadioEnergyModel, calibrate_radio, time_on_air, tx_energy

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO, EXIT_TRACE = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _load(args) -> RunConfig:
    return RunConfig.load(args.config, args.override or [])


def _seed(cfg: RunConfig, args) -> int:
    """--seed, then sim.seed when the config sets it, then $KINESIM_SEED."""
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "sim.seed" in cfg.explicit:
        return cfg.get("sim.seed")
    return root_seed()


def _deployment(cfg: RunConfig, args):
    dep = cfg.deployment_config()
    changes = {"seed": _seed(cfg, args)}
    if getattr(args, "events", None) is not None:
        changes["event_count"] = args.events
    return dep.with_(**changes)


def _out_paths(cfg: RunConfig, args) -> tuple[Path, str]:
    out_dir = Path(args.out_dir or cfg.get("output.dir"))
    prefix = args.prefix or cfg.get("output.prefix")
    return out_dir, prefix


def _write_report(report, cfg: RunConfig, args) -> None:
    out_dir, prefix = _out_paths(cfg, args)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{prefix}.json").write_text(report.to_json(per_event=args.per_event), encoding="utf-8")
    (out_dir / f"{prefix}.csv").write_text(summary_csv(report), encoding="utf-8")
    (out_dir / f"{prefix}.txt").write_text(summary_table(report), encoding="utf-8")
    pct = 100.0 * report.success_rate
    print(f"events={report.event_count} delivered={report.delivered_events} success={pct:.2f}%")


# --- subcommands ---------------------------------------------------------------

def cmd_size(args) -> int:
    cfg = _load(args)
    if "sizing" not in cfg.sections:
        raise ConfigError(f"{cfg.source} has no [sizing] block")
    spec = cfg.sizing_spec()
    template = cfg.deployment_config()
    result = size_system(
        spec,
        distribution=template.distribution,
        template=template,
        samples=cfg.get("sizing.margin_samples"),
        seed=template.seed,
    )
    doc = json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
    print(doc, end="")
    lo, hi = result.rpm_band_at_generator
    table = [
        f"{'transaction energy':<24}{spec.transaction_energy * 1e3:>12.2f} mJ",
        f"{'required power':<24}{result.required_power * 1e3:>12.2f} mW",
        f"{'target generator speed':<24}{result.target_generator_rpm:>12.1f} RPM",
        f"{'gear ratio':<24}{result.gear_ratio:>12.2f}",
        f"{'generator band':<24}{lo:>7.0f}-{hi:.0f} RPM",
        f"{'capacitance':<24}{result.capacitance * 1e6:>12.0f} uF",
        f"{'wake threshold':<24}{result.wake_threshold:>12.2f} V",
    ]
    if result.margin_fraction is not None:
        table.append(f"{'nominal margin':<24}{100 * result.margin_fraction:>12.1f} %")
    print("\n".join(table), file=sys.stderr)
    if args.out_dir or args.prefix:
        out_dir, prefix = _out_paths(cfg, args)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{prefix}-size.json").write_text(doc, encoding="utf-8")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    report = simulate_deployment(_deployment(cfg, args))
    _write_report(report, cfg, args)
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _load(args)
    dep = _deployment(cfg, args)
    try:
        trace = read_trace(args.trace)
        report = replay_trace(trace, dep)
    except (TraceFormatError, InsufficientDataError) as exc:
        print(f"kinesim: trace error in {args.trace}: {exc}", file=sys.stderr)
        return EXIT_TRACE
    _write_report(report, cfg, args)
    return EXIT_OK


def _lora_from_flags(args) -> LoRaConfig:
    cr = args.cr - 4 if 5 <= args.cr <= 8 else args.cr
    explicit = args.explicit if args.explicit is not None else args.sf != 6
    return LoRaConfig(
        spreading_factor=args.sf,
        bandwidth=args.bw,
        coding_rate=cr,
        preamble_symbols=args.preamble,
        payload_bytes=args.pl,
        explicit_header=explicit,
        crc_on=args.crc,
        low_data_rate_optimize=args.ldro,
        tx_power_dbm=args.power_dbm,
    )


def cmd_toa(args) -> int:
    lora = _lora_from_flags(args)
    line = f"toa_ms={time_on_air(lora) * 1e3:.3f}"
    radio = None
    if args.tx_power_w is not None:
        radio = RadioEnergyModel(args.tx_power_w)
    elif args.tx_target_mj is not None:
        radio = calibrate_radio(args.tx_target_mj * 1e-3, lora)
    if radio is not None:
        line += f" tx_energy_mJ={tx_energy(lora, radio) * 1e3:.3f} tx_power_W={radio.effective_tx_power:.6f}"
    print(line)
    return EXIT_OK


def _sweep_point(task):
    value, dep = task
    report = simulate_deployment(dep)
    return value, report.success_rate, report.outcome_counts


def cmd_sweep(args) -> int:
    cfg = _load(args)
    try:
        sec, key = resolve_key(args.param)
    except ConfigError:
        raise UsageError(f"unknown sweep parameter {args.param!r}; valid keys: {', '.join(numeric_keys())}")
    if f"{sec}.{key}" not in numeric_keys():
        raise UsageError(f"{sec}.{key} is not numeric; valid keys: {', '.join(numeric_keys())}")
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    values = [args.start] if args.steps == 1 else list(np.linspace(args.start, args.stop, args.steps))
    tasks = []
    for value in values:
        point = cfg.copy_with(**{f"{sec}.{key}": repr(float(value))})
        point.validate()
        tasks.append((float(value), _deployment(point, args)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    rows.sort(key=lambda r: r[0])
    lines = ["value,success_rate,single_packet,double_packet,no_charge,channel_loss"]
    for value, rate, counts in rows:
        lines.append(
            f"{value:.6g},{rate:.6f},{counts['single_packet']},{counts['double_packet']},"
            f"{counts['no_charge']},{counts['channel_loss']}"
        )
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out_dir or args.prefix:
        out_dir, prefix = _out_paths(cfg, args)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{prefix}-sweep-{key}.csv").write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from .calibrate import calibrate_partial_probability, min_coupling_efficiency

    cfg = _load(args)
    dep = _deployment(cfg, args)
    eta_min = min_coupling_efficiency(dep)
    doc = {
        "config": cfg.source,
        "coupling_efficiency": dep.powerpath.coupling_efficiency,
        "min_coupling_efficiency": eta_min,
    }
    if args.target_success is not None:
        p, achieved = calibrate_partial_probability(dep, args.target_success, events=args.calibration_events)
        doc.update(partial_probability=p, achieved_success=achieved, calibration_events=args.calibration_events)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_synth_trace(args) -> int:
    cfg = _load(args)
    dist = cfg.distribution()
    if args.no_partials:
        dist = dataclasses.replace(dist, partial_probability=0.0)
    seed = _seed(cfg, args)
    events = []
    for i in range(args.events):
        ev = sample_actuation(dist, derive_rng(seed, "synth", i))
        gap = min(max(ev.gap_to_next, args.min_gap), args.max_gap)
        events.append(dataclasses.replace(ev, gap_to_next=gap))
    text = format_trace(synthesize_trace(events, args.rate, cfg.get("motion.profile_shape")))
    if args.output == "-":
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text, encoding="utf-8")
    return EXIT_OK


# --- parser -----------------------------------------------------------------------

def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("config", help="config file or bundled preset name (paper-bin.cfg, paper-door.cfg, paper-cabinet.cfg)")
    p.add_argument("--override", "-O", action="append", metavar="KEY=VALUE", help="override a config key; repeatable")
    p.add_argument("--out-dir", help="directory for report files (default: output.dir)")
    p.add_argument("--prefix", help="report file prefix (default: output.prefix)")
    return p


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="kinesim",
        description="Simulate and size motion-powered batteryless sensing nodes.",
        epilog=keys_help() + "\n\nseed fallback: $KINESIM_SEED\nexit codes: 0 ok, 2 usage, 3 infeasible, 4 I/O, 5 trace",
        formatter_class=fmt,
    )
    parser.add_argument("--version", action="version", version=f"kinesim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _config_parent()

    p = sub.add_parser("size", parents=[common], help="derive gear ratio, capacitance and wake threshold",
                       epilog=keys_help(), formatter_class=fmt)
    p.set_defaults(func=cmd_size)

    for name, func, help_ in (
        ("simulate", cmd_simulate, "run a seeded deployment simulation"),
        ("replay", cmd_replay, "run an encoder trace through the model"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_, epilog=keys_help(), formatter_class=fmt)
        if name == "replay":
            p.add_argument("trace", help="trace CSV (timestamp_ms,angle_deg,limit_switch)")
        p.add_argument("--events", type=int, help="number of accesses (default: sim.events)")
        p.add_argument("--seed", type=int, help="root seed (default: sim.seed, then $KINESIM_SEED)")
        p.add_argument("--per-event", action="store_true", help="include per-event records in the JSON report")
        p.set_defaults(func=func)

    p = sub.add_parser("toa", help="LoRa time on air and transmit energy")
    p.add_argument("--sf", type=int, default=10)
    p.add_argument("--bw", type=int, default=125000)
    p.add_argument("--cr", type=int, default=8, help="coding rate denominator 5..8 (or index 1..4)")
    p.add_argument("--pl", type=int, default=8, help="payload bytes")
    p.add_argument("--preamble", type=int, default=8)
    p.add_argument("--crc", action=argparse.BooleanOptionalAction, default=True)
    hdr = p.add_mutually_exclusive_group()
    hdr.add_argument("--explicit", dest="explicit", action="store_true", default=None)
    hdr.add_argument("--implicit", dest="explicit", action="store_false")
    p.add_argument("--ldro", action="store_true", help="low data rate optimisation")
    p.add_argument("--power-dbm", type=float, default=20.0)
    p.add_argument("--tx-power-w", type=float, help="effective transmit draw (W) for the energy figure")
    p.add_argument("--tx-target-mj", type=float, help="calibrate the transmit draw so this config costs this many mJ")
    p.set_defaults(func=cmd_toa)

    p = sub.add_parser("sweep", parents=[common], help="success rate across one numeric parameter",
                       epilog=keys_help(), formatter_class=fmt)
    p.add_argument("--param", required=True, help="config key to sweep")
    p.add_argument("--from", dest="start", type=float, required=True)
    p.add_argument("--to", dest="stop", type=float, required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--events", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", parents=[common], help="fit coupling-efficiency floor and partial probability",
                       epilog=keys_help(), formatter_class=fmt)
    p.add_argument("--target-success", type=float, help="success rate to match by tuning motion.partial_probability")
    p.add_argument("--calibration-events", type=int, default=20000)
    p.add_argument("--events", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth-trace", parents=[common], help="write a synthetic encoder trace from the motion block")
    p.add_argument("--events", type=int, default=20)
    p.add_argument("--rate", type=float, default=1000.0, help="sample rate in Hz")
    p.add_argument("--seed", type=int)
    p.add_argument("--min-gap", type=float, default=5.0, help="minimum idle gap between events (s)")
    p.add_argument("--max-gap", type=float, default=30.0, help="cap on idle gaps so traces stay small (s)")
    p.add_argument("--no-partials", action="store_true")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_synth_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"kinesim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"kinesim: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TraceFormatError as exc:
        print(f"kinesim: trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE
    except OSError as exc:
        print(f"kinesim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
