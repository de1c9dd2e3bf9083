"""Command-line front end.

Configuration files are flat ``key = value`` text (``#`` starts a comment).
Keys are :class:`~acksched.channel.SystemConfig` field names or their short
aliases (``N, D, K, M, T, P0, eps``) plus a few run options; see the README
for the full list.  Exit status: 0 on success, 1 if a simulated trace breaks
an invariant or the oracle ratio misses its threshold, 2 for bad input and 3
when an instance is too large for the brute-force tools.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys

import numpy as np

from . import __version__
from .channel import SystemConfig
from .errors import InvalidArgument, ResourceLimit
from .oracle import (MAX_DP_HORIZON, OracleConfig, closed_form_policy, dp_optimal,
                     enumerate_policy_value)
from .phi import METHODS, build_phi
from .sim import (SCHEDULERS, AggregateMetrics, ExperimentSpec, SweepRow, config_hash, phi_provider, run_experiment,
                  run_scheduler, sweep, trace_violations, trial_gains, write_metrics_csv,
                  write_slot_means_csv)

__all__ = ["main", "load_config", "PRESETS", "PAPER_DEFAULTS"]

ALIASES = {
    "n": "subcarriers", "d": "subbands", "k": "users", "m": "packets_per_slot",
    "t": "slot_duration", "p0": "total_power", "eps": "target_per", "epsilon": "target_per",
    "f_d_max": "doppler_max",
}
INT_KEYS = {"subcarriers", "subbands", "users", "packets_per_slot", "seed"}
FLOAT_KEYS = {"slot_duration", "total_power", "target_per", "doppler_max", "bandwidth"}
BOOL_KEYS = {"broadcast_feedback"}
STR_KEYS = {"ack_model"}
RUN_KEYS = {
    "trials": int, "schedulers": str, "phi_resolution": int, "theta_grid": int,
    "power_mode": str, "power_grid": int, "ratio_threshold": float, "traces": str,
}

# the paper's simulation setting: 20 MHz split into 64 subcarriers, 3 users,
# 3 subbands, 30 packets per 100 ms slot, 24 W, 5% target PER
PAPER_DEFAULTS = dict(subcarriers=64, subbands=3, users=3, packets_per_slot=30, slot_duration=0.1,
                      total_power=24.0, target_per=0.05, ack_model="exact", bandwidth=20e6)

PRESETS = {
    "numch": ("D", [1, 2, 3, 4, 5]),
    "snr": ("P0", [30.0 * 10 ** (s / 10) for s in (0, 5, 10, 15, 20, 25, 30)]),
    "users": ("K", list(range(1, 10))),
    "outage": ("eps", [0.01, 0.03, 0.05, 0.07, 0.1, 0.2, 0.5]),
    "doppler": ("doppler_max", [0.0, 10.0, 20.0, 50.0, 100.0, 200.0]),
}
PRESET_SCHEDULERS = ("proposed", "perfect_csit", "round_robin")


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InvalidArgument(f"not a boolean: {text!r}")


def load_config(path, base=None):
    """Read a flat key/value file into ``(SystemConfig, run options)``."""
    if not os.path.isfile(path):
        raise InvalidArgument(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    with open(path) as fh:
        try:
            parser.read_string("[config]\n" + fh.read())
        except configparser.Error as exc:
            raise InvalidArgument(f"cannot parse {path}: {exc}") from None
    fields = dict(base or {})
    options = {}
    for raw_key, raw in parser["config"].items():
        key = ALIASES.get(raw_key.lower(), raw_key.lower())
        try:
            if key in INT_KEYS:
                fields[key] = int(raw)
            elif key in FLOAT_KEYS:
                fields[key] = float(raw)
            elif key in BOOL_KEYS:
                fields[key] = _parse_bool(raw)
            elif key in STR_KEYS:
                fields[key] = raw.strip()
            elif key in RUN_KEYS:
                options[key] = RUN_KEYS[key](raw.strip())
            else:
                raise InvalidArgument(f"unknown config key {raw_key!r}")
        except ValueError as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"bad value for {raw_key!r}: {raw!r}") from None
    return SystemConfig(**fields), options


def _resolve(args, base=None):
    if args.config:
        cfg, opts = load_config(args.config, base)
    else:
        cfg, opts = SystemConfig(**(base or {})), {}
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    trials = args.trials if args.trials is not None else opts.get("trials", 10_000)
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    return cfg, opts, trials


def _scheduler_list(args, opts, default):
    text = args.scheduler or opts.get("schedulers")
    if not text:
        return list(default), False
    names = [s.strip() for s in text.split(",") if s.strip()]
    for s in names:
        if s not in SCHEDULERS:
            raise InvalidArgument(f"unknown scheduler {s!r}; choose from {', '.join(SCHEDULERS)}")
    return names, True


def _provenance(cfg, opts, resolution):
    return {
        "acksched": __version__,
        "config_hash": config_hash(cfg, opts),
        "seed": cfg.seed,
        "phi_method": "log-domain-convolution",
        "phi_resolution": resolution,
    }


def _out_dir(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(args):
    cfg, opts, trials = _resolve(args)
    names, explicit = _scheduler_list(args, opts, SCHEDULERS)
    resolution = opts.get("phi_resolution", 2 ** 16)
    phi = phi_provider(resolution)(cfg.subbands)
    rows = []
    status = 0
    for name in names:
        if name == "oracle_replay" and (cfg.users != 1 or cfg.packets_per_slot > MAX_DP_HORIZON):
            if explicit:
                raise ResourceLimit(f"oracle_replay needs K=1 and M<={MAX_DP_HORIZON}")
            rows.append(_skipped_row(cfg, name, f"skipped: needs K=1 and M<={MAX_DP_HORIZON}"))
            continue
        spec = ExperimentSpec(cfg, name, trials, oracle_theta_grid=opts.get("theta_grid", 32))
        m = run_experiment(spec, phi)
        if name == "proposed":
            h = trial_gains(cfg, 0, min(trials, 4096))
            problems = trace_violations(cfg, h, run_scheduler(name, cfg, phi, h, record_bounds=True))
            if problems:
                m.note = "; ".join(problems)
                print("invariant violation: " + m.note, file=sys.stderr)
                status = 1
        rows.append(SweepRow(None, None, cfg, m))
    out = _out_dir(args)
    prov = _provenance(cfg, opts, resolution)
    write_metrics_csv(os.path.join(out, "metrics.csv"), rows, prov)
    if opts.get("traces", "no").lower() in ("1", "yes", "true"):
        write_slot_means_csv(os.path.join(out, "slot_means.csv"), rows, prov)
    for r in rows:
        m = r.metrics
        print(f"{m.scheduler:14s} goodput {m.mean_goodput:10.4f} +- {m.goodput_se:.4f} bits  PER {m.per:.4f} {m.note}")
    return status


def _skipped_row(cfg, name, note):
    nan = float("nan")
    empty = np.zeros(0)
    return SweepRow(None, None, cfg, AggregateMetrics(name, 0, nan, nan, nan, nan, nan, nan,
                                                      empty, empty, empty, note))


def cmd_sweep(args):
    if args.fig:
        if args.fig not in PRESETS:
            raise InvalidArgument(f"unknown preset {args.fig!r}; choose from {', '.join(PRESETS)}")
        param, values = PRESETS[args.fig]
        base = PAPER_DEFAULTS
    else:
        if not args.param or not args.values:
            raise InvalidArgument("sweep needs --fig or both --param and --values")
        param = args.param
        values = [float(v) for v in args.values.split(",")]
        base = None
    cfg, opts, trials = _resolve(args, base)
    names, _ = _scheduler_list(args, opts, PRESET_SCHEDULERS)
    resolution = opts.get("phi_resolution", 2 ** 16)
    rows = []
    for name in names:
        spec = ExperimentSpec(cfg, name, trials, param, values, oracle_theta_grid=opts.get("theta_grid", 32))
        rows.extend(sweep(spec, phi_provider(resolution)))
    rows.sort(key=lambda r: (values.index(r.value), names.index(r.metrics.scheduler)))
    out = _out_dir(args)
    stem = args.fig or f"sweep_{param}"
    prov = _provenance(cfg, dict(opts, sweep=param, values=values), resolution)
    write_metrics_csv(os.path.join(out, f"{stem}.csv"), rows, prov)
    if opts.get("traces", "no").lower() in ("1", "yes", "true"):
        write_slot_means_csv(os.path.join(out, f"{stem}_slot_means.csv"), rows, prov)
    for r in rows:
        print(f"{param}={r.value!s:>10} {r.metrics.scheduler:14s} goodput {r.metrics.mean_goodput:10.4f}"
              f"  PER {r.metrics.per:.4f}")
    return 0


def cmd_oracle_compare(args):
    fields = {}
    opts = {}
    if args.config:
        cfg, opts = load_config(args.config, dict(users=1, subbands=1, packets_per_slot=5,
                                                  target_per=0.01))
        fields = dict(horizon=cfg.packets_per_slot, eps=cfg.target_per, subbands=cfg.subbands,
                      subcarriers=cfg.subcarriers, slot_duration=cfg.slot_duration)
        if "total_power" in _explicit_keys(args.config):
            fields["total_power"] = cfg.total_power
    else:
        fields = dict(horizon=5, eps=0.01, subbands=1)
    if args.horizon is not None:
        fields["horizon"] = args.horizon
    ocfg = OracleConfig(theta_grid=opts.get("theta_grid", 32),
                        power_mode=opts.get("power_mode", "closed-form-schedule"),
                        power_grid=opts.get("power_grid", 4), **fields)
    threshold = opts.get("ratio_threshold", 0.95)
    resolution = opts.get("phi_resolution", 2 ** 16)
    phi = phi_provider(resolution)(ocfg.subbands)
    dp_value, _ = dp_optimal(ocfg, phi)
    cf_value = enumerate_policy_value(closed_form_policy(ocfg, phi), ocfg, phi)
    ratio = 1.0 if dp_value == cf_value else (cf_value / dp_value if dp_value > 0 else float("inf"))
    out = _out_dir(args)
    path = os.path.join(out, "oracle_compare.csv")
    with open(path, "w", newline="") as fh:
        prov = _provenance(ocfg.system_config(), dict(opts, **fields), resolution)
        fh.write("# " + " ".join(f"{k}={v}" for k, v in prov.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("horizon", "eps", "D", "P0", "theta_grid", "power_mode", "closed_form_value",
                    "dp_value", "ratio", "threshold"))
        w.writerow((ocfg.horizon, repr(ocfg.eps), ocfg.subbands, repr(float(ocfg.total_power)),
                    ocfg.theta_grid, ocfg.power_mode, repr(cf_value), repr(dp_value), repr(ratio),
                    repr(threshold)))
    print(f"closed-form {cf_value:.6f} bits  dp {dp_value:.6f} bits  ratio {ratio:.6f}")
    return 0 if ratio >= threshold else 1


def _explicit_keys(path):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    with open(path) as fh:
        parser.read_string("[config]\n" + fh.read())
    return {ALIASES.get(k.lower(), k.lower()) for k in parser["config"]}


def cmd_phi_table(args):
    if args.D is None or args.D < 1:
        raise InvalidArgument("phi-table needs --D >= 1")
    table = build_phi(args.D, args.resolution, args.method, seed=args.seed or 0)
    out = _out_dir(args)
    path = os.path.join(out, f"phi_D{args.D}_n{args.resolution}_{args.method}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(f"# acksched={__version__} D={args.D} resolution={args.resolution} "
                 f"phi_method={args.method} seed={args.seed or 0}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "q"))
        for x, q in zip(table.x, table.q):
            w.writerow((repr(float(x)), repr(float(q))))
    print(path)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="acksched", description="ACK/NAK-driven OFDM downlink scheduling simulator.")
    p.add_argument("--version", action="version", version=f"acksched {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)

    sp = sub.add_parser("run", help="compare schedulers on one configuration")
    common(sp)
    sp.add_argument("--scheduler", metavar="NAME[,NAME...]")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="sweep one parameter (figure presets available)")
    common(sp)
    sp.add_argument("--fig", metavar="NAME", help=f"preset: {', '.join(PRESETS)}")
    sp.add_argument("--param", choices=("D", "K", "eps", "doppler_max", "P0", "M"))
    sp.add_argument("--values", metavar="V[,V...]")
    sp.add_argument("--scheduler", metavar="NAME[,NAME...]")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle-compare", help="closed-form policy vs the DP optimum")
    common(sp)
    sp.add_argument("--horizon", type=int)
    sp.set_defaults(func=cmd_oracle_compare)

    sp = sub.add_parser("phi-table", help="tabulate phi and write it as CSV")
    common(sp)
    sp.add_argument("--D", type=int)
    sp.add_argument("--resolution", type=int, default=2 ** 16)
    sp.add_argument("--method", choices=METHODS, default="log-domain-convolution")
    sp.set_defaults(func=cmd_phi_table)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ResourceLimit as exc:
        print(f"acksched: resource limit: {exc}", file=sys.stderr)
        return 3
    except (InvalidArgument, ValueError) as exc:
        print(f"acksched: {exc}", file=sys.stderr)
        return 2
