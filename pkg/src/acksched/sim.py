"""Monte Carlo experiment engine.

Each trial is one time slot with a freshly drawn channel.  Trial ``t`` draws
from its own stream ``default_rng([seed, t])``, so results do not depend on
batching, and every scheduler sees the same channels for the same seed.
"""
from __future__ import annotations

import csv
import functools
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .baselines import perfect_csit_batch, round_robin_batch
from .channel import SystemConfig, channel_trajectory
from .errors import InvalidArgument
from .kernels import BatchTrace, run_proposed_batch
from .oracle import OracleConfig, dp_optimal
from .phi import build_phi

__all__ = [
    "SCHEDULERS",
    "SWEEP_PARAMETERS",
    "ExperimentSpec",
    "AggregateMetrics",
    "SweepRow",
    "trial_gains",
    "run_scheduler",
    "run_experiment",
    "sweep",
    "phi_provider",
    "trace_violations",
    "config_hash",
    "write_metrics_csv",
    "write_slot_means_csv",
    "METRIC_COLUMNS",
]

SCHEDULERS = ("proposed", "perfect_csit", "round_robin", "oracle_replay")

# sweep name -> SystemConfig field
SWEEP_PARAMETERS = {
    "D": "subbands",
    "K": "users",
    "eps": "target_per",
    "doppler_max": "doppler_max",
    "P0": "total_power",
    "M": "packets_per_slot",
}

_CHUNK = 4096


@dataclass(frozen=True)
class ExperimentSpec:
    """What to simulate: a config, one scheduler, a trial count, optional sweep."""

    config: SystemConfig
    scheduler: str = "proposed"
    trials: int = 10_000
    sweep_param: Optional[str] = None
    sweep_values: Sequence = ()
    oracle_theta_grid: int = 32

    def __post_init__(self):
        if self.scheduler not in SCHEDULERS:
            raise InvalidArgument(f"scheduler must be one of {SCHEDULERS}, got {self.scheduler!r}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidArgument("trials must be a positive integer")
        if self.sweep_param is not None:
            if self.sweep_param not in SWEEP_PARAMETERS:
                raise InvalidArgument(f"cannot sweep {self.sweep_param!r}; "
                                      f"choose from {sorted(SWEEP_PARAMETERS)}")
            if len(self.sweep_values) == 0:
                raise InvalidArgument("sweep needs at least one value")
            for v in self.sweep_values:
                self.config_at(v)

    def config_at(self, value):
        name = SWEEP_PARAMETERS[self.sweep_param]
        if name in ("subbands", "users", "packets_per_slot"):
            if float(value) != int(value):
                raise InvalidArgument(f"{self.sweep_param} values must be integers")
            value = int(value)
        else:
            value = float(value)
        return self.config.replace(**{name: value})


@dataclass
class AggregateMetrics:
    """Goodput and PER over many time slots.

    PER counts every packet slot, including zero-rate slots (which are
    always acknowledged).  Standard errors come from the per-trial spread.
    """

    scheduler: str
    trials: int
    mean_goodput: float
    goodput_se: float
    goodput_bps_hz: float
    per: float
    per_se: float
    zero_rate_fraction: float
    mean_power: np.ndarray
    mean_rate: np.ndarray
    mean_theta: np.ndarray
    note: str = ""

    def ci(self, k=3.0):
        return self.mean_goodput - k * self.goodput_se, self.mean_goodput + k * self.goodput_se


@dataclass
class SweepRow:
    param: Optional[str]
    value: object
    config: SystemConfig
    metrics: AggregateMetrics


def trial_gains(cfg, start, stop):
    """Power gains for trials ``start..stop-1``, shape ``(n, S, K, D)``."""
    return np.concatenate([channel_trajectory(cfg, np.random.default_rng([cfg.seed, t]), 1)
                           for t in range(start, stop)])


@functools.lru_cache(maxsize=None)
def _cached_phi(D, resolution):
    return build_phi(D, resolution)


def phi_provider(resolution=2 ** 16):
    """``D -> PhiTable`` with in-memory caching."""
    return lambda D: _cached_phi(int(D), int(resolution))


def _oracle_config(cfg, theta_grid):
    return OracleConfig(horizon=cfg.packets_per_slot, theta_grid=theta_grid, eps=cfg.target_per,
                        total_power=cfg.total_power, subbands=cfg.subbands,
                        subcarriers=cfg.subcarriers, slot_duration=cfg.slot_duration)


def _replay_batch(cfg, root, h):
    """Walk a single-user policy tree for each trial in ``h``."""
    T, S = h.shape[:2]
    M = cfg.packets_per_slot
    out = [np.zeros((T, M), dtype=np.int64), np.zeros((T, M)), np.zeros((T, M)), np.zeros((T, M)),
           np.zeros((T, M), dtype=np.int8)]
    users, power, rate, theta, ack = out
    for t in range(T):
        node = root
        for m in range(M):
            g = h[t, m if S > 1 else 0, 0]
            if cfg.ack_model == "exact":
                v = node.rate <= cfg.bits_scale * np.log2(1.0 + node.power * g / cfg.subcarriers).sum()
            else:
                v = g.prod() >= node.theta
            v = 1 if (v or node.rate == 0) else 0
            power[t, m], rate[t, m], theta[t, m], ack[t, m] = node.power, node.rate, node.theta, v
            node = node.ack_child if v else node.nak_child
    return BatchTrace(users, power, rate, theta, ack)


def run_scheduler(name, cfg, phi, h, backend=None, tree=None, record_bounds=False):
    """Run one scheduler over a gain array and return a :class:`BatchTrace`."""
    if name == "proposed":
        return run_proposed_batch(cfg, phi, h, record_bounds=record_bounds, backend=backend)
    if name == "perfect_csit":
        return perfect_csit_batch(cfg, h)
    if name == "round_robin":
        return round_robin_batch(cfg, phi, h)
    if name == "oracle_replay":
        if tree is None:
            raise InvalidArgument("oracle_replay needs a policy tree")
        return _replay_batch(cfg, tree, h)
    raise InvalidArgument(f"unknown scheduler {name!r}")


def run_experiment(spec, phi, backend=None):
    """Simulate ``spec.trials`` time slots of ``spec.scheduler`` on ``spec.config``.

    Raises
    ------
    InvalidArgument
        If ``phi`` was built for a different number of subbands.
    ResourceLimit
        For ``oracle_replay`` when the DP instance is too large.
    """
    cfg = spec.config
    if phi.subband_count != cfg.subbands:
        raise InvalidArgument(f"phi table has D={phi.subband_count} but the config has D={cfg.subbands}")
    tree = None
    if spec.scheduler == "oracle_replay":
        if cfg.users != 1:
            raise InvalidArgument("oracle_replay is single-user only")
        _, tree = dp_optimal(_oracle_config(cfg, spec.oracle_theta_grid), phi, backend=backend)
    n, M = int(spec.trials), cfg.packets_per_slot
    goodput = np.empty(n)
    errors = np.empty(n)
    slots = np.empty((3, n, M))
    for start in range(0, n, _CHUNK):
        stop = min(n, start + _CHUNK)
        bt = run_scheduler(spec.scheduler, cfg, phi, trial_gains(cfg, start, stop), backend, tree)
        goodput[start:stop] = bt.goodput
        errors[start:stop] = bt.errors
        slots[:, start:stop] = bt.power, bt.rate, bt.theta
    per_trial = errors / M
    se = lambda x: float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    mean = float(goodput.mean())
    return AggregateMetrics(
        scheduler=spec.scheduler,
        trials=n,
        mean_goodput=mean,
        goodput_se=se(goodput),
        goodput_bps_hz=mean / (cfg.slot_duration * cfg.bandwidth),
        per=float(per_trial.mean()),
        per_se=se(per_trial),
        zero_rate_fraction=float((slots[1] == 0).mean()),
        mean_power=slots[0].mean(axis=0),
        mean_rate=slots[1].mean(axis=0),
        mean_theta=slots[2].mean(axis=0),
    )


def sweep(spec, phi_for=None, backend=None):
    """One :class:`SweepRow` per sweep value (a single row without a sweep).

    ``phi_for(D)`` supplies the table for each subband count; the default
    builds and caches full-resolution tables.
    """
    phi_for = phi_for or phi_provider()
    values = spec.sweep_values if spec.sweep_param is not None else [None]
    rows = []
    for v in values:
        cfg = spec.config if v is None else spec.config_at(v)
        sub = ExperimentSpec(cfg, spec.scheduler, spec.trials, oracle_theta_grid=spec.oracle_theta_grid)
        rows.append(SweepRow(spec.sweep_param, v, cfg, run_experiment(sub, phi_for(cfg.subbands), backend)))
    return rows


def trace_violations(cfg, h, bt, rtol=1e-9):
    """Invariant violations in a proposed-scheduler batch trace.

    Checks power conservation always.  When bounds were recorded and the
    channel is static under the ideal ACK model, also checks that every
    user's channel product stays inside its belief and that the bounds
    only tighten.
    """
    problems = []
    spent = bt.power.sum(axis=1)
    bad = np.abs(spent - cfg.total_power) > rtol * max(cfg.total_power, 1e-300)
    if bad.any():
        problems.append(f"power not conserved in {int(bad.sum())} trials")
    if bt.lower is not None and cfg.ack_model == "ideal" and h.shape[1] == 1:
        X = h[:, 0].prod(axis=-1)[:, None, :]
        outside = (X < bt.lower) | (X >= bt.upper)
        if outside.any():
            problems.append(f"channel product outside its belief at {int(outside.sum())} points")
        if (bt.lower[:, 1:] < bt.lower[:, :-1]).any():
            problems.append("lower bound decreased")
        if (bt.upper[:, 1:] > bt.upper[:, :-1]).any():
            problems.append("upper bound increased")
    return problems


# --- output -------------------------------------------------------------------

def config_hash(cfg, extra=None):
    payload = dict(cfg.as_dict())
    if extra:
        payload.update(extra)
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


METRIC_COLUMNS = ("sweep_param", "sweep_value", "scheduler", "N", "D", "K", "M", "eps", "P0",
                  "ack_model", "doppler_max", "trials", "mean_goodput_bits", "goodput_se_bits",
                  "goodput_bps_hz", "per", "per_se", "zero_rate_fraction", "note")


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def write_metrics_csv(path, rows, provenance):
    """Write sweep rows as CSV, preceded by one ``# key=value ...`` line."""
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            c, m = r.config, r.metrics
            w.writerow([_fmt(x) for x in (
                r.param, r.value, m.scheduler, c.subcarriers, c.subbands, c.users,
                c.packets_per_slot, c.target_per, c.total_power, c.ack_model, c.doppler_max,
                m.trials, m.mean_goodput, m.goodput_se, m.goodput_bps_hz, m.per, m.per_se,
                m.zero_rate_fraction, m.note)])


def write_slot_means_csv(path, rows, provenance):
    """Per-packet-slot mean power, rate and threshold for each row."""
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in provenance.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("sweep_param", "sweep_value", "scheduler", "m", "mean_power", "mean_rate", "mean_theta"))
        for r in rows:
            m = r.metrics
            if m.mean_power is None or len(m.mean_power) == 0:
                continue
            for j in range(len(m.mean_power)):
                w.writerow([_fmt(r.param), _fmt(r.value), m.scheduler, j + 1, repr(float(m.mean_power[j])),
                            repr(float(m.mean_rate[j])), repr(float(m.mean_theta[j]))])
