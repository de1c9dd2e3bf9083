"""Comparison schedulers: perfect-CSIT upper bound and round robin.

Both spend ``P0 / M`` per packet slot.  The perfect-CSIT scheduler knows the
channel, serves the user with the largest exact capacity and sends at exactly
that capacity, so nothing is ever lost.  Round robin cycles through the users
and sends at the ``eps``-outage rate of the prior, ignoring all feedback.
"""
from __future__ import annotations

import enum

import numpy as np

from .channel import ack_outcome, capacity_exact, evolve_doppler
from .errors import InvalidArgument
from .kernels import BatchTrace
from .phi import inv_cdf
from .policy import Decision, SlotTrace, rate_alloc

__all__ = [
    "BaselineKind",
    "perfect_csit_slot",
    "round_robin_slot",
    "perfect_csit_batch",
    "round_robin_batch",
    "round_robin_threshold",
]


class BaselineKind(enum.Enum):
    PERFECT_CSIT = "perfect_csit"
    ROUND_ROBIN = "round_robin"


def _realizations(cfg, realization, rng):
    """Channel seen in each packet slot (static unless ``doppler_max > 0``)."""
    if cfg.doppler_max == 0:
        return [realization] * cfg.packets_per_slot
    if rng is None:
        raise InvalidArgument("a random stream is required when doppler_max > 0")
    f_d = rng.uniform(0.0, cfg.doppler_max, size=cfg.users)
    out = [realization]
    for _ in range(cfg.packets_per_slot - 1):
        out.append(evolve_doppler(out[-1], f_d, cfg, rng))
    return out


def perfect_csit_slot(cfg, realization, rng=None):
    """Genie scheduler: best user at its exact capacity, equal power.

    ``lower``/``upper`` in the returned trace both hold the served user's
    true channel product, since nothing is uncertain.
    """
    M, K = cfg.packets_per_slot, cfg.users
    p = cfg.total_power / M
    decisions, acks = [], np.ones((K, M), dtype=int)
    lower, upper = np.zeros(M), np.zeros(M)
    for m, real in enumerate(_realizations(cfg, realization, rng)):
        caps = capacity_exact(p, real.power_gains, cfg)
        a = int(np.argmax(caps))
        X = float(real.products[a])
        decisions.append(Decision(m + 1, a, p, float(caps[a]), X))
        lower[m] = upper[m] = X
    return SlotTrace(decisions, acks, lower, upper)


def round_robin_threshold(cfg, phi):
    """The fixed threshold ``phi^-1(eps)`` round robin designs for."""
    return inv_cdf(phi, cfg.target_per)


def round_robin_slot(cfg, phi, realization, rng=None):
    """Cyclic scheduler at the prior's ``eps``-outage rate, blind to feedback."""
    if phi.subband_count != cfg.subbands:
        raise InvalidArgument("phi table and config disagree on the number of subbands")
    M, K = cfg.packets_per_slot, cfg.users
    p = cfg.total_power / M
    theta = round_robin_threshold(cfg, phi)
    r = rate_alloc(p, theta, cfg) if (p > 0 and theta > 0) else 0.0
    decisions, acks = [], np.zeros((K, M), dtype=int)
    lower, upper = np.zeros(M), np.full(M, np.inf)
    for m, real in enumerate(_realizations(cfg, realization, rng)):
        decisions.append(Decision(m + 1, m % K, p, r, theta))
        for k in range(K):
            acks[k, m] = ack_outcome(cfg.ack_model, r, p, real.power_gains[k], cfg, theta=theta)
    return SlotTrace(decisions, acks, lower, upper)


# --- batched versions used by the simulator ----------------------------------

def _slot_gains(h, m):
    return h[:, m] if h.shape[1] > 1 else h[:, 0]


def perfect_csit_batch(cfg, h):
    """Vectorised :func:`perfect_csit_slot` over a ``(trials, S, K, D)`` array."""
    h = np.asarray(h, dtype=np.float64)
    T, M = h.shape[0], cfg.packets_per_slot
    p = cfg.total_power / M
    rows = np.arange(T)
    users = np.zeros((T, M), dtype=np.int64)
    rate = np.zeros((T, M))
    theta = np.zeros((T, M))
    for m in range(M):
        hs = _slot_gains(h, m)
        caps = cfg.bits_scale * np.log2(1.0 + p * hs / cfg.subcarriers).sum(axis=-1)
        a = np.argmax(caps, axis=1)
        users[:, m] = a
        rate[:, m] = caps[rows, a]
        theta[:, m] = hs[rows, a].prod(axis=-1)
    return BatchTrace(users, np.full((T, M), p), rate, theta, np.ones((T, M), dtype=np.int8))


def round_robin_batch(cfg, phi, h):
    """Vectorised :func:`round_robin_slot` over a ``(trials, S, K, D)`` array."""
    h = np.asarray(h, dtype=np.float64)
    T, M, K = h.shape[0], cfg.packets_per_slot, cfg.users
    p = cfg.total_power / M
    th = round_robin_threshold(cfg, phi)
    r = rate_alloc(p, th, cfg) if (p > 0 and th > 0) else 0.0
    users = np.tile(np.arange(M) % K, (T, 1)).astype(np.int64)
    ack = np.ones((T, M), dtype=np.int8)
    if r > 0:
        for m in range(M):
            row = _slot_gains(h, m)[:, m % K]
            if cfg.ack_model == "exact":
                c = cfg.bits_scale * np.log2(1.0 + p * row / cfg.subcarriers).sum(axis=-1)
                ack[:, m] = r <= c
            else:
                ack[:, m] = row.prod(axis=-1) >= th
    return BatchTrace(users, np.full((T, M), p), np.full((T, M), r), np.full((T, M), th), ack)
