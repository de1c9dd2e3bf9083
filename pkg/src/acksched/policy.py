"""Closed-form power / rate / user scheduler driven by ACK/NAK feedback.

The base station never sees the channel.  For every user it keeps an
interval ``[L, U)`` known to contain that user's channel-power product,
schedules the user with the largest lower bound, places the decoding
threshold ``theta`` at the conditional ``eps``-quantile of that interval and
derives power and rate from it.  Each ACK raises ``L`` to ``theta``; each NAK
lowers ``U`` to ``theta``.

The functions here are the scalar reference; :mod:`acksched.kernels` runs the
same loop in bulk.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .channel import ack_outcome, evolve_doppler
from .errors import InvalidArgument, InvalidState
from .phi import cdf, inv_cdf

__all__ = [
    "BeliefState",
    "Decision",
    "SlotTrace",
    "theta_update",
    "power_alloc",
    "rate_alloc",
    "select_user",
    "update_belief",
    "absorb_feedback",
    "run_time_slot",
    "write_trace_csv",
    "TRACE_COLUMNS",
]

INF = math.inf


@dataclass(frozen=True)
class BeliefState:
    """Interval ``[lower, upper)`` known to contain a user's channel product."""

    lower: float = 0.0
    upper: float = INF

    def __post_init__(self):
        if not (self.lower >= 0.0 and self.lower < self.upper):
            raise InvalidState(f"invalid belief [{self.lower}, {self.upper})")

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, x):
        return self.lower <= x < self.upper


@dataclass(frozen=True)
class Decision:
    slot: int
    user: int
    power: float
    rate: float
    theta: float


@dataclass
class SlotTrace:
    """Everything that happened in one time slot.

    ``acks[k, m]`` is user ``k``'s feedback on packet slot ``m``; ``lower`` /
    ``upper`` hold the selected user's bounds *before* each decision and
    ``beliefs`` every user's bounds before each slot plus the final state.
    """

    decisions: List[Decision]
    acks: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    beliefs: List[List[BeliefState]] = field(default_factory=list)
    products: np.ndarray = None

    @property
    def selected_acks(self):
        return np.array([self.acks[d.user, i] for i, d in enumerate(self.decisions)], dtype=int)

    @property
    def goodput_bits(self):
        return float(sum(d.rate * v for d, v in zip(self.decisions, self.selected_acks)))

    @property
    def errors(self):
        return int(len(self.decisions) - self.selected_acks.sum())

    @property
    def power_spent(self):
        return math.fsum(d.power for d in self.decisions)


def theta_update(phi, belief, eps):
    """Threshold with conditional success probability ``1 - eps``.

    Solves ``phi(theta) = eps phi(U) + (1 - eps) phi(L)`` and returns a value
    in ``[L, U)``.
    """
    if belief.lower >= belief.upper:
        raise InvalidState("degenerate belief: lower >= upper")
    if not 0.0 <= eps <= 1.0:
        raise InvalidArgument("eps must lie in [0, 1]")
    u_hi = 1.0 if belief.upper == INF else cdf(phi, belief.upper)
    u_lo = cdf(phi, belief.lower)
    theta = inv_cdf(phi, min(1.0, eps * u_hi + (1.0 - eps) * u_lo))
    # rounding can push the quantile onto an endpoint once the interval is tiny
    if theta < belief.lower:
        theta = belief.lower
    if theta >= belief.upper:
        theta = max(float(np.nextafter(belief.upper, -INF)), belief.lower)
    return theta


def power_alloc(P_remaining, m, M, eps):
    """Power for packet slot ``m`` (1-based) out of ``M``.

    ``eps P / (1 - (1 - eps)^(M - m + 1))``; the whole remainder in slot M.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidArgument("eps must lie strictly inside (0, 1)")
    if not 1 <= m <= M:
        raise InvalidArgument(f"slot index must satisfy 1 <= m <= M, got m={m}, M={M}")
    if P_remaining < 0:
        raise InvalidArgument("remaining power must be >= 0")
    n = M - m + 1
    if n == 1:
        return float(P_remaining)
    # expm1/log1p keep the small-eps limit P/n accurate
    return float(P_remaining) * (eps / -math.expm1(n * math.log1p(-eps)))


def rate_alloc(p, theta, cfg):
    """High-SNR rate at power ``p`` for threshold ``theta``, clamped at 0."""
    if p <= 0 or theta <= 0:
        raise InvalidArgument("rate_alloc needs p > 0 and theta > 0")
    v = cfg.bits_scale * (cfg.subbands * math.log2(p / cfg.subcarriers) + math.log2(theta))
    return v if v > 0.0 else 0.0


def select_user(beliefs):
    """Index of the largest lower bound; ties go to the lowest index."""
    if len(beliefs) == 0:
        raise InvalidArgument("no users to select from")
    best = 0
    for k in range(1, len(beliefs)):
        if beliefs[k].lower > beliefs[best].lower:
            best = k
    return best


def update_belief(belief, theta, ack):
    """Bounds after the selected user's feedback on threshold ``theta``."""
    if not belief.contains(theta):
        raise InvalidArgument(f"theta={theta} outside [{belief.lower}, {belief.upper})")
    if ack:
        return BeliefState(max(belief.lower, theta), belief.upper)
    return BeliefState(belief.lower, min(belief.upper, theta))


def absorb_feedback(belief, theta, ack):
    """Like :func:`update_belief` but for any user and any ``theta``.

    Non-selected users decode the same broadcast packet, so their feedback is
    a test of the same threshold.  Feedback that contradicts the current
    interval (possible under the exact ACK model or a time-varying channel)
    discards the contradicted bound instead of producing an empty interval.
    """
    lower, upper = belief.lower, belief.upper
    if ack:
        if theta >= upper:
            upper = INF
        lower = max(lower, theta)
    else:
        if theta <= lower:
            lower = 0.0
        upper = min(upper, theta)
    return BeliefState(lower, upper)


def run_time_slot(cfg, phi, realization, rng=None):
    """Schedule the ``M`` packets of one time slot over ``realization``.

    Beliefs start at ``[0, inf)``.  Each packet slot selects a user, sets
    ``theta``, power and rate, collects feedback under ``cfg.ack_model`` and
    updates the beliefs (every user's when ``cfg.broadcast_feedback``, else
    only the selected one's).  A zero-rate packet is acknowledged by everyone
    and teaches nothing.  With ``cfg.doppler_max > 0`` each user draws a
    Doppler frequency from ``rng`` and the channel evolves before every packet
    slot after the first.
    """
    if phi.subband_count != cfg.subbands:
        raise InvalidArgument("phi table and config disagree on the number of subbands")
    if realization.power_gains.shape != (cfg.users, cfg.subbands):
        raise InvalidArgument("realization shape does not match the config")
    K, M, eps = cfg.users, cfg.packets_per_slot, cfg.target_per
    f_d = None
    if cfg.doppler_max > 0:
        if rng is None:
            raise InvalidArgument("a random stream is required when doppler_max > 0")
        f_d = rng.uniform(0.0, cfg.doppler_max, size=K)
    beliefs = [BeliefState() for _ in range(K)]
    history = []
    decisions = []
    acks = np.zeros((K, M), dtype=int)
    lower = np.zeros(M)
    upper = np.zeros(M)
    products = np.zeros((M, K))
    remaining = float(cfg.total_power)
    for m in range(1, M + 1):
        if f_d is not None and m > 1:
            realization = evolve_doppler(realization, f_d, cfg, rng)
        products[m - 1] = realization.products
        history.append(list(beliefs))
        a = select_user(beliefs)
        theta = theta_update(phi, beliefs[a], eps)
        p = power_alloc(remaining, m, M, eps)
        r = rate_alloc(p, theta, cfg) if (p > 0 and theta > 0) else 0.0
        decisions.append(Decision(m, a, p, r, theta))
        lower[m - 1], upper[m - 1] = beliefs[a].lower, beliefs[a].upper
        for k in range(K):
            acks[k, m - 1] = ack_outcome(cfg.ack_model, r, p, realization.power_gains[k], cfg, theta=theta)
        if r > 0:
            for k in range(K):
                if k == a:
                    beliefs[k] = absorb_feedback(beliefs[k], theta, acks[k, m - 1])
                elif cfg.broadcast_feedback:
                    beliefs[k] = absorb_feedback(beliefs[k], theta, acks[k, m - 1])
        remaining -= p
    history.append(list(beliefs))
    return SlotTrace(decisions, acks, lower, upper, history, products)


TRACE_COLUMNS = ("trial", "m", "user", "power", "rate", "theta", "ack", "lower", "upper")


def write_trace_csv(path_or_file, traces, header_lines=()):
    """Write one row per packet slot: ``m, a_m, p_m, r_m, theta_m, v, L, U``.

    ``traces`` is an iterable of :class:`SlotTrace`; ``m`` and ``user`` are
    1-based and ``L``/``U`` are the selected user's bounds before the
    decision.
    """
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for i, tr in enumerate(traces):
            sel = tr.selected_acks
            for j, d in enumerate(tr.decisions):
                w.writerow([i, d.slot, d.user + 1, repr(d.power), repr(d.rate), repr(d.theta),
                            int(sel[j]), repr(float(tr.lower[j])), repr(float(tr.upper[j]))])
    finally:
        if own:
            fh.close()
