"""Batched time-slot loops for the ACK/NAK-driven scheduler.

Two implementations of the same loop live here: ``_proposed_numba`` walks one
trial at a time with scalar code compiled by numba, ``_proposed_numpy``
vectorises over trials.  Both use the same arithmetic in the same order, so
they agree to the last bit in practice (the test suite checks this).
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import njit, resolve_backend
from .phi import cdf_array, cdf_scalar, inv_cdf_array, inv_cdf_scalar

__all__ = ["BatchTrace", "run_proposed_batch"]


class BatchTrace:
    """Per-slot arrays for a batch of time slots.

    ``users``, ``power``, ``rate``, ``theta`` and ``ack`` have shape
    ``(trials, M)`` and describe the selected user of each packet slot.
    When bounds are recorded, ``lower``/``upper`` have shape
    ``(trials, M + 1, K)`` (index ``m`` = beliefs before slot ``m``) and
    ``acks`` has shape ``(trials, M, K)`` with every user's feedback.
    """

    __slots__ = ("users", "power", "rate", "theta", "ack", "lower", "upper", "acks")

    def __init__(self, users, power, rate, theta, ack, lower=None, upper=None, acks=None):
        self.users = users
        self.power = power
        self.rate = rate
        self.theta = theta
        self.ack = ack
        self.lower = lower
        self.upper = upper
        self.acks = acks

    @property
    def goodput(self):
        return (self.rate * self.ack).sum(axis=1)

    @property
    def errors(self):
        return (1 - self.ack).sum(axis=1)


@njit
def _power_fraction(eps, remaining_slots):
    if remaining_slots <= 1:
        return 1.0
    return eps / (-math.expm1(remaining_slots * math.log1p(-eps)))


@njit
def _proposed_numba(xg, qg, h, N, M, bits_scale, P0, eps, exact, broadcast,
                    users, power, rate, theta, ack, lower, upper, acks, record):
    T, S, K, D = h.shape
    L = np.empty(K)
    U = np.empty(K)
    for t in range(T):
        for k in range(K):
            L[k] = 0.0
            U[k] = np.inf
        Pbar = P0
        for m in range(M):
            s = m if S > 1 else 0
            if record:
                for k in range(K):
                    lower[t, m, k] = L[k]
                    upper[t, m, k] = U[k]
            a = 0
            for k in range(1, K):
                if L[k] > L[a]:
                    a = k
            La = L[a]
            Ua = U[a]
            uL = cdf_scalar(xg, qg, La)
            uU = 1.0 if Ua == np.inf else cdf_scalar(xg, qg, Ua)
            th = inv_cdf_scalar(xg, qg, eps * uU + (1.0 - eps) * uL)
            if th < La:
                th = La
            if th >= Ua:
                th = np.nextafter(Ua, -np.inf)
                if th < La:
                    th = La
            p = Pbar * _power_fraction(eps, M - m)
            r = 0.0
            if p > 0.0 and th > 0.0:
                v = bits_scale * (D * math.log2(p / N) + math.log2(th))
                if v > 0.0:
                    r = v
            users[t, m] = a
            power[t, m] = p
            rate[t, m] = r
            theta[t, m] = th
            if r == 0.0:
                # nothing to decode: vacuous ACK from everyone, no information
                ack[t, m] = 1
                if record:
                    for k in range(K):
                        acks[t, m, k] = 1
            else:
                for k in range(K):
                    if exact:
                        c = 0.0
                        for d in range(D):
                            c += math.log2(1.0 + p * h[t, s, k, d] / N)
                        v_k = r <= bits_scale * c
                    else:
                        x = 1.0
                        for d in range(D):
                            x *= h[t, s, k, d]
                        v_k = x >= th
                    if record:
                        acks[t, m, k] = 1 if v_k else 0
                    if k == a:
                        ack[t, m] = 1 if v_k else 0
                    elif not broadcast:
                        continue
                    if v_k:
                        if th >= U[k]:
                            U[k] = np.inf
                        if th > L[k]:
                            L[k] = th
                    else:
                        if th <= L[k]:
                            L[k] = 0.0
                        if th < U[k]:
                            U[k] = th
            Pbar = Pbar - p
        if record:
            for k in range(K):
                lower[t, M, k] = L[k]
                upper[t, M, k] = U[k]


def _proposed_numpy(xg, qg, h, N, M, bits_scale, P0, eps, exact, broadcast,
                    users, power, rate, theta, ack, lower, upper, acks, record):
    T, S, K, D = h.shape
    rows = np.arange(T)
    L = np.zeros((T, K))
    U = np.full((T, K), np.inf)
    Pbar = np.full(T, float(P0))
    kk = np.arange(K)
    for m in range(M):
        s = m if S > 1 else 0
        if record:
            lower[:, m] = L
            upper[:, m] = U
        a = np.argmax(L, axis=1)
        La = L[rows, a]
        Ua = U[rows, a]
        uL = cdf_array(xg, qg, La)
        uU = np.where(Ua == np.inf, 1.0, cdf_array(xg, qg, np.where(Ua == np.inf, 0.0, Ua)))
        th = inv_cdf_array(xg, qg, eps * uU + (1.0 - eps) * uL)
        th = np.maximum(th, La)
        over = th >= Ua
        th = np.where(over, np.maximum(np.nextafter(Ua, -np.inf), La), th)
        p = Pbar * _power_fraction(eps, M - m)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = bits_scale * (D * np.log2(p / N) + np.log2(th))
        r = np.where((p > 0.0) & (th > 0.0) & (v > 0.0), v, 0.0)
        users[:, m] = a
        power[:, m] = p
        rate[:, m] = r
        theta[:, m] = th
        hs = h[:, s]
        if exact:
            c = np.zeros((T, K))
            for d in range(D):
                c = c + np.log2(1.0 + p[:, None] * hs[:, :, d] / N)
            v_all = r[:, None] <= bits_scale * c
        else:
            x = np.ones((T, K))
            for d in range(D):
                x = x * hs[:, :, d]
            v_all = x >= th[:, None]
        live = (r > 0.0)[:, None]
        used = live & (broadcast | (kk[None, :] == a[:, None]))
        t_col = th[:, None]
        pos = used & v_all
        neg = used & ~v_all
        U = np.where(pos & (t_col >= U), np.inf, U)
        L = np.where(pos & (t_col > L), t_col, L)
        L = np.where(neg & (t_col <= L), 0.0, L)
        U = np.where(neg & (t_col < U), t_col, U)
        ack[:, m] = np.where(live[:, 0], v_all[rows, a], True)
        if record:
            acks[:, m] = np.where(live, v_all, True)
        Pbar = Pbar - p
    if record:
        lower[:, M] = L
        upper[:, M] = U


def run_proposed_batch(cfg, phi, h, record_bounds=False, backend=None):
    """Run the closed-form scheduler on a batch of channel trajectories.

    ``h`` is a ``(trials, S, K, D)`` power-gain array as produced by
    :func:`acksched.channel.channel_trajectory`.
    """
    backend = resolve_backend(backend)
    h = np.ascontiguousarray(h, dtype=np.float64)
    T, S, K, D = h.shape
    M = cfg.packets_per_slot
    users = np.zeros((T, M), dtype=np.int64)
    power = np.zeros((T, M))
    rate = np.zeros((T, M))
    theta = np.zeros((T, M))
    ack = np.zeros((T, M), dtype=np.int8)
    if record_bounds:
        lower = np.zeros((T, M + 1, K))
        upper = np.zeros((T, M + 1, K))
        acks = np.zeros((T, M, K), dtype=np.int8)
    else:
        lower = upper = np.zeros((0, 0, 0))
        acks = np.zeros((0, 0, 0), dtype=np.int8)
    args = (phi.x, phi.q, h, float(cfg.subcarriers), M, cfg.bits_scale, float(cfg.total_power),
            float(cfg.target_per), cfg.ack_model == "exact", bool(cfg.broadcast_feedback),
            users, power, rate, theta, ack, lower, upper, acks, bool(record_bounds))
    if backend == "numba":
        _proposed_numba(*args)
    else:
        _proposed_numpy(*args)
    if not record_bounds:
        lower = upper = acks = None
    return BatchTrace(users, power, rate, theta, ack, lower, upper, acks)
