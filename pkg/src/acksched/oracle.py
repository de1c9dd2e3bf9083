"""Brute-force references for the single-user scheduling problem.

Two tools live here:

* :func:`enumerate_policy_value` walks all ``2^M`` ACK/NAK histories of an
  arbitrary feedback-driven policy and returns its exact expected goodput
  under the ideal ACK model.
* :func:`dp_optimal` solves a discretised version of the finite-horizon MDP
  by backward induction and returns both the optimal value and the optimal
  policy tree.

Both operate in probability space: a belief ``[L, U)`` is carried as
``(a, b) = (phi(L), phi(U))``.  A threshold whose conditional NAK probability
is ``c`` sits at ``phi(theta) = a + c (b - a)``; an ACK moves ``a`` up to that
point, a NAK moves ``b`` down to it.  The DP chooses ``c`` from the relative
grid ``eps * j / G`` (``j = 1..G``), so every admissible action meets the
per-packet error target and ``j = G`` is exactly the closed-form threshold.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._accel import njit, resolve_backend
from .channel import SystemConfig, ack_outcome
from .errors import InvalidArgument, InvalidState, ResourceLimit
from .kernels import _power_fraction
from .phi import cdf, inv_cdf_array, inv_cdf_scalar
from .policy import (BeliefState, Decision, SlotTrace, absorb_feedback, power_alloc,
                     rate_alloc, theta_update)

__all__ = [
    "OracleConfig",
    "OracleNode",
    "POWER_MODES",
    "ClosedFormPolicy",
    "closed_form_policy",
    "tree_policy",
    "enumerate_policy_value",
    "build_policy_tree",
    "dp_optimal",
    "dp_action_count",
    "replay_online",
    "iter_nodes",
    "dump_tree",
    "check_tree",
]

POWER_MODES = ("closed-form-schedule", "grid")
MAX_ENUM_HORIZON = 12
MAX_DP_HORIZON = 6


@dataclass(frozen=True)
class OracleConfig:
    """Small single-user instance for the brute-force tools.

    ``total_power=None`` means ``1000 * subcarriers * horizon``: 30 dB SNR
    per subcarrier under equal power, where the high-SNR rate formula is
    accurate and small error targets still give positive rates.
    ``max_evaluations`` caps the number of (state, action) pairs the DP may
    visit.
    """

    horizon: int = 5
    theta_grid: int = 32
    power_mode: str = "closed-form-schedule"
    power_grid: int = 4
    eps: float = 0.05
    total_power: Optional[float] = None
    subbands: int = 1
    subcarriers: int = 64
    slot_duration: float = 0.1
    single_user: bool = True
    max_evaluations: float = 1.5e9

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidArgument("horizon must be a positive integer")
        if self.theta_grid < 1 or self.power_grid < 1:
            raise InvalidArgument("theta_grid and power_grid must be >= 1")
        if self.power_mode not in POWER_MODES:
            raise InvalidArgument(f"power_mode must be one of {POWER_MODES}")
        if not 0.0 < self.eps < 1.0:
            raise InvalidArgument("eps must lie strictly inside (0, 1)")
        if not self.single_user:
            raise InvalidArgument("only single-user instances are supported")
        if self.total_power is None:
            object.__setattr__(self, "total_power", 1000.0 * self.subcarriers * self.horizon)
        # reuse SystemConfig's validation of the shared fields
        self.system_config()

    def system_config(self, ack_model="ideal"):
        return SystemConfig(subcarriers=self.subcarriers, subbands=self.subbands, users=1,
                            packets_per_slot=self.horizon, slot_duration=self.slot_duration,
                            total_power=float(self.total_power), target_per=self.eps,
                            ack_model=ack_model)

    @property
    def bits_scale(self):
        return self.subcarriers * self.slot_duration / (self.subbands * self.horizon)

    def power_fractions(self):
        """``(M, n)`` array of admissible power fractions per slot, and counts."""
        M = self.horizon
        if self.power_mode == "closed-form-schedule":
            fr = np.array([[_power_fraction(self.eps, M - m)] for m in range(M)])
            return fr, np.ones(M, dtype=np.int64)
        G = self.power_grid
        fr = np.tile(np.arange(1, G + 1) / (G + 1.0), (M, 1))
        fr[M - 1] = 1.0
        counts = np.full(M, G, dtype=np.int64)
        counts[M - 1] = 1
        return fr, counts

    def nak_grid(self):
        return self.eps * np.arange(1, self.theta_grid + 1) / self.theta_grid


@dataclass(eq=False)
class OracleNode:
    """One decision in a policy tree.

    ``value`` is the expected goodput collected from this slot to the end:
    ``(1 - c) (rate + ack_child.value) + c nak_child.value`` with ``c`` the
    conditional NAK probability.  A zero-rate decision has a single
    (acknowledged) child and ``nak_prob == 0``.
    """

    slot: int
    lower: float
    upper: float
    theta: float
    remaining_power: float
    power: float
    rate: float
    nak_prob: float
    value: float = 0.0
    ack_child: Optional["OracleNode"] = None
    nak_child: Optional["OracleNode"] = None
    node_id: int = -1
    extra: dict = field(default_factory=dict)


# --- policies -----------------------------------------------------------------

def _replay_history(history, total_power):
    belief = BeliefState()
    spent = 0.0
    for d, ack in history:
        if d.rate > 0:
            belief = absorb_feedback(belief, d.theta, ack)
        spent += d.power
    return belief, total_power - spent


class ClosedFormPolicy:
    """The closed-form scheduler as a function of the feedback history."""

    def __init__(self, ocfg, phi):
        self.ocfg = ocfg
        self.phi = phi
        self.cfg = ocfg.system_config()

    def __call__(self, history):
        m = len(history) + 1
        belief, remaining = _replay_history(history, self.cfg.total_power)
        theta = theta_update(self.phi, belief, self.cfg.eps)
        p = power_alloc(max(remaining, 0.0), m, self.cfg.M, self.cfg.eps)
        r = rate_alloc(p, theta, self.cfg) if (p > 0 and theta > 0) else 0.0
        return Decision(m, 0, p, r, theta)


def closed_form_policy(ocfg, phi):
    return ClosedFormPolicy(ocfg, phi)


def tree_policy(root):
    """Turn a policy tree back into a history -> Decision callable."""

    def policy(history):
        node = root
        for _, ack in history:
            node = node.ack_child if (ack or node.rate == 0) else node.nak_child
            if node is None:
                raise InvalidState("history leaves the policy tree")
        return Decision(node.slot, 0, node.power, node.rate, node.theta)

    return policy


# --- exact enumeration --------------------------------------------------------

def _nak_probability(phi, belief, theta):
    if theta <= belief.lower:
        return 0.0
    uL = cdf(phi, belief.lower)
    uU = 1.0 if belief.upper == math.inf else cdf(phi, belief.upper)
    if uU <= uL:
        return 0.0 if theta <= belief.lower else 1.0
    return min(1.0, max(0.0, (cdf(phi, min(theta, belief.upper)) - uL) / (uU - uL)))


def build_policy_tree(policy, ocfg, phi):
    """Expand ``policy`` over every feedback history into an :class:`OracleNode` tree.

    Branch probabilities are the true conditional ones under the prior
    ``phi`` and the ideal ACK model: a NAK at threshold ``theta`` from belief
    ``[L, U)`` has probability ``(phi(theta) - phi(L)) / (phi(U) - phi(L))``.
    Zero-rate decisions are acknowledged with certainty.
    """
    if ocfg.horizon > MAX_ENUM_HORIZON:
        raise ResourceLimit(f"enumeration is limited to horizon <= {MAX_ENUM_HORIZON}")
    if phi.subband_count != ocfg.subbands:
        raise InvalidArgument("phi table and oracle config disagree on the number of subbands")
    M = ocfg.horizon
    counter = itertools.count()

    def expand(history, belief, remaining):
        d = policy(history)
        if d.power < 0 or d.rate < 0:
            raise InvalidState("policy returned a negative power or rate")
        c = _nak_probability(phi, belief, d.theta) if d.rate > 0 else 0.0
        node = OracleNode(len(history) + 1, belief.lower, belief.upper, d.theta, remaining,
                          d.power, d.rate, c, node_id=next(counter))
        if len(history) + 1 < M:
            rest = remaining - d.power
            if d.rate == 0:
                node.ack_child = expand(history + ((d, 1),), belief, rest)
            else:
                if c < 1.0:
                    node.ack_child = expand(history + ((d, 1),), absorb_feedback(belief, d.theta, 1), rest)
                if c > 0.0:
                    node.nak_child = expand(history + ((d, 0),), absorb_feedback(belief, d.theta, 0), rest)
        va = node.ack_child.value if node.ack_child is not None else 0.0
        vn = node.nak_child.value if node.nak_child is not None else 0.0
        node.value = (1.0 - c) * (d.rate + va) + c * vn
        return node

    return expand((), BeliefState(), float(ocfg.total_power))


def enumerate_policy_value(policy, ocfg, phi):
    """Exact expected goodput of ``policy`` over all ``2^M`` feedback paths."""
    return build_policy_tree(policy, ocfg, phi).value


# --- discretised dynamic programme -------------------------------------------

def dp_action_count(ocfg):
    """Number of (state, action) evaluations a full DP solve visits."""
    _, counts = ocfg.power_fractions()
    G = ocfg.theta_grid
    total, states = 0, 1
    for m in range(ocfg.horizon):
        A = G * int(counts[m])
        total += states * A
        states *= 2 * A
    return total


@njit
def _dp_value_numba(m, a, b, P, M, xg, qg, cs, fracs, nfrac, bits_scale, D, N):
    if m >= M:
        return 0.0
    best = -1.0
    w = b - a
    for i in range(nfrac[m]):
        p = P * fracs[m, i]
        zero_val = -1.0
        for j in range(cs.shape[0]):
            c = cs[j]
            u = a + c * w
            th = inv_cdf_scalar(xg, qg, u)
            r = 0.0
            if p > 0.0 and th > 0.0:
                v = bits_scale * (D * math.log2(p / N) + math.log2(th))
                if v > 0.0:
                    r = v
            if r == 0.0:
                if zero_val < 0.0:
                    zero_val = _dp_value_numba(m + 1, a, b, P - p, M, xg, qg, cs, fracs, nfrac,
                                               bits_scale, D, N)
                val = zero_val
            elif m == M - 1:
                val = (1.0 - c) * r
            else:
                va = _dp_value_numba(m + 1, u, b, P - p, M, xg, qg, cs, fracs, nfrac,
                                     bits_scale, D, N)
                vn = _dp_value_numba(m + 1, a, u, P - p, M, xg, qg, cs, fracs, nfrac,
                                     bits_scale, D, N)
                val = (1.0 - c) * (r + va) + c * vn
            if val > best:
                best = val
    return best


@njit
def _dp_actions_numba(m, a, b, P, M, xg, qg, cs, fracs, nfrac, bits_scale, D, N):
    n = nfrac[m] * cs.shape[0]
    out = np.empty(n)
    w = b - a
    for i in range(nfrac[m]):
        p = P * fracs[m, i]
        for j in range(cs.shape[0]):
            c = cs[j]
            u = a + c * w
            th = inv_cdf_scalar(xg, qg, u)
            r = 0.0
            if p > 0.0 and th > 0.0:
                v = bits_scale * (D * math.log2(p / N) + math.log2(th))
                if v > 0.0:
                    r = v
            if r == 0.0:
                val = _dp_value_numba(m + 1, a, b, P - p, M, xg, qg, cs, fracs, nfrac,
                                      bits_scale, D, N)
            elif m == M - 1:
                val = (1.0 - c) * r
            else:
                va = _dp_value_numba(m + 1, u, b, P - p, M, xg, qg, cs, fracs, nfrac,
                                     bits_scale, D, N)
                vn = _dp_value_numba(m + 1, a, u, P - p, M, xg, qg, cs, fracs, nfrac,
                                     bits_scale, D, N)
                val = (1.0 - c) * (r + va) + c * vn
            out[i * cs.shape[0] + j] = val
    return out


_CHUNK = 1 << 18


def _dp_actions_numpy(m, a, b, P, ctx):
    """Values of every action at each of the states ``(a, b, P)``: shape ``(n, A)``."""
    M, xg, qg, cs, fracs, nfrac, bits_scale, D, N = ctx
    n = a.shape[0]
    nf, G = int(nfrac[m]), cs.shape[0]
    p = P[:, None] * fracs[m, :nf][None, :]
    w = b - a
    u = a[:, None, None] + cs[None, None, :] * w[:, None, None]
    u = np.broadcast_to(u, (n, nf, G))
    th = inv_cdf_array(xg, qg, u)
    pp = np.broadcast_to(p[:, :, None], (n, nf, G))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = bits_scale * (D * np.log2(pp / N) + np.log2(th))
    r = np.where((pp > 0.0) & (th > 0.0) & (v > 0.0), v, 0.0)
    c = np.broadcast_to(cs[None, None, :], (n, nf, G))
    if m == M - 1:
        return ((1.0 - c) * r).reshape(n, nf * G)
    live = r > 0.0
    aa = np.broadcast_to(a[:, None, None], (n, nf, G))
    bb = np.broadcast_to(b[:, None, None], (n, nf, G))
    rest = np.broadcast_to((P[:, None] - p)[:, :, None], (n, nf, G))
    # zero-rate actions leave the belief untouched, so both children coincide
    ack_a = np.where(live, u, aa).ravel()
    nak_b = np.where(live, u, bb).ravel()
    va = _dp_values_numpy(m + 1, ack_a, bb.ravel(), rest.ravel(), ctx).reshape(n, nf, G)
    vn = _dp_values_numpy(m + 1, aa.ravel(), nak_b, rest.ravel(), ctx).reshape(n, nf, G)
    val = np.where(live, (1.0 - c) * (r + va) + c * vn, va)
    return val.reshape(n, nf * G)


def _dp_values_numpy(m, a, b, P, ctx):
    M = ctx[0]
    if m >= M:
        return np.zeros(a.shape[0])
    A = int(ctx[5][m]) * ctx[3].shape[0]
    n = a.shape[0]
    step = max(1, _CHUNK // A)
    if n <= step:
        return _dp_actions_numpy(m, a, b, P, ctx).max(axis=1)
    out = np.empty(n)
    for s in range(0, n, step):
        e = min(n, s + step)
        out[s:e] = _dp_actions_numpy(m, a[s:e], b[s:e], P[s:e], ctx).max(axis=1)
    return out


def dp_optimal(ocfg, phi, backend=None):
    """Optimal value and policy tree of the discretised single-user MDP.

    The state is the belief ``(phi(L), phi(U))`` plus the remaining power;
    the action is a power fraction (fixed by the closed-form schedule or
    chosen from ``i / (G_p + 1)``, with everything spent in the last slot)
    and a conditional NAK probability ``c`` from ``eps * j / G``.  Each
    transmission therefore meets the error target with ``Pr(NAK) <= eps``.

    Returns
    -------
    value : float
        Optimal expected goodput in bits.
    root : OracleNode
        Root of the optimal policy tree (ties go to the lowest action index).
    """
    if ocfg.horizon > MAX_DP_HORIZON:
        raise ResourceLimit(f"the DP oracle is limited to horizon <= {MAX_DP_HORIZON}")
    if phi.subband_count != ocfg.subbands:
        raise InvalidArgument("phi table and oracle config disagree on the number of subbands")
    work = dp_action_count(ocfg)
    if work > ocfg.max_evaluations:
        raise ResourceLimit(f"DP would visit {work:.3g} state-action pairs "
                            f"(limit {ocfg.max_evaluations:.3g})")
    backend = resolve_backend(backend)
    fracs, nfrac = ocfg.power_fractions()
    cs = ocfg.nak_grid()
    M = ocfg.horizon
    args = (M, phi.x, phi.q, cs, fracs, nfrac, ocfg.bits_scale, float(ocfg.subbands),
            float(ocfg.subcarriers))

    if backend == "numba":
        def actions(m, a, b, P):
            return _dp_actions_numba(m, a, b, P, *args)
    else:
        def actions(m, a, b, P):
            return _dp_actions_numpy(m, np.array([a]), np.array([b]), np.array([P]), args)[0]

    counter = itertools.count()
    G = cs.shape[0]

    def build(m, a, b, P):
        vals = actions(m, a, b, P)
        k = int(np.argmax(vals))
        i, j = divmod(k, G)
        p = P * fracs[m, i]
        c = cs[j]
        u = a + c * (b - a)
        th = inv_cdf_scalar(phi.x, phi.q, u)
        r = 0.0
        if p > 0.0 and th > 0.0:
            v = ocfg.bits_scale * (ocfg.subbands * math.log2(p / ocfg.subcarriers) + math.log2(th))
            r = v if v > 0.0 else 0.0
        lower = inv_cdf_scalar(phi.x, phi.q, a)
        upper = inv_cdf_scalar(phi.x, phi.q, b)
        node = OracleNode(m + 1, lower, upper, th, P, p, r, c if r > 0 else 0.0,
                          value=float(vals[k]), node_id=next(counter),
                          extra={"u_lower": a, "u_upper": b, "u_theta": u})
        if m + 1 < M:
            if r == 0.0:
                node.ack_child = build(m + 1, a, b, P - p)
            else:
                node.ack_child = build(m + 1, u, b, P - p)
                node.nak_child = build(m + 1, a, u, P - p)
        return node

    root = build(0, 0.0, 1.0, float(ocfg.total_power))
    return root.value, root


# --- online replay and inspection --------------------------------------------

def replay_online(tree, realization, rng=None, ocfg=None, ack_model="ideal"):
    """Follow a policy tree along the feedback a realised channel produces.

    ``rng`` is accepted for signature symmetry with the other schedulers;
    the replay itself is deterministic.  ``ocfg`` supplies the link
    parameters for ``ack_model="exact"``.
    """
    if realization.power_gains.shape[0] != 1:
        raise InvalidArgument("policy trees are single-user")
    cfg = ocfg.system_config(ack_model) if ocfg is not None else None
    if ack_model == "exact" and cfg is None:
        raise InvalidArgument("exact replay needs the oracle config")
    X = float(realization.products[0])
    decisions, acks, lower, upper = [], [], [], []
    node, m = tree, 1
    while node is not None:
        if node.slot != m:
            raise InvalidState(f"malformed tree: node {node.node_id} has slot {node.slot}, expected {m}")
        decisions.append(Decision(m, 0, node.power, node.rate, node.theta))
        lower.append(node.lower)
        upper.append(node.upper)
        if node.rate == 0:
            v = 1
        elif ack_model == "ideal":
            v = int(X >= node.theta)
        else:
            v = ack_outcome("exact", node.rate, node.power, realization.power_gains[0], cfg)
        acks.append(v)
        nxt = node.ack_child if (v or node.rate == 0) else node.nak_child
        if nxt is None and (node.ack_child is not None or node.nak_child is not None):
            raise InvalidState(f"malformed tree: node {node.node_id} lacks the child for feedback {v}")
        node, m = nxt, m + 1
    return SlotTrace(decisions, np.array([acks], dtype=int), np.array(lower), np.array(upper))


def iter_nodes(root):
    """Depth-first (ACK branch first) iteration over a policy tree."""
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        for child in (node.nak_child, node.ack_child):
            if child is not None:
                stack.append(child)


def check_tree(root, tol=1e-12):
    """Largest violation of the value recursion anywhere in the tree."""
    worst = 0.0
    for node in iter_nodes(root):
        va = node.ack_child.value if node.ack_child is not None else 0.0
        vn = node.nak_child.value if node.nak_child is not None else 0.0
        c = node.nak_prob
        expect = (1.0 - c) * (node.rate + va) + c * vn
        worst = max(worst, abs(expect - node.value) / max(1.0, abs(node.value)))
    return worst


TREE_COLUMNS = ("id", "slot", "lower", "upper", "theta", "remaining_power", "power", "rate",
                "nak_prob", "value", "ack_child", "nak_child")


def dump_tree(root, path_or_file):
    """Write a tab-separated dump, one node per line, children by id."""
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, delimiter="\t")
        w.writerow(TREE_COLUMNS)
        for n in sorted(iter_nodes(root), key=lambda n: n.node_id):
            w.writerow([n.node_id, n.slot, repr(n.lower), repr(n.upper), repr(n.theta),
                        repr(n.remaining_power), repr(n.power), repr(n.rate), repr(n.nak_prob),
                        repr(n.value),
                        n.ack_child.node_id if n.ack_child is not None else "",
                        n.nak_child.node_id if n.nak_child is not None else ""])
    finally:
        if own:
            fh.close()
