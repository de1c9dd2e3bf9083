"""Block-fading OFDM downlink channel, mutual information and ACK decisions."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import j0

from .errors import InvalidArgument

__all__ = [
    "SystemConfig",
    "ChannelRealization",
    "ACK_MODELS",
    "draw_channel",
    "capacity_exact",
    "capacity_highsnr",
    "rate_threshold",
    "ack_outcome",
    "doppler_correlation",
    "evolve_doppler",
    "channel_trajectory",
]

ACK_MODELS = ("ideal", "exact")


@dataclass(frozen=True)
class SystemConfig:
    """Static parameters of one simulated downlink.

    Noise power per subcarrier is 1, so ``total_power`` doubles as an SNR
    knob; ``transmit_snr_db`` reports ``10 log10(P0 / M)``.
    """

    subcarriers: int = 64
    subbands: int = 3
    users: int = 3
    packets_per_slot: int = 30
    slot_duration: float = 0.1
    total_power: float = 24.0
    target_per: float = 0.05
    ack_model: str = "ideal"
    doppler_max: float = 0.0
    seed: int = 0
    bandwidth: float = 20e6
    broadcast_feedback: bool = True

    def __post_init__(self):
        for name in ("subcarriers", "subbands", "users", "packets_per_slot"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise InvalidArgument(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.subbands > self.subcarriers:
            raise InvalidArgument("subbands must not exceed subcarriers")
        if not self.slot_duration > 0:
            raise InvalidArgument("slot_duration must be > 0")
        if not self.total_power >= 0 or not np.isfinite(self.total_power):
            raise InvalidArgument("total_power must be finite and >= 0")
        if not 0.0 < self.target_per < 1.0:
            raise InvalidArgument(f"target_per must lie strictly inside (0, 1), got {self.target_per!r}")
        if self.ack_model not in ACK_MODELS:
            raise InvalidArgument(f"ack_model must be one of {ACK_MODELS}, got {self.ack_model!r}")
        if not self.doppler_max >= 0:
            raise InvalidArgument("doppler_max must be >= 0")
        if not self.bandwidth > 0:
            raise InvalidArgument("bandwidth must be > 0")

    # short aliases used throughout the numerics
    @property
    def N(self):
        return self.subcarriers

    @property
    def D(self):
        return self.subbands

    @property
    def K(self):
        return self.users

    @property
    def M(self):
        return self.packets_per_slot

    @property
    def eps(self):
        return self.target_per

    @property
    def bits_scale(self):
        """``N T / (D M)``: bits per packet slot per unit of log2 capacity."""
        return self.subcarriers * self.slot_duration / (self.subbands * self.packets_per_slot)

    @property
    def transmit_snr_db(self):
        if self.total_power == 0:
            return -np.inf
        return 10.0 * np.log10(self.total_power / self.packets_per_slot)

    def replace(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Per-user complex subband gains with derived powers and products."""

    complex_gains: np.ndarray
    power_gains: np.ndarray = field(init=False)
    products: np.ndarray = field(init=False)

    def __post_init__(self):
        g = np.array(self.complex_gains, dtype=np.complex128, ndmin=2)
        h = g.real ** 2 + g.imag ** 2
        for arr in (g, h):
            arr.setflags(write=False)
        X = h.prod(axis=-1)
        X.setflags(write=False)
        object.__setattr__(self, "complex_gains", g)
        object.__setattr__(self, "power_gains", h)
        object.__setattr__(self, "products", X)

    @property
    def users(self):
        return self.power_gains.shape[0]


def _unit_complex_gaussian(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def draw_channel(cfg, rng):
    """I.i.d. CN(0, 1) subband gains, so every ``h_{k,d}`` is Exp(1)."""
    return ChannelRealization(_unit_complex_gaussian(rng, (cfg.users, cfg.subbands)))


def capacity_exact(p, h_vec, cfg):
    """Bits one packet slot carries at power ``p`` over subband gains ``h_vec``."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise InvalidArgument("power must be >= 0")
    h = np.asarray(h_vec, dtype=np.float64)
    out = cfg.bits_scale * np.log2(1.0 + p[..., None] * h / cfg.subcarriers).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def capacity_highsnr(p, X, cfg):
    """High-SNR rate ``N T/(D M) (D log2(p/N) + log2 X)``; may be negative."""
    p = np.asarray(p, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if np.any(p <= 0) or np.any(X <= 0):
        raise InvalidArgument("capacity_highsnr needs p > 0 and X > 0")
    out = cfg.bits_scale * (cfg.subbands * np.log2(p / cfg.subcarriers) + np.log2(X))
    return float(out) if out.ndim == 0 else out


def rate_threshold(p, r, cfg):
    """Channel-product threshold implied by a (power, rate) pair.

    ``theta = (N/p)^D 2^(r D M / (N T))``; under the high-SNR model the packet
    decodes iff ``X >= theta``.
    """
    if p <= 0:
        raise InvalidArgument("power must be > 0")
    return (cfg.subcarriers / p) ** cfg.subbands * 2.0 ** (r / cfg.bits_scale)


def ack_outcome(model, r, p, row, cfg, theta=None):
    """1 if the user decodes a packet sent at rate ``r`` and power ``p``.

    ``row`` is the user's length-D power-gain vector.  Equality counts as
    success.  A zero-rate packet carries nothing to decode and is always
    acknowledged.  For the ideal model ``theta`` may be passed directly to
    skip recomputing it from ``(p, r)``.
    """
    if r < 0:
        raise InvalidArgument("rate must be >= 0")
    if r == 0:
        return 1
    h = np.asarray(row, dtype=np.float64)
    if model == "exact":
        return int(r <= capacity_exact(p, h, cfg))
    if model == "ideal":
        if theta is None:
            theta = rate_threshold(p, r, cfg)
        return int(np.prod(h) >= theta)
    raise InvalidArgument(f"unknown ack model {model!r}")


def doppler_correlation(f_d, cfg):
    """Per-packet-slot AR(1) coefficient ``J0(2 pi f_d T / M)``."""
    f_d = np.asarray(f_d, dtype=np.float64)
    if np.any(f_d < 0):
        raise InvalidArgument("Doppler frequency must be >= 0")
    return j0(2.0 * np.pi * f_d * cfg.slot_duration / cfg.packets_per_slot)


def evolve_doppler(realization, f_d, cfg, rng):
    """Advance the channel one packet slot under a Gauss-Markov fading model.

    ``f_d`` is a scalar or a per-user array of Doppler frequencies.  With
    ``f_d == 0`` the input realization is returned unchanged.
    """
    rho = np.broadcast_to(doppler_correlation(f_d, cfg), (realization.users,))
    if np.all(rho == 1.0):
        return realization
    g = realization.complex_gains
    w = _unit_complex_gaussian(rng, g.shape)
    rho = rho[:, None]
    return ChannelRealization(rho * g + np.sqrt(1.0 - rho ** 2) * w)


def channel_trajectory(cfg, rng, trials):
    """Power gains for ``trials`` independent time slots.

    Returns an array of shape ``(trials, S, K, D)`` where ``S == 1`` for a
    static channel and ``S == M`` when ``cfg.doppler_max > 0``; in the latter
    case each user draws its Doppler frequency uniformly from
    ``[0, doppler_max]`` per time slot and the gains evolve once per packet
    slot.
    """
    K, D, M = cfg.users, cfg.subbands, cfg.packets_per_slot
    g = _unit_complex_gaussian(rng, (trials, K, D))
    if cfg.doppler_max == 0:
        return (g.real ** 2 + g.imag ** 2)[:, None]
    f_d = rng.uniform(0.0, cfg.doppler_max, size=(trials, K))
    rho = doppler_correlation(f_d, cfg)[..., None]
    innov = np.sqrt(1.0 - rho ** 2)
    out = np.empty((trials, M, K, D))
    for m in range(M):
        if m:
            g = rho * g + innov * _unit_complex_gaussian(rng, (trials, K, D))
        out[:, m] = g.real ** 2 + g.imag ** 2
    return out
