"""Distribution of the product of D unit-mean exponential gains.

The CDF ``phi(x) = Pr(h_1 * ... * h_D <= x)`` has no elementary closed form for
D > 2, so it is tabulated once on a grid and evaluated by monotone piecewise
linear interpolation.  The default construction convolves the density of
``log h`` (``exp(s - e^s)``) with itself on a uniform log grid; a Monte Carlo
construction is kept as an independent cross-check.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from ._accel import njit
from .errors import InvalidArgument

__all__ = [
    "PhiTable",
    "build_phi",
    "cdf",
    "inv_cdf",
    "sample_product",
    "save_phi",
    "load_phi",
    "cached_phi",
    "LOG_GRID_SPAN",
]

LOG_GRID_SPAN = (-40.0, 15.0)
METHODS = ("log-domain-convolution", "monte-carlo")
DEFAULT_RESOLUTION = 2 ** 16


@dataclass(frozen=True, eq=False)
class PhiTable:
    """Tabulated CDF of the channel-power product.

    Attributes
    ----------
    subband_count : int
        Number of factors D.
    x, q : ndarray
        Grid abscissae (strictly increasing, ``x[0] == 0``) and CDF values
        (non-decreasing, ``q[0] == 0``, ``q[-1] == 1``).  Read-only.
    build_method : str
        ``"log-domain-convolution"`` or ``"monte-carlo"``.
    size : int
        Log-grid resolution or Monte Carlo sample count used to build it.
    """

    subband_count: int
    x: np.ndarray
    q: np.ndarray
    build_method: str
    size: int

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        q = np.ascontiguousarray(self.q, dtype=np.float64)
        x.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "q", q)

    @property
    def key(self):
        return (self.subband_count, self.size, self.build_method)

    def __call__(self, x):
        return cdf(self, x)


def _log_grid(resolution):
    lo, hi = LOG_GRID_SPAN
    step = (hi - lo) / (resolution - 1)
    # align the origin on the grid so that full convolutions index back onto it
    offset = int(round(-lo / step))
    s = (np.arange(resolution) - offset) * step
    return s, step, offset


def _convolution_table(D, resolution):
    s, step, offset = _log_grid(resolution)
    x = np.exp(s)
    if D == 1:
        q = -np.expm1(-x)
    else:
        f1 = np.exp(s - x)
        f = f1
        for _ in range(D - 1):
            full = fftconvolve(f, f1) * step
            f = np.clip(full[offset:offset + resolution], 0.0, None)
        # cumulative trapezoid, renormalised to the mass inside the window
        q = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * step)))
        q = q / q[-1]
    x = np.concatenate(([0.0], x))
    q = np.concatenate(([0.0], q))
    return x, np.minimum(q, 1.0)


def _monte_carlo_table(D, samples, seed):
    rng = np.random.default_rng(seed)
    draws = np.sort(sample_product(D, rng, size=samples))
    x = np.unique(draws)
    # empirical CDF at each distinct sample; ties collapse to the last rank
    q = np.searchsorted(draws, x, side="right") / samples
    x = np.concatenate(([0.0], x))
    q = np.concatenate(([0.0], q))
    return x, q


def build_phi(D, resolution=DEFAULT_RESOLUTION, method="log-domain-convolution", seed=0):
    """Tabulate the CDF of the product of ``D`` unit-mean exponentials.

    Parameters
    ----------
    D : int
        Number of independent subbands, ``D >= 1``.
    resolution : int
        Log-grid size for the convolution method, sample count for the Monte
        Carlo method.  At least 64.
    method : str
        ``"log-domain-convolution"`` (default, deterministic) or
        ``"monte-carlo"`` (deterministic given ``seed``).
    """
    if int(D) != D or D < 1:
        raise InvalidArgument(f"D must be a positive integer, got {D!r}")
    if int(resolution) != resolution or resolution < 64:
        raise InvalidArgument(f"resolution must be an integer >= 64, got {resolution!r}")
    D, resolution = int(D), int(resolution)
    if method == "log-domain-convolution":
        x, q = _convolution_table(D, resolution)
    elif method == "monte-carlo":
        x, q = _monte_carlo_table(D, resolution, seed)
    else:
        raise InvalidArgument(f"unknown build method {method!r}; expected one of {METHODS}")
    return PhiTable(D, x, q, method, resolution)


# --- scalar kernels shared with the simulation loops -------------------------

@njit
def cdf_scalar(xg, qg, x):
    if x <= 0.0:
        return 0.0
    n = xg.shape[0]
    if x >= xg[n - 1]:
        return 1.0
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if xg[mid] <= x:
            lo = mid
        else:
            hi = mid
    return qg[lo] + (x - xg[lo]) * ((qg[hi] - qg[lo]) / (xg[hi] - xg[lo]))


@njit
def inv_cdf_scalar(xg, qg, q):
    if q <= 0.0:
        return 0.0
    n = qg.shape[0]
    if q >= 1.0:
        return np.inf
    # first index with qg[hi] >= q; qg[0] = 0 < q so hi >= 1
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if qg[mid] >= q:
            hi = mid
        else:
            lo = mid
    return xg[lo] + (q - qg[lo]) * ((xg[hi] - xg[lo]) / (qg[hi] - qg[lo]))


def cdf_array(xg, qg, x):
    """Vectorised twin of :func:`cdf_scalar` (same arithmetic)."""
    x = np.asarray(x, dtype=np.float64)
    n = xg.shape[0]
    j = np.clip(np.searchsorted(xg, x, side="right") - 1, 0, n - 2)
    with np.errstate(invalid="ignore"):
        out = qg[j] + (x - xg[j]) * ((qg[j + 1] - qg[j]) / (xg[j + 1] - xg[j]))
    out = np.where(x >= xg[n - 1], 1.0, out)
    return np.where(x <= 0.0, 0.0, out)


def inv_cdf_array(xg, qg, q):
    """Vectorised twin of :func:`inv_cdf_scalar` (same arithmetic)."""
    q = np.asarray(q, dtype=np.float64)
    n = qg.shape[0]
    hi = np.clip(np.searchsorted(qg, q, side="left"), 1, n - 1)
    lo = hi - 1
    with np.errstate(invalid="ignore", divide="ignore"):
        out = xg[lo] + (q - qg[lo]) * ((xg[hi] - xg[lo]) / (qg[hi] - qg[lo]))
    out = np.where(q >= 1.0, np.inf, out)
    return np.where(q <= 0.0, 0.0, out)


# --- public API ---------------------------------------------------------------

def cdf(table, x):
    """Interpolated ``Pr(X <= x)``; accepts scalars, arrays and ``inf``."""
    xa = np.asarray(x, dtype=np.float64)
    if np.any(np.isnan(xa)) or np.any(xa < 0):
        raise InvalidArgument("cdf is defined for x >= 0 only")
    out = cdf_array(table.x, table.q, xa)
    return float(out) if out.ndim == 0 else out


def inv_cdf(table, q):
    """Smallest ``x`` whose interpolated CDF equals ``q``.

    The grid segment is located by binary search and inverted exactly, so
    ``cdf(inv_cdf(q)) == q`` up to rounding.  ``inv_cdf(0) = 0`` and
    ``inv_cdf(1) = inf`` (the upper sentinel).
    """
    qa = np.asarray(q, dtype=np.float64)
    if np.any(np.isnan(qa)) or np.any(qa < 0) or np.any(qa > 1):
        raise InvalidArgument("inv_cdf requires 0 <= q <= 1")
    out = inv_cdf_array(table.x, table.q, qa)
    return float(out) if out.ndim == 0 else out


def sample_product(D, rng, size=None):
    """Product of ``D`` independent unit-mean exponential draws."""
    if int(D) != D or D < 1:
        raise InvalidArgument(f"D must be a positive integer, got {D!r}")
    shape = (int(D),) if size is None else tuple(np.atleast_1d(size)) + (int(D),)
    out = rng.exponential(1.0, size=shape).prod(axis=-1)
    return float(out) if size is None else out


def _cache_name(D, resolution, method):
    return f"phi_D{D}_n{resolution}_{method}.npz"


def save_phi(table, path):
    np.savez(path, D=table.subband_count, x=table.x, q=table.q,
             method=table.build_method, size=table.size)


def load_phi(path):
    with np.load(path, allow_pickle=False) as z:
        return PhiTable(int(z["D"]), z["x"].copy(), z["q"].copy(), str(z["method"]), int(z["size"]))


def cached_phi(D, resolution=DEFAULT_RESOLUTION, method="log-domain-convolution",
               cache_dir=None, seed=0):
    """Build a table, reusing ``cache_dir/phi_D*_n*_*.npz`` when present."""
    if cache_dir is None:
        return build_phi(D, resolution, method, seed)
    path = os.path.join(cache_dir, _cache_name(D, resolution, method))
    if os.path.exists(path):
        return load_phi(path)
    table = build_phi(D, resolution, method, seed)
    os.makedirs(cache_dir, exist_ok=True)
    save_phi(table, path)
    return table
