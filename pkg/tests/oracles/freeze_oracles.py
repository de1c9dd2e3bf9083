"""Compute the reference values the test suite compares against.

Run once and commit the output:

    python3 tests/oracles/freeze_oracles.py

Everything here is independent of the package's numerics except where a
test must share the package's tabulated prior (the exhaustive policy search
uses ``cdf``/``inv_cdf`` so that its action set is the DP's action set).

* phi for any D: ``Pr(X <= x) = G^{D,1}_{1,D+1}(x | 1; 1,...,1, 0)``
  (Meijer G), evaluated with mpmath at 30 digits.  D=2 is also checked
  against ``1 - 2 sqrt(x) K1(2 sqrt(x))``.
* Quantiles by root finding on the closed forms.
* J0 from mpmath.
* Optimal values of small discretised single-user problems by listing every
  deterministic policy tree and scoring each one path by path.
"""
import itertools
import json
import math
import os

import mpmath as mp

mp.mp.dps = 30

HERE = os.path.dirname(os.path.abspath(__file__))
X_GRID = [1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0]


def phi_exact(D, x):
    return mp.meijerg([[1], []], [[1] * D, [0]], x)


def phi_values():
    out = {}
    for D in range(1, 6):
        out[str(D)] = [[x, float(phi_exact(D, x))] for x in X_GRID]
    bessel = [[x, float(1 - 2 * mp.sqrt(x) * mp.besselk(1, 2 * mp.sqrt(x)))] for x in (0.1, 0.5, 1.0, 2.0, 5.0)]
    return out, bessel


def quantiles():
    q1 = float(-mp.log(1 - mp.mpf("0.1")))
    # D=2: x with 1 - 2 sqrt(x) K1(2 sqrt(x)) = 0.7202
    f = lambda x: 1 - 2 * mp.sqrt(x) * mp.besselk(1, 2 * mp.sqrt(x)) - mp.mpf("0.7202")
    q2 = float(mp.findroot(f, 1.0))
    return {"D1_q0.1": q1, "D2_q0.7202": q2}


# --- exhaustive policy search -------------------------------------------------

def exhaustive_optimum(M, G, Gp, eps, P0, D, N, T, power_mode):
    """Best expected goodput over all deterministic grid-action policy trees."""
    from acksched.phi import build_phi, cdf, inv_cdf

    phi = build_phi(D)
    scale = N * T / (D * M)

    def actions(m, P):
        if power_mode == "closed-form":
            n = M - m
            fr = [1.0 if n == 1 else eps / (-math.expm1(n * math.log1p(-eps)))]
        else:
            fr = [1.0] if m == M - 1 else [i / (Gp + 1.0) for i in range(1, Gp + 1)]
        return [(f, eps * j / G) for f in fr for j in range(1, G + 1)]

    def outcome(m, L, U, P, act):
        f, c = act
        a = cdf(phi, L)
        b = 1.0 if U == math.inf else cdf(phi, U)
        theta = inv_cdf(phi, a + c * (b - a))
        p = P * f
        r = 0.0
        if p > 0 and theta > 0:
            r = max(0.0, scale * (D * math.log2(p / N) + math.log2(theta)))
        return p, r, theta, (cdf(phi, theta) - a) / (b - a)

    def trees(m, L, U, P):
        """Yield (expected value of this subtree) for every policy subtree."""
        if m == M:
            yield 0.0
            return
        for act in actions(m, P):
            p, r, theta, nak = outcome(m, L, U, P, act)
            if r == 0.0:
                for v in trees(m + 1, L, U, P - p):
                    yield v
                continue
            acks = list(trees(m + 1, theta, U, P - p))
            naks = list(trees(m + 1, L, theta, P - p))
            for va, vn in itertools.product(acks, naks):
                yield (1 - nak) * (r + va) + nak * vn

    best = -1.0
    count = 0
    for v in trees(0, 0.0, math.inf, P0):
        count += 1
        best = max(best, v)
    return best, count


def main():
    phis, bessel = phi_values()
    j0 = float(mp.besselj(0, 2 * mp.pi * 50 * 0.1 / 30))
    cases = [
        dict(M=2, G=8, Gp=4, eps=0.05, D=1, power_mode="grid"),
        dict(M=3, G=4, Gp=2, eps=0.05, D=1, power_mode="grid"),
        dict(M=3, G=8, Gp=1, eps=0.05, D=1, power_mode="closed-form"),
        dict(M=2, G=8, Gp=4, eps=0.1, D=2, power_mode="grid"),
    ]
    exhaustive = []
    for c in cases:
        N, T = 64, 0.1
        P0 = 1000.0 * N * c["M"]
        v, n = exhaustive_optimum(c["M"], c["G"], c["Gp"], c["eps"], P0, c["D"], N, T, c["power_mode"])
        exhaustive.append(dict(c, P0=P0, N=N, T=T, value=v, trees=n))
        print(c, v, n)
    out = {
        "phi": phis,
        "phi_bessel_D2": bessel,
        "quantiles": quantiles(),
        "j0_fd50_T0.1_M30": j0,
        "exhaustive": exhaustive,
    }
    with open(os.path.join(HERE, "frozen.json"), "w") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
