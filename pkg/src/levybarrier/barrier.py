"""Optimal dividend barrier and the barrier value function."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .scale import ScaleFunction, scale_h

GRID_POINTS = 10_000
GOLDEN_TOL = 1e-8
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OptimalBarrier:
    b_star: float
    hprime_min: float
    search_grid: str


def _golden_min(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        # ties move right, toward the largest minimiser
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def search_window(sf: ScaleFunction) -> float:
    """Smallest doubling ``x`` with ``rho h(x) > 2 h'(0+)``.

    Since ``h' >= rho h``, ``h'`` exceeds its value at 0 everywhere beyond, so
    the global minimiser lies inside ``[0, x]``.
    """
    target = 2.0 * sf.hprime0()
    x = 1.0
    while sf.rho * scale_h(sf, x) <= target:
        x *= 2.0
    return x


def find_bstar(sf: ScaleFunction, n_grid: int = GRID_POINTS) -> OptimalBarrier:
    """Largest global minimiser of ``h'`` on ``[0, inf)``."""
    x_max = search_window(sf)
    grid = np.linspace(0.0, x_max, n_grid + 1)
    hp = scale_h(sf, grid, 1)
    vmin = hp.min()
    i = int(np.flatnonzero(hp == vmin)[-1])

    # separated near-ties are reported, not resolved
    near = np.flatnonzero(hp <= vmin + 1e-9 * max(1.0, abs(vmin)))
    clusters = 1 + int(np.sum(np.diff(near) > 1)) if near.size else 0
    note = f"uniform grid of {n_grid + 1} points on [0, {x_max:g}], golden-section refinement to {GOLDEN_TOL:g}"
    if clusters > 1:
        note += f"; warning: {clusters} separated near-minimal regions within 1e-9"

    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, n_grid)]
    f = lambda x: float(scale_h(sf, x, 1))
    b = _golden_min(f, lo, hi)
    # h' is flat at its minimum, so comparing values stalls near sqrt(eps);
    # the closed-form h'' pins the stationary point down to rounding
    d2 = lambda x: float(scale_h(sf, x, 2))
    if lo < hi and d2(lo) < 0 < d2(hi):
        b = optimize.brentq(d2, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        note += ", polished by a root of h''"
    if i == 0 and f(0.0) <= f(b):
        b = 0.0
    return OptimalBarrier(b_star=float(b), hprime_min=f(b), search_grid=note)


@dataclass(frozen=True)
class BarrierValueFunction:
    """Value of the barrier strategy at ``b``:

    ``h(x)/h'(b)`` on ``[0, b]``, ``x - b + h(b)/h'(b)`` above, ``0`` below 0.
    """

    sf: ScaleFunction
    b: float
    h_at_b: float
    hprime_at_b: float

    @classmethod
    def at(cls, sf: ScaleFunction, b: float) -> "BarrierValueFunction":
        if b < 0:
            raise ValueError(f"barrier must be >= 0, got {b}")
        hb = float(scale_h(sf, b))
        hpb = float(scale_h(sf, b, 1))
        assert hpb > 0, "h' is positive on [0, inf)"
        return cls(sf, float(b), hb, hpb)

    @property
    def value_at_barrier(self) -> float:
        return self.h_at_b / self.hprime_at_b

    def __call__(self, x):
        return value_at(self, x)


def optimal_value_function(sf: ScaleFunction) -> tuple[OptimalBarrier, BarrierValueFunction]:
    opt = find_bstar(sf)
    return opt, BarrierValueFunction.at(sf, opt.b_star)


def value_at(vbf: BarrierValueFunction, x):
    x = np.asarray(x, dtype=float)
    inside = np.clip(x, 0.0, vbf.b)
    below = scale_h(vbf.sf, inside) / vbf.hprime_at_b
    above = x - vbf.b + vbf.value_at_barrier
    out = np.where(x < 0, 0.0, np.where(x <= vbf.b, below, above))
    return float(out) if out.ndim == 0 else out


def value_gradient(vbf: BarrierValueFunction, x):
    """``V_b'(x)``; right-hand derivative at 0."""
    x = np.asarray(x, dtype=float)
    inside = np.clip(x, 0.0, vbf.b)
    below = scale_h(vbf.sf, inside, 1) / vbf.hprime_at_b
    out = np.where(x < 0, 0.0, np.where(x <= vbf.b, below, 1.0))
    return float(out) if out.ndim == 0 else out


def value_curvature(vbf: BarrierValueFunction, x):
    """``V_b''(x)`` away from the kink at ``b`` (left limit at ``b``)."""
    x = np.asarray(x, dtype=float)
    inside = np.clip(x, 0.0, vbf.b)
    below = scale_h(vbf.sf, inside, 2) / vbf.hprime_at_b
    out = np.where(x < 0, 0.0, np.where(x <= vbf.b, below, 0.0))
    return float(out) if out.ndim == 0 else out
