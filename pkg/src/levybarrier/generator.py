"""Infinitesimal generator by quadrature, and shape/HJB diagnostics.

The generator of the risk model acting on a function ``g`` with known first
and second derivatives is

    Gamma g(x) = sigma^2/2 g''(x) + a g'(x)
                 + lam_plus  int_0^inf [g(x + y) - g(x)] f_plus(y)  dy
                 + lam_minus int_0^inf [g(x - y) - g(x)] f_minus(y) dy,

with ``a`` the total drift (no compensator term).  Jump integrals use
QUADPACK's adaptive Gauss-Kronrod rules, split at every kink of ``g``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .barrier import BarrierValueFunction, value_at, value_curvature, value_gradient
from .model import MixedExponentialDensity, ModelSpec
from .scale import ScaleFunction, scale_h


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class SmoothFunction:
    """A piecewise-C2 test function with exact derivatives.

    ``kinks`` lists the points where ``g`` or a derivative is not smooth
    (the origin is handled separately through ``zero_below``).
    """

    value: Callable[[float], float]
    d1: Callable[[float], float]
    d2: Callable[[float], float]
    kinks: tuple[float, ...] = ()
    zero_below: bool = True
    name: str = "g"

    def __call__(self, y: float) -> float:
        if self.zero_below and y < 0:
            return 0.0
        return float(self.value(y))

    @classmethod
    def of_scale(cls, sf: ScaleFunction) -> "SmoothFunction":
        return cls(
            value=lambda y: scale_h(sf, y),
            d1=lambda y: scale_h(sf, y, 1),
            d2=lambda y: scale_h(sf, y, 2),
            kinks=(0.0,),
            name="h",
        )

    @classmethod
    def of_value(cls, vbf: BarrierValueFunction) -> "SmoothFunction":
        return cls(
            value=lambda y: value_at(vbf, y),
            d1=lambda y: value_gradient(vbf, y),
            d2=lambda y: value_curvature(vbf, y),
            kinks=(0.0, vbf.b),
            name=f"V_b(b={vbf.b:.6g})",
        )

    def combine(self, other: "SmoothFunction", alpha: float, beta: float) -> "SmoothFunction":
        """``alpha * self + beta * other``."""
        return SmoothFunction(
            value=lambda y: alpha * self(y) + beta * other(y),
            d1=lambda y: alpha * self.d1(y) + beta * other.d1(y),
            d2=lambda y: alpha * self.d2(y) + beta * other.d2(y),
            kinks=tuple(sorted(set(self.kinks) | set(other.kinks))),
            zero_below=self.zero_below and other.zero_below,
            name=f"{alpha}*{self.name}+{beta}*{other.name}",
        )


@dataclass(frozen=True)
class GeneratorQuadrature:
    model: ModelSpec
    rel_tol: float = 1e-9
    abs_tol: float = 1e-13
    tail_mass: float = 1e-12
    limit: int = 200

    def tail_cutoff(self, side: str) -> float:
        """Point beyond which the ``side`` jump density has mass below ``tail_mass``."""
        js = self.model.positive_jumps if side == "+" else self.model.negative_jumps
        if not js.active:
            return 0.0
        return js.density.tail_quantile(self.tail_mass)

    def _quad(self, f, lo: float, hi: float, points=None) -> float:
        if hi <= lo:
            return 0.0
        kwargs = dict(epsabs=self.abs_tol, epsrel=self.rel_tol, limit=self.limit, full_output=1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            if math.isinf(hi):
                res = integrate.quad(f, lo, hi, **kwargs)
            else:
                pts = sorted(p for p in (points or ()) if lo < p < hi)
                if pts:
                    # piecewise so each panel is smooth
                    edges = [lo, *pts, hi]
                    return sum(self._quad(f, a, b) for a, b in zip(edges, edges[1:]))
                res = integrate.quad(f, lo, hi, **kwargs)
        if len(res) > 3:
            value, err = res[0], res[1]
            if err > max(self.abs_tol, self.rel_tol * abs(value)) * 1e3:
                raise QuadratureError(
                    f"quadrature on [{lo:g}, {hi:g}] stopped at error {err:.3g} "
                    f"(value {value:.6g}): {res[3].splitlines()[0] if res[3] else ''}"
                )
        return res[0]


def _side_integral(q: GeneratorQuadrature, g: SmoothFunction, x: float, density: MixedExponentialDensity,
                   sign: int) -> float:
    gx = g(x)
    cutoff = density.tail_quantile(q.tail_mass)

    def integrand(y):
        p = float(density.pdf(y))
        # g may overflow where the density has already underflowed
        return 0.0 if p == 0.0 else (g(x + sign * y) - gx) * p

    kinks = [sign * (k - x) for k in g.kinks]
    if sign < 0 and g.zero_below:
        # g vanishes past y = x, leaving -g(x) times the survival function there
        body = q._quad(integrand, 0.0, x, kinks)
        return body - gx * float(density.survival(x))
    upper = max([cutoff] + [k for k in kinks if k > 0])
    body = q._quad(integrand, 0.0, upper, kinks)
    tail = q._quad(integrand, upper, math.inf)
    return body + tail


def apply_generator(q: GeneratorQuadrature, g: SmoothFunction, x: float) -> float:
    """``Gamma g(x)`` for ``x > 0``."""
    m = q.model
    out = 0.5 * m.sigma**2 * float(g.d2(x)) + m.drift * float(g.d1(x))
    if m.positive_jumps.active:
        out += m.positive_jumps.intensity * _side_integral(q, g, x, m.positive_jumps.density, +1)
    if m.negative_jumps.active:
        out += m.negative_jumps.intensity * _side_integral(q, g, x, m.negative_jumps.density, -1)
    return out


def discounted_generator(q: GeneratorQuadrature, g: SmoothFunction, x: float) -> float:
    """``(Gamma - delta) g(x)``."""
    return apply_generator(q, g, x) - q.model.discount * g(x)


# -- reports ---------------------------------------------------------------------------

@dataclass
class DiagnosticCheck:
    name: str
    grid: str
    residuals: list[float]
    max_residual: float
    tolerance: float
    passed: bool
    note: str = ""

    @classmethod
    def from_residuals(cls, name: str, grid: str, residuals, tolerance: float, note: str = "") -> "DiagnosticCheck":
        r = [float(v) for v in np.asarray(residuals, dtype=float).ravel()]
        worst = max(r) if r else -math.inf
        return cls(name, grid, r, worst, tolerance, bool(worst <= tolerance), note)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "max_residual": self.max_residual if math.isfinite(self.max_residual) else None,
            "tolerance": self.tolerance,
            "grid": self.grid,
            "note": self.note,
            "residuals": self.residuals,
        }


@dataclass
class DiagnosticsReport:
    checks: list[DiagnosticCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: DiagnosticCheck) -> DiagnosticCheck:
        self.checks.append(check)
        return check

    def extend(self, other: "DiagnosticsReport") -> None:
        self.checks.extend(other.checks)

    def __getitem__(self, name: str) -> DiagnosticCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def render(self) -> str:
        width = max((len(c.name) for c in self.checks), default=10)
        lines = [f"{'check':<{width}}  status  max residual  tolerance"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{c.name:<{width}}  {status:<6}  {c.max_residual:>12.3e}  {c.tolerance:.1e}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def _describe(grid: np.ndarray) -> str:
    if len(grid) == 0:
        return "empty grid"
    return f"{len(grid)} points on [{grid[0]:.6g}, {grid[-1]:.6g}]"


def check_scale_equation(q: GeneratorQuadrature, sf: ScaleFunction, grid: Sequence[float],
                         tol: float = 1e-6) -> DiagnosticCheck:
    """Relative residual ``|(Gamma - delta) h| / (delta h)`` on ``grid``."""
    g = SmoothFunction.of_scale(sf)
    grid = np.asarray(grid, dtype=float)
    res = [abs(discounted_generator(q, g, x)) / (q.model.discount * abs(g(x))) for x in grid]
    return DiagnosticCheck.from_residuals("scale_equation", _describe(grid), res, tol)


def check_hjb(q: GeneratorQuadrature, vbf: BarrierValueFunction, grid: Sequence[float],
              tol: float = 1e-6, exclusion: float = 1e-6) -> DiagnosticsReport:
    """HJB conditions for the barrier value function.

    * ``|(Gamma - delta) V_b| <= tol`` on ``(0, b)``;
    * ``(Gamma - delta) V_b <= tol`` above ``b``;
    * ``1 - V_b' <= tol`` on ``[0, b]`` (gradient at least one).

    A barrier placed above the optimum fails the gradient check, one placed
    below fails the check above the barrier.
    """
    grid = np.asarray(grid, dtype=float)
    grid = grid[(grid > 0) & (np.abs(grid - vbf.b) > exclusion)]
    g = SmoothFunction.of_value(vbf)
    below, above = grid[grid < vbf.b], grid[grid > vbf.b]
    report = DiagnosticsReport()
    report.add(DiagnosticCheck.from_residuals(
        "hjb_below_barrier", _describe(below),
        [abs(discounted_generator(q, g, x)) for x in below], tol,
        note="|(Gamma-delta)V_b| on (0,b)",
    ))
    report.add(DiagnosticCheck.from_residuals(
        "hjb_above_barrier", _describe(above),
        [discounted_generator(q, g, x) for x in above], tol,
        note="(Gamma-delta)V_b on (b,inf)",
    ))
    grad_grid = np.concatenate([[0.0], below])
    report.add(DiagnosticCheck.from_residuals(
        "gradient_at_least_one", _describe(grad_grid),
        1.0 - value_gradient(vbf, grad_grid), tol,
        note="1 - V_b' on [0,b]",
    ))
    return report


def _second_differences(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    # slope increments scaled to the raw second difference on uniform grids
    slopes = np.diff(v) / np.diff(x)
    return np.diff(slopes) * 0.5 * (x[2:] - x[:-2])


def check_convexity(x: Sequence[float], values, mode: str, tol: float = 1e-9,
                    name: str | None = None) -> DiagnosticCheck:
    """Shape test on sampled values.

    ``mode`` is ``convex``, ``concave``, ``decreasing`` or
    ``completely-monotone-sample``.  For the last one ``values`` is a stack
    ``[f, f', f'', ...]`` of exact derivatives on ``x`` and the check is
    ``(-1)^k f^(k) >= -tol``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) < 3:
        raise ValueError("shape checks need at least 3 grid points")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing")
    if mode == "convex":
        res = -_second_differences(x, v)
    elif mode == "concave":
        res = _second_differences(x, v)
    elif mode == "decreasing":
        res = np.diff(v)
    elif mode == "completely-monotone-sample":
        if v.ndim != 2 or v.shape[1] != len(x):
            raise ValueError("completely-monotone mode needs a (k, len(x)) derivative stack")
        signs = (-1.0) ** np.arange(v.shape[0])
        res = -(signs[:, None] * v)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return DiagnosticCheck.from_residuals(name or mode, _describe(x), res, tol, note=mode)


def check_logconvexity(density: MixedExponentialDensity, grid: Sequence[float] | None = None,
                       tol: float = 1e-9) -> DiagnosticCheck:
    """``(log f)'' = (f f'' - f'^2) / f^2 >= -tol`` from closed-form derivatives."""
    if grid is None:
        grid = np.linspace(0.0, density.tail_quantile(1e-12), 400)
    grid = np.asarray(grid, dtype=float)
    f = density.pdf(grid)
    f1 = density.pdf_derivative(grid, 1)
    f2 = density.pdf_derivative(grid, 2)
    curvature = (f * f2 - f1**2) / f**2
    return DiagnosticCheck.from_residuals("log_convexity", _describe(grid), -curvature, tol,
                                          note="(log f)'' >= 0")


def check_logconvexity_samples(x: Sequence[float], samples, tol: float = 1e-9) -> DiagnosticCheck:
    """Log-convexity of sampled positive values via second differences of ``log``."""
    x = np.asarray(x, dtype=float)
    logs = np.log(np.asarray(samples, dtype=float))
    return DiagnosticCheck.from_residuals("log_convexity_samples", _describe(x),
                                          -_second_differences(x, logs), tol)
