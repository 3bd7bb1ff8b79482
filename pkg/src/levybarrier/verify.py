"""Full diagnostic run for one model: solver invariants, generator identities,
HJB inequalities and shape properties of the ruin probability, ``h`` and ``V``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .barrier import BarrierValueFunction, OptimalBarrier, find_bstar, value_at, value_gradient
from .generator import (
    DiagnosticCheck,
    DiagnosticsReport,
    GeneratorQuadrature,
    check_convexity,
    check_hjb,
    check_logconvexity,
    check_scale_equation,
)
from .model import ModelSpec, lundberg_check, tilted_exponent, tilted_exponent_derivative
from .scale import ScaleFunction, ruin_probability_tilted, scale_h, solve_expansion

DEFAULT_TOLERANCES = {
    "root_residual": 1e-10,
    "scale_equation": 1e-6,
    "hjb": 1e-6,
    "gradient": 1e-9,
    "convexity": 1e-9,
    "logconvexity": 1e-9,
}


@dataclass(frozen=True)
class GridSpec:
    x_min: float = 0.01
    x_max: float | None = None  # default 3 b* + 5
    n_points: int = 200

    def __post_init__(self):
        if self.x_min < 0:
            raise ValueError(f"grid x_min must be >= 0, got {self.x_min}")
        if self.n_points < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.n_points}")
        if self.x_max is not None and self.x_max <= self.x_min:
            raise ValueError(f"grid x_max={self.x_max} must exceed x_min={self.x_min}")

    def upper(self, b_star: float) -> float:
        return self.x_max if self.x_max is not None else 3.0 * b_star + 5.0

    def points(self, b_star: float) -> np.ndarray:
        return np.linspace(self.x_min, self.upper(b_star), self.n_points)


@dataclass
class Diagnostics:
    """Report plus the solved objects (``None`` when the Lundberg check fails)."""

    report: DiagnosticsReport = field(default_factory=DiagnosticsReport)
    sf: ScaleFunction | None = None
    barrier: OptimalBarrier | None = None
    value: BarrierValueFunction | None = None


def _root_check(model: ModelSpec, sf: ScaleFunction, tol: float) -> DiagnosticCheck:
    exp = sf.expansion
    res = [
        abs(tilted_exponent(model, exp.rho, -R, continuation=True))
        / (1 + abs(tilted_exponent_derivative(model, exp.rho, -R, continuation=True)))
        for R in exp.roots
    ]
    return DiagnosticCheck.from_residuals("root_residual", f"{len(exp.roots)} roots", res, tol,
                                          note="|kappa(-R_j)| / (1 + |kappa'(-R_j)|)")


def verification_conditions(hjb: DiagnosticsReport, concavity: DiagnosticCheck) -> DiagnosticCheck:
    """Optimality conditions for ``V_{b*}`` folded into one check.

    The residual is the worst excess of any component over its own tolerance.
    """
    parts = list(hjb.checks) + [concavity]
    excess = [c.max_residual - c.tolerance for c in parts if np.isfinite(c.max_residual)]
    return DiagnosticCheck.from_residuals(
        "verification_conditions", "union of hjb and concavity grids", excess, 0.0,
        note="(Gamma-delta)V<=0, V concave, V'>=1",
    )


def run_diagnostics(model: ModelSpec, grid: GridSpec = GridSpec(),
                    tolerances: Mapping[str, float] | None = None,
                    quad: GeneratorQuadrature | None = None) -> Diagnostics:
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    unknown = set(tol) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ValueError(f"unknown tolerance names {sorted(unknown)}; known: {sorted(DEFAULT_TOLERANCES)}")

    report = DiagnosticsReport()
    lund = lundberg_check(model)
    report.add(DiagnosticCheck.from_residuals("lundberg_condition", "model", [0.0 if lund.ok else 1.0], 0.0,
                                              note=lund.explain()))
    if not lund.ok:
        # nothing downstream is defined without the Lundberg root
        return Diagnostics(report)
    sf = ScaleFunction(model, solve_expansion(model))
    opt = find_bstar(sf)
    vbf = BarrierValueFunction.at(sf, opt.b_star)
    q = quad or GeneratorQuadrature(model)
    b = opt.b_star
    xs = grid.points(b)
    x_hi = grid.upper(b)

    report.add(_root_check(model, sf, tol["root_residual"]))
    report.add(check_scale_equation(q, sf, xs, tol["scale_equation"]))

    below = np.linspace(grid.x_min, b, grid.n_points) if b > grid.x_min else np.empty(0)
    above = np.linspace(b, x_hi, grid.n_points + 1)[1:]
    hjb = check_hjb(q, vbf, np.concatenate([below, above]), tol["hjb"])
    report.extend(hjb)

    ctol = tol["convexity"]
    full = np.linspace(0.0, x_hi, grid.n_points)
    exp = sf.expansion
    psi = ruin_probability_tilted(exp, full)
    report.add(check_convexity(full, psi, "decreasing", ctol, name="tilted_ruin_decreasing"))
    report.add(check_convexity(full, psi, "convex", ctol, name="tilted_ruin_convex"))
    derivs = np.vstack([ruin_probability_tilted(exp, full, k) for k in range(5)])
    report.add(check_convexity(full, derivs, "completely-monotone-sample", ctol,
                               name="tilted_ruin_completely_monotone"))
    report.add(check_convexity(full, scale_h(sf, full, 1), "convex", ctol, name="hprime_convex"))
    tail = np.linspace(b, x_hi, grid.n_points)
    report.add(check_convexity(tail, scale_h(sf, tail), "convex", ctol, name="h_convex_beyond_bstar"))
    report.add(check_convexity(tail, scale_h(sf, tail, 1), "convex", ctol, name="hprime_convex_beyond_bstar"))
    concave = check_convexity(full, value_at(vbf, full), "concave", ctol, name="value_concave")
    report.add(concave)
    grad = value_gradient(vbf, full)
    report.add(DiagnosticCheck.from_residuals("value_gradient_at_least_one", f"{len(full)} points on [0, {x_hi:.6g}]",
                                              1.0 - grad, tol["gradient"]))
    report.add(check_logconvexity(model.negative_jumps.density, tol=tol["logconvexity"]))
    report.add(verification_conditions(hjb, concave))
    return Diagnostics(report, sf, opt, vbf)
