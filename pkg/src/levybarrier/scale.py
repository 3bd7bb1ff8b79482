"""Lundberg root, tilted ruin expansion and the generalized scale function.

For mixed-exponential downward jumps the tilted exponent
``kappa(eta) = Psi(eta + rho) - delta`` is a rational function in ``eta`` plus
a quadratic, with poles at ``-(r_k + rho)``.  Its roots on the negative axis
interlace with those poles, so every root sits in a known bracket and is
found deterministically.  The ruin probability of the tilted process is then
``sum_j A_j exp(-R_j x)`` and ``h(x) = (1 - psi_tilde(x)) exp(rho x)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import (
    DomainError,
    ModelSpec,
    esscher_tilt,
    laplace_exponent,
    laplace_exponent_derivative,
    lundberg_check,
    tilted_exponent,
    tilted_exponent_derivative,
)

logger = logging.getLogger(__name__)

MAX_DOUBLINGS = 60


class SolverError(RuntimeError):
    """Root bracketing failed or a structural invariant of the expansion broke."""


def _safeguarded_root(
    f: Callable[[float], float],
    df: Callable[[float], float],
    lo: float,
    hi: float,
    lo_positive: bool,
    max_iter: int = 200,
) -> float:
    """Newton iteration kept inside a shrinking sign-change bracket.

    ``lo_positive`` states the sign of ``f`` at the left end; the endpoints
    themselves are never evaluated (they may be poles).
    """
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx > 0) == lo_positive:
            lo = x
        else:
            hi = x
        dfx = df(x)
        step_ok = False
        if dfx != 0 and math.isfinite(dfx):
            cand = x - fx / dfx
            if lo < cand < hi:
                # Newton must land strictly inside the bracket and shrink it fast enough
                step_ok = abs(cand - x) < 0.5 * (hi - lo)
        x_new = cand if step_ok else 0.5 * (lo + hi)
        tol = 4 * np.finfo(float).eps * max(1.0, abs(x_new))
        if abs(x_new - x) <= tol or hi - lo <= tol:
            return x_new
        x = x_new
    return x


# -- Lundberg root ------------------------------------------------------------------

def root_rho(model: ModelSpec) -> float:
    """Unique ``rho`` in ``(0, Theta)`` with ``Psi(rho) = delta``."""
    report = lundberg_check(model)
    if not report.ok:
        raise SolverError(f"no Lundberg root guaranteed: {report.explain()}")
    delta = model.discount
    theta = model.theta_max
    if math.isinf(theta):
        hi = 1.0
        for _ in range(4 * MAX_DOUBLINGS):
            if laplace_exponent(model, hi) > delta:
                break
            hi *= 2.0
        else:
            raise SolverError(f"Psi stays below delta={delta} on (0, {hi}]")
    else:
        gap = 0.5 * theta
        for _ in range(1100):
            hi = theta - gap
            if hi >= theta:
                raise SolverError(f"Psi stays below delta={delta} up to Theta={theta}")
            if laplace_exponent(model, hi) > delta:
                break
            gap *= 0.5
    return _safeguarded_root(
        lambda t: laplace_exponent(model, t) - delta,
        lambda t: laplace_exponent_derivative(model, t),
        0.0,
        hi,
        lo_positive=False,
    )


# -- negative roots ------------------------------------------------------------------

def _negative_roots(
    f: Callable[[float], float],
    df: Callable[[float], float],
    poles: np.ndarray,
    has_far_root: bool,
) -> np.ndarray:
    """Roots ``-R`` of ``f`` on the negative axis, returned as positive ``R``.

    ``f`` vanishes at 0 with positive slope and has simple poles at
    ``-poles`` (ascending) where it jumps from ``-inf`` (left) to ``+inf``
    (right).  One root lies left of each pole's right neighbour; the last
    one, past the deepest pole, only when ``f -> +inf`` at ``-inf``.
    """

    def far_left(right: float) -> float:
        left = -(2 * abs(right) + 1)
        for _ in range(MAX_DOUBLINGS):
            if f(left) > 0:
                return left
            left *= 2.0
        raise SolverError(f"no sign change for the last root on ({left}, {right})")

    roots = []
    if len(poles) == 0 and not has_far_root:
        return np.asarray(roots)
    # first bracket: f is convex there, so split at its minimiser
    lo = -poles[0] if len(poles) else far_left(0.0)
    a, b = lo, 0.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if df(mid) > 0:
            b = mid
        else:
            a = mid
        if b - a <= 1e-15 * abs(lo):
            break
    if not f(b) < 0:
        raise SolverError(f"no sign change in ({lo}, 0): minimum of the exponent is {f(b)!r}")
    roots.append(-_safeguarded_root(f, df, lo, b, lo_positive=True))
    if len(poles) == 0:
        return np.asarray(roots)

    for k in range(1, len(poles)):
        roots.append(-_safeguarded_root(f, df, -poles[k], -poles[k - 1], lo_positive=True))

    if has_far_root:
        right = -poles[-1]
        roots.append(-_safeguarded_root(f, df, far_left(right), right, lo_positive=True))
    return np.asarray(roots)


def _expansion_coefficients(roots: np.ndarray, rates: np.ndarray) -> np.ndarray:
    coeffs = np.empty_like(roots)
    for j, rj in enumerate(roots):
        num = np.prod(1.0 - rj / rates)
        others = np.delete(roots, j)
        den = np.prod(1.0 - rj / others)
        coeffs[j] = num / den
    return coeffs


@dataclass(frozen=True)
class TiltedRuinExpansion:
    """``psi_tilde(x) = sum_j A_j exp(-R_j x)`` for the tilted process.

    ``tilted_rates`` are the downward-jump rates of the tilted process,
    ``r_k + rho``; the roots interlace with them.
    """

    rho: float
    roots: tuple[float, ...]
    coeffs: tuple[float, ...]
    tilted_rates: tuple[float, ...]

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.roots)

    @property
    def A(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    @property
    def sum_coeffs(self) -> float:
        return float(np.sum(self.coeffs))

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "roots": list(self.roots),
            "coeffs": list(self.coeffs),
            "sum_coeffs": self.sum_coeffs,
            "tilted_rates": list(self.tilted_rates),
        }


def _validate_expansion(exp: TiltedRuinExpansion, f: Callable, df: Callable) -> None:
    R, A, p = exp.R, exp.A, np.asarray(exp.tilted_rates)
    if np.any(R <= 0):
        raise SolverError(f"interlacing broken: non-positive root in {R}")
    if np.any(np.diff(R) <= 1e-12 * R[1:]):
        raise SolverError(f"repeated root detected in {R}; coefficient formula needs simple roots")
    for k, pk in enumerate(p):
        if not R[k] < pk:
            raise SolverError(f"interlacing broken: R_{k + 1}={R[k]} >= rate {pk}")
        if k + 1 < len(R) and not pk < R[k + 1]:
            raise SolverError(f"interlacing broken: rate {pk} >= R_{k + 2}={R[k + 1]}")
    if np.any(A <= 0):
        raise SolverError(f"coefficient positivity broken: A={A}")
    if exp.sum_coeffs > 1 + 1e-10:
        raise SolverError(f"sum of coefficients {exp.sum_coeffs} exceeds 1")
    for Rj in R:
        res, slope = f(-Rj), df(-Rj)
        if abs(res) > 1e-10 * (1 + abs(slope)):
            raise SolverError(f"root residual {res!r} at -R={-Rj} above tolerance")


def _creeps_down(model: ModelSpec) -> bool:
    # kappa -> +inf at -inf iff the quadratic or a negative linear term dominates
    return model.sigma > 0 or model.drift < 0


def _positive_weight_rates(model: ModelSpec) -> np.ndarray:
    d = model.negative_jumps.density
    return d.r[d.w > 0]


def _expand(f: Callable, df: Callable, rho: float, rates: np.ndarray, far: bool) -> TiltedRuinExpansion:
    roots = _negative_roots(f, df, rates, has_far_root=far)
    exp = TiltedRuinExpansion(
        rho=float(rho),
        roots=tuple(float(v) for v in roots),
        coeffs=tuple(float(v) for v in _expansion_coefficients(roots, rates)),
        tilted_rates=tuple(float(v) for v in rates),
    )
    _validate_expansion(exp, f, df)
    return exp


def solve_expansion(model: ModelSpec, rho: float | None = None) -> TiltedRuinExpansion:
    """Roots ``R_j`` and coefficients ``A_j`` of the tilted ruin probability.

    With a Gaussian part (or negative drift) there are ``n + 1`` roots and
    ``sum A_j = 1``; a bounded-variation model with positive drift has ``n``
    roots and ``sum A_j < 1``.
    """
    if not model.negative_jumps.active:
        raise DomainError("solve_expansion needs downward jumps (lambda_minus > 0)")
    if rho is None:
        rho = root_rho(model)
    exp = _expand(
        lambda e: tilted_exponent(model, rho, e, continuation=True),
        lambda e: tilted_exponent_derivative(model, rho, e, continuation=True),
        rho,
        _positive_weight_rates(model) + rho,
        _creeps_down(model),
    )
    logger.debug("expansion rho=%.6g roots=%s coeffs=%s", rho, exp.roots, exp.coeffs)
    return exp


def ruin_expansion(model: ModelSpec) -> TiltedRuinExpansion:
    """Ruin-probability expansion of the untilted process (no discounting).

    Same machinery with ``rho = 0``: ``psi(x) = sum_j A_j exp(-R_j x)``, and
    ``R_1`` is the adjustment coefficient.  Without downward jumps ruin can
    only happen by creeping and ``psi(x) = exp(-R_1 x)``.
    """
    report = lundberg_check(model)
    if not report.drift_positive:
        raise SolverError(report.explain())
    rates = _positive_weight_rates(model) if model.negative_jumps.active else np.empty(0)
    return _expand(
        lambda e: laplace_exponent(model, e, continuation=True),
        lambda e: laplace_exponent_derivative(model, e, continuation=True),
        0.0,
        rates,
        _creeps_down(model),
    )


def adjustment_coefficient(model: ModelSpec) -> float:
    """Positive ``gamma`` with ``Psi(-gamma) = 0``; ``inf`` if ruin is impossible."""
    exp = ruin_expansion(model)
    return exp.roots[0] if exp.roots else math.inf


def ruin_probability_tilted(expansion: TiltedRuinExpansion, x, order: int = 0):
    """``psi_tilde(x) = sum_j A_j exp(-R_j x)`` or its ``order``-th derivative."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"ruin probability needs x >= 0, got min x = {x.min()!r}")
    R, A = expansion.R, expansion.A
    out = np.sum(A * (-R) ** order * np.exp(-np.multiply.outer(x, R)), axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScaleFunction:
    """``h(x) = (1 - psi_tilde(x)) exp(rho x)`` on ``x >= 0`` (taken as zero below).

    Written as ``h(x) = exp(rho x) - sum_j A_j exp((rho - R_j) x)`` so every
    derivative is an exact exponential sum.
    """

    model: ModelSpec
    expansion: TiltedRuinExpansion

    @classmethod
    def from_model(cls, model: ModelSpec) -> "ScaleFunction":
        return cls(model, solve_expansion(model))

    @property
    def rho(self) -> float:
        return self.expansion.rho

    def __call__(self, x, order: int = 0):
        return scale_h(self, x, order)

    def h0(self) -> float:
        return 1.0 - self.expansion.sum_coeffs

    def hprime0(self) -> float:
        e = self.expansion
        return self.rho * self.h0() + float(np.sum(e.A * e.R))


def scale_h(sf: ScaleFunction, x, order: int = 0):
    """Closed-form ``h``, ``h'`` or ``h''`` (any ``order >= 0``) at ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"scale function is evaluated on x >= 0, got min x = {x.min()!r}")
    rho = sf.expansion.rho
    A, R = sf.expansion.A, sf.expansion.R
    lead = rho**order * np.exp(rho * x)
    exps = rho - R
    rest = np.sum(A * exps**order * np.exp(np.multiply.outer(x, exps)), axis=-1)
    out = lead - rest
    return float(out) if out.ndim == 0 else out


def scale_function(model: ModelSpec) -> ScaleFunction:
    return ScaleFunction.from_model(model)


def esscher_tilted_model(model: ModelSpec, rho: float | None = None) -> ModelSpec:
    """The tilted process whose ruin probability the expansion describes."""
    if rho is None:
        rho = root_rho(model)
    return esscher_tilt(model, rho)
