"""Two-sided compound-Poisson Levy risk model with mixed-exponential jumps.

The drift ``a`` stored on :class:`ModelSpec` is the *total* linear drift
(the premium rate).  Because both jump sides have finite activity and a
finite mean, the small-jump compensator of the Levy-Khintchine triplet is
folded into it, so

    Psi(theta) = a*theta + sigma^2 theta^2 / 2
                 + lam_plus  * (sum_j w_j r_j / (r_j - theta) - 1)
                 + lam_minus * (sum_j w_j r_j / (r_j + theta) - 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-12
WEIGHT_SUM_TOL_LOAD = 1e-9


class ModelError(ValueError):
    """Invalid model parameters or a malformed model document."""


class DomainError(ValueError):
    """Argument outside the admissible domain of an exponent or function."""


@dataclass(frozen=True)
class MixedExponentialDensity:
    """Density ``f(y) = sum_j w_j r_j exp(-r_j y)`` on ``y > 0``."""

    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self) -> None:
        w = tuple(float(v) for v in self.weights)
        r = tuple(float(v) for v in self.rates)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", r)
        if len(w) == 0:
            raise ModelError("mixed-exponential density needs at least one term")
        if len(w) != len(r):
            raise ModelError(f"weights ({len(w)}) and rates ({len(r)}) differ in length")
        if any(not math.isfinite(v) or v < 0 for v in w):
            raise ModelError(f"weights must be finite and non-negative, got {w}")
        if abs(sum(w) - 1.0) > WEIGHT_SUM_TOL:
            raise ModelError(f"weights must sum to 1, got sum={sum(w)!r}")
        if any(not math.isfinite(v) or v <= 0 for v in r):
            raise ModelError(f"rates must be finite and positive, got {r}")
        if any(r1 >= r2 for r1, r2 in zip(r, r[1:])):
            raise ModelError(f"rates must be strictly increasing, got {r}")

    @classmethod
    def exponential(cls, rate: float) -> "MixedExponentialDensity":
        return cls((1.0,), (rate,))

    @property
    def n_terms(self) -> int:
        return len(self.rates)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    @property
    def r(self) -> np.ndarray:
        return np.asarray(self.rates)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.sum(self.w * self.r * np.exp(-np.multiply.outer(y, self.r)), axis=-1)
        return np.where(y >= 0, out, 0.0)

    def pdf_derivative(self, y, order: int = 1):
        """Closed-form ``order``-th derivative of the density on ``y > 0``."""
        y = np.asarray(y, dtype=float)
        coef = self.w * self.r * (-self.r) ** order
        return np.sum(coef * np.exp(-np.multiply.outer(y, self.r)), axis=-1)

    def survival(self, y):
        y = np.asarray(y, dtype=float)
        out = np.sum(self.w * np.exp(-np.multiply.outer(np.maximum(y, 0.0), self.r)), axis=-1)
        return out

    def mean(self) -> float:
        return float(np.sum(self.w / self.r))

    def mgf_term(self, theta):
        """``sum_j w_j r_j / (r_j - theta)``, the moment generating function."""
        theta = np.asarray(theta, dtype=float)
        return np.sum(self.w * self.r / (self.r - theta[..., None]), axis=-1)

    def tail_quantile(self, mass: float = 1e-12) -> float:
        """Smallest ``c`` with ``survival(c) <= mass`` (bound via the slowest rate)."""
        return math.log(1.0 / mass) / self.rates[0]


@dataclass(frozen=True)
class JumpSide:
    """Arrival intensity plus size density for one direction of jumps."""

    intensity: float = 0.0
    density: MixedExponentialDensity | None = None

    def __post_init__(self) -> None:
        lam = float(self.intensity)
        object.__setattr__(self, "intensity", lam)
        if not math.isfinite(lam) or lam < 0:
            raise ModelError(f"jump intensity must be finite and >= 0, got {lam}")
        if lam == 0 and self.density is not None:
            raise ModelError("zero-intensity jump side must not carry a density")
        if lam > 0 and self.density is None:
            raise ModelError("positive-intensity jump side needs a density")

    @property
    def active(self) -> bool:
        return self.intensity > 0

    def mean(self) -> float:
        return self.density.mean() if self.density is not None else 0.0


NO_JUMPS = JumpSide()


@dataclass(frozen=True)
class ModelSpec:
    """Immutable risk model: total drift, Gaussian part, two jump sides, discount."""

    drift: float
    sigma: float
    discount: float
    negative_jumps: JumpSide = field(default=NO_JUMPS)
    positive_jumps: JumpSide = field(default=NO_JUMPS)

    def __post_init__(self) -> None:
        for name in ("drift", "sigma", "discount"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not math.isfinite(v):
                raise ModelError(f"{name} must be finite, got {v}")
        if self.sigma < 0:
            raise ModelError(f"sigma must be >= 0, got {self.sigma}")
        if self.discount <= 0:
            raise ModelError(f"discount must be > 0, got {self.discount}")
        if not (self.drift != 0 or self.sigma > 0 or self.negative_jumps.active
                or self.positive_jumps.active):
            raise ModelError("degenerate process: zero drift, no Gaussian part and no jumps")

    @property
    def theta_max(self) -> float:
        """Right end of the exponential-moment domain (``inf`` without upward jumps)."""
        if not self.positive_jumps.active:
            return math.inf
        return self.positive_jumps.density.rates[0]

    @property
    def theta_min(self) -> float:
        if not self.negative_jumps.active:
            return -math.inf
        return -self.negative_jumps.density.rates[0]

    @property
    def total_intensity(self) -> float:
        return self.negative_jumps.intensity + self.positive_jumps.intensity

    @property
    def spectrally_negative(self) -> bool:
        return not self.positive_jumps.active

    def with_discount(self, discount: float) -> "ModelSpec":
        return ModelSpec(self.drift, self.sigma, discount, self.negative_jumps, self.positive_jumps)


def _check_domain(model: ModelSpec, theta: np.ndarray) -> None:
    hi, lo = model.theta_max, model.theta_min
    if np.any(theta >= hi):
        raise DomainError(f"theta={theta.max()!r} violates theta < Theta={hi!r}")
    if np.any(theta <= lo):
        raise DomainError(
            f"theta={theta.min()!r} violates theta > -alpha_1={lo!r} (negative-jump integral diverges)"
        )


def laplace_exponent(model: ModelSpec, theta, continuation: bool = False):
    """Laplace exponent ``Psi(theta) = log E exp(theta X_1)``.

    Raises :class:`DomainError` outside ``(-alpha^-_1, Theta)`` unless
    ``continuation`` is set, in which case the rational closed form is
    evaluated anywhere off its poles (needed to locate roots beyond the
    first pole).  Accepts scalars or arrays; returns the same shape.
    """
    th = np.asarray(theta, dtype=float)
    if not continuation:
        _check_domain(model, th)
    out = model.drift * th + 0.5 * model.sigma**2 * th**2
    up, down = model.positive_jumps, model.negative_jumps
    if up.active:
        out = out + up.intensity * (up.density.mgf_term(th) - 1.0)
    if down.active:
        out = out + down.intensity * (down.density.mgf_term(-th) - 1.0)
    out = np.where(th == 0.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def laplace_exponent_derivative(model: ModelSpec, theta, order: int = 1, continuation: bool = False):
    """Closed-form ``order``-th derivative of ``Psi`` (``order`` in 1, 2, ...)."""
    th = np.asarray(theta, dtype=float)
    if not continuation:
        _check_domain(model, th)
    if order == 1:
        out = model.drift + model.sigma**2 * th
    elif order == 2:
        out = np.full_like(th, model.sigma**2)
    else:
        out = np.zeros_like(th)
    fact = math.factorial(order)
    up, down = model.positive_jumps, model.negative_jumps
    if up.active:
        w, r = up.density.w, up.density.r
        out = out + up.intensity * fact * np.sum(w * r / (r - th[..., None]) ** (order + 1), axis=-1)
    if down.active:
        w, r = down.density.w, down.density.r
        out = out + down.intensity * fact * (-1) ** order * np.sum(
            w * r / (r + th[..., None]) ** (order + 1), axis=-1
        )
    return float(out) if np.ndim(out) == 0 else out


def mean_drift(model: ModelSpec) -> float:
    """``Psi'(0+) = E X_1``."""
    return (model.drift + model.positive_jumps.intensity * model.positive_jumps.mean()
            - model.negative_jumps.intensity * model.negative_jumps.mean())


@dataclass(frozen=True)
class LundbergReport:
    theta: float
    limit_divergence: bool
    drift_positive: bool
    mean_drift: float

    @property
    def ok(self) -> bool:
        return self.theta > 0 and self.limit_divergence and self.drift_positive

    def explain(self) -> str:
        problems = []
        if not self.theta > 0:
            problems.append(f"Theta={self.theta} is not positive")
        if not self.limit_divergence:
            problems.append("Psi(theta) stays bounded as theta -> Theta")
        if not self.drift_positive:
            problems.append(
                f"drift condition fails: Psi'(0+) = {self.mean_drift:.6g} <= 0, "
                "so the surplus does not drift to +infinity"
            )
        return "; ".join(problems) or "Lundberg condition holds"


def lundberg_check(model: ModelSpec) -> LundbergReport:
    """Check ``Theta > 0``, ``Psi -> +inf`` at ``Theta`` and ``Psi'(0+) > 0``."""
    theta = model.theta_max
    if model.positive_jumps.active:
        # simple pole of the upward-jump mgf at Theta
        divergence = True
    else:
        divergence = model.sigma > 0 or model.drift > 0
    m = mean_drift(model)
    return LundbergReport(theta=theta, limit_divergence=divergence, drift_positive=m > 0, mean_drift=m)


def tilted_exponent(model: ModelSpec, rho: float, eta, continuation: bool = False):
    """``kappa(eta) = Psi(eta + rho) - delta``."""
    shifted = laplace_exponent(model, np.asarray(eta, dtype=float) + rho, continuation)
    return shifted - model.discount


def tilted_exponent_derivative(model: ModelSpec, rho: float, eta, order: int = 1,
                               continuation: bool = False):
    return laplace_exponent_derivative(model, np.asarray(eta, dtype=float) + rho, order, continuation)


def esscher_tilt(model: ModelSpec, rho: float) -> ModelSpec:
    """Model whose Laplace exponent is ``Psi(. + rho) - Psi(rho)``.

    Jumps stay mixed-exponential: downward rates become ``r + rho``, upward rates
    ``r - rho``, with intensities and weights reweighted by ``exp(rho y)``.
    When ``Psi(rho) = delta`` the result's exponent is ``kappa``.
    """
    if not model.theta_min < rho < model.theta_max:
        raise DomainError(f"tilt rho={rho!r} outside ({model.theta_min}, {model.theta_max})")

    def tilt(side: JumpSide, sign: int) -> JumpSide:
        if not side.active:
            return NO_JUMPS
        w, r = side.density.w, side.density.r
        new_r = r - sign * rho
        mass = w * r / new_r
        lam = side.intensity * float(mass.sum())
        weights = mass / mass.sum()
        return JumpSide(lam, MixedExponentialDensity(tuple(weights / weights.sum()), tuple(new_r)))

    return ModelSpec(
        drift=model.drift + model.sigma**2 * rho,
        sigma=model.sigma,
        discount=model.discount,
        negative_jumps=tilt(model.negative_jumps, -1),
        positive_jumps=tilt(model.positive_jumps, +1),
    )


# -- model documents -------------------------------------------------------------

def _side_from_dict(doc: Any, key: str) -> JumpSide:
    if doc is None:
        return NO_JUMPS
    if not isinstance(doc, Mapping):
        raise ModelError(f"{key}: expected an object, got {type(doc).__name__}")
    unknown = set(doc) - {"lambda", "weights", "rates"}
    if unknown:
        raise ModelError(f"{key}: unknown keys {sorted(unknown)}")
    try:
        lam = float(doc.get("lambda", 0.0))
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{key}.lambda: {exc}") from None
    if lam == 0:
        return NO_JUMPS
    for sub in ("weights", "rates"):
        if sub not in doc:
            raise ModelError(f"{key}.{sub}: missing (required when lambda > 0)")
        if not isinstance(doc[sub], Sequence) or isinstance(doc[sub], str):
            raise ModelError(f"{key}.{sub}: expected a list of numbers")
    weights = [float(v) for v in doc["weights"]]
    total = sum(weights)
    if abs(total - 1.0) > WEIGHT_SUM_TOL_LOAD:
        raise ModelError(f"{key}.weights: must sum to 1 +/- {WEIGHT_SUM_TOL_LOAD:g}, got {total!r}")
    weights = [v / total for v in weights]
    try:
        density = MixedExponentialDensity(tuple(weights), tuple(float(v) for v in doc["rates"]))
        return JumpSide(lam, density)
    except ModelError as exc:
        raise ModelError(f"{key}: {exc}") from None


def model_from_dict(doc: Mapping[str, Any]) -> ModelSpec:
    if not isinstance(doc, Mapping):
        raise ModelError("model document must be a JSON object")
    unknown = set(doc) - {"drift", "sigma", "discount", "neg_jumps", "pos_jumps", "name"}
    if unknown:
        raise ModelError(f"unknown keys {sorted(unknown)}")
    values = {}
    for key in ("drift", "sigma", "discount"):
        if key not in doc:
            raise ModelError(f"{key}: missing")
        try:
            values[key] = float(doc[key])
        except (TypeError, ValueError):
            raise ModelError(f"{key}: expected a number, got {doc[key]!r}") from None
    return ModelSpec(
        drift=values["drift"],
        sigma=values["sigma"],
        discount=values["discount"],
        negative_jumps=_side_from_dict(doc.get("neg_jumps"), "neg_jumps"),
        positive_jumps=_side_from_dict(doc.get("pos_jumps"), "pos_jumps"),
    )


def model_to_dict(model: ModelSpec) -> dict[str, Any]:
    def side(s: JumpSide) -> dict[str, Any]:
        if not s.active:
            return {"lambda": 0.0}
        return {"lambda": s.intensity, "weights": list(s.density.weights), "rates": list(s.density.rates)}

    return {
        "drift": model.drift,
        "sigma": model.sigma,
        "discount": model.discount,
        "neg_jumps": side(model.negative_jumps),
        "pos_jumps": side(model.positive_jumps),
    }


def load_model(path: str | Path) -> ModelSpec:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return model_from_dict(doc)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from None
