"""Monte Carlo for discounted dividends and ruin under simple strategies.

Paths are simulated in fixed-size blocks.  Block ``k`` draws from a Philox
stream keyed by ``(seed, k)``, and every event step draws full-width arrays
for the whole block whatever the strategy.  So two strategies run with the
same seed see identical jump times and sizes (common random numbers), and
estimates do not depend on how blocks are scheduled.

Without a Gaussian part paths are simulated event by event: exponential
inter-arrival times, deterministic drift in between with the barrier or
threshold applied analytically.  With ``sigma > 0`` an Euler scheme is used;
a Brownian-bridge test catches ruin between grid points, so a path started
at 0 is ruined at once, as it is in continuous time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numpy as np

from .model import ModelSpec, lundberg_check
from .scale import SolverError, adjustment_coefficient

logger = logging.getLogger(__name__)

BLOCK_SIZE = 32_768
BIAS_TARGET = 1e-4


class SimulationError(ValueError):
    """Invalid simulation request."""


@dataclass(frozen=True)
class Barrier:
    b: float

    def __post_init__(self):
        if not self.b >= 0:
            raise SimulationError(f"barrier level must be >= 0, got {self.b}")

    def label(self) -> str:
        return f"barrier(b={self.b:.6g})"


@dataclass(frozen=True)
class Threshold:
    """Pay at ``rate`` while the surplus is above ``b``."""

    b: float
    rate: float

    def __post_init__(self):
        if not self.b >= 0 or not self.rate >= 0:
            raise SimulationError(f"threshold needs b >= 0 and rate >= 0, got {self.b}, {self.rate}")

    def label(self) -> str:
        return f"threshold(b={self.b:.6g}, rate={self.rate:.6g})"


@dataclass(frozen=True)
class NoDividends:
    def label(self) -> str:
        return "no-dividends"


Strategy = Union[Barrier, Threshold, NoDividends]


@dataclass(frozen=True)
class SimulationEstimate:
    mean: float
    std_error: float
    n_paths: int
    horizon: float
    seed: int
    bias_bound: float
    ruin_fraction: float
    method: str
    strategy: str = ""

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.mean - 1.96 * self.std_error, self.mean + 1.96 * self.std_error)

    def to_dict(self) -> dict:
        lo, hi = self.ci95
        return {
            "strategy": self.strategy,
            "mean": self.mean,
            "se": self.std_error,
            "ci95": [lo, hi],
            "n": self.n_paths,
            "horizon": self.horizon,
            "seed": self.seed,
            "bias_bound": self.bias_bound,
            "ruin_fraction": self.ruin_fraction,
            "method": self.method,
        }


@dataclass
class PathBlock:
    """Per-path outcome arrays for one block.

    ``ruin_time`` is ``inf`` for paths that survive the horizon.
    """

    discounted_dividends: np.ndarray
    ruin_time: np.ndarray
    terminal_surplus: np.ndarray

    @property
    def ruined(self) -> np.ndarray:
        return np.isfinite(self.ruin_time)


@dataclass
class _Moments:
    """Sufficient statistics; merging is order-independent up to float rounding."""

    n: int = 0
    s1: float = 0.0
    s2: float = 0.0

    def add(self, values: np.ndarray) -> None:
        self.n += values.size
        self.s1 += float(values.sum())
        self.s2 += float(np.dot(values, values))

    @property
    def mean(self) -> float:
        return self.s1 / self.n

    @property
    def std_error(self) -> float:
        if self.n < 2:
            return 0.0
        var = max(self.s2 - self.s1**2 / self.n, 0.0) / (self.n - 1)
        return math.sqrt(var / self.n)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _block_sizes(n_paths: int) -> Iterator[tuple[int, int]]:
    k = 0
    done = 0
    while done < n_paths:
        size = min(BLOCK_SIZE, n_paths - done)
        yield k, size
        done += size
        k += 1


def income_rate_bound(model: ModelSpec) -> float:
    """Upper bound on the mean rate of upward movement, used in truncation bounds."""
    up = model.positive_jumps
    return max(model.drift, 0.0) + up.intensity * up.mean()


def default_horizon(model: ModelSpec, x0: float) -> float:
    """Horizon whose discount factor shrinks the leftover value below ``BIAS_TARGET``."""
    return math.log(1.0 / BIAS_TARGET) / model.discount


def truncation_bias_bound(model: ModelSpec, x0: float, horizon: float) -> float:
    """Upper bound on value earned after ``horizon``.

    Dividends after ``T`` are at most the surplus at ``T`` plus all later
    income, which gives ``e^{-dT} (x0 + c(T + 1/d) + s/sqrt(2d) + s sqrt(T))``
    with ``c`` the mean income rate and ``s`` the Gaussian scale.
    """
    d = model.discount
    c = income_rate_bound(model)
    s = model.sigma
    return math.exp(-d * horizon) * (x0 + c * (horizon + 1.0 / d) + s / math.sqrt(2 * d) + s * math.sqrt(horizon))


def _default_dt(model: ModelSpec) -> float:
    lam = model.total_intensity
    return min(1e-3, 0.01 / lam) if lam > 0 else 1e-3


class _JumpSampler:
    """Turns four uniform/exponential draws into a signed jump size."""

    def __init__(self, model: ModelSpec):
        up, down = model.positive_jumps, model.negative_jumps
        self.lam = model.total_intensity
        self.p_up = up.intensity / self.lam if self.lam > 0 else 0.0
        self.up = (np.cumsum(up.density.w), up.density.r) if up.active else None
        self.down = (np.cumsum(down.density.w), down.density.r) if down.active else None

    @staticmethod
    def _size(side, u_comp, e):
        cum, rates = side
        idx = np.minimum(np.searchsorted(cum, u_comp, side="right"), len(rates) - 1)
        return e / rates[idx]

    def sizes(self, u_side, u_comp, e) -> np.ndarray:
        out = np.zeros_like(e)
        if self.up is not None:
            up = u_side < self.p_up
            out = np.where(up, self._size(self.up, u_comp, e), out)
        if self.down is not None:
            dn = u_side >= self.p_up
            out = np.where(dn, -self._size(self.down, u_comp, e), out)
        return out


def _flow(strategy: Strategy, a: float, delta: float, t, U, dt, D, L):
    """Advance deterministic drift over ``dt``; returns new ``U`` and the
    (relative) time at which the surplus turned negative, ``inf`` if never."""
    ruin_at = np.full_like(U, np.inf)
    disc0 = np.exp(-delta * t)

    def pay(rate, s0, s1, mask):
        # rate paid continuously on [t + s0, t + s1]
        s0 = np.broadcast_to(s0, U.shape)
        s1 = np.broadcast_to(s1, U.shape)
        amount = rate * (np.exp(-delta * s0) - np.exp(-delta * s1)) / delta * disc0
        D[mask] += amount[mask]
        L[mask] += rate * (s1 - s0)[mask]

    if isinstance(strategy, NoDividends):
        U = U + a * dt
    elif isinstance(strategy, Barrier):
        b = strategy.b
        if a > 0:
            s = np.clip((b - U) / a, 0.0, None)
            hit = s < dt
            pay(a, s, dt, hit)
            U = np.minimum(U + a * dt, b)
        else:
            U = U + a * dt
    else:
        b, r = strategy.b, strategy.rate
        U_new = U.copy()
        lo = U < b
        hi = ~lo
        if a > 0:
            s = np.where(lo, (b - U) / a, 0.0)
            # below: climb at rate a, then run above the threshold from s
            reach = lo & (s < dt)
            U_new = np.where(lo & ~reach, U + a * dt, U_new)
            start = np.where(reach, s, 0.0)
            above = reach | hi
            u0 = np.where(reach, b, U)
            if a >= r:
                pay(r, start, dt, above)
                U_new = np.where(above, u0 + (a - r) * (dt - start), U_new)
            else:
                # above the threshold the surplus falls at r - a until it sits at b
                s2 = start + (u0 - b) / (r - a)
                falls = above & (s2 < dt)
                stays = above & ~falls
                pay(r, start, dt, stays)
                U_new = np.where(stays, u0 - (r - a) * (dt - start), U_new)
                pay(r, start, s2, falls)
                pay(a, s2, dt, falls)
                U_new = np.where(falls, b, U_new)
        else:
            U_new = np.where(lo, U + a * dt, U_new)
            # above: pay r while falling at r - a > 0 towards b, then drift at a below b
            s2 = np.where(hi, (U - b) / (r - a) if r - a > 0 else np.inf, 0.0)
            stays = hi & (s2 >= dt)
            crosses = hi & ~stays
            pay(r, 0.0, dt, stays)
            U_new = np.where(stays, U - (r - a) * dt, U_new)
            s2c = np.where(crosses, s2, 0.0)
            pay(r, 0.0, s2c, crosses)
            U_new = np.where(crosses, b + a * (dt - s2c), U_new)
        U = U_new
    if a < 0:
        neg = U < 0
        # drift is the only motion, so the crossing time follows from the linear path
        ruin_at = np.where(neg, dt + U / (-a), ruin_at)
    return U, ruin_at


def _simulate_block_event(model: ModelSpec, strategy: Strategy, x0: float, n: int, horizon: float,
                          rng: np.random.Generator, check_admissible: bool) -> PathBlock:
    a, delta = model.drift, model.discount
    sampler = _JumpSampler(model)
    t = np.zeros(n)
    U = np.full(n, float(x0))
    D = np.zeros(n)
    L = np.zeros(n)
    X = np.full(n, float(x0))
    ruin_time = np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    if isinstance(strategy, Barrier) and x0 > strategy.b:
        D += x0 - strategy.b
        L += x0 - strategy.b
        U[:] = strategy.b

    while True:
        active = alive & (t < horizon)
        if not active.any():
            break
        if sampler.lam > 0:
            wait = rng.standard_exponential(n) / sampler.lam
        else:
            wait = np.full(n, np.inf)
        u_side = rng.random(n)
        u_comp = rng.random(n)
        e = rng.standard_exponential(n)

        idx = np.flatnonzero(active)
        dt = np.minimum(wait[idx], horizon - t[idx])
        Dv, Lv = D[idx], L[idx]
        U_new, drift_ruin = _flow(strategy, a, delta, t[idx], U[idx], dt, Dv, Lv)
        D[idx], L[idx] = Dv, Lv
        X[idx] += a * dt
        ruined_by_drift = np.isfinite(drift_ruin)
        ruin_time[idx[ruined_by_drift]] = t[idx[ruined_by_drift]] + drift_ruin[ruined_by_drift]
        alive[idx[ruined_by_drift]] = False
        U[idx] = U_new
        t[idx] += wait[idx]

        jumpers = idx[~ruined_by_drift & (t[idx] <= horizon)]
        if jumpers.size:
            J = sampler.sizes(u_side[jumpers], u_comp[jumpers], e[jumpers])
            U[jumpers] += J
            X[jumpers] += J
            ruined = jumpers[U[jumpers] < 0]
            ruin_time[ruined] = t[ruined]
            alive[ruined] = False
            if isinstance(strategy, Barrier):
                over = jumpers[U[jumpers] > strategy.b]
                lump = U[over] - strategy.b
                D[over] += np.exp(-delta * t[over]) * lump
                L[over] += lump
                U[over] = strategy.b
        if check_admissible:
            ok = ~alive | (L <= X + 1e-9 * (1 + np.abs(X)))
            assert ok.all(), "cumulative dividends exceed the uncontrolled surplus"
            assert (U[alive] >= -1e-12).all()
    return PathBlock(D, ruin_time, U)


def _simulate_block_euler(model: ModelSpec, strategy: Strategy, x0: float, n: int, horizon: float,
                          rng: np.random.Generator, dt: float, check_admissible: bool) -> PathBlock:
    a, s, delta = model.drift, model.sigma, model.discount
    sampler = _JumpSampler(model)
    p_jump = -math.expm1(-sampler.lam * dt) if sampler.lam > 0 else 0.0
    n_steps = int(math.ceil(horizon / dt))
    U = np.full(n, float(x0))
    X = U.copy()
    D = np.zeros(n)
    L = np.zeros(n)
    ruin_time = np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    if isinstance(strategy, Barrier) and x0 > strategy.b:
        D += x0 - strategy.b
        L += x0 - strategy.b
        U[:] = strategy.b
    sqdt = math.sqrt(dt)
    for k in range(n_steps):
        t = k * dt
        z = rng.standard_normal(n)
        u_jump = rng.random(n)
        u_side = rng.random(n)
        u_comp = rng.random(n)
        e = rng.standard_exponential(n)
        u_bridge = rng.random(n)
        dX = a * dt + s * sqdt * z
        if s > 0:
            # Brownian-bridge test for a hidden crossing of 0 inside the step
            end = U + dX
            p_cross = np.exp(-2.0 * np.maximum(U, 0.0) * np.maximum(end, 0.0) / (s * s * dt))
            hidden = alive & (u_bridge < p_cross)
        else:
            hidden = np.zeros(n, dtype=bool)
        if p_jump > 0:
            jumps = u_jump < p_jump
            dX = dX + np.where(jumps, sampler.sizes(u_side, u_comp, e), 0.0)
        dX = np.where(alive, dX, 0.0)
        U_prev = U
        U = U + dX
        X = X + dX
        if isinstance(strategy, Barrier):
            over = alive & (U > strategy.b)
            # crossing time by linear interpolation inside the step
            frac = np.where(U_prev < strategy.b, (strategy.b - U_prev) / np.where(over, U - U_prev, 1.0), 0.0)
            tc = t + np.clip(frac, 0.0, 1.0) * dt
            lump = np.where(over, U - strategy.b, 0.0)
            D += np.exp(-delta * tc) * lump
            L += lump
            U = np.where(over, strategy.b, U)
        elif isinstance(strategy, Threshold):
            paying = alive & (U_prev > strategy.b)
            amt = np.where(paying, strategy.rate * dt, 0.0)
            D += math.exp(-delta * t) * amt
            L += amt
            U = U - amt
        ruined = alive & ((U < 0) | hidden)
        ruin_time[ruined] = t + dt
        alive &= ~ruined
        if check_admissible:
            ok = ~alive | (L <= X + 1e-9 * (1 + np.abs(X)))
            assert ok.all(), "cumulative dividends exceed the uncontrolled surplus"
        if not alive.any():
            break
    return PathBlock(D, ruin_time, U)


def _validate(model: ModelSpec, x0: float, n_paths: int, horizon: float | None) -> float:
    if not n_paths >= 1:
        raise SimulationError(f"n_paths must be >= 1, got {n_paths}")
    if not math.isfinite(x0):
        raise SimulationError(f"x0 must be finite, got {x0}")
    if horizon is None:
        horizon = default_horizon(model, x0)
    if not (horizon > 0 and math.isfinite(horizon)):
        raise SimulationError(f"horizon must be positive and finite, got {horizon}")
    return float(horizon)


def _pick_method(model: ModelSpec, method: str) -> str:
    if method == "auto":
        return "event" if model.sigma == 0 else "euler"
    if method == "event" and model.sigma > 0:
        raise SimulationError("event-exact simulation needs sigma = 0")
    if method not in ("event", "euler"):
        raise SimulationError(f"unknown method {method!r}")
    return method


def simulate_blocks(model: ModelSpec, strategy: Strategy, x0: float, n_paths: int, horizon: float | None = None,
                    seed: int = 0, method: str = "auto", dt: float | None = None,
                    check_admissible: bool = False) -> Iterator[PathBlock]:
    """Yield per-path results block by block (deterministic in ``seed``)."""
    horizon = _validate(model, x0, n_paths, horizon)
    method = _pick_method(model, method)
    if dt is None:
        dt = _default_dt(model)
    for k, size in _block_sizes(n_paths):
        if x0 < 0:
            # ruined at time 0, nothing is paid
            yield PathBlock(np.zeros(size), np.zeros(size), np.full(size, float(x0)))
            continue
        rng = _block_rng(seed, k)
        if method == "event":
            yield _simulate_block_event(model, strategy, x0, size, horizon, rng, check_admissible)
        else:
            yield _simulate_block_euler(model, strategy, x0, size, horizon, rng, dt, check_admissible)


def simulate_value(model: ModelSpec, strategy: Strategy, x0: float, n_paths: int, horizon: float | None = None,
                   seed: int = 0, method: str = "auto", dt: float | None = None,
                   check_admissible: bool = False) -> SimulationEstimate:
    """Monte Carlo estimate of expected discounted dividends until ruin."""
    horizon = _validate(model, x0, n_paths, horizon)
    stats = _Moments()
    ruined = 0
    for block in simulate_blocks(model, strategy, x0, n_paths, horizon, seed, method, dt, check_admissible):
        stats.add(block.discounted_dividends)
        ruined += int(block.ruined.sum())
    if isinstance(strategy, NoDividends) or x0 < 0:
        bias = 0.0
    else:
        bias = truncation_bias_bound(model, x0, horizon)
    return SimulationEstimate(
        mean=stats.mean,
        std_error=stats.std_error,
        n_paths=n_paths,
        horizon=horizon,
        seed=seed,
        bias_bound=bias,
        ruin_fraction=ruined / n_paths,
        method=_pick_method(model, method),
        strategy=strategy.label(),
    )


def simulate_ruin_probability(model: ModelSpec, x0: float, n_paths: int, horizon: float | None = None,
                              seed: int = 0, method: str = "auto", dt: float | None = None) -> SimulationEstimate:
    """Fraction of paths ruined before ``horizon`` (a lower estimate of ``psi(x0)``).

    ``bias_bound`` estimates the ruin probability left after the horizon by
    averaging the Lundberg bound ``exp(-gamma U_T)`` over surviving paths.
    """
    report = lundberg_check(model)
    if not report.drift_positive:
        raise SimulationError(report.explain())
    horizon = _validate(model, x0, n_paths, horizon)
    try:
        gamma = adjustment_coefficient(model)
    except SolverError:
        gamma = 0.0
    stats = _Moments()
    leftover = 0.0
    for block in simulate_blocks(model, NoDividends(), x0, n_paths, horizon, seed, method, dt):
        stats.add(block.ruined.astype(float))
        alive = ~block.ruined
        leftover += float(np.exp(-gamma * np.maximum(block.terminal_surplus[alive], 0.0)).sum()) if gamma > 0 else 0.0
    return SimulationEstimate(
        mean=stats.mean,
        std_error=stats.std_error,
        n_paths=n_paths,
        horizon=horizon,
        seed=seed,
        bias_bound=leftover / n_paths if math.isfinite(gamma) else 0.0,
        ruin_fraction=stats.mean,
        method=_pick_method(model, method),
        strategy="no-dividends",
    )


@dataclass
class DominanceRow:
    strategy: str
    mean: float
    std_error: float
    diff_mean: float
    diff_std_error: float

    @property
    def z(self) -> float:
        if self.diff_std_error == 0:
            return 0.0 if self.diff_mean == 0 else math.copysign(math.inf, self.diff_mean)
        return self.diff_mean / self.diff_std_error

    def exceeds(self, n_se: float) -> bool:
        return self.diff_mean > n_se * self.diff_std_error

    def to_dict(self, n_se: float) -> dict:
        return {
            "strategy": self.strategy,
            "mean": self.mean,
            "se": self.std_error,
            "diff_vs_optimal": self.diff_mean,
            "diff_se": self.diff_std_error,
            "z": self.z if math.isfinite(self.z) else None,
            "exceeds_optimal": self.exceeds(n_se),
        }


@dataclass
class DominanceResult:
    reference: str
    reference_mean: float
    reference_std_error: float
    rows: list[DominanceRow] = field(default_factory=list)
    n_paths: int = 0
    horizon: float = 0.0
    seed: int = 0
    n_se: float = 3.0

    @property
    def passed(self) -> bool:
        return not any(r.exceeds(self.n_se) for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "reference_mean": self.reference_mean,
            "reference_se": self.reference_std_error,
            "n": self.n_paths,
            "horizon": self.horizon,
            "seed": self.seed,
            "n_se": self.n_se,
            "passed": self.passed,
            "rivals": [r.to_dict(self.n_se) for r in self.rows],
        }


def default_rivals(b_star: float, drift: float) -> list[Strategy]:
    rivals: list[Strategy] = []
    for db in (-1.0, -0.5, 0.5, 1.0):
        if b_star + db >= 0:
            rivals.append(Barrier(b_star + db))
    rivals.append(Threshold(b_star, drift / 2))
    return rivals


def dominance_experiment(model: ModelSpec, x0: float, b_star: float, rivals: Sequence[Strategy],
                         n_paths: int, seed: int = 0, horizon: float | None = None, method: str = "auto",
                         dt: float | None = None, n_se: float = 3.0) -> DominanceResult:
    """Compare ``Barrier(b_star)`` with each rival on common random numbers.

    Passes when no rival beats the reference by more than ``n_se`` standard
    errors of the paired difference.
    """
    horizon = _validate(model, x0, n_paths, horizon)
    ref = Barrier(b_star)
    ref_stats = _Moments()
    rival_stats = [_Moments() for _ in rivals]
    diff_stats = [_Moments() for _ in rivals]
    ref_blocks = simulate_blocks(model, ref, x0, n_paths, horizon, seed, method, dt)
    rival_iters = [simulate_blocks(model, s, x0, n_paths, horizon, seed, method, dt) for s in rivals]
    for ref_block, *others in zip(ref_blocks, *rival_iters):
        base = ref_block.discounted_dividends
        ref_stats.add(base)
        for rs, ds, blk in zip(rival_stats, diff_stats, others):
            rs.add(blk.discounted_dividends)
            ds.add(blk.discounted_dividends - base)
    result = DominanceResult(ref.label(), ref_stats.mean, ref_stats.std_error,
                             n_paths=n_paths, horizon=horizon, seed=seed, n_se=n_se)
    for s, rs, ds in zip(rivals, rival_stats, diff_stats):
        result.rows.append(DominanceRow(s.label(), rs.mean, rs.std_error, ds.mean, ds.std_error))
    return result
