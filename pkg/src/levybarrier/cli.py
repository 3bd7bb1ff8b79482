"""Command-line front end: ``solve``, ``check``, ``simulate`` and ``dominance``.

Every command reads a model document, writes its artifacts into the output
directory and returns an exit status. JSON is written with a fixed key order
and shortest round-trip floats, so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .barrier import BarrierValueFunction, find_bstar, value_at, value_gradient
from .generator import QuadratureError
from .model import DomainError, ModelError, ModelSpec, load_model, lundberg_check, model_to_dict
from .scale import ScaleFunction, SolverError, scale_h, solve_expansion
from .simulate import (
    Barrier,
    NoDividends,
    SimulationError,
    Strategy,
    Threshold,
    default_rivals,
    dominance_experiment,
    simulate_blocks,
    simulate_value,
)
from .verify import DEFAULT_TOLERANCES, GridSpec, run_diagnostics

OUT_ENV = "LEVYBARRIER_OUT"
COMMANDS = ("solve", "check", "simulate", "dominance")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MonteCarloConfig:
    n_paths: int = 100_000
    horizon: float | None = None
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    model_path: Path
    command: str
    output_path: Path
    grid: GridSpec = field(default_factory=GridSpec)
    mc: MonteCarloConfig = field(default_factory=MonteCarloConfig)
    tolerances: dict = field(default_factory=dict)
    strategy: str = "barrier"
    x0: float | None = None
    dump_paths: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}, got {self.command!r}")
        if not Path(self.model_path).is_file():
            raise ConfigError(f"model file not found: {self.model_path}")
        if self.mc.n_paths < 2:
            raise ConfigError(f"--paths must be >= 2, got {self.mc.n_paths}")
        if self.mc.horizon is not None and self.mc.horizon <= 0:
            raise ConfigError(f"--horizon must be positive, got {self.mc.horizon}")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance {sorted(unknown)}; known: {sorted(DEFAULT_TOLERANCES)}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: insertion-ordered keys, shortest round-trip floats."""
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj))


def write_table(path: Path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def parse_grid(text: str) -> GridSpec:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"--grid expects xmin,xmax,n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"--grid expects xmin,xmax,n, got {text!r}") from None
    try:
        return GridSpec(lo, hi, n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_tolerance(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--tol expects name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise ConfigError(f"--tol {name}: not a number: {value!r}") from None


def parse_strategy(text: str, b_star: float, drift: float) -> Strategy:
    """``barrier``, ``barrier:B``, ``threshold``, ``threshold:B,RATE`` or ``none``."""
    kind, _, args = text.partition(":")
    try:
        vals = [float(v) for v in args.split(",")] if args else []
    except ValueError:
        raise ConfigError(f"--strategy {text!r}: arguments must be numbers") from None
    if kind == "none" and not vals:
        return NoDividends()
    if kind == "barrier" and len(vals) <= 1:
        return Barrier(vals[0] if vals else b_star)
    if kind == "threshold" and len(vals) in (0, 2):
        return Threshold(*vals) if vals else Threshold(b_star, drift / 2)
    raise ConfigError(f"--strategy {text!r}: expected barrier[:B], threshold[:B,RATE] or none")


def _prepare(config: RunConfig) -> tuple[ModelSpec, ScaleFunction]:
    model = load_model(config.model_path)
    report = lundberg_check(model)
    if not report.ok:
        raise ConfigError(report.explain())
    return model, ScaleFunction(model, solve_expansion(model))


def _solve(config: RunConfig, out: Path) -> int:
    model, sf = _prepare(config)
    opt = find_bstar(sf)
    vbf = BarrierValueFunction.at(sf, opt.b_star)
    exp = sf.expansion
    doc = {"model": model_to_dict(model)}
    doc.update(exp.to_dict())
    doc.update({
        "b_star": opt.b_star,
        "hprime_min": opt.hprime_min,
        "value_at_b_star": vbf.value_at_barrier,
        "search": opt.search_grid,
    })
    write_json(out / "solve.json", doc)
    xs = config.grid.points(opt.b_star)
    write_table(out / "scale.csv", ["x", "h", "h1", "h2"], [xs] + [scale_h(sf, xs, k) for k in range(3)])
    write_table(out / "value.csv", ["x", "V", "V1"], [xs, value_at(vbf, xs), value_gradient(vbf, xs)])
    print(f"rho={exp.rho:.12g} roots={len(exp.roots)} b_star={opt.b_star:.12g} "
          f"V(b_star)={vbf.value_at_barrier:.12g}")
    return EXIT_OK


def _check(config: RunConfig, out: Path) -> int:
    model, _ = _prepare(config)
    diag = run_diagnostics(model, config.grid, config.tolerances)
    doc = {"b_star": diag.barrier.b_star, "tolerances": {**DEFAULT_TOLERANCES, **config.tolerances}}
    doc.update(diag.report.to_dict())
    write_json(out / "diagnostics.json", doc)
    print(diag.report.render())
    return EXIT_OK if diag.report.passed else EXIT_FAILED


def _simulate(config: RunConfig, out: Path) -> int:
    model, sf = _prepare(config)
    b_star = find_bstar(sf).b_star
    strategy = parse_strategy(config.strategy, b_star, model.drift)
    x0 = b_star if config.x0 is None else config.x0
    mc = config.mc
    est = simulate_value(model, strategy, x0, mc.n_paths, mc.horizon, mc.seed)
    doc = {"x0": x0, "b_star": b_star}
    doc.update(est.to_dict())
    if isinstance(strategy, Barrier):
        doc["analytic"] = value_at(BarrierValueFunction.at(sf, strategy.b), x0)
    write_json(out / "simulate.json", doc)
    if config.dump_paths:
        blocks = list(simulate_blocks(model, strategy, x0, mc.n_paths, est.horizon, mc.seed))
        write_table(out / "paths.csv", ["discounted_dividends", "ruin_time", "terminal_surplus"],
                    [np.concatenate([getattr(b, k) for b in blocks])
                     for k in ("discounted_dividends", "ruin_time", "terminal_surplus")])
    lo, hi = est.ci95
    print(f"{est.strategy}: mean={est.mean:.10g} se={est.std_error:.3g} ci95=[{lo:.10g}, {hi:.10g}]")
    return EXIT_OK


def _dominance(config: RunConfig, out: Path) -> int:
    model, sf = _prepare(config)
    b_star = find_bstar(sf).b_star
    x0 = b_star if config.x0 is None else config.x0
    mc = config.mc
    res = dominance_experiment(model, x0, b_star, default_rivals(b_star, model.drift),
                               mc.n_paths, mc.seed, mc.horizon)
    doc = {"x0": x0, "b_star": b_star}
    doc.update(res.to_dict())
    write_json(out / "dominance.json", doc)
    for row in res.rows:
        print(f"{row.strategy:<40} diff={row.diff_mean:+.6g} z={row.z:+.2f}")
    print(f"overall: {'PASS' if res.passed else 'FAIL'}")
    return EXIT_OK if res.passed else EXIT_FAILED


_HANDLERS = {"solve": _solve, "check": _check, "simulate": _simulate, "dominance": _dominance}


def run(config: RunConfig) -> int:
    out = Path(config.output_path)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return _HANDLERS[config.command](config, out)
    except (ModelError, ConfigError, DomainError, SimulationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, QuadratureError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levybarrier", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="model JSON document")
    common.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or .)")
    common.add_argument("--grid", default=None, help="xmin,xmax,n for tables and checks (default 0.01,3b*+5,200)")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help=f"override a check tolerance; names: {', '.join(DEFAULT_TOLERANCES)}")
    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--paths", type=int, default=100_000)
    mc.add_argument("--horizon", type=float, default=None, help="default: ln(1e4)/discount")
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--x0", type=float, default=None, help="initial surplus (default b*)")
    sub.add_parser("solve", parents=[common], help="roots, coefficients, b* and value tables")
    sub.add_parser("check", parents=[common], help="full diagnostic run; nonzero exit on any failure")
    sim = sub.add_parser("simulate", parents=[common, mc], help="Monte Carlo value of one strategy")
    sim.add_argument("--strategy", default="barrier", help="barrier[:B] | threshold[:B,RATE] | none")
    sim.add_argument("--dump-paths", action="store_true", help="also write per-path paths.csv")
    sub.add_parser("dominance", parents=[common, mc], help="barrier b* against rival strategies")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    out = ns.out or os.environ.get(OUT_ENV) or "."
    tolerances = dict(parse_tolerance(t) for t in ns.tol)
    return RunConfig(
        model_path=Path(ns.model),
        command=ns.command,
        output_path=Path(out),
        grid=parse_grid(ns.grid) if ns.grid else GridSpec(),
        mc=MonteCarloConfig(getattr(ns, "paths", 100_000), getattr(ns, "horizon", None), getattr(ns, "seed", 0)),
        tolerances=tolerances,
        strategy=getattr(ns, "strategy", "barrier"),
        x0=getattr(ns, "x0", None),
        dump_paths=getattr(ns, "dump_paths", False),
    )


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        config = config_from_args(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
