"""Command-line experiment harness.

Usage::

    hdescent run CONFIG.json [--output run.csv] [--seed N] [--eps E] [--steps K]
    hdescent compare A.json B.json ... --output table.csv [--seed N]

A config is one flat JSON object with ``"version": 1``. The summary of each
run goes to stdout as one JSON object; iteration logs go to CSV. Exit codes:
0 converged, 2 budget exhausted, 1 invalid configuration, 3 solver failure.
Set ``HD_LOG_LEVEL`` to ``quiet``, ``info`` or ``debug`` for diagnostics on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .hilbert import HVector, LinOp, norm
from .oracle import Oracle, least_squares_oracle, perturb
from .solvers import (
    RunLog,
    Status,
    StopRule,
    astm,
    gd,
    restart_half,
    rstm,
    stm,
)

__all__ = ["main", "RunConfig", "ConfigError", "load_config", "execute", "fit_exponent"]

logger = logging.getLogger("hdescent")

PROBLEMS = ("quadratic", "pde_inverse", "control_lq", "dual_min_norm")
PRIMAL_METHODS = (
    "stm", "astm", "gd", "gd_averaged", "gd_adaptive", "gd_line_search", "rstm", "restart_half",
)
DUAL_METHODS = ("stm", "astm", "gd_averaged")
KNOWN_FIELDS = {
    "version", "label", "problem", "method", "eps", "eps_tilde", "L", "mu", "mu0", "max_iter",
    "stop", "grid_n", "steps", "delta", "diameter", "seed", "output_path", "solution_path",
    "diag", "matrix", "f", "dim", "cond", "modes", "noise", "approach", "benchmark",
}
EXIT = {
    Status.CONVERGED: 0,
    Status.BUDGET_EXHAUSTED: 2,
    Status.LINE_SEARCH_FAILED: 3,
    Status.FAILED: 3,
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    problem: str
    method: str
    eps: float
    raw: Dict[str, Any]
    seed: int = 0
    max_iter: int = 100_000
    output_path: Optional[str] = None

    def get(self, key: str, default=None):
        return self.raw.get(key, default)

    def number(self, key: str, default=None, *, positive: bool = False, integer: bool = False):
        v = self.raw.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"field '{key}' must be a number")
        if integer and int(v) != v:
            raise ConfigError(f"field '{key}' must be an integer")
        if positive and not v > 0:
            raise ConfigError(f"field '{key}' must be positive")
        return int(v) if integer else float(v)

    def require(self, key: str, **kw):
        if key not in self.raw:
            raise ConfigError(f"missing required field '{key}' for problem '{self.problem}'")
        return self.number(key, **kw)


def load_config(data: Dict[str, Any], *, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Validate a config mapping; `overrides` replaces fields (CLI flags)."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = dict(data)
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    if data.get("version") != 1:
        raise ConfigError("field 'version' must be 1")
    unknown = sorted(set(data) - KNOWN_FIELDS)
    if unknown:
        raise ConfigError(f"unknown field '{unknown[0]}'")
    problem = data.get("problem")
    if problem not in PROBLEMS:
        raise ConfigError(f"field 'problem' must be one of {', '.join(PROBLEMS)}")
    method = data.get("method")
    allowed = DUAL_METHODS if _is_dual(problem, data) else PRIMAL_METHODS
    if method not in allowed:
        raise ConfigError(f"field 'method' must be one of {', '.join(allowed)} for this problem")
    if "eps" not in data:
        raise ConfigError("missing required field 'eps'")
    cfg = RunConfig(problem=problem, method=method, eps=0.0, raw=data)
    cfg.eps = cfg.number("eps", positive=True)
    cfg.seed = cfg.number("seed", 0, integer=True)
    cfg.max_iter = cfg.number("max_iter", 100_000, positive=True, integer=True)
    out = data.get("output_path")
    if out is not None and not isinstance(out, str):
        raise ConfigError("field 'output_path' must be a string")
    cfg.output_path = out
    if ("delta" in data) != ("diameter" in data):
        raise ConfigError("fields 'delta' and 'diameter' must be given together")
    return cfg


def _is_dual(problem: str, data: Dict[str, Any]) -> bool:
    return problem == "dual_min_norm" or (
        problem == "pde_inverse" and data.get("approach", "primal_least_squares") == "dual_min_norm"
    )


def _vector(cfg: RunConfig, key: str, weight: float = 1.0) -> HVector:
    v = cfg.get(key)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"field '{key}' must be a non-empty list of numbers")
    try:
        return HVector(np.asarray(v, dtype=float), weight)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{key}': {exc}") from None


def _matrix_operator(cfg: RunConfig) -> LinOp:
    if "diag" in cfg.raw:
        d = _vector(cfg, "diag").values
        return LinOp.diagonal(d)
    if "matrix" in cfg.raw:
        try:
            M = np.asarray(cfg.get("matrix"), dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("field 'matrix' must be a list of equal-length rows") from None
        if M.ndim != 2 or not np.all(np.isfinite(M)):
            raise ConfigError("field 'matrix' must be a finite 2-D array")
        return LinOp.from_matrix(M)
    if "dim" in cfg.raw:
        n = cfg.number("dim", positive=True, integer=True)
        cond = cfg.number("cond", 10.0, positive=True)
        rng = np.random.default_rng(cfg.seed)
        Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
        s = np.sqrt(np.geomspace(1.0, 1.0 / cond, n))
        return LinOp.from_matrix(Qm @ np.diag(s) @ Qm.T)
    raise ConfigError("quadratic problems need one of 'diag', 'matrix' or 'dim'")


def _rhs(cfg: RunConfig, A: LinOp) -> HVector:
    if "f" in cfg.raw:
        f = _vector(cfg, "f", A.weight_out)
    else:
        rng = np.random.default_rng(cfg.seed + 1)
        f = HVector(rng.standard_normal(A.dim_out), A.weight_out)
    if len(f) != A.dim_out:
        raise ConfigError(f"field 'f' has length {len(f)}, operator output dimension is {A.dim_out}")
    return f


def _pde_data(cfg: RunConfig):
    from . import pde_laplace as pde

    n = cfg.number("grid_n", 63, positive=True, integer=True)
    try:
        grid = pde.Grid(n)
    except ValueError as exc:
        raise ConfigError(f"field 'grid_n': {exc}") from None
    modes = cfg.get("modes", [[1, 1.0]])
    try:
        pairs = [(int(k), float(a)) for k, a in modes]
    except (TypeError, ValueError):
        raise ConfigError("field 'modes' must be a list of [k, amplitude] pairs") from None
    y = grid.y
    q_true = sum(a * np.sin(k * np.pi * y) for k, a in pairs)
    f = sum(a * np.sin(k * np.pi * y) / np.cosh(k * np.pi) for k, a in pairs)
    noise = cfg.number("noise", 0.0)
    if noise:
        f = f + noise * np.random.default_rng(cfg.seed).standard_normal(n)
    return grid, HVector(q_true, grid.h), HVector(f, grid.h)


def _build_primal(cfg: RunConfig) -> Tuple[Oracle, HVector, dict]:
    info: dict = {}
    if cfg.problem == "quadratic":
        A = _matrix_operator(cfg)
        f = _rhs(cfg, A)
        oracle = least_squares_oracle(A, f, compatible=_solvable(A, f))
        y0 = HVector.zeros(A.dim_in, A.weight_in)
    elif cfg.problem == "pde_inverse":
        from .pde_laplace import make_operator

        grid, q_true, f = _pde_data(cfg)
        L = cfg.number("L", 1.0, positive=True)
        oracle = least_squares_oracle(make_operator(grid), f, L=L, compatible=not cfg.get("noise"))
        y0 = HVector.zeros(grid.n, grid.h)
        info.update(grid=grid, q_true=q_true)
    else:
        from .control import ControlGrid, control_oracle, growth_benchmark, lq_benchmark

        which = cfg.get("benchmark", "lq")
        if which not in ("lq", "growth"):
            raise ConfigError("field 'benchmark' must be 'lq' or 'growth'")
        bm = lq_benchmark() if which == "lq" else growth_benchmark()
        steps = cfg.number("steps", 100, positive=True, integer=True)
        grid = ControlGrid(bm.problem.T, steps)
        oracle = control_oracle(bm.problem, grid, mu_hint=bm.mu)
        y0 = HVector.zeros(steps, grid.tau)
        info.update(control=(bm.problem, grid), J_continuum=bm.J_star)
    if "delta" in cfg.raw:
        delta = cfg.number("delta", positive=True)
        diameter = cfg.number("diameter", positive=True)
        oracle = perturb(oracle, delta, diameter, seed=cfg.seed)
    return oracle, y0, info


def _solvable(A: LinOp, f: HVector) -> bool:
    M = A.to_matrix()
    x, *_ = np.linalg.lstsq(M, f.values, rcond=None)
    return bool(np.allclose(M @ x, f.values, atol=1e-10 * max(1.0, float(np.abs(f.values).max()))))


def _primal_stop(cfg: RunConfig, oracle: Oracle) -> StopRule:
    kind = cfg.get("stop")
    J_star = oracle.spec.J_star_known
    if kind is None:
        kind = "objective" if J_star is not None else "grad_norm"
    if kind == "objective":
        if J_star is None:
            raise ConfigError("field 'stop': 'objective' needs a known optimal value; use 'grad_norm'")
        rule = StopRule.objective_below(J_star + cfg.eps)
    elif kind == "grad_norm":
        rule = StopRule.grad_norm_below(cfg.eps)
    else:
        raise ConfigError("field 'stop' must be 'objective' or 'grad_norm'")
    return rule | StopRule.iterations(cfg.max_iter)


def _run_primal(cfg: RunConfig) -> Tuple[RunLog, HVector, dict]:
    oracle, y0, info = _build_primal(cfg)
    spec = oracle.spec
    L = cfg.number("L", spec.L_hint, positive=True)
    mu = cfg.number("mu", 0.0)
    if mu < 0:
        raise ConfigError("field 'mu' must be nonnegative")
    m = cfg.method
    if m in ("stm", "gd", "gd_averaged", "restart_half") and L is None:
        raise ConfigError(f"field 'L' is required for method '{m}' on this problem")
    if m == "rstm":
        mu0 = cfg.require("mu0", positive=True)
        mu_lower = mu if mu > 0 else spec.mu_hint
        # without any L the segments run the adaptive method
        q, log = rstm(oracle, y0, L, mu0, cfg.eps, mu_lower=mu_lower, max_segment_iter=cfg.max_iter)
    elif m == "restart_half":
        if spec.J_star_known != 0:
            raise ConfigError("method 'restart_half' needs a problem with optimal value 0")
        inner = functools.partial(stm, L=L)
        q, log = restart_half(inner, oracle, y0, cfg.eps, inner_max_iter=cfg.max_iter)
    else:
        stop = _primal_stop(cfg, oracle)
        if m == "stm":
            q, log = stm(oracle, y0, L, mu, stop=stop)
        elif m == "astm":
            q, log = astm(oracle, y0, mu, stop=stop)
        elif m == "gd":
            q, log = gd(oracle, y0, L, "plain", stop)
        elif m == "gd_adaptive":
            q, log = gd(oracle, y0, None, "plain", stop)
        elif m == "gd_averaged":
            q, log = gd(oracle, y0, L, "averaged", stop)
        else:
            q, log = gd(oracle, y0, None, "line_search", stop)
    log.meta["J_star"] = spec.J_star_known
    return log, q, info


def _run_dual(cfg: RunConfig) -> Tuple[RunLog, HVector, dict]:
    from .dual import min_norm_dual, solve_dual

    info: dict = {}
    if cfg.problem == "dual_min_norm":
        A = _matrix_operator(cfg)
        f = _rhs(cfg, A)
        L = cfg.number("L", None, positive=True)
    else:
        from .pde_laplace import make_operator

        grid, q_true, f = _pde_data(cfg)
        A = make_operator(grid)
        L = cfg.number("L", 1.0, positive=True)
        info.update(grid=grid, q_true=q_true)
    eps_tilde = cfg.number("eps_tilde", cfg.eps, positive=True)
    q, lam, log = solve_dual(min_norm_dual(A, f, L=L), cfg.method, cfg.eps, eps_tilde, cfg.max_iter)
    return log, q, info


def execute(cfg: RunConfig) -> Tuple[RunLog, HVector, dict]:
    """Build and run the configured solve; returns ``(log, solution, info)``."""
    approach = cfg.get("approach", "primal_least_squares")
    if approach not in ("primal_least_squares", "dual_min_norm"):
        raise ConfigError("field 'approach' must be 'primal_least_squares' or 'dual_min_norm'")
    if _is_dual(cfg.problem, cfg.raw):
        return _run_dual(cfg)
    return _run_primal(cfg)


def fit_exponent(values: Sequence[Optional[float]], min_points: int = 10) -> Optional[float]:
    """Least-squares slope of ``log v_N`` against ``log N`` over the final half.

    ``values[k]`` is the quantity after iteration ``k``; index 0 is skipped.
    Non-positive or missing entries are dropped. Returns ``None`` with fewer
    than `min_points` usable points.
    """
    K = len(values) - 1
    if K < 1:
        return None
    start = max(1, math.ceil(K / 2))
    N, v = [], []
    for k in range(start, K + 1):
        x = values[k]
        if x is not None and math.isfinite(x) and x > 0:
            N.append(k)
            v.append(x)
    if len(N) < min_points:
        return None
    slope, _ = np.polyfit(np.log(N), np.log(v), 1)
    return float(slope)


def _summary(cfg: RunConfig, log: RunLog, q: HVector, info: dict, wall: float) -> dict:
    out = {"problem": cfg.problem, "method": cfg.method, **log.summary()}
    feas = log.column("feasibility")
    if feas and feas[-1] is not None:
        out["final_feasibility"] = feas[-1]
    if "q_true" in info:
        out["solution_error"] = norm(q - info["q_true"])
    if "diagnostic" in log.meta:
        out["diagnostic"] = log.meta["diagnostic"]
    out["wall_time_s"] = wall
    return out


def _write_solution(cfg: RunConfig, q: HVector, info: dict) -> None:
    path = cfg.get("solution_path")
    if not path:
        return
    if "grid" in info:
        from .pde_laplace import write_boundary_csv

        write_boundary_csv(path, q, info["grid"])
    elif "control" in info:
        from .control import write_control_csv

        problem, grid = info["control"]
        write_control_csv(path, q, problem, grid)
    else:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "value"])
            for i, v in enumerate(q.values):
                w.writerow([i, repr(float(v))])


def _read_config(path: str) -> Dict[str, Any]:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None


def _configure_logging() -> None:
    level = os.environ.get("HD_LOG_LEVEL", "quiet").lower()
    levels = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise ConfigError("environment variable HD_LOG_LEVEL must be quiet, info or debug")
    logging.basicConfig(level=levels[level], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _cmd_run(args) -> int:
    overrides = {"seed": args.seed, "output_path": args.output, "eps": args.eps, "steps": args.steps}
    cfg = load_config(_read_config(args.config), overrides=overrides)
    t0 = time.perf_counter()
    try:
        log, q, info = execute(cfg)
    except ConfigError:
        raise
    except (ValueError, ArithmeticError) as exc:
        print(json.dumps({"status": "failed", "diagnostic": str(exc)}))
        return 3
    wall = time.perf_counter() - t0
    if cfg.output_path:
        log.to_csv(cfg.output_path)
    _write_solution(cfg, q, info)
    print(json.dumps(_summary(cfg, log, q, info, wall)))
    return EXIT[log.status]


def compare_logs(labels: Sequence[str], logs: Sequence[Optional[RunLog]], path) -> List[List[str]]:
    """Write the wide comparison table and return its rows."""
    header = ["k"]
    for lab in labels:
        header += [f"{lab}:J", f"{lab}:feasibility"]
    length = max((len(lg.records) for lg in logs if lg is not None), default=0)
    rows = [header]
    for k in range(length):
        row = [str(k)]
        for lg in logs:
            if lg is None or k >= len(lg.records):
                row += ["", ""]
                continue
            r = lg.records[k]
            row += [repr(float(r.J)), "" if r.feasibility is None else repr(float(r.feasibility))]
        rows.append(row)
    footer = ["exponent"]
    for lg in logs:
        if lg is None:
            footer += ["", ""]
            continue
        J_star = lg.meta.get("J_star") or 0.0
        ej = fit_exponent([r.J - J_star for r in lg.records])
        ef = fit_exponent(lg.column("feasibility"))
        footer += ["" if ej is None else repr(ej), "" if ef is None else repr(ef)]
    rows.append(footer)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    return rows


def _cmd_compare(args) -> int:
    if len(args.configs) < 2:
        raise ConfigError("compare needs at least two configs")
    cfgs = [load_config(_read_config(p), overrides={"seed": args.seed}) for p in args.configs]
    labels, logs, summaries = [], [], []
    for i, cfg in enumerate(cfgs):
        label = str(cfg.get("label") or f"{i}_{cfg.method}")
        labels.append(label)
        t0 = time.perf_counter()
        try:
            log, q, info = execute(cfg)
        except ConfigError:
            raise
        except (ValueError, ArithmeticError) as exc:
            logs.append(None)
            summaries.append({"label": label, "status": "failed", "diagnostic": str(exc)})
            continue
        logs.append(log)
        summaries.append({"label": label, **_summary(cfg, log, q, info, time.perf_counter() - t0)})
    rows = compare_logs(labels, logs, args.output)
    exps = dict(zip(rows[0][1:], rows[-1][1:]))
    print(json.dumps({"runs": summaries, "exponents": exps}))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="hdescent", description="First-order methods experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one configuration")
    p_run.add_argument("config")
    p_run.add_argument("--output", help="CSV path for the iteration log (overrides output_path)")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--eps", type=float)
    p_run.add_argument("--steps", type=int, help="time steps for control problems")
    p_cmp = sub.add_parser("compare", help="run several configurations side by side")
    p_cmp.add_argument("configs", nargs="+")
    p_cmp.add_argument("--output", required=True, help="CSV path for the comparison table")
    p_cmp.add_argument("--seed", type=int)
    args = parser.parse_args(argv)
    try:
        _configure_logging()
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_compare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
