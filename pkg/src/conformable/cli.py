"""Command-line scenario runner.

``conformable <kind> --input scenario.json --out-dir out/`` reads a JSON
scenario, runs the matching pipeline and writes ``out/report.json`` plus
``out/tables/*.csv`` (columns ``t,s,value,bound,slack``).

Exit status: 0 when every check passes, 1 when a check fails, 2 for an
unreadable or invalid scenario (one line on stderr naming the field), 3 for
a numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .calculus import FractionalOrder
from .dichotomy import DichotomyEstimate, estimate_dichotomy, verify_dichotomy
from .exceptions import (AccuracyError, AdmissibilityError, ConvergenceError, IntegrationError,
                         QuadratureError)
from .expr import ExpressionError, compile_expression
from .matrix import col_norm, ml_matrix, ml_series, negative_spectrum_bound, spectral_projection
from .nonuniform import (DEFAULT_EPS_LADDER, NonuniformPerturbation, estimate_nonuniform,
                         nonuniform_dichotomy_constants, nonuniform_roughness_constants,
                         perturbed_projection_family, projection_norm_bound)
from .roughness import (PerturbationSpec, invariant_manifold, perturbed_projection,
                        required_clock_horizon, roughness_constants, unstable_manifold,
                        verify_roughness)
from .solver import (IVP, TimeMatrixFunction, fundamental_matrix, ivp_solve, natural_grid,
                     picard_solve)

__all__ = ["main", "run_scenario", "load_scenario", "Scenario", "ScenarioError", "KINDS",
           "SCHEMA_VERSION", "dumps_report"]

SCHEMA_VERSION = 1
KINDS = ("solve", "ml", "dichotomy-estimate", "dichotomy-verify", "roughness", "manifold",
         "nonuniform")
TABLE_HEADER = "t,s,value,bound,slack"
EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
#: Clock-time nodes per unit used for the fixed-point grids.
NODES_PER_CLOCK_UNIT = 40


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# ---------------------------------------------------------------------------
# field access

class _Fields:
    """Typed access to a JSON object that records every resolved value."""

    def __init__(self, data: Any, path: str = ""):
        if not isinstance(data, dict):
            raise ScenarioError(path or "<root>", "expected a JSON object")
        self.data, self.path = data, path
        self.used: set[str] = set()
        self.resolved: dict[str, Any] = {}

    def name(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default: Any = ...) -> Any:
        self.used.add(key)
        if key not in self.data:
            if default is ...:
                raise ScenarioError(self.name(key), "required field is missing")
            return default
        return self.data[key]

    def number(self, key: str, default: Any = ..., lo: float | None = None,
               lo_open: bool = False, integer: bool = False) -> float:
        v = self.raw(key, default)
        if v is None:
            self.resolved[key] = None
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ScenarioError(self.name(key), f"expected a finite number, got {v!r}")
        if integer and int(v) != v:
            raise ScenarioError(self.name(key), f"expected an integer, got {v!r}")
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ScenarioError(self.name(key), f"must be {'>' if lo_open else '>='} {lo}")
        v = int(v) if integer else float(v)
        self.resolved[key] = v
        return v

    def choice(self, key: str, options, default: Any = ...) -> str:
        v = self.raw(key, default)
        if v not in options:
            raise ScenarioError(self.name(key), f"expected one of {list(options)}, got {v!r}")
        self.resolved[key] = v
        return v

    def sub(self, key: str, default: Any = ...) -> "_Fields | None":
        v = self.raw(key, default)
        if v is None:
            return None
        return _Fields(v, self.name(key))

    def close(self, nested: dict[str, "_Fields"] | None = None) -> dict:
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ScenarioError(self.name(extra[0]), "unknown field")
        out = dict(self.resolved)
        for k, f in (nested or {}).items():
            out[k] = f.close()
        return out


def _vector(F: _Fields, key: str, default: Any = ...) -> np.ndarray | None:
    v = F.raw(key, default)
    if v is None:
        return None
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(F.name(key), "expected a list of numbers") from None
    if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ScenarioError(F.name(key), "expected a nonempty list of finite numbers")
    F.resolved[key] = arr.tolist()
    return arr


def _constant_matrix(F: _Fields, key: str, default: Any = ...) -> np.ndarray | None:
    v = F.raw(key, default)
    if v is None:
        return None
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(F.name(key), "expected a square matrix of numbers") from None
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or not np.all(np.isfinite(arr)):
        raise ScenarioError(F.name(key), "expected a square matrix of finite numbers")
    F.resolved[key] = arr.tolist()
    return arr


def _burst(order: FractionalOrder, omega: float, amplitude: float) -> TimeMatrixFunction:
    def A(t):
        u = order.clock(t)
        return np.array([[-omega - amplitude * u * math.sin(u)]])
    return TimeMatrixFunction(A, 1, 0.0, math.inf)


def _matrix_function(F: _Fields, key: str, order: FractionalOrder,
                     default: Any = ...) -> TimeMatrixFunction | None:
    """Constant matrix, matrix of expressions in ``t``, or ``{"builtin": ...}``."""
    v = F.raw(key, default)
    name = F.name(key)
    if v is None:
        return None
    if isinstance(v, dict):
        G = _Fields(v, name)
        G.choice("builtin", ("burst",))
        omega = G.number("omega", lo=0.0, lo_open=True)
        amplitude = G.number("amplitude", lo=0.0)
        F.resolved[key] = G.close()
        return _burst(order, omega, amplitude)
    if not (isinstance(v, list) and v and all(isinstance(r, list) and len(r) == len(v) for r in v)):
        raise ScenarioError(name, "expected a square matrix (list of equal-length rows)")
    n = len(v)
    if all(isinstance(x, (int, float)) and not isinstance(x, bool) for r in v for x in r):
        A = _constant_matrix(F, key)
        return TimeMatrixFunction.constant(A)
    entries = []
    for i, row in enumerate(v):
        for j, x in enumerate(row):
            if isinstance(x, (int, float)) and not isinstance(x, bool):
                c = float(x)
                entries.append(lambda t, c=c: c)
            elif isinstance(x, str):
                try:
                    entries.append(compile_expression(x, ("t",)))
                except ExpressionError as exc:
                    raise ScenarioError(f"{name}[{i}][{j}]", str(exc)) from None
            else:
                raise ScenarioError(f"{name}[{i}][{j}]", "expected a number or an expression")
    F.resolved[key] = v

    def A(t):
        return np.array([f(t=t) for f in entries], dtype=float).reshape(n, n)
    return TimeMatrixFunction(A, n)


def _field_expressions(F: _Fields, key: str, variables, dim: int | None = None):
    v = F.raw(key)
    name = F.name(key)
    if not (isinstance(v, list) and v and all(isinstance(x, str) for x in v)):
        raise ScenarioError(name, "expected a list of expression strings")
    if dim is not None and len(v) != dim:
        raise ScenarioError(name, f"expected {dim} expressions, got {len(v)}")
    out = []
    for i, x in enumerate(v):
        try:
            out.append(compile_expression(x, variables))
        except ExpressionError as exc:
            raise ScenarioError(f"{name}[{i}]", str(exc)) from None
    F.resolved[key] = v
    return out


def _grid(F: _Fields, order: FractionalOrder, horizon: float | None):
    G = F.sub("grid")
    t_start = G.number("t_start", 0.0)
    t_end = G.number("t_end", ... if horizon is None else None)
    if horizon is not None:
        t_end = float(horizon)
    G.resolved["t_end"] = t_end
    if not t_end > t_start:
        raise ScenarioError(G.name("t_end"), "must exceed t_start")
    points = G.number("points", 81, lo=3, integer=True)
    spacing = G.choice("spacing", ("clock", "time"), "clock")
    if spacing == "clock":
        grid = natural_grid(order, t_start, t_end, points)
    else:
        grid = np.linspace(t_start, t_end, points)
    F.resolved["grid"] = G.close()
    return grid


def _sum(A: TimeMatrixFunction, B: TimeMatrixFunction) -> TimeMatrixFunction:
    if A.dim != B.dim:
        raise ScenarioError("B", f"dimension {B.dim} does not match A ({A.dim})")
    if A.constant_value is not None and B.constant_value is not None:
        return TimeMatrixFunction.constant(A.constant_value + B.constant_value)
    return TimeMatrixFunction(lambda t: A(t) + B(t), A.dim, max(A.t_lo, B.t_lo),
                              min(A.t_hi, B.t_hi))


def _projection(F: _Fields, A: TimeMatrixFunction) -> np.ndarray:
    if F.has("P"):
        P = _constant_matrix(F, "P")
        if P.shape[0] != A.dim:
            raise ScenarioError("P", f"expected a {A.dim}x{A.dim} matrix")
        return P
    F.raw("P", None)
    if A.constant_value is None:
        raise ScenarioError("P", "required when A depends on t")
    P = spectral_projection(A.constant_value).P
    F.resolved["P"] = P.tolist()
    return P


def _constants(F: _Fields, P, X, grid) -> DichotomyEstimate:
    """Dichotomy constants from the scenario, or fitted on the grid."""
    keys = ("N1", "N2", "beta1", "beta2")
    given = [F.has(k) for k in keys]
    if any(given) and not all(given):
        missing = keys[given.index(False)]
        raise ScenarioError(missing, "give all of N1, N2, beta1, beta2 or none")
    if all(given):
        vals = [F.number(k, lo=0.0, lo_open=True) for k in keys]
        return DichotomyEstimate(P, *vals)
    for k in keys:
        F.raw(k, None)
    est = estimate_dichotomy(X, P, grid, grid)
    for k in keys:
        F.resolved[k] = getattr(est, k)
    F.resolved["constants_source"] = "estimated"
    return est


def _fp_grid(order, u_need: float, grid_end_u: float, t_hi: float = math.inf):
    u_H = max(grid_end_u, math.ceil(u_need) + 1.0)
    if order.time(u_H) > t_hi:
        raise ScenarioError("grid.t_end", "A is not defined far enough for the fixed point")
    points = int(math.ceil(u_H * NODES_PER_CLOCK_UNIT)) + 1
    return natural_grid(order, 0.0, float(order.time(u_H)), points)


# ---------------------------------------------------------------------------
# outcome and serialisation

@dataclass
class Outcome:
    results: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float, Fraction)):
        return float(x)
    if x is None or isinstance(x, str):
        return x
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _dump(x, indent: int, level: int) -> str:
    pad, inner = " " * (indent * level), " " * (indent * (level + 1))
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_dump(v, indent, level + 1)}" for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(x, list):
        if not x:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in x):
            return "[" + ", ".join(_dump(v, indent, level) for v in x) + "]"
        return "[\n" + ",\n".join(inner + _dump(v, indent, level + 1) for v in x) + "\n" + pad + "]"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if x is None:
        return "null"
    return json.dumps(x)


def dumps_report(report: dict) -> str:
    """JSON text with every float printed to 17 significant digits.

    Non-finite floats are written as the strings ``"nan"``, ``"inf"`` and
    ``"-inf"``.
    """
    return _dump(_jsonable(report), 2, 0) + "\n"


def _margin_rows(margins) -> np.ndarray:
    return margins.rows


# ---------------------------------------------------------------------------
# pipelines

def _run_solve(F: _Fields, order, sc: "Scenario") -> Outcome:
    x0 = _vector(F, "x0")
    n = x0.size
    names = ("t",) + tuple(f"x{i + 1}" for i in range(n))
    rhs_exprs = _field_expressions(F, "rhs", names, n)
    t0 = F.number("t0", 0.0)
    t_end = F.number("t_end") if sc.horizon is None else float(sc.horizon)
    F.resolved["t_end"] = t_end
    points = F.number("points", 41, lo=2, integer=True)
    rk_tol = F.number("rk_tol", 1e-10, lo=0.0, lo_open=True)
    pic = F.sub("picard", None)
    if pic is not None:
        box_a = pic.number("a", lo=0.0, lo_open=True)
        box_b = pic.number("b", lo=0.0, lo_open=True)
        L = pic.number("lipschitz", lo=0.0, lo_open=True)
        pic_tol = pic.number("tol", 1e-10 if sc.tol is None else sc.tol, lo=0.0, lo_open=True)
        agree = pic.number("agreement", 1e-6, lo=0.0, lo_open=True)
    F.close({"picard": pic} if pic is not None else None)

    def rhs(t, x):
        env = {f"x{i + 1}": float(x[i]) for i in range(n)}
        return np.array([f(t=t, **env) for f in rhs_exprs])

    box = (box_a, box_b) if pic is not None else None
    ivp = IVP(order, rhs, t0, x0, lipschitz_L=L if pic is not None else None, box=box)
    t_eval = natural_grid(order, t0, t_end, points) if t_end > t0 else None
    if t_eval is None:
        raise ScenarioError("t_end", "must exceed t0")
    traj = ivp_solve(ivp, t_end, rk_tol=rk_tol, t_eval=t_eval)
    out = Outcome()
    out.results["trajectory"] = {"t": traj.t, "x": traj.x}
    if pic is not None:
        res = picard_solve(ivp, tol=pic_tol, seed=sc.seed)
        ts = res.trajectory.t
        diff = np.array([np.abs(res.trajectory(t) - traj(t)).sum() for t in ts])
        with np.errstate(divide="ignore"):
            slack = np.where(diff > 0, agree / np.where(diff > 0, diff, 1), np.inf)
        out.tables["picard_vs_rk"] = np.column_stack(
            [ts, np.full_like(ts, t0), diff, np.full_like(ts, agree), slack])
        out.results["picard"] = {"delta": res.delta, "iterations": res.iterations,
                                 "increment": res.increment, "bound_M": res.bound_M,
                                 "max_difference": float(diff.max())}
        out.checks["picard_agrees_with_rk"] = bool(diff.max() <= agree)
    norms = np.abs(traj.x).sum(axis=1)
    nan = np.full_like(traj.t, math.nan)
    out.tables["trajectory"] = np.column_stack([traj.t, np.full_like(traj.t, t0), norms, nan, nan])
    return out


def _run_ml(F: _Fields, order, sc: "Scenario") -> Outcome:
    A = _constant_matrix(F, "A")
    grid = _grid(F, order, sc.horizon)
    series_tol = F.number("series_tol", 1e-8, lo=0.0, lo_open=True)
    F.close()
    out = Outcome()
    values = np.array([ml_matrix(order, A, t) for t in grid])
    out.results["E"] = {"t": grid, "values": values}
    u = np.asarray(order.clock(grid))
    mask = np.abs(u) * col_norm(A) <= 30.0
    worst = 0.0
    for t, E, m in zip(grid, values, mask):
        if m:
            S = ml_series(order, A, t)
            worst = max(worst, col_norm(S - E) / max(1.0, col_norm(E)))
    out.results["series_relative_error"] = worst
    out.results["series_points"] = int(mask.sum())
    out.checks["series_agrees"] = bool(worst <= series_tol)
    eig = np.linalg.eigvals(A)
    out.results["eigenvalues_real"] = np.sort(eig.real)
    norms = np.array([col_norm(E) for E in values])
    if np.all(eig.real < 0) and np.all(grid >= 0):
        K, lam = negative_spectrum_bound(order, A, grid)
        bound = K * np.exp(-lam * u)
        out.results["decay"] = {"K": K, "lambda": lam}
        slack = bound / norms
        out.checks["decay_bound_holds"] = bool(np.all(slack >= 1 - 1e-9))
    else:
        bound = slack = np.full_like(grid, math.nan)
    out.tables["ml_norm"] = np.column_stack([grid, np.zeros_like(grid), norms, bound, slack])
    return out


def _run_dichotomy(F: _Fields, order, sc: "Scenario", estimate: bool) -> Outcome:
    A = _matrix_function(F, "A", order)
    grid = _grid(F, order, sc.horizon)
    rk_tol = F.number("rk_tol", 1e-12, lo=0.0, lo_open=True)
    P = _projection(F, A)
    if estimate:
        F.close()
        X = fundamental_matrix(order, A, grid, rk_tol=rk_tol)
        est = estimate_dichotomy(X, P, grid, grid)
        margins = est.margins
    else:
        vals = [F.number(k, lo=0.0, lo_open=True) for k in ("N1", "N2", "beta1", "beta2")]
        eps = F.number("eps_nonuniform", 0.0, lo=0.0)
        F.close()
        X = fundamental_matrix(order, A, grid, rk_tol=rk_tol)
        est = DichotomyEstimate(P, *vals, eps_nonuniform=eps)
        margins = verify_dichotomy(X, est, grid, grid)
    out = Outcome()
    out.results.update(N1=est.N1, N2=est.N2, beta1=est.beta1, beta2=est.beta2, P=est.P,
                       eps_nonuniform=est.eps_nonuniform, min_slack=margins.min_slack,
                       stable_argmin=margins.stable_argmin,
                       unstable_argmin=margins.unstable_argmin, cond=X.cond_report,
                       liouville_drift=X.liouville_drift)
    out.checks["dichotomy_verified"] = bool(margins.verified)
    out.tables["dichotomy"] = _margin_rows(margins)
    return out


def _run_roughness(F: _Fields, order, sc: "Scenario") -> Outcome:
    A = _matrix_function(F, "A", order)
    B = _matrix_function(F, "B", order)
    grid = _grid(F, order, sc.horizon)
    rk_tol = F.number("rk_tol", 1e-12, lo=0.0, lo_open=True)
    fp_tol = F.number("fp_tol", 1e-10 if sc.tol is None else sc.tol, lo=0.0, lo_open=True)
    form = F.choice("form", ("corollary", "theorem"), "corollary")
    P = _projection(F, A)
    eps = F.number("eps_perturb", None, lo=0.0)
    X = fundamental_matrix(order, A, grid, rk_tol=rk_tol)
    est = _constants(F, P, X, grid)
    F.close()
    pert = (PerturbationSpec.constant(B.constant_value) if eps is None and B.constant_value is not None
            else PerturbationSpec.from_grid(B, grid, eps))
    c = roughness_constants(est.N1, est.N2, est.beta1, est.beta2, pert.eps_perturb)
    out = Outcome()
    out.results["constants"] = {k: getattr(c, k) for k in c.__dataclass_fields__}
    out.results["eps_perturb"] = pert.eps_perturb
    out.checks["admissible"] = bool(c.admissible if form == "corollary" else c.theorem_admissible)
    need = required_clock_horizon(est.N1, est.N2, est.beta1, est.beta2, pert.eps_perturb,
                                  fp_tol / 10)
    Xfp = fundamental_matrix(order, A, _fp_grid(order, need, float(order.clock(grid[-1])), A.t_hi),
                             rk_tol=rk_tol)
    proj = perturbed_projection(Xfp, est, pert, fp_tol=fp_tol)
    out.results["projection"] = {"Q": proj.Q, "iterations": proj.iterations,
                                 "residual": proj.residual, "tail": proj.tail,
                                 "theta": proj.theta, "horizon": proj.horizon,
                                 "distance_to_P": col_norm(proj.Q - est.P)}
    if out.checks["admissible"]:
        Y = fundamental_matrix(order, _sum(A, B), grid, rk_tol=rk_tol)
        m = verify_roughness(Y, proj.Q, c, grid, grid, form=form, X=X, P=est.P)
        out.results["margins"] = {"min_slack": m.margins.min_slack,
                                  "stable_argmin": m.margins.stable_argmin,
                                  "unstable_argmin": m.margins.unstable_argmin,
                                  "mu1": m.mu1, "mu2": m.mu2, "mu_sum_bound": m.mu_sum_bound,
                                  "proj_distance": m.proj_distance,
                                  "proj_distance_bound": m.proj_distance_bound}
        out.checks["perturbed_dichotomy_verified"] = bool(m.margins.verified)
        out.checks["projection_distance_bound"] = bool(
            col_norm(proj.Q - est.P) <= c.proj_distance_bound * (1 + 1e-9)
            and m.proj_distance <= m.proj_distance_bound * (1 + 1e-9))
        out.checks["mu_sum_bound"] = bool(m.mu1 + m.mu2 <= m.mu_sum_bound * (1 + 1e-9))
        out.tables["roughness"] = _margin_rows(m.margins)
    return out


def _run_manifold(F: _Fields, order, sc: "Scenario") -> Outcome:
    A = _matrix_function(F, "A", order)
    n = A.dim
    grid = _grid(F, order, sc.horizon)
    rk_tol = F.number("rk_tol", 1e-12, lo=0.0, lo_open=True)
    fp_tol = F.number("fp_tol", 1e-12 if sc.tol is None else sc.tol, lo=0.0, lo_open=True)
    side = F.choice("side", ("stable", "unstable"), "stable")
    P = _projection(F, A)
    names = ("t",) + tuple(f"x{i + 1}" for i in range(n))
    f_exprs = _field_expressions(F, "f", names, n)
    zeta_f = _field_expressions(F, "zeta", ("sigma",), 1)[0]
    delta = F.number("delta", lo=0.0, lo_open=True)
    t0 = F.number("t0", 0.0)
    K = F.number("K", None, lo=0.0, lo_open=True)
    lam = F.number("lambda", None, lo=0.0, lo_open=True)
    pts = F.raw("points")
    if not (isinstance(pts, list) and pts):
        raise ScenarioError("points", "expected a nonempty list of initial vectors")
    points = []
    for i, p in enumerate(pts):
        try:
            arr = np.asarray(p, dtype=float)
        except (TypeError, ValueError):
            raise ScenarioError(f"points[{i}]", "expected a list of numbers") from None
        if arr.shape != (n,) or not np.all(np.isfinite(arr)):
            raise ScenarioError(f"points[{i}]", f"expected {n} finite numbers")
        points.append(arr)
    F.resolved["points"] = [p.tolist() for p in points]
    X = fundamental_matrix(order, A, grid, rk_tol=rk_tol)
    est = _constants(F, P, X, grid)
    F.close()

    def f(t, x):
        env = {f"x{i + 1}": float(x[i]) for i in range(n)}
        return np.array([e(t=t, **env) for e in f_exprs])

    def zeta(s):
        return zeta_f(sigma=s)

    out = Outcome()
    rows, reports = [], []
    for x0 in points:
        if side == "stable":
            lam_eff = est.beta1 if lam is None else lam
            K_eff = est.N1 if K is None else K
            N1, N2, b1, b2, Pm = est.N1, est.N2, est.beta1, est.beta2, est.P
        else:
            lam_eff = est.beta2 if lam is None else lam
            K_eff = est.N2 if K is None else K
            N1, N2, b1, b2, Pm = est.N2, est.N1, est.beta2, est.beta1, np.eye(n) - est.P
        g1 = lam_eff - N1 * b1 * b2 / (N1 * b2 + N2 * b1)
        M = 2 * K_eff * col_norm(Pm)
        rate = b2 + g1
        px = float(np.abs(Pm @ x0).sum())
        lead = N2 * zeta(delta) * M * px / rate if rate > 0 else math.inf
        u_need = math.log(lead / fp_tol) / rate if lead > fp_tol else 0.0
        if side == "stable":
            start_u = float(order.clock(t0))
            if t0 < 0:
                raise ScenarioError("t0", "the stable chart needs t0 >= 0")
            u_end = max(float(order.clock(grid[-1])), start_u + math.ceil(u_need) + 1.0)
            npts = int(math.ceil((u_end - start_u) * NODES_PER_CLOCK_UNIT)) + 1
            gfp = natural_grid(order, t0, float(order.time(u_end)), npts)
            Xfp = fundamental_matrix(order, A, gfp, rk_tol=rk_tol)
            pt = invariant_manifold(Xfp, est, f, zeta, delta, t0, x0, fp_tol, K=K, lam=lam)
        else:
            if t0 > 0:
                raise ScenarioError("t0", "the unstable chart needs t0 <= 0")
            start_u = float(order.clock(-t0))
            u_end = start_u + math.ceil(u_need) + 1.0
            npts = int(math.ceil((u_end - start_u) * NODES_PER_CLOCK_UNIT)) + 1
            gfp = natural_grid(order, -t0, float(order.time(u_end)), npts)
            pt = unstable_manifold(order, A, est, f, zeta, delta, t0, x0, gfp, fp_tol, K=K,
                                   lam=lam, rk_tol=rk_tol)
        uu = np.asarray(order.clock(np.abs(pt.t)))
        norms = np.abs(pt.x).sum(axis=1)
        bound = M * np.exp(-g1 * np.abs(uu - uu[0])) * float(np.abs(pt.h).sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            slack = np.where(norms > 0, bound / np.where(norms > 0, norms, 1), np.inf)
        keep = np.abs(pt.t) <= max(abs(grid[-1]), abs(t0))
        rows.append(np.column_stack([pt.t, np.full_like(pt.t, t0), norms, bound, slack])[keep])
        reports.append({"x0": x0, "Px0_norm": px, "h": pt.h, "iterations": pt.iterations,
                        "tail": pt.tail, "tangency_ratio": pt.tangency_ratio,
                        "tangency_bound": pt.tangency_bound, "decay_slack": pt.decay_slack,
                        "gamma1": g1, "M": M})
    out.results["side"] = side
    out.results["points"] = reports
    out.checks["tangency_bound"] = all(r["tangency_ratio"] <= r["tangency_bound"] * (1 + 1e-9)
                                       for r in reports)
    out.checks["decay_estimate"] = all(r["decay_slack"] >= 1 - 1e-9 for r in reports)
    nonzero = sorted((r for r in reports if r["Px0_norm"] > 0), key=lambda r: r["Px0_norm"])
    if len(nonzero) >= 2:
        ratios = [r["tangency_ratio"] for r in nonzero]
        out.checks["tangency_monotone"] = all(a <= b for a, b in zip(ratios, ratios[1:]))
    out.tables["manifold_decay"] = np.vstack(rows)
    return out


def _run_nonuniform(F: _Fields, order, sc: "Scenario") -> Outcome:
    A = _matrix_function(F, "A", order)
    grid = _grid(F, order, sc.horizon)
    rk_tol = F.number("rk_tol", 1e-12, lo=0.0, lo_open=True)
    P = _projection(F, A)
    ladder = F.raw("eps_candidates", None)
    if ladder is None:
        ladder = list(DEFAULT_EPS_LADDER)
    if not (isinstance(ladder, list) and ladder and all(
            isinstance(e, (int, float)) and not isinstance(e, bool) and e >= 0 for e in ladder)):
        raise ScenarioError("eps_candidates", "expected a nonempty list of numbers >= 0")
    F.resolved["eps_candidates"] = [float(e) for e in ladder]
    cap = F.number("cap", 10.0, lo=0.0, lo_open=True)
    fp_tol = F.number("fp_tol", 1e-10 if sc.tol is None else sc.tol, lo=0.0, lo_open=True)
    pert_f = F.sub("perturbation", None)
    if pert_f is not None:
        B = _matrix_function(pert_f, "B", order)
        delta = pert_f.number("delta", lo=0.0, lo_open=True)
        power = int(pert_f.choice("weight_power", (1, 2), 2))
        iota = pert_f.number("iota", 0.0, lo=0.0)
    F.close({"perturbation": pert_f} if pert_f is not None else None)
    X = fundamental_matrix(order, A, grid, rk_tol=rk_tol)
    nd = estimate_nonuniform(X, P, grid, grid, eps_candidates=ladder, cap=cap)
    out = Outcome()
    out.results.update(N1_hat=nd.N1_hat, N2_hat=nd.N2_hat, beta1_hat=nd.beta1_hat,
                       beta2_hat=nd.beta2_hat, eps_nonuniform=nd.eps_nonuniform,
                       min_slack=nd.margins.min_slack,
                       candidates=[{"eps": c.eps, "N1": c.N1, "N2": c.N2, "beta1": c.beta1,
                                    "beta2": c.beta2, "accepted": c.accepted}
                                   for c in nd.candidates])
    out.checks["nonuniform_dichotomy_verified"] = bool(nd.margins.verified)
    out.tables["nonuniform"] = _margin_rows(nd.margins)
    if pert_f is None:
        return out
    pert = NonuniformPerturbation(B, delta, power)
    ratio = pert.grid_check(order, nd.eps_nonuniform, grid)
    out.results["perturbation_weight_ratio"] = ratio
    out.checks["perturbation_within_delta"] = bool(ratio <= 1 + 1e-12)
    pc = nonuniform_dichotomy_constants(nd.N1_hat, nd.N2_hat, nd.beta1_hat, nd.beta2_hat, delta,
                                        nd.eps_nonuniform)
    bound0, eta = projection_norm_bound(order, nd.N_hat, nd.beta_hat, delta, nd.eps_nonuniform,
                                        0.0)
    K_final, lam_hat = nonuniform_roughness_constants(nd.N_hat, nd.beta_hat, delta)
    out.results["constants"] = {"theta": pc.theta, "K1": pc.K1, "K2": pc.K2,
                                "lambda1": pc.lambda1, "lambda2": pc.lambda2, "eta_hat": eta,
                                "projection_norm_bound_at_0": bound0, "K_final": K_final,
                                "lambda_hat": lam_hat}
    weight = math.exp(nd.eps_nonuniform * order.clock(iota))
    need = required_clock_horizon(nd.N1_hat, nd.N2_hat, nd.beta1_hat, nd.beta2_hat, delta,
                                  fp_tol / 10, weight) + float(order.clock(iota))
    Xfp = fundamental_matrix(order, A, _fp_grid(order, need, float(order.clock(grid[-1])),
                                                A.t_hi), rk_tol=rk_tol)
    if iota > 0:
        raise ScenarioError("perturbation.iota", "only the anchor iota = 0 is exposed by the CLI")
    Y = fundamental_matrix(order, _sum(A, B), grid, rk_tol=rk_tol)
    fam = perturbed_projection_family(Xfp, Y, nd, pert, grid, iota, fp_tol=fp_tol)
    out.results["family"] = {"iota": fam.iota, "idempotency_error": fam.idempotency_error,
                             "commutation_error": fam.commutation_error,
                             "distance_slack": fam.distance_slack, "norm_slack": fam.norm_slack,
                             "iterations": fam.solution.iterations,
                             "residual": fam.solution.residual, "tail": fam.solution.tail}
    out.checks["projection_family_idempotent"] = bool(fam.idempotency_error <= 1e-8)
    out.checks["projection_family_commutes"] = bool(fam.commutation_error <= 1e-6)
    out.checks["projection_distance_bound"] = bool(fam.distance_slack >= 1 - 1e-9)
    out.checks["projection_norm_bound"] = bool(fam.norm_slack >= 1 - 1e-9)
    if fam.margins is not None:
        out.results["family"]["min_slack"] = fam.margins.min_slack
        out.checks["perturbed_dichotomy_verified"] = bool(fam.margins.verified)
        out.tables["nonuniform_perturbed"] = _margin_rows(fam.margins)
    return out


_RUNNERS: dict[str, Callable] = {
    "solve": _run_solve,
    "ml": _run_ml,
    "dichotomy-estimate": lambda F, o, sc: _run_dichotomy(F, o, sc, True),
    "dichotomy-verify": lambda F, o, sc: _run_dichotomy(F, o, sc, False),
    "roughness": _run_roughness,
    "manifold": _run_manifold,
    "nonuniform": _run_nonuniform,
}


# ---------------------------------------------------------------------------
# entry points

@dataclass(frozen=True)
class Scenario:
    kind: str
    data: dict
    seed: int = 0
    horizon: float | None = None
    tol: float | None = None


def load_scenario(path, kind: str | None = None, seed: int = 0, horizon: float | None = None,
                  tol: float | None = None) -> Scenario:
    """Read and minimally validate a scenario file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError("--input", f"cannot read {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ScenarioError("--input", "file is not valid UTF-8") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<json>", f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "expected a JSON object")
    file_kind = data.get("kind")
    if file_kind is None:
        if kind is None:
            raise ScenarioError("kind", "required field is missing")
        file_kind = kind
    if file_kind not in KINDS:
        raise ScenarioError("kind", f"expected one of {list(KINDS)}, got {file_kind!r}")
    if kind is not None and file_kind != kind:
        raise ScenarioError("kind", f"scenario is {file_kind!r} but the subcommand is {kind!r}")
    if horizon is not None and not (math.isfinite(horizon) and horizon > 0):
        raise ScenarioError("--horizon", "must be a positive number")
    if tol is not None and not (math.isfinite(tol) and tol > 0):
        raise ScenarioError("--tol", "must be a positive number")
    if not 0 <= seed < 2 ** 64:
        raise ScenarioError("--seed", "must be an unsigned 64-bit integer")
    return Scenario(file_kind, data, seed, horizon, tol)


def run_scenario(sc: Scenario) -> tuple[dict, dict[str, np.ndarray], bool]:
    """Execute a scenario; returns ``(report, tables, passed)``.

    Raises :class:`ScenarioError` for invalid input; numerical failures
    propagate as the package's exception types.
    """
    F = _Fields(dict(sc.data))
    F.raw("kind", None)
    F.resolved["kind"] = sc.kind
    alpha = F.number("alpha", lo=0.0, lo_open=True)
    if alpha > 1:
        raise ScenarioError("alpha", "must lie in (0, 1]")
    order = FractionalOrder(alpha)
    if F.has("description"):
        v = F.raw("description")
        if not isinstance(v, str):
            raise ScenarioError("description", "expected a string")
        F.resolved["description"] = v
    try:
        outcome = _RUNNERS[sc.kind](F, order, sc)
    except ExpressionError as exc:
        raise ScenarioError("<expression>", str(exc)) from None
    config = dict(F.resolved)
    config.update(seed=sc.seed, horizon_override=sc.horizon, tol_override=sc.tol)
    report = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "kind": sc.kind,
        "config": config,
        "results": outcome.results,
        "checks": outcome.checks,
        "passed": outcome.passed,
        "tables": sorted(f"tables/{k}.csv" for k in outcome.tables),
    }
    return report, outcome.tables, outcome.passed


def write_outputs(out_dir, report: dict, tables: dict[str, np.ndarray]) -> None:
    out = Path(out_dir)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps_report(report), encoding="utf-8")
    for name, rows in tables.items():
        rows = np.asarray(rows, dtype=float).reshape(-1, 5)
        np.savetxt(out / "tables" / f"{name}.csv", rows, fmt="%.17g", delimiter=",",
                   header=TABLE_HEADER, comments="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conformable",
        description="Run a conformable-dynamics scenario and write a report.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="KIND")
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} scenario")
        p.add_argument("--input", required=True, help="scenario JSON file")
        p.add_argument("--out-dir", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
        p.add_argument("--horizon", type=float, default=None,
                       help="override the end time of the working grid")
        p.add_argument("--tol", type=float, default=None,
                       help="override the fixed-point / Picard tolerance")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        sc = load_scenario(args.input, args.kind, args.seed, args.horizon, args.tol)
        report, tables, passed = run_scenario(sc)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, IntegrationError, AccuracyError, QuadratureError,
            OverflowError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_NUMERIC
    except AdmissibilityError as exc:
        print(f"inadmissible: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_VERIFY
    except ValueError as exc:
        print(f"error: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_INPUT
    write_outputs(args.out_dir, report, tables)
    for name, ok in report["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if passed else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
