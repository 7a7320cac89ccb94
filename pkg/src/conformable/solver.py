"""Initial value problems, fundamental matrices and evolution operators.

Every integrator here works in the natural clock ``u = sign(t)|t|**alpha/alpha``.
There the conformable equation ``T^alpha x = f(t, x)`` becomes the classical
ODE ``dx/du = f(t(u), x)``, so standard machinery applies unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import integrate, interpolate, linalg

from .calculus import (DEFAULT_QUADRATURE, FractionalOrder, OrderLike, QuadratureConfig,
                       as_order, clock_integral)
from .exceptions import AccuracyError, ConvergenceError, DomainError, IntegrationError
from .matrix import as_square, vec_norm

__all__ = [
    "TimeMatrixFunction",
    "IVP",
    "Trajectory",
    "PicardResult",
    "FundamentalMatrix",
    "picard_solve",
    "ivp_solve",
    "fundamental_matrix",
    "evolution",
    "variation_of_constants",
    "liouville_determinant",
    "natural_grid",
]


class TimeMatrixFunction:
    """Square-matrix-valued function of time on ``[t_lo, t_hi]``.

    Parameters
    ----------
    func : callable
        ``func(t)`` returns an ``n x n`` array.
    dim : int
        The dimension ``n``; every evaluation is checked against it.
    t_lo, t_hi : float
        Domain endpoints (may be infinite).
    """

    def __init__(self, func: Callable[[float], np.ndarray], dim: int,
                 t_lo: float = -math.inf, t_hi: float = math.inf):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        if not t_lo <= t_hi:
            raise ValueError(f"empty domain [{t_lo}, {t_hi}]")
        self.func = func
        self.dim = int(dim)
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        self._const = None

    @classmethod
    def constant(cls, A) -> "TimeMatrixFunction":
        A = as_square(A)
        A.setflags(write=False)
        out = cls(lambda t: A, A.shape[0])
        out._const = A
        return out

    @property
    def constant_value(self):
        """The matrix for a constant family, else ``None``."""
        return self._const

    def covers(self, a: float, b: float) -> bool:
        return self.t_lo <= min(a, b) and max(a, b) <= self.t_hi

    def __call__(self, t: float) -> np.ndarray:
        if t < self.t_lo or t > self.t_hi:
            raise DomainError(f"t={t} outside matrix domain [{self.t_lo}, {self.t_hi}]")
        out = np.asarray(self.func(t), dtype=float)
        if out.shape != (self.dim, self.dim):
            raise ValueError(f"A({t}) has shape {out.shape}, expected {(self.dim, self.dim)}")
        return out


def natural_grid(order: OrderLike, t_start: float, t_end: float, points: int = 101,
                 spacing: str = "uniform") -> np.ndarray:
    """Times whose clock values are evenly (or geometrically) spaced.

    ``spacing="geometric"`` needs ``t_start > 0`` and spaces ``u`` geometrically.
    """
    order = as_order(order)
    if points < 2 or not t_end > t_start:
        raise ValueError("need t_end > t_start and at least two points")
    ua, ub = order.clock(t_start), order.clock(t_end)
    if spacing == "uniform":
        u = np.linspace(ua, ub, points)
    elif spacing == "geometric":
        if not ua > 0:
            raise ValueError("geometric spacing needs t_start > 0")
        u = np.geomspace(ua, ub, points)
    else:
        raise ValueError(f"unknown spacing {spacing!r}")
    t = np.asarray(order.time(u), dtype=float)
    t[0], t[-1] = t_start, t_end
    return t


def as_matrix_function(A) -> TimeMatrixFunction:
    if isinstance(A, TimeMatrixFunction):
        return A
    if callable(A):
        probe = np.asarray(A(0.0), dtype=float)
        return TimeMatrixFunction(A, probe.shape[0])
    return TimeMatrixFunction.constant(A)


@dataclass(frozen=True)
class IVP:
    """Initial value problem ``T^alpha x = rhs(t, x)``, ``x(t0) = x0``.

    ``box = (a, b)`` and ``lipschitz_L`` describe the rectangle
    ``[t0, t0 + a] x {|x - x0| <= b}`` on which ``rhs`` is bounded by
    ``bound_M`` and Lipschitz in ``x`` with constant ``lipschitz_L``; they
    are needed only by :func:`picard_solve`.
    """

    order: FractionalOrder
    rhs: Callable[[float, np.ndarray], np.ndarray]
    t0: float
    x0: np.ndarray
    lipschitz_L: float | None = None
    box: tuple[float, float] | None = None
    bound_M: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "order", as_order(self.order))
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float)).copy()
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "t0", float(self.t0))
        fx = np.atleast_1d(np.asarray(self.rhs(self.t0, x0), dtype=float))
        if fx.shape != x0.shape:
            raise ValueError(f"rhs returns shape {fx.shape}, x0 has shape {x0.shape}")
        if self.lipschitz_L is not None and not self.lipschitz_L > 0:
            raise ValueError("lipschitz_L must be positive")
        if self.box is not None:
            a, b = self.box
            if not (a > 0 and b > 0):
                raise ValueError("box sides must be positive")

    def f(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.rhs(t, x), dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution: ``x[i]`` is the state at ``t[i]``."""

    t: np.ndarray
    x: np.ndarray
    #: Dense evaluator ``t -> x(t)``; ``None`` if the producer has none.
    dense: Callable[[float], np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __call__(self, t: float) -> np.ndarray:
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        lo, hi = min(self.t[0], self.t[-1]), max(self.t[0], self.t[-1])
        if t < lo - 1e-12 * max(1.0, abs(lo)) or t > hi + 1e-12 * max(1.0, abs(hi)):
            raise DomainError(f"t={t} outside trajectory span [{lo}, {hi}]")
        return self.dense(t)


@dataclass(frozen=True)
class PicardResult:
    trajectory: Trajectory
    #: Realised forward step length.
    delta: float
    iterations: int
    #: Final sup-norm change between consecutive iterates.
    increment: float
    bound_M: float


def _estimate_bound(ivp: IVP, a: float, b: float, samples: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    n = ivp.x0.size
    best = vec_norm(ivp.f(ivp.t0, ivp.x0))
    ts = ivp.t0 + a * rng.random(samples)
    for t in ts:
        d = rng.standard_normal(n)
        d *= b * rng.random() / max(vec_norm(d), 1e-300)
        best = max(best, vec_norm(ivp.f(float(t), ivp.x0 + d)))
    # corners of the box in each coordinate direction
    for t in (ivp.t0, ivp.t0 + a):
        for k in range(n):
            for sgn in (-1.0, 1.0):
                e = np.zeros(n)
                e[k] = sgn * b
                best = max(best, vec_norm(ivp.f(t, ivp.x0 + e)))
    return best


def _forward_step(order: FractionalOrder, t0: float, a: float, b: float, M: float) -> float:
    if M == 0:
        return a
    if t0 > 0:
        return min(a, b / M * t0 ** (1.0 - order.alpha))
    # t0 < 0: largest step keeping M (u(t) - u(t0)) <= b, stopping at the origin
    u_target = order.clock(t0) + b / M
    return min(a, -t0, order.time(min(u_target, 0.0)) - t0)


def picard_solve(ivp: IVP, tol: float = 1e-10, max_iter: int = 200, nodes: int = 33,
                 seed: int = 0, samples: int = 512) -> PicardResult:
    """Picard iteration ``phi_{k+1} = x0 + I^alpha_{t0} f(., phi_k)`` on one step.

    The step is ``[t0, t0 + delta]`` with ``delta = min(a, (b/M) t0**(1-alpha))``.
    Iterates are represented by their values at Chebyshev points of the clock
    interval; each conformable integral is the exact antiderivative of the
    interpolating Chebyshev series.

    Parameters
    ----------
    ivp : IVP
        Must carry ``box`` and ``lipschitz_L``.  When ``bound_M`` is absent
        it is estimated by seeded random sampling of the box.
    tol : float
        Stop once the sup-norm change between iterates is below ``tol``.

    Raises
    ------
    ValueError
        Missing box or Lipschitz constant, ``t0 = 0`` with ``alpha < 1``, or
        ``b >= M/L``.
    ConvergenceError
        ``max_iter`` reached or an iterate left the box.
    """
    if ivp.box is None or ivp.lipschitz_L is None:
        raise ValueError("picard_solve needs ivp.box and ivp.lipschitz_L")
    order = ivp.order
    if ivp.t0 == 0.0 and order.alpha < 1.0:
        raise ValueError("picard_solve: the step bound degenerates at t0 = 0; use ivp_solve")
    a, b = ivp.box
    M = ivp.bound_M
    if M is None:
        M = _estimate_bound(ivp, a, b, samples, seed)
    L = ivp.lipschitz_L
    if M > 0 and not b < M / L:
        raise ValueError(f"picard_solve requires b < M/L (b={b}, M/L={M / L})")
    delta = _forward_step(order, ivp.t0, a, b, M)
    u0 = order.clock(ivp.t0)
    u1 = order.clock(ivp.t0 + delta)
    k = np.arange(nodes)
    # Chebyshev points of the second kind, ascending
    u = u0 + (u1 - u0) * (1.0 - np.cos(np.pi * k / (nodes - 1))) / 2.0
    t = np.asarray(order.time(u), dtype=float)
    t[0] = ivp.t0
    x0 = np.asarray(ivp.x0)
    phi = np.tile(x0, (nodes, 1))
    domain = [u0, u1]
    increment = math.inf
    coef = None
    for it in range(1, max_iter + 1):
        g = np.array([ivp.f(ti, xi) for ti, xi in zip(t, phi)])
        coef = cheb.chebfit(2 * (u - u0) / (u1 - u0) - 1, g, nodes - 1)
        icoef = cheb.chebint(coef, lbnd=-1, scl=(u1 - u0) / 2)
        new = x0 + cheb.chebval(2 * (u - u0) / (u1 - u0) - 1, icoef).T
        increment = float(np.max(np.abs(new - phi).sum(axis=1)))
        phi = new
        excursion = float(np.max(np.abs(phi - x0).sum(axis=1)))
        if excursion > b * (1 + 1e-9):
            raise ConvergenceError(f"Picard iterate left the box: |x - x0| = {excursion} > b = {b}")
        if increment < tol:
            break
    else:
        raise ConvergenceError(f"Picard iteration did not reach tol={tol} in {max_iter} steps "
                               f"(last change {increment:.3g})")
    icoef_final = cheb.chebint(coef, lbnd=-1, scl=(u1 - u0) / 2)

    def dense(s, _c=icoef_final):
        z = 2 * (order.clock(s) - u0) / (u1 - u0) - 1
        return x0 + cheb.chebval(z, _c)

    return PicardResult(Trajectory(t, phi, dense), delta, it, increment, float(M))


def _solve_segment(fun, u_a, u_b, y0, rk_tol, method, u_eval):
    sol = integrate.solve_ivp(fun, (u_a, u_b), y0, method=method, rtol=rk_tol,
                              atol=rk_tol * 1e-3, t_eval=u_eval, dense_output=True)
    if not sol.success:
        raise IntegrationError(f"integration on u in [{u_a}, {u_b}] failed: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationError("solution blew up")
    return sol


def _piecewise(fun, u_start, u_end, y0, rk_tol, method, u_eval):
    """Integrate ``dy/du = fun`` from ``u_start`` to ``u_end``, restarting at ``u = 0``."""
    if u_start * u_end < 0:
        cuts = [u_start, 0.0, u_end]
    else:
        cuts = [u_start, u_end]
    sign = 1.0 if u_end >= u_start else -1.0
    pieces = []
    y = np.asarray(y0, dtype=float)
    for ua, ub in zip(cuts[:-1], cuts[1:]):
        lo, hi = min(ua, ub), max(ua, ub)
        sel = None if u_eval is None else u_eval[(u_eval >= lo) & (u_eval <= hi)]
        if sel is not None and sign < 0:
            sel = sel[::-1]
        sol = _solve_segment(fun, ua, ub, y, rk_tol, method, sel)
        pieces.append(sol)
        y = sol.sol(ub)
    return pieces


def ivp_solve(ivp: IVP, t_end: float, rk_tol: float = 1e-10, method: str = "RK45",
              t_eval=None) -> Trajectory:
    """Solve ``dx/du = f(t(u), x)`` with an adaptive embedded Runge-Kutta pair.

    Integration is split at ``t = 0`` when the interval contains the origin.
    ``t_eval`` selects output times; by default the integrator's own steps
    are returned.  The returned trajectory has a dense evaluator.
    """
    order = ivp.order
    u0, u1 = order.clock(ivp.t0), order.clock(float(t_end))

    def fun(u, x):
        return ivp.f(order.time(u), x)

    u_eval = None if t_eval is None else np.asarray(order.clock(np.asarray(t_eval, float)),
                                                    dtype=float).ravel()
    if u0 == u1:
        ts = np.array([ivp.t0]) if t_eval is None else np.asarray(t_eval, float)
        xs = np.tile(ivp.x0, (ts.size, 1))
        return Trajectory(ts, xs, lambda s: np.array(ivp.x0))
    pieces = _piecewise(fun, u0, u1, ivp.x0, rk_tol, method, u_eval)
    us = np.concatenate([p.t for p in pieces])
    xs = np.concatenate([p.y.T for p in pieces])
    if t_eval is None:
        keep = np.ones(us.size, dtype=bool)
        if len(pieces) == 2:
            keep[pieces[0].t.size] = False  # duplicated origin
        us, xs = us[keep], xs[keep]
    def dense(s):
        us_ = order.clock(s)
        for p in pieces:
            if p.sol.t_min - 1e-15 <= us_ <= p.sol.t_max + 1e-15:
                return p.sol(us_)
        raise DomainError(f"t={s} outside solved span")

    return Trajectory(np.asarray(order.time(us), dtype=float).reshape(-1), xs, dense)


class FundamentalMatrix:
    """Principal fundamental matrix ``X`` of ``T^alpha X = A(t) X``, ``X(grid[0]) = I``.

    Values are stored at the grid nodes together with their clock derivatives
    ``A(t_i) X(t_i)``.  Between nodes ``X`` comes from the integrator's dense
    output in ``u`` when available, else from the cubic Hermite interpolant
    of the node data.  Each node value is LU-factorised once, so evolution operators with
    a node as second argument cost one triangular solve.

    Instances are immutable after construction.
    """

    def __init__(self, order: FractionalOrder, grid: np.ndarray, values: np.ndarray,
                 derivatives: np.ndarray, liouville_drift: float,
                 dense: Callable[[float], np.ndarray] | None = None):
        self.order = order
        self.grid = np.asarray(grid, dtype=float)
        self.u = np.asarray(order.clock(self.grid), dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.dim = self.values.shape[1]
        n = self.dim
        self._spline = interpolate.CubicHermiteSpline(
            self.u, self.values.reshape(-1, n * n), np.asarray(derivatives).reshape(-1, n * n))
        self._dense = dense
        self._lu = [linalg.lu_factor(Xi) for Xi in self.values]
        self.cond = np.array([np.linalg.cond(Xi, 1) for Xi in self.values])
        #: Worst 1-norm condition number over the grid.
        self.cond_report = float(np.max(self.cond))
        #: Largest relative deviation of ``det X`` from the Liouville prediction.
        self.liouville_drift = float(liouville_drift)
        for arr in (self.grid, self.u, self.values, self.cond):
            arr.setflags(write=False)

    @property
    def t0(self) -> float:
        return float(self.grid[0])

    def _node(self, t: float):
        i = int(np.searchsorted(self.grid, t))
        if i < self.grid.size and self.grid[i] == t:
            return i
        return None

    def _check(self, t: float):
        lo, hi = self.grid[0], self.grid[-1]
        slack = 1e-12 * max(1.0, abs(lo), abs(hi))
        if t < lo - slack or t > hi + slack:
            raise DomainError(f"t={t} outside fundamental-matrix coverage [{lo}, {hi}]")

    def __call__(self, t: float) -> np.ndarray:
        self._check(t)
        i = self._node(t)
        if i is not None:
            return self.values[i].copy()
        u = self.order.clock(t)
        flat = self._dense(u) if self._dense is not None else self._spline(u)
        return np.asarray(flat)[: self.dim * self.dim].reshape(self.dim, self.dim)

    def inverse(self, t: float) -> np.ndarray:
        return self.solve_right(np.eye(self.dim), t)

    def solve_right(self, M: np.ndarray, s: float) -> np.ndarray:
        """``M X(s)^{-1}`` without forming the inverse."""
        self._check(s)
        i = self._node(s)
        if i is not None:
            return linalg.lu_solve(self._lu[i], np.asarray(M).T, trans=1).T
        return np.linalg.solve(self(s).T, np.asarray(M).T).T

    def solve_left(self, s: float, v: np.ndarray) -> np.ndarray:
        """``X(s)^{-1} v``."""
        self._check(s)
        i = self._node(s)
        if i is not None:
            return linalg.lu_solve(self._lu[i], v)
        return np.linalg.solve(self(s), v)

    def __repr__(self):
        return (f"FundamentalMatrix(alpha={self.order.alpha}, n={self.dim}, "
                f"grid=[{self.grid[0]}, {self.grid[-1]}] x {self.grid.size}, "
                f"cond={self.cond_report:.3g})")


def fundamental_matrix(order: OrderLike, A, grid, rk_tol: float = 1e-12,
                       method: str = "DOP853", liouville_tol: float = 1e-6) -> FundamentalMatrix:
    """Integrate ``T^alpha X = A(t) X`` from ``X(grid[0]) = I`` over ``grid``.

    The ``n**2`` entries are integrated together with ``log det X`` (whose
    clock derivative is ``tr A``); the two determinant routes are compared
    at every node.

    Raises
    ------
    AccuracyError
        If ``det X`` drifts from ``exp(int tr A du)`` by more than
        ``liouville_tol`` relative.
    """
    order = as_order(order)
    Af = as_matrix_function(A)
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    if not Af.covers(grid[0], grid[-1]):
        raise DomainError(f"grid [{grid[0]}, {grid[-1]}] outside matrix domain "
                          f"[{Af.t_lo}, {Af.t_hi}]")
    n = Af.dim
    u = np.asarray(order.clock(grid), dtype=float)
    const = Af.constant_value

    def fun(uu, y):
        Am = const if const is not None else Af(order.time(uu))
        X = y[:-1].reshape(n, n)
        return np.concatenate([(Am @ X).ravel(), [np.trace(Am)]])

    y0 = np.concatenate([np.eye(n).ravel(), [0.0]])
    pieces = _piecewise(fun, u[0], u[-1], y0, rk_tol, method, u)
    ys = np.concatenate([p.y.T for p in pieces])
    if len(pieces) == 2:
        # the origin is reported by both pieces when it is a grid node
        us = np.concatenate([p.t for p in pieces])
        _, first = np.unique(us, return_index=True)
        ys = ys[np.sort(first)]
    if ys.shape[0] != grid.size:
        raise IntegrationError("integrator did not report every grid node")
    values = ys[:, :-1].reshape(-1, n, n)
    values[0] = np.eye(n)
    logdet = ys[:, -1]
    derivs = np.array([(const if const is not None else Af(t)) @ X
                       for t, X in zip(grid, values)])
    sign, actual = np.linalg.slogdet(values)
    drift = np.abs(np.expm1(actual - logdet))
    drift[sign <= 0] = np.inf
    worst = float(np.max(drift))
    if worst > liouville_tol:
        i = int(np.argmax(drift))
        raise AccuracyError(f"det X(t) deviates from the Liouville prediction by {worst:.3g} "
                            f"at t={grid[i]}")
    def dense(uu):
        for p in pieces:
            if p.sol.t_min <= uu <= p.sol.t_max:
                return p.sol(uu)
        return pieces[0 if uu < pieces[0].sol.t_max else -1].sol(uu)

    return FundamentalMatrix(order, grid, values, derivs, worst, dense)


def evolution(X: FundamentalMatrix, t: float, s: float) -> np.ndarray:
    """Evolution operator ``X(t) X(s)^{-1}``."""
    if t == s:
        X._check(t)
        return np.eye(X.dim)
    return X.solve_right(X(t), s)


def variation_of_constants(X: FundamentalMatrix, forcing, t0: float, x0, t: float,
                           cfg: QuadratureConfig | None = None) -> np.ndarray:
    """Solution of ``T^alpha x = A(t) x + f(t)``, ``x(t0) = x0``, at time ``t``.

    ``x(t) = X(t) X(t0)^{-1} x0 + X(t) int_{t0}^{t} |s|**(alpha-1) X(s)^{-1} f(s) ds``.
    """
    cfg = cfg or DEFAULT_QUADRATURE
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    Xt = X(t)
    hom = Xt @ X.solve_left(t0, x0)
    if t == t0:
        return hom
    integrand = lambda s: X.solve_left(s, np.atleast_1d(np.asarray(forcing(s), float)))  # noqa: E731
    acc = clock_integral(X.order, integrand, float(t0), float(t), cfg, vector=True)
    return hom + Xt @ acc


def liouville_determinant(X: FundamentalMatrix, A, t: float,
                          cfg: QuadratureConfig | None = None) -> tuple[float, float]:
    """``(det X(t0) exp(I^alpha_{t0} tr A (t)), det X(t))`` with ``t0 = X.grid[0]``."""
    cfg = cfg or DEFAULT_QUADRATURE
    Af = as_matrix_function(A)
    X._check(t)
    t0 = X.t0
    integral = clock_integral(X.order, lambda s: float(np.trace(Af(s))), t0, float(t), cfg)
    predicted = float(np.linalg.det(X(t0))) * math.exp(integral)
    return predicted, float(np.linalg.det(X(t)))
