"""Roughness of Mittag-Leffler dichotomies and invariant manifolds.

Both topics rest on the same fixed-point operator.  Given a dichotomy
``(X, P)`` and samples ``g`` on the clock interval ``[u_s, u_H]``, it returns

    X(t) P int_{s}^{t} X(r)^-1 g(r) dr^a  -  X(t) (I-P) int_{t}^{H} X(r)^-1 g(r) dr^a.

The perturbed projection uses ``g = B Y``, the invariant manifold
``g = f(t, x)``, and the nonuniform bounded solutions reuse it verbatim.
Integrals are cumulative Simpson sums in the clock variable; the backward
integral is accumulated from the far end so it never cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

from .calculus import QuadratureConfig
from .dichotomy import (DichotomyEstimate, DichotomyMargins, _verify_core, is_projection,
                        projected_constants)
from .exceptions import AccuracyError, AdmissibilityError, ConvergenceError
from .matrix import col_norm, vec_norm
from .solver import (FundamentalMatrix, TimeMatrixFunction, as_matrix_function,
                     fundamental_matrix)

__all__ = [
    "PerturbationSpec",
    "RoughnessConstants",
    "PerturbedProjection",
    "RoughnessMargins",
    "RoughnessReport",
    "ManifoldPoint",
    "ManifoldChart",
    "roughness_constants",
    "perturbed_projection",
    "verify_roughness",
    "analyze_roughness",
    "required_clock_horizon",
    "manifold_chart",
    "invariant_manifold",
    "unstable_manifold",
]


# ---------------------------------------------------------------------------
# data types

@dataclass(frozen=True)
class PerturbationSpec:
    """Linear perturbation ``B(t)`` with ``eps_perturb >= sup_t |B(t)|``."""

    B: TimeMatrixFunction
    eps_perturb: float

    def __post_init__(self):
        object.__setattr__(self, "B", as_matrix_function(self.B))
        if not (self.eps_perturb >= 0 and math.isfinite(self.eps_perturb)):
            raise ValueError("eps_perturb must be finite and >= 0")

    @classmethod
    def constant(cls, B) -> "PerturbationSpec":
        Bf = TimeMatrixFunction.constant(B)
        return cls(Bf, col_norm(Bf.constant_value))

    @classmethod
    def from_grid(cls, B, t_grid, eps_perturb: float | None = None) -> "PerturbationSpec":
        """Estimate (or check) ``eps_perturb`` as the grid sup of ``|B(t)|``."""
        Bf = as_matrix_function(B)
        sup = max(col_norm(Bf(t)) for t in np.asarray(t_grid, float).ravel())
        if eps_perturb is None:
            eps_perturb = sup
        elif eps_perturb < sup * (1 - 1e-12):
            raise ValueError(f"eps_perturb={eps_perturb} is below the grid sup {sup}")
        return cls(Bf, float(eps_perturb))


@dataclass(frozen=True)
class RoughnessConstants:
    """Closed-form constants of the perturbed dichotomy.

    The ``theorem_*`` fields are the sharper per-block constants
    ``K_i N/(1-2 eta)`` with rates ``lambda_i``; ``K_new``/``lambda_new``
    are the simplified common pair, valid when ``admissible``.
    """

    admissible: bool
    N: float
    beta: float
    eps_perturb: float
    eta: float
    K_new: float
    lambda_new: float
    proj_distance_bound: float
    theta: float
    theorem_admissible: bool
    theorem_K1: float
    theorem_K2: float
    theorem_lambda1: float
    theorem_lambda2: float
    #: bound on ``sup |Y Q Y^-1| + sup |Y (I-Q) Y^-1|``
    mu_sum_bound: float


@dataclass(frozen=True)
class PerturbedProjection:
    """Fixed point ``Y1`` of the roughness operator and ``Q = Y1(0)``."""

    Q: np.ndarray
    t: np.ndarray = field(repr=False)
    Y1: np.ndarray = field(repr=False)
    iterations: int
    #: sup-norm of ``L(Y1) - Y1`` after convergence
    residual: float
    #: bound on the contribution dropped by truncating at the horizon
    tail: float
    theta: float
    horizon: float


@dataclass(frozen=True)
class RoughnessMargins:
    margins: DichotomyMargins
    mu1: float
    mu2: float
    mu_sum_bound: float
    #: sup over the grid of ``|Y Q Y^-1 - X P X^-1|`` (nan without ``X``)
    proj_distance: float
    proj_distance_bound: float

    @property
    def verified(self) -> bool:
        ok = self.margins.verified and self.mu1 + self.mu2 <= self.mu_sum_bound * (1 + 1e-9)
        if not math.isnan(self.proj_distance):
            ok = ok and self.proj_distance <= self.proj_distance_bound * (1 + 1e-9)
        return ok


@dataclass(frozen=True)
class RoughnessReport:
    admissible: bool
    N: float
    beta: float
    eta: float
    K_new: float
    lambda_new: float
    Q: np.ndarray
    proj_distance_bound: float
    verified_margins: RoughnessMargins | None
    constants: RoughnessConstants = field(repr=False)
    projection: PerturbedProjection | None = field(repr=False, default=None)


# ---------------------------------------------------------------------------
# constants

def roughness_constants(N1, N2, beta1, beta2, eps_perturb) -> RoughnessConstants:
    """Constants of the perturbed dichotomy for ``|B| <= eps_perturb``.

    ``N = max(N1, N2)``, ``beta = min(beta1, beta2)``.  The simplified pair
    applies when ``eps_perturb < beta/(5 N^2)``: constant ``25 N^2/9``, rate
    ``beta - 3 eps N`` and projection distance at most
    ``2 eps N^3/(2 beta - 5 eps N - 2 eps N^2)``.  ``eta = eps N^2/(2 beta - 5 eps N)``.
    Quantities whose denominators are not positive are reported as ``nan``.
    Exact when every input is an ``int`` or :class:`fractions.Fraction`.
    """
    for name, v in (("N1", N1), ("N2", N2), ("beta1", beta1), ("beta2", beta2)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if not eps_perturb >= 0:
        raise ValueError("eps_perturb must be >= 0")
    eps = eps_perturb
    if all(isinstance(v, (int, Fraction)) for v in (N1, N2, beta1, beta2, eps)):
        N1, N2, beta1, beta2, eps = (Fraction(v) for v in (N1, N2, beta1, beta2, eps))
    N, beta = max(N1, N2), min(beta1, beta2)
    admissible = bool(eps < beta / (5 * N * N))
    den_eta = 2 * beta - 5 * eps * N
    eta = eps * N * N / den_eta if den_eta > 0 else math.nan
    den_d = 2 * beta - 5 * eps * N - 2 * eps * N * N
    dist = 2 * eps * N ** 3 / den_d if den_d > 0 else math.nan
    pc = projected_constants(N1, N2, beta1, beta2, eps)
    thm_ok = bool(pc.admissible and den_eta > 0 and eta < 0.5)
    nan = math.nan
    if thm_ok:
        scale = N / (1 - 2 * eta)
        tK1, tK2 = pc.K1 * scale, pc.K2 * scale
        tl1, tl2 = pc.lambda1, pc.lambda2
        mu = 2 * N / (1 - 2 * eta)
    else:
        tK1 = tK2 = tl1 = tl2 = mu = nan
    return RoughnessConstants(
        admissible=admissible, N=N, beta=beta, eps_perturb=eps, eta=eta,
        K_new=25 * N * N / 9, lambda_new=beta - 3 * eps * N,
        proj_distance_bound=dist, theta=pc.theta, theorem_admissible=thm_ok,
        theorem_K1=tK1, theorem_K2=tK2, theorem_lambda1=tl1, theorem_lambda2=tl2,
        mu_sum_bound=mu)


# ---------------------------------------------------------------------------
# shared fixed-point machinery

class _SplitKernel:
    """Discretised ``g -> X P int_s^t X^-1 g - X (I-P) int_t^H X^-1 g`` on nodes."""

    def __init__(self, X: FundamentalMatrix, P: np.ndarray, nodes: np.ndarray):
        self.t = np.asarray(nodes, dtype=float)
        self.u = np.asarray(X.order.clock(self.t), dtype=float)
        n = X.dim
        Xs = np.array([X(t) for t in self.t])
        self.XP = Xs @ P
        self.XQ = Xs @ (np.eye(n) - P)
        self.Xinv = np.array([X.inverse(t) for t in self.t])

    def __call__(self, G: np.ndarray) -> np.ndarray:
        H = self.Xinv @ G
        fwd = cumulative_simpson(H, x=self.u, axis=0, initial=0)
        bwd = cumulative_simpson(H[::-1], x=-self.u[::-1], axis=0, initial=0)[::-1]
        return self.XP @ fwd - self.XQ @ bwd


def _sup(G: np.ndarray) -> float:
    if G.ndim == 3:
        return float(np.max(np.abs(G).sum(axis=1)))
    return float(np.max(np.abs(G).sum(axis=-1)))


def _iterate(step: Callable[[np.ndarray], np.ndarray], Y0: np.ndarray, tol: float,
             max_iter: int, what: str, rate_cap: float = 1.0):
    Y = Y0
    increments = []
    for it in range(1, max_iter + 1):
        Y_new = step(Y)
        inc = _sup(Y_new - Y)
        increments.append(inc)
        Y = Y_new
        if not np.all(np.isfinite(Y)):
            raise ConvergenceError(f"{what}: iterate is not finite")
        if inc < tol:
            return Y, it, increments
        if len(increments) >= 4 and increments[-3] > 0:
            rate = (increments[-1] / increments[-3]) ** 0.5
            if rate >= rate_cap and increments[-1] > 1e3 * tol:
                raise ConvergenceError(f"{what}: observed contraction rate {rate:.3g} >= 1")
    raise ConvergenceError(f"{what}: no convergence to {tol:g} in {max_iter} iterations "
                           f"(last change {increments[-1]:.3g})")


def required_clock_horizon(N1, N2, beta1, beta2, coef, tol, weight: float = 1.0) -> float:
    """Clock length after the start node that pushes the truncation tail below ``tol``.

    The tail of the backward integral at the start node is at most
    ``coef N2 sup|Y| / beta2 * exp(-beta2 (u_H - u_s))`` with the a-priori
    bound ``sup|Y| <= weight N1/(1 - theta)``, ``theta = coef (N1/beta1 + N2/beta2)``.
    """
    theta = coef * (N1 / beta1 + N2 / beta2)
    if not theta < 1:
        raise AdmissibilityError(f"theta = {theta:.6g} >= 1: the fixed-point map does not contract")
    lead = coef * N2 * weight * N1 / ((1 - theta) * beta2)
    if lead <= tol:
        return 0.0
    return math.log(lead / tol) / beta2


def _bounded_solution(X: FundamentalMatrix, P: np.ndarray, B: TimeMatrixFunction,
                      coef: float, N1, N2, beta1, beta2, s: float, horizon: float | None,
                      fp_tol: float, max_iter: int, weight: float = 1.0):
    """Fixed point ``U(., s)`` of ``U = X P X(s)^-1 + K(B U)`` on the nodes of ``X`` in ``[s, H]``."""
    theta = coef * (N1 / beta1 + N2 / beta2)
    if not theta < 1:
        raise AdmissibilityError(f"theta = {theta:.6g} >= 1: the fixed-point map does not contract")
    grid = X.grid
    H = grid[-1] if horizon is None else float(horizon)
    nodes = grid[(grid >= s) & (grid <= H)]
    if nodes.size < 3 or nodes[0] != s:
        raise ValueError(f"start time {s} must be a grid node with at least two nodes after it")
    u_s, u_H = X.order.clock(s), X.order.clock(nodes[-1])
    lead = coef * N2 * weight * N1 / ((1 - theta) * beta2)
    tail = lead * math.exp(-beta2 * (u_H - u_s))
    if tail > fp_tol / 10:
        need = required_clock_horizon(N1, N2, beta1, beta2, coef, fp_tol / 10, weight)
        raise ValueError(f"truncation tail {tail:.3g} exceeds fp_tol/10; the grid must reach "
                         f"clock time {u_s + need:.6g} (t = {X.order.time(u_s + need):.6g})")
    K = _SplitKernel(X, P, nodes)
    Bs = np.array([B(t) for t in nodes])
    base = K.XP @ X.inverse(s)
    Y, iters, _ = _iterate(lambda Y: base + K(Bs @ Y), base, fp_tol, max_iter,
                           "bounded-solution iteration")
    residual = _sup(base + K(Bs @ Y) - Y)
    return nodes, Y, iters, residual, tail, theta


def perturbed_projection(X: FundamentalMatrix, est: DichotomyEstimate, pert: PerturbationSpec,
                         horizon: float | None = None, fp_tol: float = 1e-10,
                         cfg: QuadratureConfig | None = None, max_iter: int = 200,
                         check_tol: float = 1e-8) -> PerturbedProjection:
    """Projection ``Q`` of the perturbed dichotomy.

    Iterates

    ``Y(t) = X(t) P + X(t) P I^a_0 X^-1 B Y - X(t) (I-P) int_t^inf X^-1 B Y``

    on the nodes of ``X`` in ``[0, horizon]`` and returns ``Q = Y(0)``.
    ``X`` must be principal at ``t = 0``.  The horizon must make the
    truncation tail (a-priori bound) smaller than ``fp_tol / 10``.

    Raises
    ------
    AdmissibilityError
        ``theta = eps (N1/beta1 + N2/beta2) >= 1``.
    ConvergenceError
        No convergence within ``max_iter``.
    AccuracyError
        ``Q`` fails ``Q^2 = Q``, ``QP = Q``, ``PQ = P`` or the rank check.
    """
    del cfg  # quadrature runs on the fundamental-matrix nodes
    if X.grid[0] != 0.0:
        raise ValueError("perturbed_projection needs a fundamental matrix principal at t = 0")
    P = np.asarray(est.P)
    nodes, Y, iters, residual, tail, theta = _bounded_solution(
        X, P, pert.B, pert.eps_perturb, est.N1, est.N2, est.beta1, est.beta2,
        0.0, horizon, fp_tol, max_iter)
    Q = Y[0].copy()
    scale = max(1.0, col_norm(Q))
    checks = {
        "Q^2 = Q": col_norm(Q @ Q - Q),
        "QP = Q": col_norm(Q @ P - Q),
        "PQ = P": col_norm(P @ Q - P),
    }
    for name, err in checks.items():
        if err > check_tol * scale:
            raise AccuracyError(f"perturbed projection violates {name} (error {err:.3g})")
    if np.linalg.matrix_rank(Q, tol=1e-8) != np.linalg.matrix_rank(P, tol=1e-8):
        raise AccuracyError("rank(Q) differs from rank(P)")
    Q.setflags(write=False)
    return PerturbedProjection(Q, nodes, Y, iters, residual, tail, theta, float(nodes[-1]))


def verify_roughness(Y: FundamentalMatrix, Q, constants: RoughnessConstants, t_grid=None,
                     s_grid=None, form: str = "corollary",
                     X: FundamentalMatrix | None = None, P=None) -> RoughnessMargins:
    """Check the perturbed dichotomy of ``Y`` with projection ``Q``.

    ``form="corollary"`` uses the common pair ``(K_new, lambda_new)``;
    ``form="theorem"`` the per-block ``K_i N/(1-2 eta)`` and ``lambda_i``.
    With ``X`` and ``P`` given, the distance ``|Y Q Y^-1 - X P X^-1|`` is
    also measured along ``t_grid``.
    """
    if form == "corollary":
        if not constants.admissible:
            raise AdmissibilityError("perturbation too large for the simplified constants")
        K1 = K2 = constants.K_new
        l1 = l2 = constants.lambda_new
    elif form == "theorem":
        if not constants.theorem_admissible:
            raise AdmissibilityError("theta >= 1 or eta >= 1/2")
        K1, K2 = constants.theorem_K1, constants.theorem_K2
        l1, l2 = constants.theorem_lambda1, constants.theorem_lambda2
    else:
        raise ValueError(f"unknown form {form!r}")
    Q = np.asarray(Q, dtype=float)
    if not is_projection(Q):
        raise ValueError("Q is not a projection")
    ts = Y.grid if t_grid is None else np.asarray(t_grid, float).ravel()
    ss = ts if s_grid is None else np.asarray(s_grid, float).ravel()
    margins = _verify_core(Y, Q, K1, K2, l1, l2, 0.0, ts, ss)
    n = Y.dim
    mu1 = mu2 = 0.0
    dist = math.nan if X is None else 0.0
    for t in ts:
        YQ = Y(t) @ Q
        PQt = Y.solve_right(YQ, t)
        mu1 = max(mu1, col_norm(PQt))
        mu2 = max(mu2, col_norm(np.eye(n) - PQt))
        if X is not None:
            PXt = X.solve_right(X(t) @ np.asarray(P, float), t)
            dist = max(dist, col_norm(PQt - PXt))
    mu_bound = constants.mu_sum_bound
    if math.isnan(mu_bound):
        mu_bound = math.inf
    return RoughnessMargins(margins, mu1, mu2, mu_bound, dist, constants.proj_distance_bound)


def analyze_roughness(X: FundamentalMatrix, Y: FundamentalMatrix, est: DichotomyEstimate,
                      pert: PerturbationSpec, t_grid=None, s_grid=None, fp_tol: float = 1e-10,
                      horizon: float | None = None, form: str = "corollary") -> RoughnessReport:
    """Constants, perturbed projection and verification in one report."""
    c = roughness_constants(est.N1, est.N2, est.beta1, est.beta2, pert.eps_perturb)
    proj = perturbed_projection(X, est, pert, horizon=horizon, fp_tol=fp_tol)
    usable = c.admissible if form == "corollary" else c.theorem_admissible
    margins = None
    if usable:
        margins = verify_roughness(Y, proj.Q, c, t_grid, s_grid, form=form, X=X, P=est.P)
    return RoughnessReport(c.admissible, c.N, c.beta, c.eta, c.K_new, c.lambda_new, proj.Q,
                           c.proj_distance_bound, margins, c, proj)


# ---------------------------------------------------------------------------
# invariant manifolds

@dataclass(frozen=True)
class ManifoldPoint:
    """One point ``h(P x0)`` of the stable manifold and its trajectory."""

    base: np.ndarray
    h: np.ndarray
    t: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    iterations: int
    tail: float
    #: ``|(I-P) h| / |P x0|`` (0 for ``P x0 = 0``)
    tangency_ratio: float
    #: ``(2 N1 N2 / beta2) zeta(2 N1 |P x0|)``
    tangency_bound: float
    #: min over the trajectory of ``M E(g1,t0)/E(g1,t) |x(t0)| / |x(t)|``
    decay_slack: float


@dataclass(frozen=True)
class ManifoldChart:
    """Parametrisation of the stable manifold near the origin.

    ``zeta`` is the modulus of the nonlinearity: ``|f(t,x) - f(t,y)| <=
    zeta(sigma) |x - y|`` for ``|x|, |y| <= sigma``.
    """

    X: FundamentalMatrix = field(repr=False)
    est: DichotomyEstimate = field(repr=False)
    f: Callable = field(repr=False)
    zeta: Callable[[float], float] = field(repr=False)
    delta: float
    t0: float
    K: float
    lam: float
    gamma1: float
    gamma2: float
    M: float

    @property
    def P(self) -> np.ndarray:
        return self.est.P

    @property
    def radius(self) -> float:
        return self.delta / (2 * self.est.N1)

    def h(self, x0, fp_tol: float = 1e-12, max_iter: int = 200) -> ManifoldPoint:
        return _manifold_point(self, x0, fp_tol, max_iter)

    def lipschitz_sample(self, points) -> float:
        """Largest sampled ratio ``|h(a) - h(b)| / |P a - P b|``."""
        hs = [(np.asarray(self.P) @ np.asarray(p, float), self.h(p).h) for p in points]
        best = 0.0
        for i in range(len(hs)):
            for j in range(i + 1, len(hs)):
                d = vec_norm(hs[i][0] - hs[j][0])
                if d > 0:
                    best = max(best, vec_norm(hs[i][1] - hs[j][1]) / d)
        return best


def _gammas(N1, N2, b1, b2, lam):
    c = b1 * b2 / (N1 * b2 + N2 * b1)
    return lam - N1 * c, lam - N2 * c


def manifold_chart(X: FundamentalMatrix, est: DichotomyEstimate, f, zeta, delta: float,
                   t0: float = 0.0, K: float | None = None, lam: float | None = None,
                   commute_tol: float = 1e-8) -> ManifoldChart:
    """Validate the manifold hypotheses and return a chart.

    ``K`` and ``lam`` bound the stable evolution,
    ``|X(t) P X(s)^-1| <= K E(lam,s)/E(lam,t)``; they default to ``N1`` and
    ``beta1``.  ``delta`` must satisfy

    * ``(N1/beta1 + N2/beta2) zeta(delta) < 1/2``,
    * ``N1 < (beta2 + lam - 4 N1 N2 zeta(delta)) (N1/beta1 + N2/beta2)``,

    and ``P`` must commute with ``X(t)`` on the grid.
    """
    N1, N2, b1, b2 = est.N1, est.N2, est.beta1, est.beta2
    K = N1 if K is None else float(K)
    lam = b1 if lam is None else float(lam)
    if zeta(0.0) != 0:
        raise ValueError("zeta(0) must be 0")
    z = float(zeta(delta))
    s = N1 / b1 + N2 / b2
    if not s * z < 0.5:
        raise AdmissibilityError(f"(N1/beta1 + N2/beta2) zeta(delta) = {s * z:.6g} >= 1/2")
    if not N1 < (b2 + lam - 4 * N1 * N2 * z) * s:
        raise AdmissibilityError("N1 < (beta2 + lam - 4 N1 N2 zeta(delta))(N1/beta1 + N2/beta2) fails")
    P = np.asarray(est.P)
    for t in X.grid:
        Xt = X(t)
        if col_norm(Xt @ P - P @ Xt) > commute_tol * max(1.0, col_norm(Xt)):
            raise ValueError(f"P does not commute with X(t) at t={t}")
    g1, g2 = _gammas(N1, N2, b1, b2, lam)
    if not g1 > 0:
        raise AdmissibilityError(f"decay rate gamma1 = {g1:.6g} is not positive")
    return ManifoldChart(X, est, f, zeta, float(delta), float(t0), K, lam, g1, g2,
                         2 * K * col_norm(P))


def _manifold_point(chart: ManifoldChart, x0, fp_tol: float, max_iter: int) -> ManifoldPoint:
    X, est = chart.X, chart.est
    P = np.asarray(est.P)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if vec_norm(x0) > chart.radius * (1 + 1e-12):
        raise AdmissibilityError(f"|x0| = {vec_norm(x0):.6g} exceeds delta/(2 N1) = {chart.radius:.6g}")
    px0 = P @ x0
    nodes = X.grid[X.grid >= chart.t0]
    if nodes.size < 3 or nodes[0] != chart.t0:
        raise ValueError("t0 must be a grid node with at least two nodes after it")
    u = np.asarray(X.order.clock(nodes), dtype=float)
    # tail from the decay estimate of the fixed point
    z = float(chart.zeta(chart.delta))
    rate = est.beta2 + chart.gamma1
    tail = est.N2 * z * chart.M * vec_norm(px0) * math.exp(-rate * (u[-1] - u[0])) / rate
    if tail > fp_tol:
        raise ValueError(f"manifold truncation tail {tail:.3g} exceeds fp_tol; extend the grid")
    Kern = _SplitKernel(X, P, nodes)
    base = Kern.XP @ X.solve_left(chart.t0, px0)
    f = chart.f

    def step(x):
        g = np.array([np.atleast_1d(np.asarray(f(t, xi), dtype=float)) for t, xi in zip(nodes, x)])
        return base + Kern(g[:, :, None])[:, :, 0]

    x, iters, _ = _iterate(step, base, fp_tol, max_iter, "manifold contraction")
    if float(np.max(np.abs(x).sum(axis=1))) > chart.delta * (1 + 1e-9):
        raise ConvergenceError("manifold fixed point left the delta-ball")
    h = x[0].copy()
    npx = vec_norm(px0)
    ratio = vec_norm((np.eye(X.dim) - P) @ h) / npx if npx > 0 else 0.0
    bound = 2 * est.N1 * est.N2 / est.beta2 * float(chart.zeta(2 * est.N1 * npx))
    norms = np.abs(x).sum(axis=1)
    allowed = chart.M * np.exp(-chart.gamma1 * (u - u[0])) * vec_norm(h)
    with np.errstate(divide="ignore", invalid="ignore"):
        slack = np.where(norms > 0, allowed / np.where(norms > 0, norms, 1), np.inf)
    return ManifoldPoint(px0, h, nodes, x, iters, tail, ratio, bound, float(np.min(slack)))


def invariant_manifold(X: FundamentalMatrix, est: DichotomyEstimate, f, zeta, delta: float,
                       t0: float, x0, fp_tol: float = 1e-12, K: float | None = None,
                       lam: float | None = None, max_iter: int = 200) -> ManifoldPoint:
    """Stable-manifold point over ``P x0`` for ``T^a x = A(t) x + f(t, x)``.

    Iterates

    ``x(t) = X(t) P X(t0)^-1 x0 + X(t) P I^a_{t0} X^-1 f(., x) - X(t)(I-P) int_t^inf X^-1 f(., x)``

    to its fixed point and reports ``h(P x0) = x(t0)``, the tangency ratio
    against its bound and the decay slack with ``M = 2 K |P|`` and rate
    ``gamma1 = lam - N1 beta1 beta2/(N1 beta2 + N2 beta1)``.
    """
    chart = manifold_chart(X, est, f, zeta, delta, t0, K, lam)
    return chart.h(x0, fp_tol, max_iter)


def reflect_system(A, f=None):
    """Time reflection ``t -> -t``: returns ``(A~, f~)`` with ``A~(s) = -A(-s)``, ``f~(s,x) = -f(-s,x)``."""
    Af = as_matrix_function(A)
    if Af.constant_value is not None:
        At = TimeMatrixFunction.constant(-Af.constant_value)
    else:
        At = TimeMatrixFunction(lambda s: -Af(-s), Af.dim, -Af.t_hi, -Af.t_lo)
    ft = None if f is None else (lambda s, x: -np.asarray(f(-s, x), dtype=float))
    return At, ft


def unstable_manifold(order, A, est: DichotomyEstimate, f, zeta, delta: float, t0: float,
                      x0, grid_reflected, fp_tol: float = 1e-12, K: float | None = None,
                      lam: float | None = None, rk_tol: float = 1e-12) -> ManifoldPoint:
    """Unstable-manifold point for ``t <= t0 <= 0`` via the reflection ``t -> -t``.

    The reflected system has stable projection ``I - P`` and the two blocks
    of the dichotomy exchange roles.  ``grid_reflected`` is a grid in the
    reflected time starting at ``-t0``.  ``K`` and ``lam`` default to ``N2``
    and ``beta2``.  The returned trajectory is in the original time
    (``t`` decreasing from ``t0``).
    """
    if t0 > 0:
        raise ValueError("the unstable chart is built for t0 <= 0")
    At, ft = reflect_system(A, f)
    grid_reflected = np.asarray(grid_reflected, float)
    if grid_reflected[0] != -t0:
        raise ValueError("grid_reflected must start at -t0")
    Xr = fundamental_matrix(order, At, grid_reflected, rk_tol=rk_tol)
    n = Xr.dim
    est_r = DichotomyEstimate(np.eye(n) - np.asarray(est.P), est.N2, est.N1, est.beta2,
                              est.beta1)
    pt = invariant_manifold(Xr, est_r, ft, zeta, delta, -t0, x0, fp_tol,
                            K=est.N2 if K is None else K, lam=est.beta2 if lam is None else lam)
    return ManifoldPoint(pt.base, pt.h, -pt.t, pt.x, pt.iterations, pt.tail, pt.tangency_ratio,
                         pt.tangency_bound, pt.decay_slack)

