"""Stability classification and Mittag-Leffler dichotomies.

A fundamental matrix ``X`` has a Mittag-Leffler dichotomy with projection
``P`` when, in the column-sum norm,

* ``|X(t) P X(s)^-1|      <= N1 E(beta1, s) / E(beta1, t)``  for ``t >= s``,
* ``|X(t) (I-P) X(s)^-1|  <= N2 E(beta2, t) / E(beta2, s)``  for ``s >= t``.

In the natural clock both right-hand sides are plain exponentials in the
clock gap, which is how everything below computes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .calculus import (DEFAULT_QUADRATURE, OrderLike, QuadratureConfig, ScalarSignal,
                       as_order, as_signal, clock_integral)
from .matrix import col_norm
from .solver import FundamentalMatrix

__all__ = [
    "DichotomyEstimate",
    "DichotomyMargins",
    "StabilityReport",
    "ProjectedConstants",
    "InequalityCheck",
    "classify_stability",
    "verify_dichotomy",
    "estimate_dichotomy",
    "projected_constants",
    "projected_inequality_check",
    "reflected_time",
    "reflected_signal",
    "projected_corollary_check",
    "is_projection",
]

#: Multiplicative slack accepted as ``>= 1`` in verification (rounding only).
SLACK_TOL = 1e-9
#: Relative inflation applied to fitted constants so they cover every sample.
_INFLATE = 1.0 + 1e-12


def is_projection(P, tol: float = 1e-8) -> bool:
    P = np.asarray(P, dtype=float)
    return col_norm(P @ P - P) <= tol * max(1.0, col_norm(P) ** 2)


@dataclass(frozen=True)
class DichotomyMargins:
    """Outcome of checking both dichotomy inequalities on a grid.

    ``stable_rows`` and ``unstable_rows`` have columns
    ``t, s, value, bound, slack``; slack is ``bound / value`` and infinite
    where the value vanishes.
    """

    stable_slack: float
    stable_argmin: tuple[float, float]
    unstable_slack: float
    unstable_argmin: tuple[float, float]
    stable_rows: np.ndarray = field(repr=False)
    unstable_rows: np.ndarray = field(repr=False)

    @property
    def min_slack(self) -> float:
        return min(self.stable_slack, self.unstable_slack)

    @property
    def verified(self) -> bool:
        return self.min_slack >= 1.0 - SLACK_TOL

    @property
    def rows(self) -> np.ndarray:
        return np.vstack([self.stable_rows, self.unstable_rows])


@dataclass(frozen=True)
class DichotomyEstimate:
    """Projection and constants of a (possibly nonuniform) dichotomy."""

    P: np.ndarray
    N1: float
    N2: float
    beta1: float
    beta2: float
    #: Nonuniform exponent; zero for an ordinary dichotomy.
    eps_nonuniform: float = 0.0
    margins: DichotomyMargins | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        P = np.array(self.P, dtype=float, ndmin=2)
        if not is_projection(P):
            raise ValueError("P is not a projection (P @ P != P)")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        for name in ("N1", "N2", "beta1", "beta2"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not self.eps_nonuniform >= 0:
            raise ValueError("eps_nonuniform must be >= 0")


@dataclass(frozen=True)
class StabilityReport:
    """Grid evidence for the stability notions of a linear system.

    The boolean flags are finite-grid heuristics; the numbers they are based
    on are reported alongside.
    """

    #: sup |X(t)| over the grid
    sup_norm: float
    #: sup over t >= s of |X(t) X(s)^-1|
    sup_evolution: float
    #: |X(t_end)|
    final_norm: float
    #: fitted pair with |X(t) X(s)^-1| <= K E(lam, s)/E(lam, t) on the grid
    K: float
    lam: float
    bounded: bool
    uniformly_stable: bool
    asymptotically_stable: bool
    ml_stable: bool


@dataclass(frozen=True)
class ProjectedConstants:
    theta: object
    K1: object
    K2: object
    lambda1: object
    lambda2: object
    #: ``theta < 1``
    admissible: bool
    #: both rates positive (only meaningful when admissible)
    positive_rates: bool


@dataclass(frozen=True)
class InequalityCheck:
    """Hypothesis and conclusion margins of a projected integral inequality.

    ``rows`` columns: ``t, u(t), hypothesis_rhs, conclusion_bound``.
    """

    hypothesis_holds: bool
    conclusion_holds: bool
    hypothesis_slack: float
    conclusion_slack: float
    tail: float
    constants: ProjectedConstants
    rows: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# shared cores (also used by the nonuniform module)

def _evolution_blocks(X: FundamentalMatrix, P, ts, ss):
    """Norms of ``X(t) P X(s)^-1`` and ``X(t) (I-P) X(s)^-1`` over ``ts x ss``.

    ``P`` is a constant matrix or a callable ``P(s)``; in the latter case the
    blocks are ``T(t,s) P(s)`` and ``T(t,s) (I - P(s))``.
    """
    n = X.dim
    inv = [X.inverse(s) for s in ss]
    Xt = [X(t) for t in ts]
    stable = np.empty((len(ts), len(ss)))
    unstable = np.empty_like(stable)
    if callable(P):
        for j, s in enumerate(ss):
            Ps = np.asarray(P(s), dtype=float)
            left = inv[j] @ Ps
            right = inv[j] @ (np.eye(n) - Ps)
            for i in range(len(ts)):
                stable[i, j] = col_norm(Xt[i] @ left)
                unstable[i, j] = col_norm(Xt[i] @ right)
    else:
        P = np.asarray(P, dtype=float)
        Q = np.eye(n) - P
        for i in range(len(ts)):
            a, b = Xt[i] @ P, Xt[i] @ Q
            for j in range(len(ss)):
                stable[i, j] = col_norm(a @ inv[j])
                unstable[i, j] = col_norm(b @ inv[j])
    return stable, unstable


def _rows(ts, ss, values, mask, N, beta, gap, weight):
    ti, sj = np.nonzero(mask)
    v = values[ti, sj]
    bound = N * np.exp(-beta * gap[ti, sj]) * weight[ti, sj]
    with np.errstate(divide="ignore"):
        slack = np.where(v > 0, bound / np.where(v > 0, v, 1.0), np.inf)
    return np.column_stack([np.asarray(ts)[ti], np.asarray(ss)[sj], v, bound, slack])


def _summarise(rows):
    if rows.shape[0] == 0:
        return math.inf, (math.nan, math.nan)
    k = int(np.argmin(rows[:, 4]))
    return float(rows[k, 4]), (float(rows[k, 0]), float(rows[k, 1]))


def _pair_geometry(X: FundamentalMatrix, ts, ss, eps: float):
    ut = np.asarray(X.order.clock(np.asarray(ts, float)), dtype=float).reshape(-1)
    us = np.asarray(X.order.clock(np.asarray(ss, float)), dtype=float).reshape(-1)
    gap = ut[:, None] - us[None, :]
    us_abs = np.asarray(X.order.clock(np.abs(np.asarray(ss, float))), dtype=float).reshape(-1)
    weight = np.broadcast_to(np.exp(eps * us_abs)[None, :], gap.shape)
    return gap, weight


def _verify_core(X, P, N1, N2, beta1, beta2, eps, ts, ss) -> DichotomyMargins:
    stable, unstable = _evolution_blocks(X, P, ts, ss)
    gap, weight = _pair_geometry(X, ts, ss, eps)
    srows = _rows(ts, ss, stable, gap >= 0, N1, beta1, gap, weight)
    urows = _rows(ts, ss, unstable, gap <= 0, N2, beta2, -gap, weight)
    s_slack, s_arg = _summarise(srows)
    u_slack, u_arg = _summarise(urows)
    return DichotomyMargins(s_slack, s_arg, u_slack, u_arg, srows, urows)


def _fit_block(values, gap, weight, mask):
    """Least-squares rate from log-values, then sup-inflated constant.

    Returns ``(N, beta)`` or ``None`` when every sample vanishes.
    """
    sel = mask & (values > 0)
    if not np.any(sel):
        return None
    v, g, w = values[sel], gap[sel], weight[sel]
    y = np.log(v) - np.log(w)
    if np.ptp(g) <= 0:
        raise ValueError("need pairs with at least two distinct clock gaps to fit a rate")
    slope, _ = np.polyfit(g, y, 1)
    beta = -float(slope)
    N = float(np.max(v / (w * np.exp(-beta * g)))) * _INFLATE
    return N, beta


def _estimate_core(X, P, ts, ss, eps):
    stable, unstable = _evolution_blocks(X, P, ts, ss)
    gap, weight = _pair_geometry(X, ts, ss, eps)
    first = _fit_block(stable, gap, weight, gap >= 0)
    second = _fit_block(unstable, -gap, weight, gap <= 0)
    if first is None:
        raise ValueError("stable block X(t) P X(s)^-1 vanishes on the grid; nothing to fit")
    if second is None:
        # empty unstable part: the second inequality is vacuous
        second = first
    return first, second


# ---------------------------------------------------------------------------

def _grids(X, t_grid, s_grid):
    ts = X.grid if t_grid is None else np.asarray(t_grid, dtype=float).ravel()
    ss = ts if s_grid is None else np.asarray(s_grid, dtype=float).ravel()
    return ts, ss


def classify_stability(X: FundamentalMatrix, t_grid=None, s_grid=None,
                       growth_factor: float = 1.01, decay_ratio: float = 1e-2) -> StabilityReport:
    """Finite-grid evidence for boundedness, uniform, asymptotic and ML stability.

    * bounded: ``sup |X|`` on the second half of the clock range is at most
      ``growth_factor`` times the sup on the first half;
    * uniformly stable: the same test applied to ``|X(t) X(s)^-1|`` grouped
      by clock gap;
    * asymptotically stable: ``|X(t_end)| < decay_ratio * sup |X|``;
    * ML stable: asymptotically stable and the fitted rate is positive.
    """
    ts, ss = _grids(X, t_grid, s_grid)
    norms = np.array([col_norm(X(t)) for t in ts])
    u = np.asarray(X.order.clock(ts), dtype=float)
    half = u >= 0.5 * (u[0] + u[-1])
    early = float(np.max(norms[~half])) if np.any(~half) else float(norms[0])
    late = float(np.max(norms[half]))
    bounded = late <= growth_factor * early

    full, _ = _evolution_blocks(X, np.eye(X.dim), ts, ss)
    gap, weight = _pair_geometry(X, ts, ss, 0.0)
    fwd = gap >= 0
    sup_ev = float(np.max(full[fwd]))
    gmax = float(np.max(gap[fwd]))
    near = fwd & (gap <= 0.5 * gmax)
    far = fwd & (gap > 0.5 * gmax)
    uniformly = bool(np.any(far)) and float(np.max(full[far])) <= growth_factor * float(
        np.max(full[near]))

    fit = _fit_block(full, gap, weight, fwd)
    K, lam = fit if fit is not None else (math.inf, -math.inf)
    final = float(norms[-1])
    asym = final < decay_ratio * float(np.max(norms))
    return StabilityReport(
        sup_norm=float(np.max(norms)), sup_evolution=sup_ev, final_norm=final,
        K=K, lam=lam, bounded=bool(bounded), uniformly_stable=bool(uniformly and bounded),
        asymptotically_stable=bool(asym), ml_stable=bool(asym and lam > 0))


def verify_dichotomy(X: FundamentalMatrix, est: DichotomyEstimate, t_grid=None,
                     s_grid=None) -> DichotomyMargins:
    """Check both dichotomy inequalities for every grid pair.

    The first inequality is tested on pairs with ``t >= s``, the second on
    pairs with ``s >= t`` (the diagonal belongs to both).
    """
    ts, ss = _grids(X, t_grid, s_grid)
    return _verify_core(X, est.P, est.N1, est.N2, est.beta1, est.beta2,
                        est.eps_nonuniform, ts, ss)


def estimate_dichotomy(X: FundamentalMatrix, P, t_grid=None, s_grid=None) -> DichotomyEstimate:
    """Fit dichotomy constants for projection ``P`` from grid samples.

    The rate of each block is the least-squares slope of the log-norm against
    the clock gap; the constant is then raised until every sample lies under
    the bound, so :func:`verify_dichotomy` accepts the estimate on the same
    grid.  An identically vanishing unstable block (``P = I``) makes the
    second inequality vacuous; its constants are then copied from the first.

    Raises
    ------
    ValueError
        If ``P`` is not a projection, the stable block vanishes, or a fitted
        rate is not positive.
    """
    P = np.asarray(P, dtype=float)
    if not is_projection(P):
        raise ValueError("P is not a projection (P @ P != P)")
    ts, ss = _grids(X, t_grid, s_grid)
    (N1, b1), (N2, b2) = _estimate_core(X, P, ts, ss, 0.0)
    if not (b1 > 0 and b2 > 0):
        raise ValueError(f"fitted rates are not positive (beta1={b1:.6g}, beta2={b2:.6g}); "
                         "the data shows no dichotomy for this P")
    est = DichotomyEstimate(P, N1, N2, b1, b2)
    margins = verify_dichotomy(X, est, ts, ss)
    return DichotomyEstimate(P, N1, N2, b1, b2, margins=margins)


def projected_constants(N1, N2, beta1, beta2, eps) -> ProjectedConstants:
    """Constants of the projected integral inequality.

    ``theta = eps (N1/beta1 + N2/beta2)``, ``K_i = N_i/(1-theta)``,
    ``lambda_i = beta_i - eps N_i/(1-theta)``.  Exact when every input is an
    ``int`` or :class:`fractions.Fraction`.  When ``theta >= 1`` the result is
    flagged inadmissible and ``K_i``, ``lambda_i`` are ``None``.
    """
    for name, v in (("N1", N1), ("N2", N2), ("beta1", beta1), ("beta2", beta2)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if not eps >= 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if all(isinstance(v, (int, Fraction)) for v in (N1, N2, beta1, beta2, eps)):
        N1, N2, beta1, beta2, eps = (Fraction(v) for v in (N1, N2, beta1, beta2, eps))
    theta = eps * (N1 / beta1 + N2 / beta2)
    if not theta < 1:
        return ProjectedConstants(theta, None, None, None, None, False, False)
    K1, K2 = N1 / (1 - theta), N2 / (1 - theta)
    lam1, lam2 = beta1 - eps * K1, beta2 - eps * K2
    return ProjectedConstants(theta, K1, K2, lam1, lam2, True, bool(lam1 > 0 and lam2 > 0))


def _sup_signal(u, lo, hi, samples=513):
    return float(max(u(t) for t in np.linspace(lo, hi, samples)))


def projected_inequality_check(order: OrderLike, N1, N2, beta1, beta2, eps, u, t0: float,
                               t_grid, cfg: QuadratureConfig | None = None,
                               horizon: float | None = None, tail_sup: float | None = None,
                               tail_tol: float = 1e-9) -> InequalityCheck:
    """Evaluate the projected integral inequality and its conclusion on a grid.

    The hypothesis right-hand side at ``t >= t0`` is

    ``N1 E(b1,t0)/E(b1,t) + eps N1 int_{t0}^{t} E(b1,s)/E(b1,t) u(s) ds^a
    + eps N2 int_{t}^{inf} E(b2,t)/E(b2,s) u(s) ds^a``

    and the conclusion is ``u(t) <= K1 E(l1,t0)/E(l1,t)``.  The improper
    integral is cut at ``horizon``; the dropped part is at most
    ``eps N2 sup(u) / b2 * E(b2,t)/E(b2,horizon)``, with ``sup(u)`` beyond the
    horizon taken as ``tail_sup`` (default: sampled sup on ``[t0, horizon]``).
    The truncated right side is a lower bound for the true one, so a
    verified hypothesis is conservative.

    Raises
    ------
    ValueError
        If the tail bound exceeds ``tail_tol`` or the constants are
        inadmissible.
    """
    order = as_order(order)
    cfg = cfg or DEFAULT_QUADRATURE
    consts = projected_constants(N1, N2, beta1, beta2, eps)
    if not consts.admissible:
        raise ValueError(f"theta = {float(consts.theta):.6g} >= 1; the inequality gives nothing")
    N1, N2, b1, b2, eps = (float(v) for v in (N1, N2, beta1, beta2, eps))
    u = as_signal(u)
    ts = np.asarray(t_grid, dtype=float).ravel()
    if np.any(ts < t0):
        raise ValueError("grid points must satisfy t >= t0")
    u0 = order.clock(t0)
    t_max = float(np.max(ts))
    if horizon is None:
        sup = _sup_signal(u, t0, t_max) if tail_sup is None else tail_sup
        need = 0.0
        if eps * N2 * sup > 0:
            need = max(0.0, math.log(eps * N2 * sup / (b2 * tail_tol)) / b2)
        horizon = float(order.time(order.clock(t_max) + need))
        if u.t_hi < horizon:
            horizon = u.t_hi
    if horizon < t_max:
        raise ValueError("horizon must not precede the grid")
    if tail_sup is None:
        tail_sup = _sup_signal(u, t0, horizon)
    uH = order.clock(horizon)
    tail = eps * N2 * tail_sup / b2 * math.exp(-b2 * (uH - order.clock(t_max)))
    if tail > tail_tol:
        raise ValueError(f"truncation tail {tail:.3g} exceeds {tail_tol:.3g}; "
                         "extend the signal domain or the horizon")
    rows = []
    for t in ts:
        ut = order.clock(t)
        past = clock_integral(order, lambda s: math.exp(-b1 * (ut - order.clock(s))) * u(s),
                              t0, t, cfg) if eps > 0 else 0.0
        future = clock_integral(order, lambda s: math.exp(-b2 * (order.clock(s) - ut)) * u(s),
                                t, horizon, cfg) if eps > 0 else 0.0
        rhs = N1 * math.exp(-b1 * (ut - u0)) + eps * N1 * past + eps * N2 * future
        concl = float(consts.K1) * math.exp(-float(consts.lambda1) * (ut - u0))
        rows.append((t, float(u(t)), rhs, concl))
    rows = np.array(rows)
    with np.errstate(divide="ignore"):
        hyp = np.where(rows[:, 1] > 0, rows[:, 2] / np.where(rows[:, 1] > 0, rows[:, 1], 1), np.inf)
        con = np.where(rows[:, 1] > 0, rows[:, 3] / np.where(rows[:, 1] > 0, rows[:, 1], 1), np.inf)
    hs, cs = float(np.min(hyp)), float(np.min(con))
    return InequalityCheck(hs >= 1 - SLACK_TOL, cs >= 1 - SLACK_TOL, hs, cs, tail, consts, rows)


def reflected_time(order: OrderLike, t, s: float, t0: float):
    """``(s^a - t^a + t0^a)^(1/a)``: reverses ``[t0, s]`` in the natural clock."""
    order = as_order(order)
    return order.time(order.clock(s) - np.asarray(order.clock(t)) + order.clock(t0))


def reflected_signal(order: OrderLike, u, s: float, t0: float) -> ScalarSignal:
    """``v(t1) = u(reflected_time(t1))`` on ``[t0, s]``, extended by zero beyond ``s``."""
    order = as_order(order)
    u = as_signal(u)

    def v(t1):
        if t1 > s:
            return 0.0
        return u(float(np.clip(reflected_time(order, t1, s, t0), t0, s)))

    return ScalarSignal(v, t0, math.inf)


def projected_corollary_check(order: OrderLike, N1, N2, beta1, beta2, eps, u, t0: float,
                              s: float, t_grid, cfg: QuadratureConfig | None = None
                              ) -> InequalityCheck:
    """Backward-in-``s`` companion of :func:`projected_inequality_check`.

    For ``s >= t >= t0`` the hypothesis right-hand side is

    ``N2 E(b2,t)/E(b2,s) + eps N1 int_{t0}^{t} E(b1,r)/E(b1,t) u(r) dr^a
    + eps N2 int_{t}^{s} E(b2,t)/E(b2,r) u(r) dr^a``

    and the conclusion ``u(t) <= K2 E(l2,t)/E(l2,s)``.  The check is done by
    reflecting ``[t0, s]`` in the clock and applying the forward check to the
    reflected signal with the two blocks exchanged; rows are reported in the
    original time.
    """
    order = as_order(order)
    ts = np.asarray(t_grid, dtype=float).ravel()
    if np.any(ts < t0) or np.any(ts > s):
        raise ValueError("grid points must lie in [t0, s]")
    v = reflected_signal(order, u, s, t0)
    t1 = np.sort(np.asarray(reflected_time(order, ts, s, t0), dtype=float).reshape(-1))
    t1 = np.clip(t1, t0, s)
    out = projected_inequality_check(order, N2, N1, beta2, beta1, eps, v, t0, t1, cfg,
                                     horizon=s, tail_sup=0.0)
    rows = out.rows.copy()
    rows[:, 0] = np.asarray(reflected_time(order, rows[:, 0], s, t0), dtype=float)
    rows = rows[np.argsort(rows[:, 0])]
    c = out.constants
    swapped = ProjectedConstants(c.theta, c.K2, c.K1, c.lambda2, c.lambda1, c.admissible,
                                 c.positive_rates)
    return InequalityCheck(out.hypothesis_holds, out.conclusion_holds, out.hypothesis_slack,
                           out.conclusion_slack, out.tail, swapped, rows)

