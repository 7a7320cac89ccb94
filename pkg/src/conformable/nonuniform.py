"""Nonuniform Mittag-Leffler dichotomies and their roughness.

The evolution ``T(t,s) = X(t) X(s)^-1`` has a nonuniform dichotomy with
projections ``P(t)`` when

* ``|T(t,s) P(s)|      <= N1 E(beta1,s)/E(beta1,t) E(eps,|s|)``  for ``t >= s``,
* ``|T(t,s) (I-P(s))|  <= N2 E(beta2,t)/E(beta2,s) E(eps,|s|)``  for ``s >= t``.

The extra exponent is called ``eps_nonuniform`` here, to keep it apart from
the perturbation size ``eps_perturb`` of :mod:`conformable.roughness`.  With
``eps_nonuniform = 0`` and a constant projection every routine below runs
the same code path as its uniform counterpart, so the results coincide bit
for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .calculus import OrderLike, as_order
from .dichotomy import (DichotomyEstimate, DichotomyMargins, ProjectedConstants, _evolution_blocks,
                        _fit_block, _grids, _pair_geometry, _verify_core, is_projection,
                        projected_constants)
from .exceptions import AccuracyError, AdmissibilityError
from .matrix import col_norm
from .roughness import _bounded_solution
from .solver import FundamentalMatrix, TimeMatrixFunction, as_matrix_function

__all__ = [
    "NonuniformDichotomy",
    "NonuniformPerturbation",
    "EpsCandidate",
    "BoundedSolution",
    "ProjectionFamily",
    "nonuniform_stability_constants",
    "nonuniform_dichotomy_constants",
    "projection_norm_bound",
    "nonuniform_roughness_constants",
    "estimate_nonuniform",
    "verify_nonuniform",
    "check_commutation",
    "nonuniform_bounded_solution",
    "perturbed_projection_family",
    "anchor_sensitivity",
    "DEFAULT_EPS_LADDER",
]

#: Geometric ladder of candidate exponents tried by :func:`estimate_nonuniform`.
DEFAULT_EPS_LADDER = (0.0,) + tuple(0.01 * 2.0 ** k for k in range(10))
#: Distance from the pole ``delta = beta/(2N)`` reported as an infinite constant.
POLE_TOL = 1e-6


@dataclass(frozen=True)
class EpsCandidate:
    """One rung of the exponent ladder and the constants fitted for it."""

    eps: float
    N1: float
    N2: float
    beta1: float
    beta2: float
    accepted: bool


@dataclass(frozen=True)
class NonuniformDichotomy:
    """Projection family and constants of a nonuniform dichotomy.

    ``P_of_t`` is either a constant matrix ``P`` (meaning
    ``P(t) = X(t) P X(t)^-1``) or a callable returning ``P(t)``.
    """

    P_of_t: np.ndarray | Callable[[float], np.ndarray]
    N1_hat: float
    N2_hat: float
    beta1_hat: float
    beta2_hat: float
    eps_nonuniform: float
    margins: DichotomyMargins | None = field(default=None, repr=False, compare=False)
    candidates: tuple[EpsCandidate, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not callable(self.P_of_t):
            P = np.array(self.P_of_t, dtype=float, ndmin=2)
            if not is_projection(P):
                raise ValueError("P is not a projection (P @ P != P)")
            P.setflags(write=False)
            object.__setattr__(self, "P_of_t", P)
        for name in ("N1_hat", "N2_hat", "beta1_hat", "beta2_hat"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not (self.eps_nonuniform >= 0 and math.isfinite(self.eps_nonuniform)):
            raise ValueError("eps_nonuniform must be finite and >= 0")

    @property
    def constant_projection(self) -> bool:
        return not callable(self.P_of_t)

    @property
    def N_hat(self) -> float:
        return max(self.N1_hat, self.N2_hat)

    @property
    def beta_hat(self) -> float:
        return min(self.beta1_hat, self.beta2_hat)

    def projection_at(self, X: FundamentalMatrix, t: float) -> np.ndarray:
        if callable(self.P_of_t):
            return np.asarray(self.P_of_t(t), dtype=float)
        return X.solve_right(X(t) @ self.P_of_t, t)

    def as_estimate(self) -> DichotomyEstimate:
        """The same data as a :class:`DichotomyEstimate` (constant ``P`` only)."""
        if callable(self.P_of_t):
            raise ValueError("only a constant projection converts to DichotomyEstimate")
        return DichotomyEstimate(self.P_of_t, self.N1_hat, self.N2_hat, self.beta1_hat,
                                 self.beta2_hat, self.eps_nonuniform, self.margins)


@dataclass(frozen=True)
class NonuniformPerturbation:
    """Perturbation ``B(t)`` with ``|B(t)| E(weight_power * eps, t) <= delta``."""

    B: TimeMatrixFunction
    delta: float
    weight_power: int = 1

    def __post_init__(self):
        object.__setattr__(self, "B", as_matrix_function(self.B))
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError("delta must be positive and finite")
        if self.weight_power not in (1, 2):
            raise ValueError("weight_power must be 1 or 2")

    def grid_check(self, order: OrderLike, eps_nonuniform: float, t_grid) -> float:
        """Largest ``|B(t)| E(weight_power eps, t) / delta`` on the grid; must be ``<= 1``."""
        order = as_order(order)
        ts = np.asarray(t_grid, dtype=float).ravel()
        w = np.exp(self.weight_power * eps_nonuniform * np.asarray(order.clock(np.abs(ts))))
        return float(max(col_norm(self.B(t)) * wi for t, wi in zip(ts, w)) / self.delta)


@dataclass(frozen=True)
class BoundedSolution:
    """Bounded solution ``U(., s)`` of the perturbed equation on ``[s, horizon]``."""

    s: float
    t: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    iterations: int
    #: fixed-point residual divided by ``E(eps, s)``
    residual: float
    tail: float
    theta: float

    def at(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.t, t))
        if i >= self.t.size or self.t[i] != t:
            raise ValueError(f"t={t} is not a node of the bounded solution")
        return self.U[i]


@dataclass(frozen=True)
class ProjectionFamily:
    """Projections ``P^(t) = T^(t, iota) U(iota, iota) T^(iota, t)`` of the perturbed system.

    Every ``*_error`` field is a sup over the grid; every ``*_slack`` field
    is a minimum of ``bound / value`` (``>= 1`` means the bound holds).
    """

    iota: float
    t: np.ndarray = field(repr=False)
    P_hat: np.ndarray = field(repr=False)
    idempotency_error: float
    #: ``|T^(t,s) P^(s) - P^(t) T^(t,s)|`` relative to ``|T^(t,s)|``
    commutation_error: float
    #: ``eta^ (|P^| + |I - P^|) / |P^ - P|``
    distance_slack: float
    #: ``4 N^ E(eps, t) / max(|P^|, |I - P^|)``
    norm_slack: float
    eta_hat: float
    margins: DichotomyMargins | None = field(repr=False, default=None)
    K_final: float = math.nan
    lambda_hat: float = math.nan
    solution: BoundedSolution | None = field(repr=False, default=None)

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.t, t))
        if i >= self.t.size or self.t[i] != t:
            raise ValueError(f"t={t} is not a grid node of the projection family")
        return self.P_hat[i]


# ---------------------------------------------------------------------------
# constants

def nonuniform_stability_constants(N_hat, beta_hat, delta):
    """Constants ``(gamma, K)`` of the perturbed nonuniformly stable system.

    ``theta = delta N/beta``, ``K = N/(1-theta)``, ``gamma = beta - delta K``.
    Exact for :class:`fractions.Fraction` inputs.

    Raises
    ------
    AdmissibilityError
        If ``theta >= 1``.
    """
    if not (N_hat > 0 and beta_hat > 0):
        raise ValueError("N_hat and beta_hat must be positive")
    if not delta >= 0:
        raise ValueError("delta must be >= 0")
    theta = delta * N_hat / beta_hat
    if not theta < 1:
        raise AdmissibilityError(f"theta = delta N/beta = {theta} >= 1")
    K = N_hat / (1 - theta)
    return beta_hat - delta * K, K


def nonuniform_dichotomy_constants(N1_hat, N2_hat, beta1_hat, beta2_hat, delta,
                                   eps_nonuniform) -> ProjectedConstants:
    """Constants of the perturbed nonuniform dichotomy.

    Same arithmetic as :func:`conformable.dichotomy.projected_constants` with
    ``delta`` in place of ``eps``; additionally ``eps_nonuniform`` must lie
    below ``min(beta1_hat, beta2_hat)``.

    Raises
    ------
    AdmissibilityError
        If ``theta >= 1`` or ``eps_nonuniform >= min(beta1_hat, beta2_hat)``.
    """
    if not eps_nonuniform >= 0:
        raise ValueError("eps_nonuniform must be >= 0")
    pc = projected_constants(N1_hat, N2_hat, beta1_hat, beta2_hat, delta)
    if not pc.admissible:
        raise AdmissibilityError(f"theta = {pc.theta} >= 1")
    if not eps_nonuniform < min(beta1_hat, beta2_hat):
        raise AdmissibilityError(
            f"eps_nonuniform = {eps_nonuniform} is not below min(beta1, beta2)")
    return pc


def _eta_hat(N_hat, beta_hat, delta, eps):
    den = 2 * beta_hat ** 2 - 5 * delta * N_hat * beta_hat - eps * (beta_hat - 2 * delta * N_hat)
    if not den > 0:
        return math.inf
    return delta * N_hat ** 2 * beta_hat / den


def projection_norm_bound(order: OrderLike, N_hat, beta_hat, delta, eps_nonuniform, t):
    """Bound ``4 N E(eps, t)`` on ``|P^(t)|`` and ``|I - P^(t)|``, with ``eta^``.

    ``eta^ = delta N^2 beta / (2 beta^2 - 5 delta N beta - eps (beta - 2 delta N))``.
    Returns ``(bound, eta_hat)``.

    Raises
    ------
    AdmissibilityError
        If ``eta^ >= 1/4`` (or its denominator is not positive).
    """
    order = as_order(order)
    eta = _eta_hat(N_hat, beta_hat, delta, eps_nonuniform)
    if not eta < 0.25:
        raise AdmissibilityError(f"eta_hat = {eta} is not below 1/4")
    return 4 * N_hat * math.exp(eps_nonuniform * order.clock(abs(t))), eta


def nonuniform_roughness_constants(N_hat, beta_hat, delta):
    """``(K_final, lambda_hat)`` of the perturbed nonuniform dichotomy.

    ``K_final = 4 N^2 beta/(beta - 2 delta N)`` and
    ``lambda_hat = beta - delta N beta/(beta - 2 delta N)``.  Within
    ``1e-6`` of the pole ``delta = beta/(2N)`` the pair ``(inf, -inf)`` is
    returned.

    Raises
    ------
    AdmissibilityError
        If ``beta - 2 delta N`` is negative beyond the pole tolerance.
    """
    if not (N_hat > 0 and beta_hat > 0 and delta >= 0):
        raise ValueError("need N_hat > 0, beta_hat > 0, delta >= 0")
    den = beta_hat - 2 * delta * N_hat
    if abs(delta - beta_hat / (2 * N_hat)) <= POLE_TOL:
        return math.inf, -math.inf
    if not den > 0:
        raise AdmissibilityError(f"beta - 2 delta N = {den} is not positive")
    return 4 * N_hat ** 2 * beta_hat / den, beta_hat - delta * N_hat * beta_hat / den


# ---------------------------------------------------------------------------
# estimation and verification

def check_commutation(X: FundamentalMatrix, P_of_t, t_grid, s_grid=None) -> float:
    """Largest relative ``|T(t,s) P(s) - P(t) T(t,s)|`` and ``|P(t)^2 - P(t)|`` on the grid."""
    ts, ss = _grids(X, t_grid, s_grid)
    Ps = {float(t): np.asarray(P_of_t(t), dtype=float) for t in np.union1d(ts, ss)}
    worst = 0.0
    for t in ts:
        Pt = Ps[float(t)]
        worst = max(worst, col_norm(Pt @ Pt - Pt) / max(1.0, col_norm(Pt)))
        for s in ss:
            T = X.solve_right(X(t), s)
            err = col_norm(T @ Ps[float(s)] - Pt @ T)
            worst = max(worst, err / max(1.0, col_norm(T)))
    return worst


def estimate_nonuniform(X: FundamentalMatrix, P_of_t, t_grid=None, s_grid=None,
                        eps_candidates: Sequence[float] = DEFAULT_EPS_LADDER,
                        cap: float = 10.0, commute_tol: float = 1e-8) -> NonuniformDichotomy:
    """Fit a nonuniform dichotomy, taking the smallest admissible exponent.

    For every candidate ``eps`` (ascending) the rates and constants are
    fitted to ``log |T(t,s) P(s)| - eps u(|s|)`` exactly as in
    :func:`conformable.dichotomy.estimate_dichotomy`.  The first candidate
    with positive rates and ``N1, N2 <= cap`` is selected; the whole ladder
    is kept in ``candidates`` as the trade-off curve.

    Raises
    ------
    ValueError
        If the commutation check fails or no candidate is accepted.
    """
    ts, ss = _grids(X, t_grid, s_grid)
    if callable(P_of_t):
        err = check_commutation(X, P_of_t, ts, ss)
        if err > commute_tol:
            raise ValueError(f"projection family violates T(t,s)P(s) = P(t)T(t,s) "
                             f"(error {err:.3g} > {commute_tol:g})")
    else:
        P_of_t = np.asarray(P_of_t, dtype=float)
        if not is_projection(P_of_t):
            raise ValueError("P is not a projection (P @ P != P)")
    stable, unstable = _evolution_blocks(X, P_of_t, ts, ss)
    rungs = []
    chosen = None
    for eps in sorted(float(e) for e in eps_candidates):
        if eps < 0:
            raise ValueError("candidate exponents must be >= 0")
        gap, weight = _pair_geometry(X, ts, ss, eps)
        first = _fit_block(stable, gap, weight, gap >= 0)
        second = _fit_block(unstable, -gap, weight, gap <= 0)
        if first is None:
            raise ValueError("stable block vanishes on the grid; nothing to fit")
        if second is None:
            second = first
        (N1, b1), (N2, b2) = first, second
        ok = bool(b1 > 0 and b2 > 0 and N1 <= cap and N2 <= cap)
        rungs.append(EpsCandidate(eps, N1, N2, b1, b2, ok))
        if ok and chosen is None:
            chosen = rungs[-1]
    if chosen is None:
        raise ValueError(f"no candidate exponent gives positive rates with N <= {cap}")
    margins = _verify_core(X, P_of_t, chosen.N1, chosen.N2, chosen.beta1, chosen.beta2,
                           chosen.eps, ts, ss)
    return NonuniformDichotomy(P_of_t, chosen.N1, chosen.N2, chosen.beta1, chosen.beta2,
                               chosen.eps, margins, tuple(rungs))


def verify_nonuniform(X: FundamentalMatrix, nd: NonuniformDichotomy, t_grid=None,
                      s_grid=None) -> DichotomyMargins:
    """Check both nonuniform dichotomy inequalities for every grid pair."""
    ts, ss = _grids(X, t_grid, s_grid)
    return _verify_core(X, nd.P_of_t, nd.N1_hat, nd.N2_hat, nd.beta1_hat, nd.beta2_hat,
                        nd.eps_nonuniform, ts, ss)


# ---------------------------------------------------------------------------
# roughness

def nonuniform_bounded_solution(X: FundamentalMatrix, nd: NonuniformDichotomy,
                                pert: NonuniformPerturbation, s: float = 0.0,
                                horizon: float | None = None, fp_tol: float = 1e-10,
                                max_iter: int = 200) -> BoundedSolution:
    """Bounded solution ``U(., s)`` of the perturbed equation.

    Fixed point of ``U(t,s) = T(t,s)P(s) + int_s^t T(t,r)P(r)B(r)U(r,s) dr^a
    - int_t^inf T(t,r)(I-P(r))B(r)U(r,s) dr^a``, computed by the same
    discretised operator as :func:`conformable.roughness.perturbed_projection`
    (the roughness fixed point is ``U(., 0)`` with ``delta = eps_perturb``).
    Needs a constant projection.
    """
    if not nd.constant_projection:
        raise ValueError("bounded solutions are computed for a constant projection P")
    weight = math.exp(nd.eps_nonuniform * X.order.clock(abs(s)))
    nodes, U, iters, residual, tail, theta = _bounded_solution(
        X, nd.P_of_t, pert.B, pert.delta, nd.N1_hat, nd.N2_hat, nd.beta1_hat, nd.beta2_hat,
        float(s), horizon, fp_tol, max_iter, weight)
    return BoundedSolution(float(s), nodes, U, iters, residual / weight, tail, theta)


def perturbed_projection_family(X: FundamentalMatrix, Y: FundamentalMatrix,
                                nd: NonuniformDichotomy, pert: NonuniformPerturbation,
                                t_grid=None, iota: float = 0.0, horizon: float | None = None,
                                fp_tol: float = 1e-10, check_tol: float = 1e-8,
                                verify: bool = True) -> ProjectionFamily:
    """Projections of the perturbed system and the checks that go with them.

    ``X`` is the fundamental matrix of the unperturbed system (used for the
    bounded solution), ``Y`` that of the perturbed one.  ``iota`` is the
    anchor time; ``t_grid`` must lie in ``[iota, inf)`` inside ``Y``'s grid.
    With ``verify`` and a weight power of 2, the perturbed dichotomy is
    checked with ``(K_final, lambda_hat)`` and exponent ``2 eps``.

    Raises
    ------
    AccuracyError
        If ``U(iota, iota)`` is not a projection within ``check_tol``.
    """
    sol = nonuniform_bounded_solution(X, nd, pert, iota, horizon, fp_tol)
    U0 = sol.U[0]
    if col_norm(U0 @ U0 - U0) > check_tol * max(1.0, col_norm(U0)) ** 2:
        raise AccuracyError("U(iota, iota) is not a projection")
    ts = Y.grid[Y.grid >= iota] if t_grid is None else np.asarray(t_grid, float).ravel()
    if np.any(ts < iota):
        raise ValueError("t_grid must not precede the anchor iota")
    # Y(iota)^-1 U(iota, iota) Y(iota), conjugated to each t
    core = Y.solve_left(iota, U0 @ Y(iota))
    I = np.eye(Y.dim)
    P_hat = np.array([Y.solve_right(Y(t) @ core, t) for t in ts])
    N, beta, eps = nd.N_hat, nd.beta_hat, nd.eps_nonuniform
    eta = _eta_hat(N, beta, pert.delta, eps)
    idem = max(col_norm(p @ p - p) for p in P_hat)
    comm = 0.0
    for i, t in enumerate(ts):
        for j, s in enumerate(ts):
            T = Y.solve_right(Y(t), s)
            comm = max(comm, col_norm(T @ P_hat[j] - P_hat[i] @ T) / max(1.0, col_norm(T)))
    dist_slack = math.inf
    norm_slack = math.inf
    for t, Ph in zip(ts, P_hat):
        nP, nQ = col_norm(Ph), col_norm(I - Ph)
        d = col_norm(Ph - nd.projection_at(X, t))
        if d > 0:
            dist_slack = min(dist_slack, eta * (nP + nQ) / d)
        bound = 4 * N * math.exp(eps * X.order.clock(abs(t)))
        norm_slack = min(norm_slack, bound / max(nP, nQ))
    margins = None
    K_final = lam_hat = math.nan
    if verify and pert.weight_power == 2:
        K_final, lam_hat = nonuniform_roughness_constants(N, beta, pert.delta)
        if math.isfinite(K_final) and lam_hat > 0:
            fam = dict(zip(ts.tolist(), P_hat))
            margins = _verify_core(Y, lambda t: fam[float(t)], K_final, K_final, lam_hat,
                                   lam_hat, 2 * eps, ts, ts)
    return ProjectionFamily(float(iota), ts, P_hat, idem, comm, dist_slack, norm_slack, eta,
                            margins, K_final, lam_hat, sol)


def anchor_sensitivity(X: FundamentalMatrix, Y: FundamentalMatrix, nd: NonuniformDichotomy,
                       pert: NonuniformPerturbation, anchors: Sequence[float], t_grid,
                       fp_tol: float = 1e-10) -> float:
    """Largest ``|P^_iota(t) - P^_iota'(t)|`` over anchor pairs and common grid times."""
    ts = np.asarray(t_grid, float).ravel()
    fams = []
    for a in anchors:
        fams.append(perturbed_projection_family(X, Y, nd, pert, ts[ts >= a], a,
                                                fp_tol=fp_tol, verify=False))
    worst = 0.0
    for i in range(len(fams)):
        for j in range(i + 1, len(fams)):
            common = np.intersect1d(fams[i].t, fams[j].t)
            for t in common:
                worst = max(worst, col_norm(fams[i](t) - fams[j](t)))
    return worst
