r"""Scalar conformable calculus.

Everything here is built on the *natural clock* of a fractional order
:math:`\alpha \in (0, 1]`,

.. math::

    u(t) = \operatorname{sign}(t) \frac{|t|^\alpha}{\alpha},

which is continuous, strictly increasing and maps :math:`[0, \infty)` onto
itself.  In this clock the conformable derivative is an ordinary derivative
(:math:`T^\alpha f(t) = |t|^{1-\alpha} f'(t) = \mathrm{d}f/\mathrm{d}u`), the
conformable integral is an ordinary integral, and the Mittag-Leffler-type
function is :math:`E_\alpha(\lambda, t) = \exp(\lambda u(t))`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import integrate, optimize

from .exceptions import DomainError, QuadratureError

__all__ = [
    "FractionalOrder",
    "ScalarSignal",
    "QuadratureConfig",
    "GronwallBound",
    "as_order",
    "as_signal",
    "ml_scalar",
    "ml_quotient",
    "conformable_derivative",
    "conformable_integral",
    "gronwall_bound",
]

#: Largest exponent magnitude accepted by :func:`ml_scalar`.
EXP_LIMIT = 700.0


@dataclass(frozen=True)
class FractionalOrder:
    """Order ``alpha`` in ``(0, 1]`` of a conformable derivative."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not (0.0 < a <= 1.0) or math.isnan(a):
            raise ValueError(f"fractional order must lie in (0, 1], got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    def clock(self, t):
        """Natural clock ``sign(t)|t|**alpha/alpha`` (vectorised)."""
        t_arr = np.asarray(t, dtype=float)
        u = np.sign(t_arr) * np.abs(t_arr) ** self.alpha / self.alpha
        return float(u) if u.ndim == 0 else u

    def time(self, u):
        """Inverse of :meth:`clock`."""
        u_arr = np.asarray(u, dtype=float)
        t = np.sign(u_arr) * (self.alpha * np.abs(u_arr)) ** (1.0 / self.alpha)
        return float(t) if t.ndim == 0 else t

    def weight(self, t):
        """Kernel ``|t|**(alpha-1)`` of the conformable integral."""
        return np.abs(np.asarray(t, dtype=float)) ** (self.alpha - 1.0)


OrderLike = Union[FractionalOrder, float]


def as_order(order: OrderLike) -> FractionalOrder:
    if isinstance(order, FractionalOrder):
        return order
    return FractionalOrder(order)


class ScalarSignal:
    """A real function of time defined on a closed interval.

    Calling the signal outside ``[t_lo, t_hi]`` raises :class:`DomainError`.
    """

    def __init__(self, func: Callable[[float], float], t_lo: float = -math.inf,
                 t_hi: float = math.inf):
        if not t_lo <= t_hi:
            raise ValueError(f"empty domain [{t_lo}, {t_hi}]")
        self.func = func
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)

    def __call__(self, t):
        if t < self.t_lo or t > self.t_hi:
            raise DomainError(f"t={t} outside domain [{self.t_lo}, {self.t_hi}]")
        return self.func(t)

    def covers(self, a: float, b: float) -> bool:
        lo, hi = min(a, b), max(a, b)
        return self.t_lo <= lo and hi <= self.t_hi

    def __repr__(self):
        return f"ScalarSignal({self.func!r}, {self.t_lo}, {self.t_hi})"


def as_signal(f) -> ScalarSignal:
    return f if isinstance(f, ScalarSignal) else ScalarSignal(f)


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for adaptive quadrature."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("quadrature tolerances must be strictly positive")
        if int(self.max_subdivisions) < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUADRATURE = QuadratureConfig()


def ml_scalar(order: OrderLike, lam: float, t):
    """Mittag-Leffler-type function ``E_alpha(lam, t)``.

    ``exp(lam t**alpha/alpha)`` for ``t >= 0`` and
    ``exp(-lam (-t)**alpha/alpha)`` for ``t < 0``.

    Raises
    ------
    OverflowError
        If the exponent exceeds :data:`EXP_LIMIT` in magnitude.
    """
    order = as_order(order)
    exponent = lam * np.asarray(order.clock(t))
    if np.any(np.abs(exponent) > EXP_LIMIT):
        raise OverflowError(
            f"E_alpha exponent {np.max(np.abs(exponent)):.6g} exceeds {EXP_LIMIT}")
    out = np.exp(exponent)
    return float(out) if out.ndim == 0 else out


def ml_quotient(order: OrderLike, lam: float, s, t):
    """``E_alpha(lam, s) / E_alpha(lam, t)`` evaluated as one exponential.

    This is the decay factor appearing in every dichotomy estimate; forming the
    difference of clocks first keeps it finite for long horizons.
    """
    order = as_order(order)
    out = np.exp(lam * (np.asarray(order.clock(s)) - np.asarray(order.clock(t))))
    return float(out) if np.ndim(out) == 0 else out


def _classical_derivative(f, t: float, h: float) -> float:
    return (f(t + h) - f(t - h)) / (2.0 * h)


def conformable_derivative(order: OrderLike, f, t: float, step: float = 1e-5) -> float:
    """Finite-difference conformable derivative ``|t|**(1-alpha) f'(t)``.

    At ``t = 0`` (and ``alpha < 1``) the derivative is defined only as a limit;
    it is approximated by the average of the clock secants
    ``(f(+-step) - f(0)) / (u(+-step) - u(0))``, which is exact for functions
    affine in the clock.
    """
    order = as_order(order)
    if not step > 0:
        raise ValueError("step must be positive")
    f = as_signal(f)
    if t == 0.0 and order.alpha < 1.0:
        f0, du = f(0.0), float(order.clock(step))
        return 0.5 * ((f(step) - f0) / du + (f0 - f(-step)) / du)
    return abs(t) ** (1.0 - order.alpha) * _classical_derivative(f, t, step)


def _quad(func, a: float, b: float, cfg: QuadratureConfig) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, abserr, info = integrate.quad(
            func, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
            limit=int(cfg.max_subdivisions), full_output=1)[:3]
    if abserr > max(cfg.abs_tol, cfg.rel_tol * abs(value)) * 10:
        raise QuadratureError(
            f"quadrature on [{a}, {b}] stalled at error {abserr:.3g} "
            f"({info.get('last', '?')} subintervals)")
    return value


def clock_integral(order: FractionalOrder, func, t0: float, t: float,
                   cfg: QuadratureConfig = DEFAULT_QUADRATURE, vector: bool = False):
    """Integrate ``func(s)`` against ``|s|**(alpha-1) ds`` from ``t0`` to ``t``.

    Works in the clock variable ``u``, which removes the weight entirely; the
    interval is split at the origin when it straddles it.  ``vector=True``
    accepts array-valued integrands.
    """
    if t0 == t:
        return np.zeros_like(np.asarray(func(t0), dtype=float)) if vector else 0.0
    breaks = [t0, t]
    if t0 * t < 0:
        breaks = [t0, 0.0, t]
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        ua, ub = order.clock(a), order.clock(b)
        g = lambda u: func(order.time(u))  # noqa: E731
        if vector:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                value, err, info = integrate.quad_vec(
                    g, ua, ub, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                    limit=int(cfg.max_subdivisions), full_output=True)
            if not info.success:
                raise QuadratureError(f"vector quadrature on [{a}, {b}] failed: {info.message}")
        else:
            value = _quad(g, ua, ub, cfg)
        total = total + value
    return total


def conformable_integral(order: OrderLike, f, t0: float, t: float,
                         cfg: QuadratureConfig | None = None) -> float:
    """Conformable integral ``int_{t0}^{t} |s|**(alpha-1) f(s) ds``."""
    order = as_order(order)
    cfg = cfg or DEFAULT_QUADRATURE
    f = as_signal(f)
    if not f.covers(t0, t):
        raise DomainError(f"[{min(t0, t)}, {max(t0, t)}] not inside the signal domain "
                          f"[{f.t_lo}, {f.t_hi}]")
    return float(clock_integral(order, f, float(t0), float(t), cfg))


@dataclass(frozen=True)
class GronwallBound:
    """Both Gronwall-type bounds for ``u <= a + I^alpha_{t0}(f u)``."""

    #: ``a(t) exp(I^alpha_{t0} f(t))``
    sharp: float
    #: ``a(t) E_alpha(sup f, |t|) E_alpha(sup f, |t0|)``
    coarse: float
    integral: float
    sup_f: float


def _sup_on_interval(f, lo: float, hi: float, samples: int) -> tuple[float, np.ndarray]:
    ts = np.linspace(lo, hi, samples)
    vals = np.array([f(s) for s in ts], dtype=float)
    k = int(np.argmax(vals))
    best = vals[k]
    if hi > lo:
        a, b = ts[max(k - 1, 0)], ts[min(k + 1, samples - 1)]
        res = optimize.minimize_scalar(lambda s: -f(s), bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12 * max(1.0, abs(hi))})
        best = max(best, -res.fun)
    return float(best), vals


def gronwall_bound(order: OrderLike, a, f, t0: float, t: float,
                   cfg: QuadratureConfig | None = None, samples: int = 257) -> GronwallBound:
    """Conformable Gronwall bound on ``[t0, t]``.

    ``a`` must be nonnegative and nondecreasing, ``f`` nonnegative; negative
    samples on a uniform grid of ``samples`` points raise ``ValueError``.
    """
    order = as_order(order)
    cfg = cfg or DEFAULT_QUADRATURE
    if t < t0:
        raise ValueError("gronwall_bound needs t >= t0")
    a, f = as_signal(a), as_signal(f)
    sup_f, f_vals = _sup_on_interval(f, t0, t, samples)
    a_vals = np.array([a(s) for s in np.linspace(t0, t, samples)], dtype=float)
    if np.any(a_vals < 0) or np.any(f_vals < 0):
        raise ValueError("gronwall_bound requires nonnegative a and f")
    integral = conformable_integral(order, f, t0, t, cfg)
    at = float(a(t))
    sharp = at * math.exp(integral)
    coarse = at * ml_scalar(order, sup_f, abs(t)) * ml_scalar(order, sup_f, abs(t0))
    return GronwallBound(sharp=sharp, coarse=coarse, integral=integral, sup_f=sup_f)
