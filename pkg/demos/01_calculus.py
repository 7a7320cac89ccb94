"""
Conformable derivative and integral
===================================

The natural clock u(t) = t^alpha/alpha turns conformable calculus into
ordinary calculus.  This script checks that picture numerically.
"""

import math

from conformable import (FractionalOrder, conformable_derivative, conformable_integral,
                         gronwall_bound, ml_scalar)

order = FractionalOrder(0.5)
print("clock u(4) =", order.clock(4.0), " inverse:", order.time(order.clock(4.0)))

# T^alpha of t^p is p t^(p - alpha)
for p in (1.0, 2.0, 0.5):
    got = conformable_derivative(order, lambda t: t ** p, 2.0)
    print(f"T^a t^{p}: {got:.10f}   exact {p * 2.0 ** (p - 0.5):.10f}")

# the integral removes the |s|^(alpha-1) singularity at the origin exactly
print("I^a_0 1 at t=3:", conformable_integral(order, lambda s: 1.0, 0.0, 3.0),
      " exact", 2 * math.sqrt(3.0))
print("I^a across zero:", conformable_integral(order, math.cos, -1.0, 2.0))

# inverse pair: differentiate the integral
F = lambda t: conformable_integral(order, math.sin, 0.5, t)  # noqa: E731
print("T^a I^a sin at 1.7:", conformable_derivative(order, F, 1.7, step=1e-4),
      " sin(1.7) =", math.sin(1.7))

# E_alpha(lam, t) = exp(lam u(t)) solves T^alpha x = lam x
x = lambda t: ml_scalar(order, -1.5, t)  # noqa: E731
print("T^a E(-1.5, t) / E at t=2:", conformable_derivative(order, x, 2.0) / x(2.0))

g = gronwall_bound(order, lambda t: 1.0, lambda t: 0.5 + 0.1 * t, 0.0, 3.0)
print(f"Gronwall bounds on [0, 3]: sharp {g.sharp:.6f} <= coarse {g.coarse:.6f}")
