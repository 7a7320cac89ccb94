"""
Mittag-Leffler dichotomies
==========================

The saddle diag(-1, 1) with the projection onto e1 has an exact dichotomy
with N = beta = 1.  We verify it, let the library fit constants from data,
and evaluate the closed-form constants of a projected perturbation.
"""

from fractions import Fraction

import numpy as np

from conformable import (DichotomyEstimate, FractionalOrder, classify_stability,
                         estimate_dichotomy, fundamental_matrix, natural_grid,
                         projected_constants, verify_dichotomy)

order = FractionalOrder(0.5)
grid = natural_grid(order, 0.0, order.time(8.0), 81)
X = fundamental_matrix(order, np.diag([-1.0, 1.0]), grid)
P = np.diag([1.0, 0.0])

m = verify_dichotomy(X, DichotomyEstimate(P, 1.0, 1.0, 1.0, 1.0))
print(f"exact constants: min slack {m.min_slack:.12f}, verified {m.verified}")

m = verify_dichotomy(X, DichotomyEstimate(P, 1.0, 1.0, 2.0, 1.0))
print(f"doubled rate: min slack {m.min_slack:.3e} at (t, s) = {m.stable_argmin}")

est = estimate_dichotomy(X, P)
print(f"fitted: N1={est.N1:.6f} N2={est.N2:.6f} beta1={est.beta1:.6f} beta2={est.beta2:.6f}")

rot = fundamental_matrix(order, np.array([[0.0, 1.0], [-1.0, 0.0]]),
                         natural_grid(order, 0.0, order.time(12.0), 121))
r = classify_stability(rot)
print(f"rotation: bounded={r.bounded} uniformly stable={r.uniformly_stable} "
      f"asymptotically stable={r.asymptotically_stable}")

c = projected_constants(1, 1, 1, 1, Fraction(1, 10))
print(f"projected constants (exact): theta={c.theta}, K={c.K1}, lambda={c.lambda1}")
