"""
Nonuniform dichotomies
======================

The scalar coefficient -1 - 0.25 u sin u has bursts of growth whose size
increases with the clock, so no uniform exponential bound holds.  A bound
of the form N exp(-beta (u_t - u_s) + eps |u_s|) does, with the exact
constants N = e^0.5, beta = 0.75, eps = 0.5.
"""

import math

import numpy as np

from conformable import (FractionalOrder, NonuniformDichotomy, TimeMatrixFunction,
                         estimate_nonuniform, fundamental_matrix, natural_grid,
                         nonuniform_dichotomy_constants, verify_nonuniform)

order = FractionalOrder(0.5)


def burst(t):
    u = order.clock(t)
    return np.array([[-1.0 - 0.25 * u * math.sin(u)]])


X = fundamental_matrix(order, TimeMatrixFunction(burst, 1, 0.0, math.inf),
                       natural_grid(order, 0.0, order.time(12.0), 121))

nd = estimate_nonuniform(X, np.eye(1))
print(f"fitted: N1={nd.N1_hat:.4f} beta1={nd.beta1_hat:.4f} eps={nd.eps_nonuniform:.4f}")

exact = NonuniformDichotomy(np.eye(1), math.exp(0.5), math.exp(0.5), 0.75, 0.75, 0.5)
m = verify_nonuniform(X, exact)
print(f"analytic constants: min slack {m.min_slack:.6f}, verified {m.verified}")

c = nonuniform_dichotomy_constants(1.0, 1.0, 1.0, 1.0, 0.1, 0.5)
print(f"perturbed constants: K={c.K1:.4f}, lambda={c.lambda1:.4f}")
