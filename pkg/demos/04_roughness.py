"""
Roughness of dichotomies
========================

A small perturbation B of the saddle keeps a dichotomy.  The new projection
Q = Y1(0) comes from a fixed point of an integral operator.  For the lower
triangular B below the exact answer is the stable eigenprojection of A + B
along e2, Q = [[1, 0], [-0.025, 0]].
"""

import numpy as np

from conformable import (DichotomyEstimate, FractionalOrder, PerturbationSpec,
                         analyze_roughness, fundamental_matrix, natural_grid,
                         roughness_constants)

order = FractionalOrder(0.5)
A = np.diag([-1.0, 1.0])
P = np.diag([1.0, 0.0])
est = DichotomyEstimate(P, 1.0, 1.0, 1.0, 1.0)

c = roughness_constants(1, 1, 1, 1, 0.05)
print(f"eps=0.05: admissible={c.admissible} K={c.K_new:.6f} lambda={c.lambda_new:.4f} "
      f"|Q-P| bound={c.proj_distance_bound:.6f}")

X = fundamental_matrix(order, A, natural_grid(order, 0.0, order.time(24.0), 961))
B = 0.05 * np.array([[0.0, 0.0], [1.0, 0.0]])
Y = fundamental_matrix(order, A + B, natural_grid(order, 0.0, order.time(8.0), 161))

rep = analyze_roughness(X, Y, est, PerturbationSpec.constant(B), t_grid=Y.grid)
print("Q =\n", rep.Q)
print(f"fixed point: {rep.projection.iterations} iterations, residual "
      f"{rep.projection.residual:.2e}, tail {rep.projection.tail:.2e}")
print(f"perturbed dichotomy verified: {rep.verified_margins.verified}, "
      f"min slack {rep.verified_margins.margins.min_slack:.4f}")
