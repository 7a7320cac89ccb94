"""
Matrix Mittag-Leffler functions and linear CFDEs
================================================

For constant A the principal fundamental matrix is E_alpha(A, t) =
expm(A u(t)).  We compare three routes to it and look at the Liouville
identity for a time-dependent coefficient.
"""

import numpy as np

from conformable import (IVP, FractionalOrder, col_norm, evolution, fundamental_matrix,
                         ivp_solve, liouville_determinant, ml_jordan_block, ml_matrix,
                         ml_series, natural_grid)

order = FractionalOrder(0.5)
A = np.array([[-1.0, 2.0], [0.0, -0.5]])
t = 3.0

closed = ml_matrix(order, A, t)
series = ml_series(order, A, t)
print("E_a(A, 3) =\n", closed)
print("series vs closed form:", col_norm(series - closed))

J = ml_jordan_block(order, -1.0, 3, t)
print("Jordan block E_a(J, 3), first row:", J[0])

grid = natural_grid(order, 0.0, 4.0, 41)
X = fundamental_matrix(order, A, grid)
print("integrated X(3) vs closed form:", col_norm(X(t) - closed))
print("evolution cocycle defect:",
      col_norm(evolution(X, 4.0, 2.0) @ evolution(X, 2.0, 1.0) - evolution(X, 4.0, 1.0)))

# a single trajectory through the adaptive solver
ivp = IVP(order, lambda s, x: A @ x, 0.0, [1.0, 1.0])
traj = ivp_solve(ivp, t)
print("ivp_solve x(3):", traj.x[-1], " closed form:", closed @ [1.0, 1.0])

# Liouville: det X(t) = exp(I^alpha tr A) for time-dependent A
At = lambda s: np.array([[-1.0, np.sin(s)], [0.2, -0.3 * s]])  # noqa: E731
Xt = fundamental_matrix(order, At, grid)
predicted, actual = liouville_determinant(Xt, At, 4.0)
print(f"Liouville at t=4: predicted {predicted:.12f}, det X {actual:.12f}")
