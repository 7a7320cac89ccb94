"""
Stable invariant manifold
=========================

Adding the quadratic term x1^2 to the unstable equation of the saddle bends
the stable subspace into the curve x2 = -x1^2/3.  The chart is computed by
fixed-point iteration; its tangency to the subspace improves linearly as
the base point shrinks.
"""

import numpy as np

from conformable import (DichotomyEstimate, FractionalOrder, fundamental_matrix,
                         manifold_chart, natural_grid)

order = FractionalOrder(0.5)
X = fundamental_matrix(order, np.diag([-1.0, 1.0]),
                       natural_grid(order, 0.0, order.time(24.0), 961))
est = DichotomyEstimate(np.diag([1.0, 0.0]), 1.0, 1.0, 1.0, 1.0)

f = lambda t, x: np.array([0.0, x[0] ** 2])  # noqa: E731
chart = manifold_chart(X, est, f, lambda s: 2.0 * s, delta=0.1)
print(f"radius {chart.radius}, decay rate gamma1 {chart.gamma1}, constant M {chart.M}")

print(" a         h2(a)          -a^2/3         tangency   bound      decay slack")
for k in range(5):
    a = 0.05 / 2 ** k
    pt = chart.h([a, 0.0])
    print(f" {a:.5f}  {pt.h[1]: .6e}  {-a * a / 3: .6e}  {pt.tangency_ratio:.3e}  "
          f"{pt.tangency_bound:.3e}  {pt.decay_slack:.3f}")
