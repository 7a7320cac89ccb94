"""Conformable fractional dynamics: calculus, solvers and Mittag-Leffler dichotomies."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .calculus import (DEFAULT_QUADRATURE, FractionalOrder, GronwallBound, QuadratureConfig,
                       ScalarSignal, clock_integral, conformable_derivative, conformable_integral,
                       gronwall_bound, ml_quotient, ml_scalar)
from .dichotomy import (DichotomyEstimate, DichotomyMargins, ProjectedConstants, StabilityReport,
                        classify_stability, estimate_dichotomy, projected_constants,
                        projected_corollary_check, projected_inequality_check, verify_dichotomy)
from .exceptions import (AccuracyError, AdmissibilityError, ConvergenceError, DomainError,
                         IntegrationError, NonHyperbolicError, QuadratureError)
from .matrix import (col_norm, ml_jordan_block, ml_matrix, ml_series, negative_spectrum_bound,
                     spectral_projection, vec_norm)
from .nonuniform import (NonuniformDichotomy, NonuniformPerturbation, estimate_nonuniform,
                         nonuniform_bounded_solution, nonuniform_dichotomy_constants,
                         nonuniform_roughness_constants, nonuniform_stability_constants,
                         perturbed_projection_family, projection_norm_bound, verify_nonuniform)
from .roughness import (ManifoldChart, PerturbationSpec, RoughnessConstants, RoughnessReport,
                        analyze_roughness, invariant_manifold, manifold_chart,
                        perturbed_projection, roughness_constants, unstable_manifold,
                        verify_roughness)
from .solver import (IVP, FundamentalMatrix, TimeMatrixFunction, evolution, fundamental_matrix,
                     ivp_solve, liouville_determinant, natural_grid, picard_solve,
                     variation_of_constants)

__all__ = sorted(name for name, obj in dict(globals()).items()
                 if not name.startswith("_") and not isinstance(obj, type(calculus))
                 and name not in ("PackageNotFoundError", "version"))
