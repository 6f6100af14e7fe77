"""Truncated Toeplitz operators on lattice triangles: cone factorization, structured
inversion, and the trace and log-determinant asymptotics."""

from .asymptotics import (AsymptoticCoefficients, beta_moment_check, det_coefficients,
                          det_integral_identity_check, homotopy_check, predict_logdet, predict_trace,
                          trace_coefficients)
from .errors import *  # noqa: F401,F403
from .factorization import (FactorizationResult, SingularTransfer, assign_edge_factors, cone_factorize,
                            line_sum_transfer, torus_automorphism_remap, verify_factorization)
from .lattice_geometry import (ConeSpec, HalfSpaceFamily, HalfSpaceSign, TriangleInstance, build_triangle,
                               enumerate_lattice_points, find_unimodular_subcone, halfspace_sign,
                               minimal_split, shift_vector)
from .structured_inversion import (HankelSystem, SpectralBox, apply_exchange, assemble_H, build_system,
                                   gamma_field, solve_triangle, structured_inverse, structured_inverse_apply)
from .symbol import (FourierMap, GridFunction, analyze, k_norm, mean, n_norm, norm_equivalence_constants,
                     pointwise_log, pointwise_reciprocal, synthesize)
from .toeplitz_core import (OperatorMatrix, apply_operator, assemble_toeplitz, cholesky_logdet,
                            trace_of_inverse)

__version__ = "0.1.0"
