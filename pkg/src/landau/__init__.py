"""Velocity-space solver and analysis toolkit for the homogeneous Landau
equation with soft potentials, with the functionals, exponent algebra,
level-set iteration, and inequality checks needed to stress-test the
time-integrability to boundedness regularization chain."""

from .exponents import AdmissibilityError, ExponentSet
from .grid import (Grid, MatrixField, ScalarField, VectorField, gradient,
                   divergence, integrate, read_snapshot, write_snapshot)
from .kernels import (CoefficientFields, Potential, coefficient_fields,
                      coefficients_at_point, convolve_power, truncated_c)
from .functionals import (coercivity_estimate, dissipation, entropy,
                          entropy_dissipation, moment, prodi_serrin_integral,
                          weighted_lp)
from .solver import (BiMaxwellian, BlowUpError, FromFile, Maxwellian,
                     NarrowGaussian, SolverConfig, Trajectory, initial_field,
                     rhs, run, stable_dt, step)
from .degiorgi import (LevelSetParams, LevelSetReport, energy_functional,
                       energy_inequality_check, iterate, level_flux,
                       level_truncate, recursion_Q, threshold_K)
from .inequality_lab import (InequalityCase, eps_poincare,
                             eps_poincare_critical, eps_poincare_trend,
                             gaussian_scale_pairs, hls_check,
                             level_hls_bounds, peak_scaled_pairs,
                             singular_source_pairs, sobolev_check,
                             test_function_family, triple_interpolation_check)
from .pipeline import (AppearanceResult, BalanceResult, PipelineReport,
                       PipelineStageError, lp_appearance_check,
                       lp_balance_check, run_pipeline)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
