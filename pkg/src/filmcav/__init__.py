"""Desk-scale simulator and stability analyzer for thin-film lubrication
coupled to a dispersed micro-bubble field.

The film pressure obeys a compressible Reynolds equation whose mixture
density and viscosity depend on the local bubble radius; the radius field
evolves by spherical-bubble dynamics driven by that same pressure.  The
package provides the coupled transient integrator, a direct stationary
solver, linearized-operator spectra with closed-form parallel-gap oracles,
a modal sliding-speed instability analysis, and a CLI for runs, sweeps,
and reports.
"""

from .errors import (ConfigurationError, NonPositiveRadiusError,
                     PositivityLossError, SolverFailureError,
                     StepFailureError, SupercriticalRadiusError)
from .physics import (DerivedConstants, PhysicalParams, compute_derived,
                      eval_alpha, eval_f1, eval_f2, eval_f3, eval_f4,
                      eval_f5, hypotheses_check)
from .grid import Grid, ensure_field, export_fields_csv, field_norms, \
    gap_function, gap_excess, grid_for_params
from .elliptic import (EllipticOperator, LinearSolveConfig, apply_A2,
                       assemble_couette_rhs, assemble_diffusion, solve_A1)
from .dynamics import (StepConfig, TransientResult, TransientState,
                       TransientWatch, eliminate_pressure, initial_state,
                       run_to_stationarity, run_transient, step_inertial,
                       step_inertialess)
from .stationary import (StationaryReport, StationarySolveConfig,
                         solve_stationary, stationary_residual,
                         trivial_solution)
from .stability import (HurwitzReport, SpectrumReport, assemble_LF,
                        assemble_LG, b_branch_roots, compute_spectrum,
                        constant_gap_spectrum_LF, constant_gap_spectrum_LG,
                        critical_speed, hurwitz_analysis, sigma_constants,
                        trivial_LF_roots, trivial_LG_eigenvalue,
                        trivial_branch_spectrum_LF)
from .config import RunConfig, parse_config, render_config

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "NonPositiveRadiusError", "PositivityLossError",
    "SolverFailureError", "StepFailureError", "SupercriticalRadiusError",
    "DerivedConstants", "PhysicalParams", "compute_derived", "eval_alpha",
    "eval_f1", "eval_f2", "eval_f3", "eval_f4", "eval_f5",
    "hypotheses_check",
    "Grid", "ensure_field", "export_fields_csv", "field_norms",
    "gap_function", "gap_excess", "grid_for_params",
    "EllipticOperator", "LinearSolveConfig", "apply_A2",
    "assemble_couette_rhs", "assemble_diffusion", "solve_A1",
    "StepConfig", "TransientResult", "TransientState", "TransientWatch",
    "eliminate_pressure", "initial_state", "run_to_stationarity",
    "run_transient", "step_inertial", "step_inertialess",
    "StationaryReport", "StationarySolveConfig", "solve_stationary",
    "stationary_residual", "trivial_solution",
    "HurwitzReport", "SpectrumReport", "assemble_LF", "assemble_LG",
    "b_branch_roots", "compute_spectrum", "constant_gap_spectrum_LF",
    "constant_gap_spectrum_LG", "critical_speed", "hurwitz_analysis",
    "sigma_constants", "trivial_LF_roots", "trivial_LG_eigenvalue",
    "trivial_branch_spectrum_LF",
    "RunConfig", "parse_config", "render_config",
    "__version__",
]
