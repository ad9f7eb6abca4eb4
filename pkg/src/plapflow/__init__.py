"""Doubly nonlinear p-Laplacian flows on truncated integer lattices.

The package builds weighted l1-ball subgraphs of Z^N, runs the grounded
(zero exterior) flow rho u_t = Delta_p u with explicit adaptive stepping,
and provides the scaling toolkit, inequality verifiers and decay-rate
analysis used to test the predicted sup-norm decay against simulation.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config
from .decay import (CorrectedFit, InvariantReport, PowerLawFit,
                    UniversalReport, fit_power_law, invariant_statistic,
                    log_corrected_fit, universal_bound_statistic)
from .density import (DensityProfile, check_h1_window, eval_rho,
                      rho_on_graph, rho_summability_check,
                      universal_nu_default)
from .evolution import (TRACE_COLUMNS, TRACE_VERSION, DissipationReport,
                        EvolutionConfig, FlowTrace, UnstableStepError,
                        check_dissipation, evolve, make_initial, mass_drift,
                        stable_dt, step_explicit)
from .inequalities import (GNResult, SuiteResult, radial_tail_sums,
                           random_field, run_caccioppoli_suite,
                           run_faber_krahn_suite, run_gn_suite,
                           run_sobolev_suite, verify_faber_krahn, verify_gn,
                           verify_sobolev)
from .lattice import (VertexSet, WeightedGraph, ball_volume_profile,
                      boundary_measure, build_lattice_ball, graph_dump,
                      sub_ball)
from .operators import (boundary_outflow, caccioppoli_ratio, dirichlet_energy,
                        p_laplacian, phi_p, weighted_norm)
from .scaling import (DomainError, InversionError, NoBracketError,
                      NonMonotoneError, RateExponents, ScalingToolkit,
                      convexity_check_phi_inverse, critical_alpha, h_exponent,
                      invert_monotone, rate_exponents, sandwich_exponents,
                      scaling_sandwich_check)

__all__ = [name for name in dir() if not name.startswith("_")]
