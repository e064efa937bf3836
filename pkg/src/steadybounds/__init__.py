"""Steady-state lower bounds on relaxation and correlation times of open quantum systems."""
from .errors import *  # noqa: F401,F403
from .operators import (Jump, LindbladModel, build_infinite_range_ising, build_ising,
                        build_parametric_cavity, build_thermal_cavity, fock_annihilation,
                        pauli_embedded)
from .liouvillian import (SteadyState, Superoperator, adequate_cavity, assemble, evolve,
                          max_g0_expectation, qfi_bound_transient, spectral_gap, steady_state)
from .correlations import (CorrelationResult, correlation_time_quadrature,
                           correlation_time_resolvent, g2_at, system_autocorrelation)
from .sensitivity import SensitivityResult, dss_domega, finite_diff_dss, snr_rate
from .bounds import (BoundReport, certify, correlation_bound, general_bound_check,
                     relaxation_bound)

__version__ = "0.1.0"
