"""Sampled-data consensus for second-order multi-agent systems.

Simulation of the PD-type protocol with aperiodic neighbour sampling, LMI
stability certificates, and the certified (lambda_bar, tau_bar) region.
"""
from .exceptions import (BracketError, ConsensusLabError, ConvergenceError, DegenerateGraphError,
                         DimensionError, NumericalError, ParameterError, PreconditionError)
from .graph_spectral import (Graph, ModalBasis, demo_graph, is_connected, modal_decomposition,
                             random_connected_graph, weighted_adjacency)
from .lmi_certifier import (Certificate, CertificateVariables, FeasibilityReport, SolverOptions,
                            assemble_lmis, find_certificate, lyapunov_trace, psi, verify_certificate)
from .protocol_dynamics import (NetworkState, ProtocolGains, SamplingSchedule, Trajectory,
                                consensus_metrics, generate_schedule, hold_propagator, periodic_schedule,
                                simulate_modal, simulate_rk4, system_matrices, uem_limit)
from .region_sweep import StabilityRegion, max_certified_tau, stability_region

__version__ = "0.1.0"
