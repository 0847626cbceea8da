"""Determinantal point processes from weighted Bergman kernels on bounded domains in C^n."""

from .bergman import TruncatedBasis, bergman_density, build_basis, density_limit, gram_matrix, kernel_eval
from .dpp import PointConfiguration, ProjectionSampler, estimate_laplace_functional, sample_dpp
from .energy import EnergyReport, energy, energy_derivative, energy_primitive_check
from .geometry import Ball, DomainSpec, QuadratureGrid, build_quadrature, integrate
from .harness import ExperimentConfig, emit_report, run_convergence_experiment, run_identity_suite
from .operators import ToeplitzMatrix, log_fredholm_det, toeplitz_matrix
from .weights import TestFunction, WeightFunction, check_admissible

__version__ = "0.1.0"
