from .dlr import DlrEntry, DlrReport, PreconditionError, check_geometry, dlr_check
from .entropy import EntropyReport, entropy_per_site, entropy_per_site_formula, entropy_report
from .free_energy import (
    FreeEnergyReport,
    free_energy_definition,
    free_energy_mismatch,
    free_energy_report,
    interior_sites,
)
from .hamiltonian import (
    brownian_boundary,
    girsanov_log_density,
    girsanov_normalization,
    hamiltonian,
    log_densities,
    site_terms,
)
from .kernels import (
    ESS_FRACTION,
    WeightedEnsemble,
    boundary_sites,
    kernel_hplus,
    kernel_support,
    partition_mean,
    sample_kernel_h,
)
from .moments import MomentReport, MomentRow, moment_bound_report, sample_frozen_constant

__all__ = [
    "DlrEntry", "DlrReport", "PreconditionError", "check_geometry", "dlr_check",
    "EntropyReport", "entropy_per_site", "entropy_per_site_formula", "entropy_report",
    "FreeEnergyReport", "free_energy_definition", "free_energy_mismatch",
    "free_energy_report", "interior_sites",
    "brownian_boundary", "girsanov_log_density", "girsanov_normalization", "hamiltonian",
    "log_densities", "site_terms",
    "ESS_FRACTION", "WeightedEnsemble", "boundary_sites", "kernel_hplus", "kernel_support",
    "partition_mean", "sample_kernel_h",
    "MomentReport", "MomentRow", "moment_bound_report", "sample_frozen_constant",
]
