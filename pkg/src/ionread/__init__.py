"""Models of state-dependent fluorescence readout of hyperfine ion qubits."""

from .angular import BranchingRatios, Scheme, branching_ratios, cg_squared, wigner_3j, wigner_6j
from .ccd import (
    CcdFrame,
    CcdParams,
    CorrelationReport,
    RegisterReadout,
    Roi,
    conditional_correlations,
    crosstalk_ratio,
    default_rois,
    equal_error_threshold,
    read_pgm,
    read_register,
    simulate_register_batch,
    snr,
    synthesize_frame,
    write_pgm,
)
from .detmodel import (
    BUILTIN_SPECIES,
    DetectionConfig,
    HistKind,
    IonSpecies,
    LeakParams,
    PhotonHistogram,
    analytic_histograms,
    dark_leak_density,
    dark_point_mass,
    detection_params,
    get_species,
    histogram_cutoff,
    load_species_file,
    p_bright,
    p_dark,
    pmf_arrays,
    write_species_file,
)
from .errors import ConfigError, DomainError, IonReadError
from .fidelity import (
    ApproxFidelity,
    DiscriminationResult,
    approx_fidelity,
    best_threshold,
    composed_fidelity,
    fidelity_at,
    fidelity_curve,
    max_clock_fidelity,
    optimize_detection,
)
from .fitkit import FitResult, fit_histograms, model_distributions
from .mcsim import (
    InitialState,
    McConfig,
    McMode,
    read_histogram_csv,
    simulate_histogram,
    total_variation,
    write_histogram_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ApproxFidelity",
    "BUILTIN_SPECIES",
    "BranchingRatios",
    "CcdFrame",
    "CcdParams",
    "ConfigError",
    "CorrelationReport",
    "DetectionConfig",
    "DiscriminationResult",
    "DomainError",
    "FitResult",
    "HistKind",
    "InitialState",
    "IonReadError",
    "IonSpecies",
    "LeakParams",
    "McConfig",
    "McMode",
    "PhotonHistogram",
    "RegisterReadout",
    "Roi",
    "Scheme",
    "analytic_histograms",
    "approx_fidelity",
    "best_threshold",
    "branching_ratios",
    "cg_squared",
    "composed_fidelity",
    "conditional_correlations",
    "crosstalk_ratio",
    "dark_leak_density",
    "dark_point_mass",
    "default_rois",
    "detection_params",
    "equal_error_threshold",
    "fidelity_at",
    "fidelity_curve",
    "fit_histograms",
    "get_species",
    "histogram_cutoff",
    "load_species_file",
    "max_clock_fidelity",
    "model_distributions",
    "optimize_detection",
    "p_bright",
    "p_dark",
    "pmf_arrays",
    "read_histogram_csv",
    "read_pgm",
    "read_register",
    "simulate_histogram",
    "simulate_register_batch",
    "snr",
    "synthesize_frame",
    "total_variation",
    "wigner_3j",
    "wigner_6j",
    "write_histogram_csv",
    "write_pgm",
    "write_species_file",
    "__version__",
]
