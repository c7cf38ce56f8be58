"""Calibration/refinement decomposition of proper losses, post-hoc
recalibration, refinement-based early stopping, and the matching
high-dimensional logistic-regression theory with a finite-sample simulator."""

from .calibrate import (
    IsotonicCalibrator,
    TemperatureCalibrator,
    apply_calibrator,
    apply_isotonic,
    apply_temperature,
    calibrator_from_dict,
    fit_isotonic,
    fit_temperature,
)
from .decompose import (
    Decomposition,
    EstimatorKind,
    SharpnessReport,
    binned_ece,
    bruteforce_decomposition,
    calibration_estimate,
    cv_refinement,
    decompose_risk,
    refinement_estimate,
    sharpness_report,
)
from .errors import (
    CalrefError,
    ConvergenceError,
    DegenerateLabelsError,
    MethodCompatibilityError,
    NumericalError,
    ValidationError,
)
from .gaussian import (
    GaussianModelPoint,
    calibration_error,
    error_rate,
    gauss_expect,
    invert_estar,
    optimal_error_rate,
    optimal_rescale,
    refinement_error,
)
from .highdim import (
    HeatmapCell,
    LambdaSweep,
    SolverSolution,
    TheoryProblem,
    alignment_and_norm,
    kappa,
    lambda_sweep,
    minimizer_gap_and_gain,
    solve_system,
)
from .scores import (
    LossKind,
    PredictionSet,
    accuracy,
    auroc_ovr,
    divergence,
    empirical_risk,
    entropy,
    loss_pointwise,
)
from .simulate import (
    Fig4Replication,
    SyntheticDataset,
    empirical_alignment_norm,
    fit_logreg,
    replicate_fig4,
    sample_dataset,
)
from .spectra import ConstantSpectrum, SpectralDist, beta_expect
from .stopping import EpochRecord, EpochTracker, StoppingReport

__version__ = "0.1.0"
