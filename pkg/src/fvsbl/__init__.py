"""Joint wideband channel estimation and antenna self-calibration via fast
variational sparse Bayesian learning."""

from .array_model import (
    ArrayGeometry,
    DispersionParams,
    Dictionary,
    SignalGrid,
    apply_calibration,
    build_dictionary,
    dictionary_atom,
    steering_vector,
    temporal_vector,
)
from .channel_sim import (
    CalibrationTruth,
    GroundTruth,
    SimConfig,
    default_scenario,
    draw_calibration_weights,
    amplitude_from_component_snr,
    synthesize_measurement,
)
from .estimator import (
    EstimationResult,
    EstimatorConfig,
    ThetaGrid,
    run_fvsbl,
)
from .experiment import (
    ExperimentConfig,
    TrialRecord,
    emit_outputs,
    run_sweep,
    run_trial,
)
from .metrics import MetricsConfig, ospa, rmse_weights, tau_to_distance
from .vsbl_core import (
    ConditioningError,
    DegenerateGeometryError,
    DetectionStat,
    Hyperparams,
    PosteriorState,
    WeightPrior,
    beamformer_init,
    component_log_objective,
    detection_statistics,
    gamma_consistency_update,
    gamma_fast_update,
    optimize_component,
    update_amplitudes,
    update_noise,
    update_weights,
)

__version__ = "0.1.0"
