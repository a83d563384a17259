"""Sensor selection for LTI systems from input/output data."""
from .errors import (ConfigError, DataError, DDSensorError, DimensionError,
                     InsufficientSamplesError, RankDeficitWarning, UnobservableError,
                     UnstableSystemError)
from .estimator import GramianEstimate, cost_block_sum, estimate, estimate_all, metric_value
from .lti_core import (ExcitationConfig, LtiSystem, Metric, SelectionIndex, Trajectory,
                       generate_excitation, selection_matrix, simulate, spectral_radius)
from .regressors import assemble, assemble_obs_matrices
from .selector import (PipelineConfig, SelectionResult, run_selection, select_greedy_logdet,
                       select_topk, verify_observability)

__version__ = "0.1.0"
