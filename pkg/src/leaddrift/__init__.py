"""Forward-looking intent-drift detection for network KPI telemetry."""

from .dataset import FEATURE_NAMES, assign_labels, featurize, split_then_featurize
from .detector import EmaState, ema, stream_detect
from .errors import ConfigError, DataError, LeadDriftError, TrainingError, TuningError
from .evaluation import cross_validate, run_cv
from .explainer import exact_shapley, explain_alert
from .model import MlpModel, TrainConfig, fit_risk_model
from .telemetry import GeneratorConfig, generate
from .tuner import tune_threshold

__version__ = "0.1.0"
