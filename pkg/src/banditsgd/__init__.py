"""Online estimation and inference for two-arm contextual bandits with weighted averaged SGD."""
from ._backend import BACKEND
from .core import ConfigError, DivergenceError, Observation, SeedSpec, StepSchedule, arm_slice, step_size
from .engine import Draws, SgdState, Trajectory, advance, run_online, sgd_step
from .inference import InferenceReport, PlugInAccumulator, SingularHessianError, report, sandwich
from .losses import LossModel
from .policy import EpsilonSchedule, WeightScheme, epsilon_at, prob_arm0, sample_action, weight

__version__ = "0.1.0"
