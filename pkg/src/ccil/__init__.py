"""Corrective labels for behavior cloning from a locally Lipschitz learned
dynamics model, with a pendulum testbed."""

__version__ = "0.1.0"

from .data import Dataset, RngStream, Transition, load_dataset, save_dataset, split
from .dynamics import DynamicsModel, RegConfig, train_dynamics
from .evaluation import EvalConfig, compare, evaluate, verify_bounds
from .labels import CorrectiveLabel, GenConfig, LabelSet, generate_labels, solve_root
from .pendulum import PendulumEnv, make_env
from .policy import BcConfig, Policy, train_bc

__all__ = [
    "BcConfig", "CorrectiveLabel", "Dataset", "DynamicsModel", "EvalConfig", "GenConfig", "LabelSet",
    "PendulumEnv", "Policy", "RegConfig", "RngStream", "Transition", "compare", "evaluate",
    "generate_labels", "load_dataset", "make_env", "save_dataset", "solve_root", "split",
    "train_bc", "train_dynamics", "verify_bounds",
]
