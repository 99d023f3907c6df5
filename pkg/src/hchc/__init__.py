"""Deep clustering into cluster probability distributions, laid out on a
circle ordered by the optimal Hamiltonian cycle of the clusters."""

from .exceptions import (
    ConfigError,
    DegenerateDistanceError,
    ExactSolverLimitError,
    HCHCError,
    InvalidInputError,
    ParseError,
    TrainingDivergenceError,
)
from .gldc import GLDC, TrainingConfig, assign_labels, infer_probabilities, pretrain, train
from .layout import CircularLayout, CycleOrder, HamiltonianLayout
from .metrics import acc, nmi

__all__ = [
    "GLDC",
    "HamiltonianLayout",
    "TrainingConfig",
    "CircularLayout",
    "CycleOrder",
    "pretrain",
    "train",
    "infer_probabilities",
    "assign_labels",
    "acc",
    "nmi",
    "HCHCError",
    "InvalidInputError",
    "TrainingDivergenceError",
    "DegenerateDistanceError",
    "ExactSolverLimitError",
    "ConfigError",
    "ParseError",
]

__version__ = "0.1.0"
