"""Offline reinforcement learning for the metapolicy."""

from .checkpoint import CheckpointError, load_checkpoint, parse_checkpoint, save_checkpoint
from .iql import Checkpoint, LearnedPolicy, NumericalError, TrainConfig, act, train

__all__ = ["Checkpoint", "CheckpointError", "LearnedPolicy", "NumericalError", "TrainConfig",
           "act", "load_checkpoint", "parse_checkpoint", "save_checkpoint", "train"]
