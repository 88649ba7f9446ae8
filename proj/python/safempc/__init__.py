"""Uncertainty-gated imitation learning for the cart-pole."""

from ._core import (
    ConfigError,
    InvalidHorizon,
    IoError,
    NonFiniteLoss,
    ShapeMismatch,
    config,
    elite_refit,
    is_success,
    mc_predict,
    mpc_rollout,
    reward,
    run,
    step,
)

__all__ = [
    "ConfigError",
    "InvalidHorizon",
    "IoError",
    "NonFiniteLoss",
    "ShapeMismatch",
    "config",
    "elite_refit",
    "is_success",
    "mc_predict",
    "mpc_rollout",
    "reward",
    "run",
    "step",
]
