"""Attention-policy trainer producing seed trajectories for the solver."""

from .export import export_trajectories, trajectory_record
from .model import EncoderLayer, NeuralConfig, PolicyNet, instance_features
from .rollout import (
    MASK_INFERENCE,
    MASK_TRAIN,
    greedy_rollouts,
    rollout_batch,
    select_start_pickups,
)
from .train import (
    advantages_from_objectives,
    am_train,
    baseline_should_update,
    enumerate_policy_expectation,
    greedy_eval,
    instance_loss,
    load_checkpoint,
    make_instances,
    pomo_step,
    pomo_train,
    route_objective,
    save_checkpoint,
)

__version__ = "0.1.0"
