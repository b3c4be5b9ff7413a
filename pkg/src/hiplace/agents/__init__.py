from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .episodes import (
    Environment,
    GlobalEpisode,
    episode_reward,
    global_observe,
    local_observe,
    run_centralized_episode,
    run_global_episode,
    run_local_episode,
    zone_reward,
)
from .policy import (
    GlobalObservation,
    GlobalPolicy,
    LocalObservation,
    LocalPolicy,
    NoFeasibleAction,
    Sample,
    act,
    action_probabilities,
    gradient_check,
    masked_log_softmax,
    surrogate_loss,
)
from .replay import ReplayBuffer, Step, Trajectory
from .train import (
    Adam,
    JointResult,
    PretrainResult,
    TrainConfig,
    TrainingDiverged,
    joint_train,
    pretrain_local,
)

__all__ = [
    "Adam",
    "CheckpointError",
    "Environment",
    "GlobalEpisode",
    "episode_reward",
    "GlobalObservation",
    "GlobalPolicy",
    "JointResult",
    "LocalObservation",
    "LocalPolicy",
    "NoFeasibleAction",
    "PretrainResult",
    "ReplayBuffer",
    "Sample",
    "Step",
    "TrainConfig",
    "Trajectory",
    "TrainingDiverged",
    "act",
    "action_probabilities",
    "global_observe",
    "gradient_check",
    "joint_train",
    "load_checkpoint",
    "local_observe",
    "masked_log_softmax",
    "pretrain_local",
    "run_centralized_episode",
    "run_global_episode",
    "run_local_episode",
    "save_checkpoint",
    "surrogate_loss",
    "zone_reward",
]
