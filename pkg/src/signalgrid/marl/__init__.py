from .evaluator import EpisodeSummary, EvalResult, evaluate, run_episode
from .optim import Adam, clip_grad_norm
from .returns import (
    actor_critic_losses,
    advantages,
    sampled_returns,
    spatial_weight_matrix,
)
from .trainer import EpisodeLog, TrainConfig, Trainer, TrainingDiverged, train

__all__ = [
    "Adam",
    "EpisodeLog",
    "EpisodeSummary",
    "EvalResult",
    "TrainConfig",
    "Trainer",
    "TrainingDiverged",
    "actor_critic_losses",
    "advantages",
    "clip_grad_norm",
    "evaluate",
    "run_episode",
    "sampled_returns",
    "spatial_weight_matrix",
    "train",
]
