from . import autodiff
from .autodiff import Tensor, no_grad
from .gradcheck import GradCheckResult, grad_check, make_two_agent_harness
from .layers import DiffusionGRUCell, Encoder, GraphFilterBank, HeadPair, graph_filter
from .model import (
    AgentModel,
    ModelConfig,
    fixed_entry_matrices,
    load_checkpoint,
    save_checkpoint,
)

__all__ = [
    "AgentModel",
    "DiffusionGRUCell",
    "Encoder",
    "GradCheckResult",
    "GraphFilterBank",
    "HeadPair",
    "ModelConfig",
    "Tensor",
    "autodiff",
    "fixed_entry_matrices",
    "grad_check",
    "graph_filter",
    "load_checkpoint",
    "make_two_agent_harness",
    "no_grad",
    "save_checkpoint",
]
