from .autodiff import Tensor, no_grad
from .layers import ACTION_BOUND, MLP, Dense, GATLayer, attention_bias, gat_attention, mlp_forward
from .params import (
    NonFiniteError,
    ParameterStore,
    ShapeMismatchError,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    soft_update,
)

__all__ = [
    "Tensor",
    "no_grad",
    "ACTION_BOUND",
    "MLP",
    "Dense",
    "GATLayer",
    "attention_bias",
    "gat_attention",
    "mlp_forward",
    "NonFiniteError",
    "ParameterStore",
    "ShapeMismatchError",
    "load_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
    "soft_update",
]
