from .config import ModelConfig, init_parameters, parameter_shapes
from .model import (
    Batch,
    backward,
    forward,
    loss,
    loss_and_grads,
    make_batch,
    multi_head_attention,
    scaled_dot_attention,
)
from .optimizer import AdamHyper, AdamState, init_adam, train_step
from .decoding import beam_decode, greedy_decode
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ModelConfig",
    "init_parameters",
    "parameter_shapes",
    "Batch",
    "make_batch",
    "forward",
    "backward",
    "loss",
    "loss_and_grads",
    "scaled_dot_attention",
    "multi_head_attention",
    "AdamHyper",
    "AdamState",
    "init_adam",
    "train_step",
    "greedy_decode",
    "beam_decode",
    "load_checkpoint",
    "save_checkpoint",
]
