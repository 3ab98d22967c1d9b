"""Adaptive-moment (Adam) parameter updates with bias correction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import TrainingError
from .config import ModelConfig, Parameters
from .model import Batch, loss_and_grads


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: Parameters = field(default_factory=dict)
    v: Parameters = field(default_factory=dict)


def init_adam(params: Parameters) -> AdamState:
    return AdamState(
        step=0,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def apply_gradients(
    params: Parameters, grads: Parameters, state: AdamState, hyper: AdamHyper
) -> None:
    """One in-place Adam step over every parameter."""
    state.step += 1
    bc1 = 1.0 - hyper.beta1**state.step
    bc2 = 1.0 - hyper.beta2**state.step
    for path, p in params.items():
        kernels.adam_update(
            p.reshape(-1),
            np.ascontiguousarray(grads[path].reshape(-1)),
            state.m[path].reshape(-1),
            state.v[path].reshape(-1),
            hyper.lr,
            hyper.beta1,
            hyper.beta2,
            hyper.eps,
            bc1,
            bc2,
        )


def train_step(
    batch: Batch,
    params: Parameters,
    state: AdamState,
    config: ModelConfig,
    hyper: AdamHyper,
    rng: np.random.Generator | None = None,
) -> float:
    """Compute gradients on one batch and update ``params``/``state`` in place.

    Returns the (pre-update) batch loss; aborts on non-finite loss.
    """
    loss_val, grads = loss_and_grads(
        batch, params, config, train_mode=True, rng=rng
    )
    if not math.isfinite(loss_val):
        raise TrainingError(
            f"non-finite loss {loss_val!r} at optimizer step {state.step + 1}; "
            f"lr={hyper.lr}, batch={batch.src_ids.shape}"
        )
    apply_gradients(params, grads, state, hyper)
    return loss_val
