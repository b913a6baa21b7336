"""Tensor math, toy denoisers, the gate, checkpoints, and training loops.

Training utilities live in mepg.neural.training (imported lazily here to
keep module load cheap and dependency edges acyclic).
"""

from . import ops
from .checkpoint import (load_denoiser, load_gate, params_hash, save_denoiser,
                         save_gate)
from .denoiser import DenoiserParams, denoiser_forward, init_denoiser
from .gate import GateParams, gate_logits, init_gate

__all__ = [
    "ops",
    "DenoiserParams", "denoiser_forward", "init_denoiser",
    "GateParams", "gate_logits", "init_gate",
    "save_denoiser", "load_denoiser", "save_gate", "load_gate", "params_hash",
]


def __getattr__(name: str):
    if name == "training":
        from . import training
        return training
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
