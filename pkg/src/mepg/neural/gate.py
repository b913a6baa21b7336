"""The trainable gate: pooled site features -> one logit per expert.

A single linear map is shared by both MoE sites (their feature spaces have
the same width); sigmoid turns logits into per-expert weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from . import ops


@dataclass
class GateParams:
    w: np.ndarray  # [E,F]
    b: np.ndarray  # [E]

    @property
    def n_experts(self) -> int:
        return self.w.shape[0]

    @property
    def features(self) -> int:
        return self.w.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}


def init_gate(n_experts: int, features: int) -> GateParams:
    # Zero init: every expert starts at weight 0.5, ties broken by index.
    return GateParams(w=np.zeros((n_experts, features)), b=np.zeros(n_experts))


def gate_logits(gate: GateParams, feats: np.ndarray) -> np.ndarray:
    """feats [B,F] (or [F]) -> logits [B,E] (or [E])."""
    single = feats.ndim == 1
    f = feats[None] if single else feats
    if f.shape[1] != gate.features:
        raise ShapeMismatch(f"features {f.shape} vs gate {gate.w.shape}")
    out = f @ gate.w.T + gate.b
    return out[0] if single else out


def bce_loss_and_grads(gate: GateParams, feats: np.ndarray, targets: np.ndarray):
    """Per-expert binary cross-entropy on sigmoid weights.

    feats [B,F], targets [B,E] in {0,1}. Returns (loss, grads).
    """
    logits = gate_logits(gate, feats)
    # stable BCE-with-logits: max(l,0) - l*t + log(1+exp(-|l|))
    loss = float(np.mean(
        np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))))
    g = (ops.sigmoid(logits) - targets) / logits.size
    return loss, {"w": g.T @ feats, "b": g.sum(axis=0)}
