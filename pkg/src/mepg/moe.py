"""Sparse mixture-of-experts: registry, gate routing, and weighted fusion.

Routing: the gate maps pooled site features to one logit per expert,
sigmoid turns logits into weights, the top-k weights stay active, and the
active weights are renormalized so the expert combination is convex.
A softmax variant is available for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .conditioning import encode
from .errors import (DuplicateId, KOutOfRange, LastGlobalExpertRemoved,
                     MissingCheckpoint, RegistryError, ShapeMismatch,
                     UnknownExpert)
from .neural import ops
from .neural.checkpoint import load_denoiser
from .neural.denoiser import (DenoiserParams, cond_vector, site1_apply,
                              site2_apply, skip_apply, stage1, stage2)
from .neural.gate import GateParams, gate_logits, init_gate

ROLE_LOCAL = "local"
ROLE_GLOBAL = "global-capable"
_ROLES = (ROLE_LOCAL, ROLE_GLOBAL)


@dataclass(frozen=True)
class ExpertEntry:
    expert_id: str
    checkpoint: str
    style_tag: str = ""
    role: str = ROLE_GLOBAL
    notes: str = ""


@dataclass(frozen=True)
class ExpertRegistry:
    """Ordered expert listing; mutations return new snapshots."""

    entries: tuple[ExpertEntry, ...]

    def __post_init__(self):
        ids = [e.expert_id for e in self.entries]
        if len(ids) != len(set(ids)):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise DuplicateId(f"duplicate expert_id {dup!r}")
        if not self.entries:
            raise RegistryError("registry needs at least one expert")
        for e in self.entries:
            if e.role not in _ROLES:
                raise RegistryError(f"{e.expert_id}: unknown role {e.role!r}")
        if not any(e.role == ROLE_GLOBAL for e in self.entries):
            raise RegistryError("registry needs at least one global-capable expert")

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.expert_id for e in self.entries]

    def get(self, expert_id: str) -> ExpertEntry:
        for e in self.entries:
            if e.expert_id == expert_id:
                return e
        raise UnknownExpert(f"no expert {expert_id!r} in registry")

    def index_of(self, expert_id: str) -> int:
        for i, e in enumerate(self.entries):
            if e.expert_id == expert_id:
                return i
        raise UnknownExpert(f"no expert {expert_id!r} in registry")

    def default_global_id(self) -> str:
        return next(e.expert_id for e in self.entries if e.role == ROLE_GLOBAL)

    def resolve(self, expert_id: str, style_tag: str = "") -> str:
        """Region assignment rule: explicit id, else style match, else default."""
        if expert_id:
            return self.get(expert_id).expert_id
        if style_tag:
            for e in self.entries:
                if e.style_tag == style_tag:
                    return e.expert_id
        return self.default_global_id()


def registry_from_doc(doc) -> ExpertRegistry:
    if not isinstance(doc, dict) or "experts" not in doc:
        raise RegistryError("registry config needs a top-level 'experts:' list")
    raw = doc["experts"]
    if not isinstance(raw, list):
        raise RegistryError("'experts' must be a list")
    entries = []
    for item in raw:
        if not isinstance(item, dict):
            raise RegistryError(f"registry entry must be a mapping, got {item!r}")
        if "expert_id" in item:
            entries.append(ExpertEntry(
                expert_id=str(item["expert_id"]),
                checkpoint=str(item.get("checkpoint", "")),
                style_tag=str(item.get("style_tag", "") or ""),
                role=str(item.get("role", ROLE_GLOBAL) or ROLE_GLOBAL),
                notes=str(item.get("notes", "") or ""),
            ))
        elif len(item) == 1:
            # shorthand entry: {<expert_id>: <checkpoint>}
            (eid, ckpt), = item.items()
            entries.append(ExpertEntry(expert_id=str(eid), checkpoint=str(ckpt)))
        else:
            raise RegistryError(f"unrecognized registry entry: {item!r}")
    return ExpertRegistry(tuple(entries))


def registry_load(path: str | Path) -> ExpertRegistry:
    """Load a YAML or JSON registry config (JSON parses as YAML)."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise RegistryError(f"{path}: cannot parse registry config: {exc}") from exc
    return registry_from_doc(doc)


def registry_to_doc(reg: ExpertRegistry) -> dict:
    return {"experts": [
        {"expert_id": e.expert_id, "checkpoint": e.checkpoint,
         "style_tag": e.style_tag, "role": e.role, "notes": e.notes}
        for e in reg.entries]}


def registry_add(reg: ExpertRegistry, entry: ExpertEntry) -> ExpertRegistry:
    if any(e.expert_id == entry.expert_id for e in reg.entries):
        raise DuplicateId(f"duplicate expert_id {entry.expert_id!r}")
    return ExpertRegistry(reg.entries + (entry,))


def registry_remove(reg: ExpertRegistry, expert_id: str) -> ExpertRegistry:
    entry = reg.get(expert_id)
    rest = tuple(e for e in reg.entries if e.expert_id != expert_id)
    if entry.role == ROLE_GLOBAL and not any(e.role == ROLE_GLOBAL for e in rest):
        raise LastGlobalExpertRemoved(
            f"{expert_id!r} is the only global-capable expert")
    return ExpertRegistry(rest)


# --- routing ---

@dataclass
class RoutingDecision:
    raw_logits: np.ndarray          # [E]
    weights: np.ndarray             # [E], sigma(logit) per expert
    active_set: tuple[int, ...]     # indices of the k largest weights
    normalized_weights: np.ndarray  # [k], sums to 1 over the active set

    def summary(self) -> dict:
        return {
            "active": list(self.active_set),
            "weights": [float(w) for w in self.normalized_weights],
        }


def decide(logits: np.ndarray, k: int, activation: str = "sigmoid") -> RoutingDecision:
    """Turn raw gate logits into a top-k routing decision."""
    logits = np.asarray(logits, dtype=np.float64)
    e = logits.shape[0]
    if not 1 <= k <= e:
        raise KOutOfRange(f"k={k} outside [1, {e}]")
    if activation == "sigmoid":
        weights = ops.sigmoid(logits)
    elif activation == "softmax":
        weights = ops.softmax(logits)
    else:
        raise ValueError(f"unknown gate activation {activation!r}")
    # stable argsort on -weights: ties go to the lower index
    order = np.argsort(-weights, kind="stable")
    active = tuple(int(i) for i in order[:k])
    act_w = weights[list(active)]
    return RoutingDecision(logits, weights, active, act_w / act_w.sum())


def route(gate: GateParams, x: np.ndarray, k: int,
          activation: str = "sigmoid") -> RoutingDecision:
    """Route on pooled features. x may be [F], [F,H,W] or [B,F,H,W] (B=1)."""
    if x.ndim == 4:
        x = x[0]
    feats = x.mean(axis=(1, 2)) if x.ndim == 3 else x
    return decide(gate_logits(gate, feats), k, activation)


class SparseMoeBlock:
    """One routed 1x1 projection site over a stack of expert weights."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                 gate: GateParams, k: int, activation: str = "sigmoid"):
        if len(weights) != gate.n_experts:
            raise ShapeMismatch(
                f"{len(weights)} experts vs gate for {gate.n_experts}")
        self.weights = list(weights)
        self.biases = list(biases)
        self.gate = gate
        self.k = k
        self.activation = activation
        self.eval_count = 0  # expert forward evaluations, for sparsity checks

    def route(self, x: np.ndarray) -> RoutingDecision:
        return route(self.gate, x, self.k, self.activation)

    def forward(self, x: np.ndarray, decision: RoutingDecision) -> np.ndarray:
        return moe_forward(self, x, decision)


def moe_forward(block: SparseMoeBlock, x: np.ndarray,
                decision: RoutingDecision) -> np.ndarray:
    """Convex combination of the active experts' site outputs on x [B,F,H,W]."""
    parts = []
    for rank, i in enumerate(decision.active_set):
        out = ops.pointwise(x, block.weights[i], block.biases[i])
        parts.append(decision.normalized_weights[rank] * out)
    block.eval_count += len(decision.active_set)
    y = parts[0]
    for p in parts[1:]:
        y = y + p
    return y


# --- the assembled multi-expert denoiser ---

class MedEnsemble:
    """Registry + loaded experts + gate, with the routed denoiser forward.

    Within one eps() call the host expert supplies the backbone weights and
    the two site projections run through SparseMoeBlocks over all experts.
    k is clamped to the number of experts.
    """

    def __init__(self, registry: ExpertRegistry,
                 experts: dict[str, DenoiserParams],
                 gate: Optional[GateParams] = None,
                 k: int = 2, gate_activation: str = "sigmoid"):
        missing = [i for i in registry.ids() if i not in experts]
        if missing:
            raise MissingCheckpoint(f"no parameters loaded for {missing}")
        self.registry = registry
        self.experts = experts
        ordered = [experts[i] for i in registry.ids()]
        feats = ordered[0].features
        for eid, p in zip(registry.ids(), ordered):
            if p.features != feats or p.channels != ordered[0].channels:
                raise ShapeMismatch(f"expert {eid!r} disagrees on feature width")
        self.gate = gate if gate is not None else init_gate(len(registry), feats)
        if self.gate.n_experts != len(registry):
            raise ShapeMismatch(
                f"gate sized for {self.gate.n_experts} experts, registry has "
                f"{len(registry)}")
        self.k = min(k, len(registry))
        self.gate_activation = gate_activation
        self.site1 = SparseMoeBlock([p.site1_w for p in ordered],
                                    [p.site1_b for p in ordered],
                                    self.gate, self.k, gate_activation)
        self.site2 = SparseMoeBlock([p.site2_w for p in ordered],
                                    [p.site2_b for p in ordered],
                                    self.gate, self.k, gate_activation)

    @property
    def channels(self) -> int:
        return self.experts[self.registry.ids()[0]].channels

    def params_of(self, expert_id: str) -> DenoiserParams:
        try:
            return self.experts[expert_id]
        except KeyError:
            raise UnknownExpert(f"no expert {expert_id!r} loaded") from None

    def eps(self, host_id: str, x: np.ndarray, tau: int,
            cond_ids: tuple[int, ...],
            trace_sink: Optional[list] = None) -> np.ndarray:
        """Routed noise prediction with host backbone + MoE sites."""
        host = self.params_of(host_id)
        cv = cond_vector(host, cond_ids)
        xb = x[None]
        a1 = stage1(host, xb, np.asarray([tau]), cv[None])
        d1 = self.site1.route(a1)
        s1 = self.site1.forward(a1, d1)
        a3 = stage2(host, s1)
        d2 = self.site2.route(a3)
        out = skip_apply(host, xb, self.site2.forward(a3, d2))
        if trace_sink is not None:
            ids = self.registry.ids()
            trace_sink.append({
                "host": host_id,
                "sites": [
                    {"site": 1, **d1.summary(), "experts": [ids[i] for i in d1.active_set]},
                    {"site": 2, **d2.summary(), "experts": [ids[i] for i in d2.active_set]},
                ],
            })
        return ops.check_finite(out[0], "routed denoiser output")

    def plain_eps(self, host_id: str, x: np.ndarray, tau: int,
                  cond_ids: tuple[int, ...]) -> np.ndarray:
        """Unrouted forward with the host's own sites (base-model path)."""
        host = self.params_of(host_id)
        cv = cond_vector(host, cond_ids)
        xb = x[None]
        a1 = stage1(host, xb, np.asarray([tau]), cv[None])
        a3 = stage2(host, site1_apply(host, a1))
        return skip_apply(host, xb, site2_apply(host, a3))[0]


def load_ensemble(registry: ExpertRegistry, gate: Optional[GateParams] = None,
                  k: int = 2, gate_activation: str = "sigmoid",
                  base_dir: str | Path | None = None) -> MedEnsemble:
    """Load every registry expert's checkpoint from disk."""
    experts = {}
    for e in registry.entries:
        path = Path(e.checkpoint)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise MissingCheckpoint(f"{e.expert_id}: checkpoint {path} not found")
        params, _ = load_denoiser(path)
        experts[e.expert_id] = params
    return MedEnsemble(registry, experts, gate, k, gate_activation)


def region_cond(prompt: str) -> tuple[int, ...]:
    return encode(prompt)
