"""Cross-denoising orchestration: stage function, local/global steps, fusion.

Generation counts steps t = 1..N forward. The first floor(p1*N) steps are
local-dominant (each region denoised under its own prompt/expert, composed
through its rasterized mask); the rest are global (full-frame proposals
from the global and region experts fused by the alpha weights). During the
local phase every interleave_g-th step executes a global step anyway to
keep overall structure aligned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conditioning import encode
from .diffusion import NoiseSchedule, step_noise
from .errors import (AlphaNotNormalized, ConfigError, MaskShapeMismatch,
                     StepOutOfRange)
from .geometry import Layout, RegionMask, rasterize, validate_layout
from .moe import MedEnsemble
from .neural import ops

LOCAL = "local"
GLOBAL = "global"

ALPHA_LEAD_RAMP = "lead-ramp"
ALPHA_FIXED = "fixed"

OVERLAP_MEAN = "mean"
OVERLAP_PRIORITY = "priority"
OVERLAP_AREA = "area-weighted"


@dataclass
class GenerationConfig:
    n_steps: int = 50
    p1: float = 0.7
    k: int = 2
    interleave_g: int = 5           # 0 disables interleaving
    alpha_mode: str = ALPHA_LEAD_RAMP
    alpha_global_start: float = 0.5
    seed: int = 0
    grid_h: int = 32
    grid_w: int = 32
    overlap_mode: str = OVERLAP_MEAN
    gate_activation: str = "sigmoid"

    def validate(self) -> None:
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")
        if not 0.0 <= self.p1 <= 1.0:
            raise ConfigError(f"p1 must lie in [0, 1], got {self.p1}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.interleave_g < 0:
            raise ConfigError(f"interleave_g must be >= 0, got {self.interleave_g}")
        if not 0.0 <= self.alpha_global_start <= 1.0:
            raise ConfigError(
                f"alpha_global_start must lie in [0, 1], got {self.alpha_global_start}")
        if self.alpha_mode not in (ALPHA_LEAD_RAMP, ALPHA_FIXED):
            raise ConfigError(f"unknown alpha_mode {self.alpha_mode!r}")
        if self.overlap_mode not in (OVERLAP_MEAN, OVERLAP_PRIORITY, OVERLAP_AREA):
            raise ConfigError(f"unknown overlap_mode {self.overlap_mode!r}")
        if self.grid_h < 1 or self.grid_w < 1:
            raise ConfigError(f"grid {self.grid_h}x{self.grid_w} must be >= 1x1")

    def to_dict(self) -> dict:
        return {
            "n_steps": self.n_steps, "p1": self.p1, "k": self.k,
            "interleave_g": self.interleave_g, "alpha_mode": self.alpha_mode,
            "alpha_global_start": self.alpha_global_start, "seed": self.seed,
            "grid_h": self.grid_h, "grid_w": self.grid_w,
            "overlap_mode": self.overlap_mode,
            "gate_activation": self.gate_activation,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GenerationConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be an object")
        unknown = set(doc) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**doc)
        cfg.validate()
        return cfg


@dataclass
class DenoiseState:
    x: np.ndarray  # [C,H,W]
    step: int      # scheduler step t, counted forward


def local_phase_len(n_steps: int, p1: float) -> int:
    return int(math.floor(p1 * n_steps))


def stage_of(t: int, n_steps: int, p1: float) -> str:
    """Dominant stage at step t: local iff t <= floor(p1*N)."""
    if not 1 <= t <= n_steps:
        raise StepOutOfRange(f"t={t} outside [1, {n_steps}]")
    return LOCAL if t <= local_phase_len(n_steps, p1) else GLOBAL


def executed_kind(t: int, cfg: GenerationConfig) -> str:
    """Actual step kind after interleaving global steps into the local phase."""
    if stage_of(t, cfg.n_steps, cfg.p1) == LOCAL and \
            (cfg.interleave_g == 0 or t % cfg.interleave_g != 0):
        return LOCAL
    return GLOBAL


def _exact_simplex(prefix: list[float]) -> list[float]:
    """Append a last component so that math.fsum(result) == 1.0 exactly."""
    work = list(prefix)
    last = 1.0 - math.fsum(work)
    for _ in range(4):
        if last >= 0.0:
            break
        j = max(range(len(work)), key=lambda i: work[i])
        work[j] += last
        last = 1.0 - math.fsum(work)
    last = max(last, 0.0)
    for _ in range(8):
        s = math.fsum(work + [last])
        if s == 1.0:
            break
        last = math.nextafter(last, math.inf if s < 1.0 else -math.inf)
    return work + [last]


def alpha_schedule(t: int, cfg: GenerationConfig, layout: Layout,
                   mask_areas: list[int] | None = None) -> list[float]:
    """Fusion weights [alpha_global, alpha_region_1..M]; sums to exactly 1.

    lead-ramp: the global weight ramps linearly from alpha_global_start at
    the first global-phase step to 1.0 at t = N; the remainder is split
    over regions in proportion to rasterized mask area. fixed: the global
    weight stays at alpha_global_start.
    """
    m = len(layout.regions)
    if m == 0:
        return [1.0]
    if cfg.alpha_mode == ALPHA_FIXED:
        ag = cfg.alpha_global_start
    else:
        t_start = local_phase_len(cfg.n_steps, cfg.p1) + 1
        denom = cfg.n_steps - t_start
        if t >= cfg.n_steps or denom <= 0:
            ag = 1.0
        elif t <= t_start:
            ag = cfg.alpha_global_start
        else:
            frac = (t - t_start) / denom
            ag = cfg.alpha_global_start + (1.0 - cfg.alpha_global_start) * frac
    if ag >= 1.0:
        return _exact_simplex([1.0] + [0.0] * (m - 1)) if m > 1 else [1.0, 0.0]
    if mask_areas is None:
        mask_areas = [rasterize(r.box, cfg.grid_h, cfg.grid_w).area
                      for r in layout.regions]
    if len(mask_areas) != m:
        raise ConfigError(f"{len(mask_areas)} mask areas for {m} regions")
    total = float(sum(mask_areas))
    shares = [a / total for a in mask_areas] if total > 0 else [1.0 / m] * m
    remainder = 1.0 - ag
    prefix = [ag] + [remainder * s for s in shares[:-1]]
    return _exact_simplex(prefix)


def _region_sort_key(region):
    return (region.box.as_tuple(), region.prompt, region.expert_id, region.style_tag)


def _proposal(ensemble: MedEnsemble, schedule: NoiseSchedule, host_id: str,
              x: np.ndarray, t: int, cond: tuple[int, ...],
              z: np.ndarray | None, sink: list | None) -> np.ndarray:
    tau = schedule.n_steps - t + 1
    eps = ensemble.eps(host_id, x, tau, cond, trace_sink=sink)
    return schedule.p_step(eps, x, tau, z)


def local_step(state: DenoiseState, layout: Layout, masks: list[RegionMask],
               ensemble: MedEnsemble, schedule: NoiseSchedule, t: int,
               noise: np.ndarray | None, overlap_mode: str = OVERLAP_MEAN,
               trace_sink: list | None = None) -> DenoiseState:
    """Per-region proposals composed through masks; uncovered cells go global.

    Every proposal is a full-frame reverse step sharing the same step noise;
    the masks only drive the composition, so a full-canvas region reproduces
    the plain sampler bit for bit.
    """
    x = state.x
    h, w = x.shape[1], x.shape[2]
    if len(masks) != len(layout.regions):
        raise MaskShapeMismatch(f"{len(masks)} masks for {len(layout.regions)} regions")
    for m in masks:
        if m.cells.shape != (h, w):
            raise MaskShapeMismatch(f"mask {m.cells.shape} vs state {x.shape}")

    # canonical region order keeps the composition independent of layout order
    order = sorted(range(len(layout.regions)),
                   key=lambda i: _region_sort_key(layout.regions[i]))
    if overlap_mode == OVERLAP_PRIORITY:
        order = list(range(len(layout.regions)))

    acc = None
    cnt = np.zeros((h, w))
    assigned = np.zeros((h, w), dtype=bool)
    for i in order:
        mask = masks[i].cells
        if not mask.any():
            continue
        region = layout.regions[i]
        host = ensemble.registry.resolve(region.expert_id, region.style_tag)
        prop = _proposal(ensemble, schedule, host, x, t,
                         encode(region.prompt), noise, trace_sink)
        if overlap_mode == OVERLAP_PRIORITY:
            take = mask & ~assigned
            part = np.where(take[None], prop, 0.0)
            weight = take.astype(np.float64)
            assigned |= mask
        elif overlap_mode == OVERLAP_AREA:
            a = float(mask.sum())
            part = (a * mask.astype(np.float64))[None] * prop
            weight = a * mask.astype(np.float64)
        else:
            part = mask[None] * prop
            weight = mask.astype(np.float64)
        acc = part if acc is None else acc + part
        cnt = cnt + weight

    uncovered = cnt == 0
    if acc is None:
        # no effective regions: the whole frame takes the global proposal
        gid = ensemble.registry.default_global_id()
        new_x = _proposal(ensemble, schedule, gid, x, t,
                          encode(layout.global_prompt), noise, trace_sink)
    else:
        covered_vals = acc / np.maximum(cnt, 1.0)[None]
        if uncovered.any():
            gid = ensemble.registry.default_global_id()
            gprop = _proposal(ensemble, schedule, gid, x, t,
                              encode(layout.global_prompt), noise, trace_sink)
            new_x = np.where(uncovered[None], gprop, covered_vals)
        else:
            new_x = covered_vals
    ops.check_finite(new_x, f"local step {t}")
    return DenoiseState(new_x, t)


def global_step(state: DenoiseState, layout: Layout, ensemble: MedEnsemble,
                schedule: NoiseSchedule, alphas: list[float], t: int,
                noise: np.ndarray | None,
                trace_sink: list | None = None) -> DenoiseState:
    """Fuse full-frame proposals: x' = sum_i alpha_i * x_i.

    alphas[0] weights the global expert under the global prompt, alphas[i]
    region i's expert under its prompt. Proposals with identical
    (expert, conditioning) are computed once with their weights pooled, and
    zero-weight proposals are skipped entirely, so a degenerate schedule
    reduces bit-exactly to a single expert's plain step.
    """
    m = len(layout.regions)
    if len(alphas) != m + 1:
        raise AlphaNotNormalized(f"{len(alphas)} alphas for {m} regions + global")
    if abs(math.fsum(alphas) - 1.0) > 1e-9:
        raise AlphaNotNormalized(f"alphas sum to {math.fsum(alphas)!r}, not 1")
    if any(a < 0 for a in alphas):
        raise AlphaNotNormalized("alphas must be non-negative")

    jobs = [(ensemble.registry.default_global_id(),
             encode(layout.global_prompt), alphas[0])]
    for i, region in enumerate(layout.regions):
        host = ensemble.registry.resolve(region.expert_id, region.style_tag)
        jobs.append((host, encode(region.prompt), alphas[i + 1]))

    groups: dict[tuple, list[float]] = {}
    for host, cond, a in jobs:
        groups.setdefault((host, cond), []).append(a)
    weighted = [(key, math.fsum(ws)) for key, ws in groups.items()]
    weighted = [(key, wsum) for key, wsum in weighted if wsum != 0.0]

    if len(weighted) == 1:
        (host, cond), _ = weighted[0]
        new_x = _proposal(ensemble, schedule, host, state.x, t, cond,
                          noise, trace_sink)
    else:
        parts = []
        for (host, cond), wsum in weighted:
            prop = _proposal(ensemble, schedule, host, state.x, t, cond,
                             noise, trace_sink)
            parts.append(wsum * prop)
        new_x = parts[0]
        for p in parts[1:]:
            new_x = new_x + p
    ops.check_finite(new_x, f"global step {t}")
    return DenoiseState(new_x, t)


def cross_denoise(layout: Layout, ensemble: MedEnsemble, config: GenerationConfig,
                  progress=None) -> tuple[np.ndarray, list[dict]]:
    """Full generation run; returns (image [C,H,W] in [-1,1], per-step trace)."""
    config.validate()
    check = validate_layout(layout)
    if not check.ok:
        raise ConfigError("invalid layout: " +
                          "; ".join(v.message for v in check.violations))
    for r in layout.regions:  # fail fast on unresolvable experts
        ensemble.registry.resolve(r.expert_id, r.style_tag)

    n = config.n_steps
    schedule = NoiseSchedule(n)
    for eid in ensemble.registry.ids():
        if ensemble.params_of(eid).n_timesteps < n:
            raise ConfigError(
                f"expert {eid!r} supports {ensemble.params_of(eid).n_timesteps} "
                f"steps, config asks for {n}")

    shape = (ensemble.channels, config.grid_h, config.grid_w)
    masks = [rasterize(r.box, config.grid_h, config.grid_w)
             for r in layout.regions]
    mask_areas = [m.area for m in masks]

    state = DenoiseState(step_noise(config.seed, 0, shape), 0)
    trace: list[dict] = []
    for t in range(1, n + 1):
        z = step_noise(config.seed, t, shape) if t < n else None
        kind = executed_kind(t, config)
        sink: list = []
        record: dict = {"t": t, "stage": stage_of(t, n, config.p1),
                        "executed": kind}
        if kind == LOCAL:
            state = local_step(state, layout, masks, ensemble, schedule, t, z,
                               config.overlap_mode, sink)
        else:
            alphas = alpha_schedule(t, config, layout, mask_areas)
            record["alphas"] = [float(a) for a in alphas]
            state = global_step(state, layout, ensemble, schedule, alphas, t,
                                z, sink)
        record["expert_ids"] = sorted({r["host"] for r in sink})
        record["routing"] = sink
        trace.append(record)
        if progress is not None:
            progress(t, n)
    return np.clip(state.x, -1.0, 1.0), trace
