"""The end-to-end toy experiment: two styles, two experts, region attribution.

Trains a blobs expert and a stripes expert, fits the gate on frozen
experts, then generates seeded images from a two-region layout
(left = blobs, right = stripes) and checks with the frequency-statistic
oracle that each region came out in its assigned style.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conditioning import encode
from .datasets import (StyleDataset, classify_region, dataset_hash,
                       make_style_dataset, stripe_threshold)
from .diffusion import NoiseSchedule, sample
from .geometry import BoundingBox, Layout, RegionSpec, rasterize
from .moe import ExpertEntry, ExpertRegistry, MedEnsemble, ROLE_GLOBAL, ROLE_LOCAL
from .neural.checkpoint import load_denoiser, save_denoiser, save_gate
from .neural.denoiser import DenoiserParams
from .neural.gate import GateParams
from .neural.training import (GateTrainConfig, TrainConfig, train_expert,
                              train_gate)
from .scheduler import GenerationConfig, cross_denoise

STYLES = ("blobs", "stripes")


@dataclass
class ToyWorldConfig:
    train_size: int = 128
    epochs: int = 14
    image_size: int = 32
    n_timesteps: int = 50
    seed: int = 0
    include_base: bool = True        # style-agnostic global lead expert
    gate_samples_per_style: int = 150
    gate_epochs: int = 300
    calibration_samples: int = 12    # plain samples per expert for the oracle
    calibration_seed: int = 10_000   # disjoint from trial seeds


@dataclass
class ToyWorld:
    registry: ExpertRegistry
    ensemble: MedEnsemble
    experts: dict[str, DenoiserParams]
    gate: GateParams
    gate_holdout_accuracy: float
    threshold: float                      # full-frame reference threshold
    reference_samples: dict[str, np.ndarray]  # plain samples per style
    datasets: dict[str, StyleDataset]
    expert_paths: dict[str, Path]
    gate_path: Path


def _train_or_load(style: str, dataset: StyleDataset, workdir: Path,
                   cfg: ToyWorldConfig) -> tuple[DenoiserParams, Path]:
    path = workdir / f"{style}.ckpt"
    if path.exists():
        params, meta = load_denoiser(path)
        if meta.get("dataset_hash") == dataset_hash(dataset):
            return params, path
    tc = TrainConfig(epochs=cfg.epochs, seed=cfg.seed,
                     n_timesteps=cfg.n_timesteps)
    params = train_expert(dataset, tc)
    save_denoiser(path, params, meta={
        "expert_id": style, "style_tag": style, "training_seed": cfg.seed,
        "dataset_hash": dataset_hash(dataset),
    })
    return params, path


def build_gate_samples(datasets: dict[str, StyleDataset], schedule: NoiseSchedule,
                       per_style: int, seed: int):
    """Corrupted samples labeled by dataset order (one dataset per expert)."""
    rng = np.random.default_rng(seed)
    labeled = []
    for label, ds in enumerate(datasets.values()):
        imgs = ds.images
        idx = rng.integers(0, imgs.shape[0], size=per_style)
        t = rng.integers(1, schedule.n_steps + 1, size=per_style)
        noise = rng.standard_normal((per_style,) + imgs.shape[1:])
        ab = schedule.alpha_bars[t - 1][:, None, None, None]
        x_t = np.sqrt(ab) * imgs[idx] + np.sqrt(1.0 - ab) * noise
        labeled.extend((x_t[i], int(t[i]), label) for i in range(per_style))
    return labeled


def build_toy_world(workdir: str | Path,
                    cfg: ToyWorldConfig | None = None) -> ToyWorld:
    """Train (or reload cached) experts + gate and assemble the ensemble.

    With include_base the registry holds a style-agnostic base expert
    (trained on the union of both styles) as the global lead plus the two
    style experts as locals; otherwise the blobs expert doubles as global.
    """
    cfg = cfg or ToyWorldConfig()
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    styles = list(STYLES) + (["mixed"] if cfg.include_base else [])
    datasets = {
        style: make_style_dataset(style, cfg.train_size, cfg.seed + i,
                                  cfg.image_size)
        for i, style in enumerate(styles)
    }
    experts: dict[str, DenoiserParams] = {}
    paths: dict[str, Path] = {}
    for style in styles:
        name = "base" if style == "mixed" else style
        experts[name], paths[name] = _train_or_load(
            name, datasets[style], workdir, cfg)

    entries = [
        ExpertEntry("blobs", str(paths["blobs"]), "blobs",
                    ROLE_LOCAL if cfg.include_base else ROLE_GLOBAL,
                    "low-frequency blob expert"),
        ExpertEntry("stripes", str(paths["stripes"]), "stripes", ROLE_LOCAL,
                    "period-4 vertical stripe expert"),
    ]
    if cfg.include_base:
        entries.insert(0, ExpertEntry(
            "base", str(paths["base"]), "", ROLE_GLOBAL,
            "style-agnostic lead for the global phase"))
    registry = ExpertRegistry(tuple(entries))

    gate_path = workdir / "gate.ckpt"
    schedule = NoiseSchedule(cfg.n_timesteps)
    style_of_expert = {"blobs": "blobs", "stripes": "stripes", "base": "mixed"}
    gate_datasets = {e.expert_id: datasets[style_of_expert[e.expert_id]]
                     for e in registry.entries}
    labeled = build_gate_samples(gate_datasets, schedule,
                                 cfg.gate_samples_per_style, cfg.seed + 100)
    label_conds = [encode(e.style_tag) for e in registry.entries]
    expert_list = [experts[e.expert_id] for e in registry.entries]
    result = train_gate(expert_list, labeled,
                        GateTrainConfig(epochs=cfg.gate_epochs, seed=cfg.seed),
                        label_conds=label_conds)
    save_gate(gate_path, result.gate, meta={
        "kind": "gate", "expert_ids": registry.ids(),
        "holdout_accuracy": result.holdout_accuracy,
    })

    # classifier threshold from each expert's plain (base-model) samples
    prompts = {"blobs": "soft blobs", "stripes": "vertical stripes"}
    refs = {}
    for style in STYLES:
        refs[style] = np.stack([
            sample(experts[style], encode(prompts[style]),
                   cfg.calibration_seed + i, schedule,
                   (cfg.image_size, cfg.image_size))
            for i in range(cfg.calibration_samples)
        ])
    threshold = stripe_threshold(refs["blobs"], refs["stripes"])

    ensemble = MedEnsemble(registry, experts, result.gate, k=2)
    return ToyWorld(registry, ensemble, experts, result.gate,
                    result.holdout_accuracy, threshold, refs, datasets, paths,
                    gate_path)


def two_region_layout() -> Layout:
    return Layout(
        global_prompt="soft blobs and vertical stripes",
        regions=[
            RegionSpec(BoundingBox(0, 0, 500, 1000), "soft blobs",
                       expert_id="blobs", style_tag="blobs"),
            RegionSpec(BoundingBox(500, 0, 1000, 1000), "vertical stripes",
                       expert_id="stripes", style_tag="stripes"),
        ],
    )


def region_thresholds(world: ToyWorld, masks) -> list[float]:
    """Per-region thresholds, calibrated on reference samples cropped to the
    region's own geometry (the band statistic's noise floor scales with the
    crop width, so calibration must match the crop)."""
    from .datasets import mask_crop

    out = []
    for mask in masks:
        blob_crops = np.stack([mask_crop(im, mask)
                               for im in world.reference_samples["blobs"]])
        stripe_crops = np.stack([mask_crop(im, mask)
                                 for im in world.reference_samples["stripes"]])
        out.append(stripe_threshold(blob_crops, stripe_crops))
    return out


def run_attribution_experiment(world: ToyWorld, trials: int = 50,
                               config: GenerationConfig | None = None) -> dict:
    """Generate `trials` seeded images and attribute each region's style."""
    layout = two_region_layout()
    base = config or GenerationConfig()
    masks = [rasterize(r.box, base.grid_h, base.grid_w) for r in layout.regions]
    expected = [r.style_tag for r in layout.regions]
    thresholds = region_thresholds(world, masks)

    confusion = {f"{a}_as_{b}": 0 for a in STYLES for b in STYLES}
    correct = 0
    total = 0
    for trial in range(trials):
        cfg = GenerationConfig(**{**base.to_dict(), "seed": base.seed + trial})
        image, _ = cross_denoise(layout, world.ensemble, cfg)
        for mask, want, thr in zip(masks, expected, thresholds):
            got = classify_region(image, mask, thr)
            confusion[f"{want}_as_{got}"] += 1
            correct += int(got == want)
            total += 1
    return {
        "trials": trials,
        "regions_per_trial": len(layout.regions),
        "attribution_accuracy": correct / total if total else 0.0,
        "confusion": confusion,
        "region_thresholds": thresholds,
        "threshold": world.threshold,
        "gate_holdout_accuracy": world.gate_holdout_accuracy,
        "config": base.to_dict(),
    }


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))
