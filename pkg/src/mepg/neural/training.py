"""Training loops (expert pre-training, gate training) and gradient checking.

All loops are seeded and deterministic: same dataset + config gives
bit-identical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..datasets import StyleDataset
from ..diffusion import NoiseSchedule
from ..errors import Diverged, EmptyDataset, LabelUnknown, TargetNotReached
from ..conditioning import encode
from . import ops
from .checkpoint import params_hash
from .denoiser import (DenoiserParams, init_denoiser, noise_loss_and_grads,
                       stage1, stage2, site1_apply, cond_vector, DEFAULT_FEATURES)
from .gate import GateParams, bce_loss_and_grads, gate_logits, init_gate


class Adam:
    """Plain Adam over a dict of arrays; lr=0 leaves params untouched."""

    def __init__(self, shapes: dict[str, tuple], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            update = (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
            arrays[k] -= self.lr * update


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    lr: float = 2e-3
    seed: int = 0
    n_timesteps: int = 50
    features: int = DEFAULT_FEATURES
    holdout_fraction: float = 0.2
    target_ratio: float | None = 0.5  # held-out loss must drop below this x initial


def _eval_denoiser(params: DenoiserParams, schedule: NoiseSchedule,
                   images: np.ndarray, conds: list[tuple[int, ...]],
                   seed: int) -> float:
    """Held-out noise-prediction loss on a fixed (t, noise) assignment."""
    rng = np.random.default_rng(seed)
    n = images.shape[0]
    t = rng.integers(1, schedule.n_steps + 1, size=n)
    noise = rng.standard_normal(images.shape)
    ab = schedule.alpha_bars[t - 1][:, None, None, None]
    x_t = np.sqrt(ab) * images + np.sqrt(1.0 - ab) * noise
    loss, _ = noise_loss_and_grads(params, x_t, t, conds, noise)
    return loss


def train_expert(dataset: StyleDataset, config: TrainConfig) -> DenoiserParams:
    """Pre-train one expert denoiser on a single style.

    Raises Diverged if the loss blows up, TargetNotReached if the held-out
    loss fails to drop below config.target_ratio x its initial value.
    """
    if len(dataset) == 0:
        raise EmptyDataset("cannot train an expert on an empty dataset")
    rng = np.random.default_rng(config.seed)
    schedule = NoiseSchedule(config.n_timesteps)
    conds = [encode(c) for c in dataset.captions]

    n = len(dataset)
    n_hold = max(1, int(round(n * config.holdout_fraction))) if n > 1 else 0
    perm = rng.permutation(n)
    hold_idx, train_idx = perm[:n_hold], perm[n_hold:]
    if train_idx.size == 0:
        train_idx = perm
    hold_imgs = dataset.images[hold_idx]
    hold_conds = [conds[i] for i in hold_idx]

    params = init_denoiser(config.seed, features=config.features,
                           channels=dataset.images.shape[1],
                           n_timesteps=config.n_timesteps)
    opt = Adam({k: v.shape for k, v in params.arrays().items()}, config.lr)
    arrays = params.arrays()

    initial = _eval_denoiser(params, schedule, hold_imgs, hold_conds,
                             config.seed + 1) if n_hold else None

    for epoch in range(config.epochs):
        order = rng.permutation(train_idx)
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            imgs = dataset.images[idx]
            t = rng.integers(1, schedule.n_steps + 1, size=idx.size)
            noise = rng.standard_normal(imgs.shape)
            ab = schedule.alpha_bars[t - 1][:, None, None, None]
            x_t = np.sqrt(ab) * imgs + np.sqrt(1.0 - ab) * noise
            loss, grads = noise_loss_and_grads(
                params, x_t, t, [conds[i] for i in idx], noise)
            if not np.isfinite(loss) or (initial is not None and loss > 10.0 * max(initial, 1e-9)):
                raise Diverged(f"loss {loss} at epoch {epoch}")
            opt.step(arrays, grads)

    if initial is not None and config.target_ratio is not None:
        final = _eval_denoiser(params, schedule, hold_imgs, hold_conds,
                               config.seed + 1)
        if not final < config.target_ratio * initial:
            raise TargetNotReached(
                f"held-out loss {final:.4f} vs initial {initial:.4f} "
                f"(target < {config.target_ratio} x initial)")
    return params


@dataclass
class GateTrainConfig:
    epochs: int = 200
    lr: float = 0.05
    seed: int = 0
    holdout_fraction: float = 0.2


@dataclass
class GateTrainResult:
    gate: GateParams
    holdout_accuracy: float
    holdout_site_accuracy: tuple[float, float]


def site_features(expert: DenoiserParams, x_t: np.ndarray, t: int,
                  cond_ids: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Pooled inputs of the two MoE sites under the given expert's backbone."""
    cv = cond_vector(expert, cond_ids)
    a1 = stage1(expert, x_t[None], np.asarray([t]), cv[None])
    a3 = stage2(expert, site1_apply(expert, a1))
    return ops.pool_spatial(a1)[0], ops.pool_spatial(a3)[0]


def train_gate(experts: Sequence[DenoiserParams],
               labeled: Sequence[tuple[np.ndarray, int, int]],
               config: GateTrainConfig,
               label_conds: Sequence[tuple[int, ...]] | None = None) -> GateTrainResult:
    """Stage-2 training: fit only the gate, experts frozen.

    ``labeled`` holds (x_t, t, label) with label indexing into ``experts``;
    ``label_conds`` gives the condition ids used when extracting features
    for each label (defaults to no conditioning). Expert parameters are
    hashed before and after and asserted unchanged.
    """
    if not labeled:
        raise EmptyDataset("gate training needs labeled samples")
    e = len(experts)
    conds = list(label_conds) if label_conds is not None else [()] * e
    if len(conds) != e:
        raise LabelUnknown(f"{len(conds)} label conds for {e} experts")
    hashes_before = [params_hash(p.arrays()) for p in experts]

    feats = []
    targets = []
    for x_t, t, label in labeled:
        if not 0 <= label < e:
            raise LabelUnknown(f"label {label} outside expert range 0..{e - 1}")
        f1, f2 = site_features(experts[label], x_t, int(t), conds[label])
        onehot = np.zeros(e)
        onehot[label] = 1.0
        feats.extend([f1, f2])        # both sites share the gate
        targets.extend([onehot, onehot])
    feats = np.stack(feats)
    targets = np.stack(targets)

    rng = np.random.default_rng(config.seed)
    n = feats.shape[0]
    n_hold = max(2, int(round(n * config.holdout_fraction)))
    perm = rng.permutation(n)
    hold, train = perm[:n_hold], perm[n_hold:]
    if train.size == 0:
        train = perm

    gate = init_gate(e, feats.shape[1])
    opt = Adam({k: v.shape for k, v in gate.arrays().items()}, config.lr)
    arrays = gate.arrays()
    for _ in range(config.epochs):
        loss, grads = bce_loss_and_grads(gate, feats[train], targets[train])
        if not np.isfinite(loss):
            raise Diverged("gate loss became non-finite")
        opt.step(arrays, grads)

    hashes_after = [params_hash(p.arrays()) for p in experts]
    assert hashes_before == hashes_after, "gate training must not touch experts"

    logits = gate_logits(gate, feats[hold])
    correct = (logits.argmax(axis=1) == targets[hold].argmax(axis=1))
    acc = float(correct.mean())
    # even rows are site-1 features, odd rows site-2 (see stacking above)
    site_of_row = hold % 2
    accs = tuple(float(correct[site_of_row == s].mean()) if (site_of_row == s).any()
                 else 1.0 for s in (0, 1))
    return GateTrainResult(gate, acc, accs)  # type: ignore[arg-type]


def grad_check(arrays: dict[str, np.ndarray],
               loss_fn: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
               n_probes: int = 50, h: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes n random coordinates across all arrays; relative error uses
    |a - b| / max(|a| + |b|, 1e-6) so exactly-zero gradients compare clean.
    """
    rng = np.random.default_rng(seed)
    _, grads = loss_fn(arrays)
    names = sorted(arrays)
    sizes = np.array([arrays[k].size for k in names])
    cum = np.cumsum(sizes)
    total = int(cum[-1])
    worst = 0.0
    for flat_idx in rng.choice(total, size=min(n_probes, total), replace=False):
        ai = int(np.searchsorted(cum, flat_idx, side="right"))
        local = int(flat_idx - (cum[ai - 1] if ai else 0))
        name = names[ai]
        probe = {k: v.copy() for k, v in arrays.items()}
        flat = probe[name].reshape(-1)
        orig = flat[local]
        flat[local] = orig + h
        lp, _ = loss_fn(probe)
        flat[local] = orig - h
        lm, _ = loss_fn(probe)
        fd = (lp - lm) / (2.0 * h)
        an = float(grads[name].reshape(-1)[local])
        rel = abs(fd - an) / max(abs(fd) + abs(an), 1e-6)
        worst = max(worst, rel)
    return worst
