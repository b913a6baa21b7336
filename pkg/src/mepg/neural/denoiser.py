"""The toy expert denoiser: a small conv net with two expert-owned 1x1 sites.

Architecture (per sample, x is [C,H,W]):

    h   = conv3x3(x) + t_embedding[t] + mean(cond_embedding[ids])
    a1  = tanh(h)                      -- input of MoE site 1
    a2  = tanh(site1(a1))              -- site1: 1x1 projection F->F
    a3  = tanh(conv3x3_d2(a2))         -- dilated conv; input of MoE site 2
    eps = site2(a3) + skip * x         -- site2: 1x1 projection F->C

The learned per-channel skip keeps the high-noise regime (eps ~= x_t)
trivial so the conv stack can spend its capacity on structure.

When the net runs inside the multi-expert block, the two site projections
are replaced by routed combinations of several experts' site weights; the
stage helpers below expose the split points for that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..conditioning import VOCAB_SIZE
from ..errors import ShapeMismatch, StepOutOfRange
from . import ops

DEFAULT_FEATURES = 64
CONV2_DILATION = 2  # widens the receptive field to 11x11 at unchanged cost


@dataclass
class DenoiserParams:
    conv1_w: np.ndarray  # [F,C,3,3]
    conv1_b: np.ndarray  # [F]
    t_emb: np.ndarray    # [N,F], row t-1 for step t in 1..N
    c_emb: np.ndarray    # [V,F]
    site1_w: np.ndarray  # [F,F]
    site1_b: np.ndarray  # [F]
    conv2_w: np.ndarray  # [F,F,3,3]
    conv2_b: np.ndarray  # [F]
    site2_w: np.ndarray  # [C,F]
    site2_b: np.ndarray  # [C]
    skip: np.ndarray     # [C], per-channel input passthrough

    @property
    def features(self) -> int:
        return self.conv1_w.shape[0]

    @property
    def channels(self) -> int:
        return self.conv1_w.shape[1]

    @property
    def n_timesteps(self) -> int:
        return self.t_emb.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.c_emb.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "conv1_w": self.conv1_w, "conv1_b": self.conv1_b,
            "t_emb": self.t_emb, "c_emb": self.c_emb,
            "site1_w": self.site1_w, "site1_b": self.site1_b,
            "conv2_w": self.conv2_w, "conv2_b": self.conv2_b,
            "site2_w": self.site2_w, "site2_b": self.site2_b,
            "skip": self.skip,
        }

    def param_count(self) -> int:
        return sum(a.size for a in self.arrays().values())


def init_denoiser(seed: int, features: int = DEFAULT_FEATURES, channels: int = 1,
                  n_timesteps: int = 50, vocab_size: int = VOCAB_SIZE) -> DenoiserParams:
    rng = np.random.default_rng(seed)
    f, c = features, channels

    def w(shape, fan_in):
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)

    return DenoiserParams(
        conv1_w=w((f, c, 3, 3), c * 9),
        conv1_b=np.zeros(f),
        t_emb=rng.normal(0.0, 0.1, size=(n_timesteps, f)),
        c_emb=rng.normal(0.0, 0.1, size=(vocab_size, f)),
        site1_w=w((f, f), f),
        site1_b=np.zeros(f),
        conv2_w=w((f, f, 3, 3), f * 9),
        conv2_b=np.zeros(f),
        site2_w=w((c, f), f),
        site2_b=np.zeros(c),
        skip=np.zeros(c),
    )


def cond_vector(params: DenoiserParams, cond_ids: tuple[int, ...]) -> np.ndarray:
    """Mean-pooled embedding of the condition ids; empty ids give zeros."""
    if not cond_ids:
        return np.zeros(params.features)
    ids = np.asarray(cond_ids, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= params.vocab_size:
        raise ShapeMismatch(f"condition id outside vocabulary of {params.vocab_size}")
    return params.c_emb[ids].mean(axis=0)


def _check_t(params: DenoiserParams, t: np.ndarray) -> None:
    if t.min() < 1 or t.max() > params.n_timesteps:
        raise StepOutOfRange(
            f"t in [{t.min()}, {t.max()}] outside [1, {params.n_timesteps}]")


# --- stage helpers (shared by the plain and the routed forward) ---

def stage1(params: DenoiserParams, x: np.ndarray, t: np.ndarray,
           cond_vecs: np.ndarray) -> np.ndarray:
    """conv1 + embeddings + tanh. x [B,C,H,W], t [B] in 1..N, cond_vecs [B,F]."""
    if x.ndim != 4 or x.shape[1] != params.channels:
        raise ShapeMismatch(f"input {x.shape} incompatible with {params.channels} channels")
    _check_t(params, t)
    h = ops.conv2d(x, params.conv1_w, params.conv1_b)
    h += (params.t_emb[t - 1] + cond_vecs)[:, :, None, None]
    return np.tanh(h)


def site1_apply(params: DenoiserParams, a1: np.ndarray) -> np.ndarray:
    return ops.pointwise(a1, params.site1_w, params.site1_b)


def stage2(params: DenoiserParams, s1: np.ndarray) -> np.ndarray:
    a2 = np.tanh(s1)
    return np.tanh(ops.conv2d(a2, params.conv2_w, params.conv2_b,
                              dilation=CONV2_DILATION))


def site2_apply(params: DenoiserParams, a3: np.ndarray) -> np.ndarray:
    return ops.pointwise(a3, params.site2_w, params.site2_b)


def skip_apply(params: DenoiserParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return y + params.skip[None, :, None, None] * x


def forward_batch(params: DenoiserParams, x: np.ndarray, t: np.ndarray,
                  cond_vecs: np.ndarray) -> np.ndarray:
    a1 = stage1(params, x, t, cond_vecs)
    a3 = stage2(params, site1_apply(params, a1))
    out = skip_apply(params, x, site2_apply(params, a3))
    return ops.check_finite(out, "denoiser output")


def denoiser_forward(params: DenoiserParams, x_t: np.ndarray, t: int,
                     cond_ids: tuple[int, ...]) -> np.ndarray:
    """Predict the noise in a single sample x_t [C,H,W] at step t in 1..N."""
    cv = cond_vector(params, cond_ids)
    out = forward_batch(params, x_t[None], np.asarray([t]), cv[None])
    return out[0]


# --- training loss with exact gradients ---

def noise_loss_and_grads(params: DenoiserParams, x_t: np.ndarray, t: np.ndarray,
                         cond_id_lists: list[tuple[int, ...]],
                         target: np.ndarray):
    """Mean squared noise-prediction error and its gradient in every param.

    x_t, target are [B,C,H,W]; t is [B]; cond_id_lists has one id tuple per
    sample. Returns (loss, grads) with grads keyed like params.arrays().
    """
    b = x_t.shape[0]
    if target.shape != x_t.shape:
        raise ShapeMismatch(f"target {target.shape} vs input {x_t.shape}")
    cond_vecs = np.stack([cond_vector(params, ids) for ids in cond_id_lists])

    # forward, keeping activations
    h0 = ops.conv2d(x_t, params.conv1_w, params.conv1_b)
    z1 = h0 + (params.t_emb[t - 1] + cond_vecs)[:, :, None, None]
    a1 = np.tanh(z1)
    s1 = ops.pointwise(a1, params.site1_w, params.site1_b)
    a2 = np.tanh(s1)
    h2 = ops.conv2d(a2, params.conv2_w, params.conv2_b, dilation=CONV2_DILATION)
    a3 = np.tanh(h2)
    eps = ops.pointwise(a3, params.site2_w, params.site2_b) \
        + params.skip[None, :, None, None] * x_t

    diff = eps - target
    loss = float(np.mean(diff * diff))

    # backward
    g = (2.0 / diff.size) * diff
    d_skip = (g * x_t).sum(axis=(0, 2, 3))
    d_site2_w, d_site2_b, da3 = ops.pointwise_backward(a3, params.site2_w, g)
    dh2 = da3 * (1.0 - a3 * a3)
    d_conv2_w, d_conv2_b, da2 = ops.conv2d_backward(a2, params.conv2_w, dh2,
                                                    dilation=CONV2_DILATION)
    ds1 = da2 * (1.0 - a2 * a2)
    d_site1_w, d_site1_b, da1 = ops.pointwise_backward(a1, params.site1_w, ds1)
    dz1 = da1 * (1.0 - a1 * a1)
    d_conv1_w, d_conv1_b, _ = ops.conv2d_backward(x_t, params.conv1_w, dz1)

    de = dz1.sum(axis=(2, 3))  # [B,F]
    d_t_emb = np.zeros_like(params.t_emb)
    np.add.at(d_t_emb, t - 1, de)
    d_c_emb = np.zeros_like(params.c_emb)
    for i in range(b):
        ids = cond_id_lists[i]
        if ids:
            np.add.at(d_c_emb, np.asarray(ids, dtype=np.int64), de[i] / len(ids))

    grads = {
        "conv1_w": d_conv1_w, "conv1_b": d_conv1_b,
        "t_emb": d_t_emb, "c_emb": d_c_emb,
        "site1_w": d_site1_w, "site1_b": d_site1_b,
        "conv2_w": d_conv2_w, "conv2_b": d_conv2_b,
        "site2_w": d_site2_w, "site2_b": d_site2_b,
        "skip": d_skip,
    }
    return loss, grads
