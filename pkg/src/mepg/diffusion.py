"""Noise schedule, forward corruption, reverse step, and the plain sampler.

Two step indexings coexist: the scheduler counts t forward through a
generation run (1..N), while the diffusion algebra runs on descending
internal time tau = N - t + 1. Everything in this module takes tau.

Noise is drawn from counter-based streams keyed on (seed, scheduler step),
so a draw for step t never depends on how many other draws happened; the
cross-denoiser and the plain sampler consume bit-identical noise.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch, StepOutOfRange
from .neural import ops
from .neural.denoiser import DenoiserParams, denoiser_forward

BETA_START = 1e-4
BETA_END = 0.02

_MASK64 = (1 << 64) - 1


def noise_stream(seed: int, step: int) -> np.random.Generator:
    """Independent generator for (seed, step); replayable in any order."""
    key = ((seed & _MASK64) << 64) | (step & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def step_noise(seed: int, step: int, shape: tuple[int, ...]) -> np.ndarray:
    return noise_stream(seed, step).standard_normal(shape)


class NoiseSchedule:
    """Linear beta schedule with cumulative alpha products.

    beta_start/beta_end are quoted at a 1000-step reference and rescaled by
    1000/N so the total corruption budget is independent of N; without the
    rescale a short schedule (N=50: alpha_bar_N ~= 0.60) never reaches pure
    noise and sampling from a Gaussian starts far off-distribution. Betas
    are capped below 1 for very short schedules.
    """

    REFERENCE_STEPS = 1000
    BETA_CAP = 0.999

    def __init__(self, n_steps: int, beta_start: float = BETA_START,
                 beta_end: float = BETA_END):
        if n_steps < 1:
            raise StepOutOfRange(f"schedule needs n_steps >= 1, got {n_steps}")
        self.n_steps = n_steps
        scale = self.REFERENCE_STEPS / n_steps
        self.betas = np.minimum(
            np.linspace(beta_start * scale, beta_end * scale, n_steps),
            self.BETA_CAP)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)

    def beta(self, t: int) -> float:
        self._check(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self._check(t)
        return float(self.alpha_bars[t - 1])

    def _check(self, t: int) -> None:
        if not 1 <= t <= self.n_steps:
            raise StepOutOfRange(f"t={t} outside [1, {self.n_steps}]")

    def q_sample(self, x0: np.ndarray, t: int, noise: np.ndarray) -> np.ndarray:
        """Forward corruption: sqrt(ab_t) x0 + sqrt(1 - ab_t) noise."""
        if noise.shape != x0.shape:
            raise ShapeMismatch(f"noise {noise.shape} vs x0 {x0.shape}")
        ab = self.alpha_bar(t)
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise

    def p_step(self, eps_hat: np.ndarray, x_t: np.ndarray, t: int,
               z: np.ndarray | None) -> np.ndarray:
        """One reverse step at internal time t; z is None at the last step."""
        if eps_hat.shape != x_t.shape:
            raise ShapeMismatch(f"eps_hat {eps_hat.shape} vs x_t {x_t.shape}")
        beta = self.beta(t)
        mean = (x_t - (beta / np.sqrt(1.0 - self.alpha_bar(t))) * eps_hat) \
            / np.sqrt(self.alpha(t))
        if z is None:
            return mean
        if z.shape != x_t.shape:
            raise ShapeMismatch(f"z {z.shape} vs x_t {x_t.shape}")
        return mean + np.sqrt(beta) * z


def sample(expert: DenoiserParams, cond_ids: tuple[int, ...], seed: int,
           schedule: NoiseSchedule, grid_hw: tuple[int, int] = (32, 32)) -> np.ndarray:
    """Plain single-expert generation; the base-model reference path.

    Runs N reverse steps from seeded Gaussian noise. Step t consumes
    stream(seed, t); the initial draw is stream(seed, 0). Output is clamped
    to [-1, 1] only at the very end.
    """
    n = schedule.n_steps
    shape = (expert.channels, grid_hw[0], grid_hw[1])
    x = step_noise(seed, 0, shape)
    for t in range(1, n + 1):
        tau = n - t + 1
        eps = denoiser_forward(expert, x, tau, cond_ids)
        z = step_noise(seed, t, shape) if t < n else None
        x = schedule.p_step(eps, x, tau, z)
        ops.check_finite(x, f"sampler state at step {t}")
    return np.clip(x, -1.0, 1.0)
