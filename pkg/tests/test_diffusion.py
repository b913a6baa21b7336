import numpy as np
import pytest

from mepg.conditioning import encode
from mepg.diffusion import NoiseSchedule, noise_stream, sample, step_noise
from mepg.errors import ShapeMismatch, StepOutOfRange
from mepg.neural.denoiser import init_denoiser


class TestSchedule:
    def test_bounds_and_monotonicity(self):
        for n in (1, 2, 5, 50, 200, 1000):
            s = NoiseSchedule(n)
            assert ((s.betas > 0) & (s.betas < 1)).all(), n
            assert (np.diff(s.alpha_bars) < 0).all() or n == 1
            assert s.alpha_bar(0) == 1.0

    def test_terminal_alpha_bar_near_zero(self):
        # the whole point of the schedule: x_N is (almost) pure noise
        assert NoiseSchedule(50).alpha_bars[-1] < 1e-4
        assert NoiseSchedule(1000).alpha_bars[-1] < 1e-4

    def test_invalid_n(self):
        with pytest.raises(StepOutOfRange):
            NoiseSchedule(0)

    def test_t_range_checked(self):
        s = NoiseSchedule(10)
        with pytest.raises(StepOutOfRange):
            s.beta(11)
        with pytest.raises(StepOutOfRange):
            s.beta(0)


class TestQSample:
    def test_t_zero_returns_x0(self):
        s = NoiseSchedule(10)
        x0 = np.random.default_rng(0).standard_normal((1, 4, 4))
        noise = np.random.default_rng(1).standard_normal((1, 4, 4))
        assert np.array_equal(s.q_sample(x0, 0, noise), x0)

    def test_zero_noise_collapses(self):
        s = NoiseSchedule(10)
        x0 = np.random.default_rng(0).standard_normal((1, 4, 4))
        out = s.q_sample(x0, 5, np.zeros_like(x0))
        assert np.allclose(out, np.sqrt(s.alpha_bar(5)) * x0)

    def test_matches_independent_recomputation(self):
        s = NoiseSchedule(8)
        rng = np.random.default_rng(3)
        x0 = rng.standard_normal((2, 4, 4))
        noise = rng.standard_normal((2, 4, 4))
        t = 4
        # independent: recompute alpha_bar by explicit product
        ab = 1.0
        for i in range(t):
            ab *= 1.0 - s.betas[i]
        expected = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * noise
        assert np.allclose(s.q_sample(x0, t, noise), expected, atol=1e-12)

    def test_shape_mismatch(self):
        s = NoiseSchedule(10)
        with pytest.raises(ShapeMismatch):
            s.q_sample(np.zeros((1, 4, 4)), 3, np.zeros((1, 4, 5)))


class TestPStep:
    def test_zero_eps_zero_z(self):
        s = NoiseSchedule(10)
        x = np.random.default_rng(0).standard_normal((1, 4, 4))
        out = s.p_step(np.zeros_like(x), x, 3, None)
        assert np.allclose(out, x / np.sqrt(s.alpha(3)))

    def test_matches_independent_recomputation(self):
        s = NoiseSchedule(12)
        rng = np.random.default_rng(5)
        for t in (1, 6, 12):
            x = rng.standard_normal((1, 4, 4))
            eps = rng.standard_normal((1, 4, 4))
            z = rng.standard_normal((1, 4, 4))
            got = s.p_step(eps, x, t, z)
            beta = s.betas[t - 1]
            alpha = 1.0 - beta
            ab = np.prod(1.0 - s.betas[:t])
            mean = (x - beta / np.sqrt(1.0 - ab) * eps) / np.sqrt(alpha)
            assert np.allclose(got, mean + np.sqrt(beta) * z, atol=1e-12)

    def test_z_none_is_mean_only(self):
        s = NoiseSchedule(5)
        rng = np.random.default_rng(1)
        x, eps = rng.standard_normal((2, 1, 3, 3))
        with_zeros = s.p_step(eps, x, 2, np.zeros_like(x))
        without = s.p_step(eps, x, 2, None)
        assert np.allclose(with_zeros, without)


class TestNoiseStreams:
    def test_replay_independent_of_order(self):
        a = step_noise(42, 7, (2, 3))
        # consume lots of other streams in between
        for s in range(20):
            step_noise(42, s, (4, 4))
        b = step_noise(42, 7, (2, 3))
        assert np.array_equal(a, b)

    def test_distinct_steps_differ(self):
        assert not np.array_equal(step_noise(1, 0, (8,)), step_noise(1, 1, (8,)))

    def test_distinct_seeds_differ(self):
        assert not np.array_equal(step_noise(1, 3, (8,)), step_noise(2, 3, (8,)))

    def test_stream_is_fresh_generator(self):
        g1 = noise_stream(9, 9)
        g2 = noise_stream(9, 9)
        assert np.array_equal(g1.standard_normal(5), g2.standard_normal(5))


class TestSampler:
    def setup_method(self):
        self.params = init_denoiser(0, features=6, n_timesteps=8)
        self.schedule = NoiseSchedule(8)

    def test_same_seed_bit_identical(self):
        a = sample(self.params, encode("soft blobs"), 3, self.schedule, (8, 8))
        b = sample(self.params, encode("soft blobs"), 3, self.schedule, (8, 8))
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        a = sample(self.params, (), 1, self.schedule, (8, 8))
        b = sample(self.params, (), 2, self.schedule, (8, 8))
        assert not np.array_equal(a, b)

    def test_output_clamped(self):
        img = sample(self.params, (), 5, self.schedule, (8, 8))
        assert img.min() >= -1.0 and img.max() <= 1.0
