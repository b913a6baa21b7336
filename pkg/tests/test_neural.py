import numpy as np
import pytest

from mepg.conditioning import VOCAB_SIZE, encode
from mepg.datasets import make_blobs, make_stripes
from mepg.errors import (EmptyDataset, LabelUnknown, ShapeMismatch,
                         StepOutOfRange)
from mepg.neural import params_hash
from mepg.neural.checkpoint import (load_denoiser, load_gate, save_denoiser,
                                    save_gate, load_arrays)
from mepg.neural.denoiser import (DenoiserParams, denoiser_forward,
                                  init_denoiser, noise_loss_and_grads)
from mepg.neural.gate import bce_loss_and_grads, init_gate
from mepg.neural.training import (Adam, GateTrainConfig, TrainConfig,
                                  grad_check, train_expert, train_gate)
from mepg.errors import CheckpointError


def tiny_params(seed=0):
    return init_denoiser(seed, features=6, n_timesteps=5, vocab_size=9)


class TestForward:
    def test_zero_weights_zero_output(self):
        p = tiny_params()
        zeros = DenoiserParams(**{k: np.zeros_like(v)
                                  for k, v in p.arrays().items()})
        x = np.random.default_rng(0).standard_normal((1, 8, 8))
        assert np.array_equal(denoiser_forward(zeros, x, 3, (1, 2)),
                              np.zeros((1, 8, 8)))

    def test_deterministic(self):
        p = tiny_params(1)
        x = np.random.default_rng(2).standard_normal((1, 8, 8))
        a = denoiser_forward(p, x, 2, (1,))
        b = denoiser_forward(p, x, 2, (1,))
        assert np.array_equal(a, b)

    def test_shape_preserved(self):
        p = tiny_params()
        x = np.zeros((1, 5, 7))
        assert denoiser_forward(p, x, 1, ()).shape == (1, 5, 7)

    def test_t_out_of_range(self):
        p = tiny_params()
        with pytest.raises(StepOutOfRange):
            denoiser_forward(p, np.zeros((1, 8, 8)), 6, ())

    def test_channel_mismatch(self):
        p = tiny_params()
        with pytest.raises(ShapeMismatch):
            denoiser_forward(p, np.zeros((2, 8, 8)), 1, ())

    def test_cond_id_out_of_vocab(self):
        p = tiny_params()
        with pytest.raises(ShapeMismatch):
            denoiser_forward(p, np.zeros((1, 8, 8)), 1, (99,))


class TestGradCheck:
    def test_quadratic_exact(self):
        arrays = {"w": np.array([1.0, -2.0, 3.0])}

        def loss_fn(a):
            w = a["w"]
            return float((w * w).sum()), {"w": 2.0 * w}

        assert grad_check(arrays, loss_fn, n_probes=3) < 1e-8

    def test_denoiser_loss(self):
        p = tiny_params()
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 1, 8, 8))
        tgt = rng.standard_normal((2, 1, 8, 8))
        t = np.array([2, 5])
        conds = [(1, 3), ()]

        def loss_fn(arrays):
            return noise_loss_and_grads(DenoiserParams(**arrays), x, t, conds, tgt)

        assert grad_check(p.arrays(), loss_fn, n_probes=80, seed=3) < 1e-4

    def test_gate_loss(self):
        gate = init_gate(3, 6)
        gate.w += np.random.default_rng(0).normal(0, 0.3, gate.w.shape)
        feats = np.random.default_rng(1).standard_normal((10, 6))
        targets = np.zeros((10, 3))
        targets[np.arange(10), np.arange(10) % 3] = 1.0

        def loss_fn(arrays):
            from mepg.neural.gate import GateParams
            return bce_loss_and_grads(GateParams(**arrays), feats, targets)

        assert grad_check(gate.arrays(), loss_fn, n_probes=21, seed=4) < 1e-4


class TestCheckpoint:
    def test_denoiser_round_trip_bit_exact(self, tmp_path):
        p = tiny_params(5)
        path = tmp_path / "e.ckpt"
        save_denoiser(path, p, meta={"expert_id": "e", "training_seed": 5})
        loaded, meta = load_denoiser(path)
        for k, v in p.arrays().items():
            assert np.array_equal(v, loaded.arrays()[k]), k
        assert meta["expert_id"] == "e"
        x = np.random.default_rng(0).standard_normal((1, 8, 8))
        assert np.array_equal(denoiser_forward(p, x, 1, (1,)),
                              denoiser_forward(loaded, x, 1, (1,)))

    def test_gate_round_trip(self, tmp_path):
        g = init_gate(4, 8)
        g.w += 0.25
        save_gate(tmp_path / "g.ckpt", g)
        loaded, _ = load_gate(tmp_path / "g.ckpt")
        assert np.array_equal(g.w, loaded.w)
        assert np.array_equal(g.b, loaded.b)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(CheckpointError):
            load_arrays(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_arrays(tmp_path / "nope.ckpt")

    def test_params_hash_sensitive(self):
        p = tiny_params()
        h0 = params_hash(p.arrays())
        p.conv1_w[0, 0, 0, 0] += 1e-12
        assert params_hash(p.arrays()) != h0


class TestAdam:
    def test_zero_lr_no_change(self):
        arrays = {"w": np.array([1.0, 2.0])}
        opt = Adam({"w": (2,)}, lr=0.0)
        opt.step(arrays, {"w": np.array([5.0, -3.0])})
        assert np.array_equal(arrays["w"], np.array([1.0, 2.0]))

    def test_descends_quadratic(self):
        arrays = {"w": np.array([4.0, -4.0])}
        opt = Adam({"w": (2,)}, lr=0.1)
        for _ in range(200):
            opt.step(arrays, {"w": 2.0 * arrays["w"]})
        assert np.abs(arrays["w"]).max() < 0.1


class TestTrainExpert:
    def test_empty_dataset(self):
        ds = make_blobs(0, 0)
        with pytest.raises(EmptyDataset):
            train_expert(ds, TrainConfig(epochs=1))

    def test_zero_lr_params_unchanged(self):
        ds = make_blobs(8, 0, size=8)
        cfg = TrainConfig(epochs=1, lr=0.0, seed=3, n_timesteps=5,
                          features=6, target_ratio=None)
        params = train_expert(ds, cfg)
        assert params_hash(params.arrays()) == \
            params_hash(init_denoiser(3, features=6, channels=1,
                                      n_timesteps=5).arrays())

    def test_reproducible(self):
        ds = make_stripes(12, 1, size=8)
        cfg = TrainConfig(epochs=2, seed=7, n_timesteps=5, features=6,
                          target_ratio=None, batch_size=4)
        a = train_expert(ds, cfg)
        b = train_expert(ds, cfg)
        assert params_hash(a.arrays()) == params_hash(b.arrays())


class TestTrainGate:
    def make_labeled(self, experts, n=24):
        rng = np.random.default_rng(0)
        labeled = []
        for i in range(n):
            x = rng.standard_normal((1, 8, 8))
            labeled.append((x, int(rng.integers(1, 5)), i % len(experts)))
        return labeled

    def test_experts_frozen(self):
        experts = [tiny_params(i) for i in range(2)]
        before = [params_hash(p.arrays()) for p in experts]
        labeled = self.make_labeled(experts)
        train_gate(experts, labeled, GateTrainConfig(epochs=5))
        assert [params_hash(p.arrays()) for p in experts] == before

    def test_label_out_of_range(self):
        experts = [tiny_params(0)]
        labeled = [(np.zeros((1, 8, 8)), 1, 3)]
        with pytest.raises(LabelUnknown):
            train_gate(experts, labeled, GateTrainConfig(epochs=1))

    def test_empty_labeled(self):
        with pytest.raises(EmptyDataset):
            train_gate([tiny_params(0)], [], GateTrainConfig())

    def test_single_expert_trivial_accuracy(self):
        experts = [tiny_params(0)]
        labeled = self.make_labeled(experts, n=12)
        result = train_gate(experts, labeled, GateTrainConfig(epochs=10))
        assert result.holdout_accuracy == 1.0


def test_encode_known_and_oov():
    ids = encode("a soft blobs XYZZY")
    assert len(ids) == 4
    assert ids[-1] == 0  # OOV
    assert 0 < max(ids) < VOCAB_SIZE
