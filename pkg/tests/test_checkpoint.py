import numpy as np
import pytest

from dpwgan.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from dpwgan.data import RecordMatrix
from dpwgan.network import NetworkSpec
from dpwgan.training import TrainConfig, init_train_state, run_iterations


def build(seed=0, sigma_n=0.6, n=32):
    rng = np.random.default_rng(100)
    data = RecordMatrix(rng.uniform(0.1, 0.9, size=(n, 2)))
    disc = NetworkSpec((2, 4, 1), ("sigmoid", "identity"))
    gen = NetworkSpec((2, 4, 2), ("tanh", "sigmoid"))
    config = TrainConfig(
        alpha_d=1e-2, alpha_g=1e-3, c_p=0.5, m=8, M=n, n_d=2, n_g=20,
        sigma_n=sigma_n, c_g=15.0, latent_dim=2, seed=seed, log_every=5,
    )
    return config, data, disc, gen


def assert_states_equal(a, b):
    for x, y in zip(a.disc.flat() + a.gen.flat(), b.disc.flat() + b.gen.flat()):
        assert np.array_equal(x, y)
    for x, y in zip(a.disc_opt.running_sq_avg, b.disc_opt.running_sq_avg):
        assert np.array_equal(x, y)
    assert a.ledger == b.ledger
    assert a.iteration == b.iteration
    assert a.rng.bit_generator.state == b.rng.bit_generator.state
    assert a.eval_rng.bit_generator.state == b.eval_rng.bit_generator.state
    assert np.array_equal(a.sampler.permutation, b.sampler.permutation)
    assert a.sampler.cursor == b.sampler.cursor


class TestCheckpointRoundTrip:
    def test_state_survives_save_load(self, tmp_path):
        config, data, disc, gen = build()
        state = init_train_state(config, data, disc, gen)
        run_iterations(state, data, 7)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, state)
        loaded = load_checkpoint(path)
        assert_states_equal(state, loaded)
        assert [r.generator_iteration for r in loaded.log.rows] == [
            r.generator_iteration for r in state.log.rows
        ]

    def test_resume_is_bitwise_identical_to_uninterrupted_run(self, tmp_path):
        config, data, disc, gen = build()
        straight = init_train_state(config, data, disc, gen)
        run_iterations(straight, data, 20)

        split = init_train_state(config, data, disc, gen)
        run_iterations(split, data, 9)
        path = tmp_path / "mid.npz"
        save_checkpoint(path, split)
        resumed = load_checkpoint(path)
        run_iterations(resumed, data, 11)

        assert_states_equal(straight, resumed)
        assert [r.wasserstein_estimate for r in straight.log.rows] == [
            r.wasserstein_estimate for r in resumed.log.rows
        ]

    def test_checkpoint_bytes_are_deterministic(self, tmp_path):
        config, data, disc, gen = build()
        paths = []
        for name in ("a.npz", "b.npz"):
            state = init_train_state(config, data, disc, gen)
            run_iterations(state, data, 5)
            p = tmp_path / name
            save_checkpoint(p, state)
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_corrupt_file_raises_checkpoint_error(self, tmp_path):
        path = tmp_path / "garbage.npz"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "other.npz"
        meta = np.frombuffer(b'{"magic": "something-else"}', dtype=np.uint8)
        np.savez(path, meta_json=meta)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)
