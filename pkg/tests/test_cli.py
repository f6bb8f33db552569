import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dpwgan.data import RecordMatrix, save_csv

GOLDEN_DIR = Path(__file__).parent / "golden"


def run_cli(args, env_extra=None, cwd=None):
    env = os.environ.copy()
    env.update(env_extra or {})
    return subprocess.run(
        [sys.executable, "-m", "dpwgan.cli", *args],
        capture_output=True,
        text=True,
        env=env,
        cwd=cwd,
    )


MIXTURE_CONFIG = """\
[train]
alpha_d = 1e-2
alpha_g = 3e-4
c_p = 0.5
m = 16
n_d = 2
n_g = {n_g}
latent_dim = 2
seed = 3
log_every = 10
eval_batch = 64

[privacy]
sigma_n = 0.5
delta = 1e-5

[discriminator]
hidden = 4,4
hidden_activation = sigmoid
output_activation = identity

[generator]
hidden = 8
hidden_activation = tanh

[data]
kind = gaussian_mixture
n = 128
centers = 0.3,0.3;0.7,0.7
std = 0.05
data_seed = 11

[output]
dir = {out_dir}
"""


class TestCalibrate:
    def test_reference_values(self):
        result = run_cli([
            "calibrate", "--eps", "9.6", "--delta", "1e-5",
            "--q", "0.0010666666666666667", "--n-d", "5",
        ])
        assert result.returncode == 0
        assert "sigma_n = 1.686030e-03" in result.stdout

    def test_zero_eps_is_usage_error(self):
        result = run_cli(["calibrate", "--eps", "0", "--delta", "1e-5", "--q", "0.1", "--n-d", "1"])
        assert result.returncode != 0
        assert "error" in result.stderr.lower()

    def test_golden_output(self):
        result = run_cli([
            "calibrate", "--eps", "9.6", "--delta", "1e-5",
            "--q", "0.0010666666666666667", "--n-d", "5",
        ])
        golden = (GOLDEN_DIR / "calibrate.txt").read_text()
        assert result.stdout == golden


class TestAccountant:
    def test_sigma_input_table(self):
        result = run_cli([
            "accountant", "--sigma-n", "1.0", "--delta", "1e-5",
            "--q", "0.01", "--steps", "1,10,100",
        ])
        assert result.returncode == 0
        lines = [l for l in result.stdout.splitlines() if "\t" in l and not l.startswith("steps")]
        eps = [float(l.split("\t")[1]) for l in lines]
        assert eps == sorted(eps)

    def test_requires_exactly_one_of_sigma_and_eps(self):
        result = run_cli(["accountant", "--delta", "1e-5", "--q", "0.01"])
        assert result.returncode != 0


class TestGradcheck:
    def test_canonical_431(self):
        result = run_cli([
            "gradcheck", "--widths", "4,3,1", "--activation", "sigmoid",
            "--cp", "0.01", "--trials", "200", "--seed", "0",
        ])
        assert result.returncode == 0
        assert "precondition: PASS" in result.stdout
        assert "c_g = 3.750000e-03" in result.stdout
        assert "PASS" in result.stdout.splitlines()[-1]

    def test_violating_cp_fails_with_layer(self):
        result = run_cli([
            "gradcheck", "--widths", "4,3,1", "--activation", "sigmoid", "--cp", "10",
        ])
        assert result.returncode == 1
        assert "FAIL at hidden layer 1" in result.stdout

    def test_zero_trials_skips_empirical_section(self):
        result = run_cli([
            "gradcheck", "--widths", "4,3,1", "--activation", "sigmoid", "--cp", "0.01",
        ])
        assert result.returncode == 0
        assert "empirical" not in result.stdout


class TestTrainCommand:
    def write_config(self, tmp_path, n_g=20):
        out_dir = tmp_path / "run"
        config = tmp_path / "run.ini"
        config.write_text(MIXTURE_CONFIG.format(n_g=n_g, out_dir=out_dir))
        return config, out_dir

    def test_artifacts_written(self, tmp_path):
        config, out_dir = self.write_config(tmp_path)
        result = run_cli(["train", "--config", str(config)])
        assert result.returncode == 0, result.stderr
        metrics = (out_dir / "metrics.csv").read_text().splitlines()
        assert metrics[0] == "iteration,wasserstein_estimate,epsilon_spent"
        assert len(metrics) == 1 + 20 // 10
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["status"] == "completed"
        assert manifest["versions"]["dpwgan"]
        assert (out_dir / "checkpoint.npz").exists()

    def test_rerun_is_bitwise_identical(self, tmp_path):
        config, out_dir = self.write_config(tmp_path)
        assert run_cli(["train", "--config", str(config)]).returncode == 0
        first_metrics = (out_dir / "metrics.csv").read_bytes()
        first_ckpt = (out_dir / "checkpoint.npz").read_bytes()
        assert run_cli(["train", "--config", str(config)]).returncode == 0
        assert (out_dir / "metrics.csv").read_bytes() == first_metrics
        assert (out_dir / "checkpoint.npz").read_bytes() == first_ckpt

    def test_resume_matches_uninterrupted_run(self, tmp_path):
        full_cfg, full_out = self.write_config(tmp_path, n_g=20)
        assert run_cli(["train", "--config", str(full_cfg)]).returncode == 0

        half_dir = tmp_path / "half"
        half_cfg = tmp_path / "half.ini"
        half_cfg.write_text(MIXTURE_CONFIG.format(n_g=10, out_dir=half_dir))
        assert run_cli(["train", "--config", str(half_cfg)]).returncode == 0

        resumed_dir = tmp_path / "resumed"
        resumed_cfg = tmp_path / "resumed.ini"
        resumed_cfg.write_text(MIXTURE_CONFIG.format(n_g=20, out_dir=resumed_dir))
        result = run_cli([
            "train", "--config", str(resumed_cfg),
            "--resume", str(half_dir / "checkpoint.npz"),
        ])
        assert result.returncode == 0, result.stderr
        full = (full_out / "checkpoint.npz").read_bytes()
        resumed = (resumed_dir / "checkpoint.npz").read_bytes()
        assert full == resumed

    def test_missing_data_path_mentions_path(self, tmp_path):
        config = tmp_path / "bad.ini"
        config.write_text(
            MIXTURE_CONFIG.format(n_g=1, out_dir=tmp_path / "o").replace(
                "kind = gaussian_mixture", "kind = csv\npath = /nonexistent/data.csv"
            )
        )
        result = run_cli(["train", "--config", str(config)])
        assert result.returncode != 0
        assert "/nonexistent/data.csv" in result.stderr

    def test_env_var_overrides_output_dir(self, tmp_path):
        config, out_dir = self.write_config(tmp_path, n_g=10)
        override = tmp_path / "elsewhere"
        result = run_cli(
            ["train", "--config", str(config)],
            env_extra={"DPWGAN_OUT_DIR": str(override)},
        )
        assert result.returncode == 0
        assert (override / "metrics.csv").exists()
        assert not out_dir.exists()

    def test_both_privacy_keys_rejected(self, tmp_path):
        config = tmp_path / "two.ini"
        config.write_text(
            MIXTURE_CONFIG.format(n_g=1, out_dir=tmp_path / "o").replace(
                "sigma_n = 0.5", "sigma_n = 0.5\nepsilon = 1.0"
            )
        )
        result = run_cli(["train", "--config", str(config)])
        assert result.returncode != 0
        assert "exactly one" in result.stderr


class TestGenerateCommand:
    @pytest.fixture()
    def checkpoint(self, tmp_path):
        out_dir = tmp_path / "run"
        config = tmp_path / "run.ini"
        config.write_text(MIXTURE_CONFIG.format(n_g=10, out_dir=out_dir))
        assert run_cli(["train", "--config", str(config)]).returncode == 0
        return out_dir / "checkpoint.npz"

    def test_zero_samples_emit_header_only(self, tmp_path, checkpoint):
        out = tmp_path / "zero.csv"
        result = run_cli(["generate", "--checkpoint", str(checkpoint), "--n", "0", "--out", str(out)])
        assert result.returncode == 0
        assert out.read_bytes() == b"x0,x1\r\n"

    def test_determinism_and_budget(self, tmp_path, checkpoint):
        before = checkpoint.read_bytes()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            result = run_cli([
                "generate", "--checkpoint", str(checkpoint), "--n", "50",
                "--out", str(out), "--seed", "4",
            ])
            assert result.returncode == 0
            assert "epsilon unchanged" in result.stdout
        assert a.read_bytes() == b.read_bytes()
        assert checkpoint.read_bytes() == before  # accountant state untouched

    def test_binarize_flag(self, tmp_path, checkpoint):
        out = tmp_path / "bin.csv"
        result = run_cli([
            "generate", "--checkpoint", str(checkpoint), "--n", "20",
            "--out", str(out), "--binarize-threshold", "0.5",
        ])
        assert result.returncode == 0
        body = out.read_text().splitlines()[1:]
        values = {v for line in body for v in line.split(",")}
        assert values <= {"0", "1"}

    def test_corrupt_checkpoint_fails(self, tmp_path):
        bad = tmp_path / "bad.npz"
        bad.write_bytes(b"junk")
        result = run_cli(["generate", "--checkpoint", str(bad), "--n", "1", "--out", str(tmp_path / "x.csv")])
        assert result.returncode != 0


class TestEvaluateCommand:
    @pytest.fixture()
    def binary_files(self, tmp_path):
        rng = np.random.default_rng(0)
        real = (rng.uniform(size=(60, 4)) < 0.4).astype(float)
        gen = (rng.uniform(size=(60, 4)) < 0.4).astype(float)
        test = (rng.uniform(size=(40, 4)) < 0.4).astype(float)
        paths = {}
        for name, mat in (("real", real), ("gen", gen), ("test", test)):
            p = tmp_path / f"{name}.csv"
            save_csv(RecordMatrix(mat, kind="binary"), p, header=[f"c{i}" for i in range(4)])
            paths[name] = p
        return paths

    def test_dwp_identity_on_diagonal(self, tmp_path, binary_files):
        out_dir = tmp_path / "eval"
        result = run_cli([
            "evaluate", "--real", str(binary_files["real"]),
            "--generated", str(binary_files["real"]),
            "--metrics", "dwp", "--out-dir", str(out_dir),
        ])
        assert result.returncode == 0
        rows = (out_dir / "dwp.csv").read_text().splitlines()[1:]
        for row in rows:
            _, p_real, p_gen = row.split(",")
            assert p_real == p_gen
        summary = json.loads((out_dir / "summary.json").read_text())
        assert summary["dwp"]["mean_abs_diff"] == 0.0

    def test_golden_fixture(self, tmp_path):
        real = RecordMatrix(
            np.array([[1, 0, 1], [0, 0, 1], [1, 1, 1], [0, 0, 0]], dtype=float),
            kind="binary",
        )
        gen = RecordMatrix(
            np.array([[1, 0, 0], [0, 0, 1], [1, 0, 1], [1, 0, 0]], dtype=float),
            kind="binary",
        )
        rp, gp = tmp_path / "r.csv", tmp_path / "g.csv"
        save_csv(real, rp, header=["a", "b", "c"])
        save_csv(gen, gp, header=["a", "b", "c"])
        out_dir = tmp_path / "eval"
        result = run_cli([
            "evaluate", "--real", str(rp), "--generated", str(gp),
            "--metrics", "dwp", "--out-dir", str(out_dir),
        ])
        assert result.returncode == 0
        golden = (GOLDEN_DIR / "dwp_fixture.csv").read_text()
        assert (out_dir / "dwp.csv").read_text() == golden

    def test_unknown_metric_lists_valid_names(self, binary_files, tmp_path):
        result = run_cli([
            "evaluate", "--real", str(binary_files["real"]),
            "--generated", str(binary_files["gen"]),
            "--metrics", "frechet", "--out-dir", str(tmp_path / "e"),
        ])
        assert result.returncode != 0
        assert "dwp" in result.stderr and "dwpre" in result.stderr

    def test_shape_mismatch_names_counts(self, binary_files, tmp_path):
        narrow = tmp_path / "narrow.csv"
        save_csv(
            RecordMatrix(np.zeros((10, 2)), kind="binary"), narrow, header=["a", "b"]
        )
        result = run_cli([
            "evaluate", "--real", str(binary_files["real"]), "--generated", str(narrow),
            "--metrics", "dwp", "--out-dir", str(tmp_path / "e"),
        ])
        assert result.returncode != 0
        assert "4" in result.stderr and "2" in result.stderr

    def test_dwpre_and_nn_run(self, binary_files, tmp_path):
        out_dir = tmp_path / "eval2"
        result = run_cli([
            "evaluate", "--real", str(binary_files["real"]),
            "--generated", str(binary_files["gen"]),
            "--test", str(binary_files["test"]),
            "--metrics", "dwpre,nn", "--out-dir", str(out_dir),
        ])
        assert result.returncode == 0, result.stderr
        assert (out_dir / "dwpre.csv").exists()
        assert (out_dir / "nearest_neighbors.csv").exists()
