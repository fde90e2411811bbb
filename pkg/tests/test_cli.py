"""CLI commands: outputs, exit codes, determinism, and CSV round-trips."""

import filecmp

import pytest

from ranklab.cli import main, parity_outer_epochs
from ranklab.trainers import RunRecord
from ranklab._util import read_csv

SYNTH_DATASET = """
[dataset]
source = synthetic
num_queries = 8
pool_size = 12
relevant_fraction = 0.25
feature_dim = 4
seed = 3
holdout_fraction = 0.2
split_seed = 13
"""

MODEL_LINEAR = """
[model]
kind = linear
init_scale = 0.1
"""


def write_config(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return path


def run(args):
    return main([str(a) for a in args])


class TestPretrain:
    CONFIG = SYNTH_DATASET + MODEL_LINEAR + """
[trainer]
learning_rate = 0.05
epochs_outer = 5
seed = 7
"""

    def test_creates_files_and_exits_zero(self, tmp_path):
        config = write_config(tmp_path, self.CONFIG)
        assert run(["pretrain", "--config", config, "--out", tmp_path / "out"]) == 0
        run_dir = tmp_path / "out" / "run"
        assert (run_dir / "curves.csv").exists()
        assert (run_dir / "checkpoints" / "G.ckpt").exists()
        assert (run_dir / "config.copy").read_text() == self.CONFIG

    def test_missing_learning_rate_names_key(self, tmp_path, capsys):
        config = write_config(tmp_path, SYNTH_DATASET + MODEL_LINEAR + "[trainer]\nseed = 7\n")
        code = run(["pretrain", "--config", config, "--out", tmp_path / "out"])
        assert code == 1
        assert "learning_rate" in capsys.readouterr().err

    def test_rerun_byte_identical(self, tmp_path):
        config = write_config(tmp_path, self.CONFIG)
        for out in ("out1", "out2"):
            assert run(["pretrain", "--config", config, "--out", tmp_path / out]) == 0
        a = tmp_path / "out1" / "run" / "curves.csv"
        b = tmp_path / "out2" / "run" / "curves.csv"
        assert filecmp.cmp(a, b, shallow=False)
        assert filecmp.cmp(
            tmp_path / "out1" / "run" / "checkpoints" / "G.ckpt",
            tmp_path / "out2" / "run" / "checkpoints" / "G.ckpt",
            shallow=False,
        )


class TestTrain:
    def config(self, trainer, extra=""):
        return SYNTH_DATASET + MODEL_LINEAR + f"""
[trainer]
name = {trainer}
learning_rate = 0.05
epochs_outer = 3
epochs_inner = 2
seed = 40
{extra}
"""

    def test_single_d_curves(self, tmp_path):
        config = write_config(tmp_path, self.config("single-d"))
        assert run(["train", "--config", config, "--out", tmp_path / "out"]) == 0
        record = RunRecord.from_csv(tmp_path / "out" / "run" / "curves.csv")
        epochs = [e for e, _ in record.series("M", "p@5")]
        assert epochs == [0, 1, 2, 3]

    def test_dual_d_writes_two_checkpoints_and_marker(self, tmp_path):
        config = write_config(tmp_path, self.config("dual-d"))
        assert run(["train", "--config", config, "--out", tmp_path / "out"]) == 0
        ckpt = tmp_path / "out" / "run" / "checkpoints"
        assert (ckpt / "A.ckpt").exists() and (ckpt / "B.ckpt").exists()
        chosen = (ckpt / "chosen").read_text().strip()
        assert chosen in ("A", "B")
        header, rows = read_csv(tmp_path / "out" / "run" / "results.csv")
        assert {r[0] for r in rows} == {"A", "B", "chosen"}

    def test_unknown_trainer_exits_one(self, tmp_path, capsys):
        config = write_config(tmp_path, self.config("bogus"))
        assert run(["train", "--config", config, "--out", tmp_path / "out"]) == 1
        assert "bogus" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_blowup_exits_three(self, tmp_path, capsys):
        config = write_config(tmp_path, self.config("single-d").replace(
            "learning_rate = 0.05", "learning_rate = 1e307"))
        config = write_config(tmp_path, config.read_text().replace(
            "epochs_outer = 3", "epochs_outer = 10"))
        assert run(["train", "--config", config, "--out", tmp_path / "out"]) == 3
        assert "numeric" in capsys.readouterr().err.lower()

    def test_missing_dataset_file_exits_two(self, tmp_path):
        body = """
[dataset]
source = letor
path = /nonexistent/letor.txt
""" + MODEL_LINEAR + """
[trainer]
name = single-d
learning_rate = 0.05
"""
        config = write_config(tmp_path, body)
        assert run(["train", "--config", config, "--out", tmp_path / "out"]) == 2

    def test_seed_override_changes_run(self, tmp_path):
        config = write_config(tmp_path, self.config("single-d"))
        assert run(["train", "--config", config, "--out", tmp_path / "o1"]) == 0
        assert run(["train", "--config", config, "--out", tmp_path / "o2",
                    "--seed", 77]) == 0
        a = (tmp_path / "o1" / "run" / "curves.csv").read_bytes()
        b = (tmp_path / "o2" / "run" / "curves.csv").read_bytes()
        assert a != b


class TestCompare:
    CONFIG = SYNTH_DATASET + MODEL_LINEAR + """
[trainer]
learning_rate = 0.05
epochs_outer = 4
epochs_inner = 2
seed = 40

[compare]
trainers = single-d,dns
seeds = 1,2
"""

    def test_emits_results_and_per_seed(self, tmp_path):
        config = write_config(tmp_path, self.CONFIG)
        assert run(["compare", "--config", config, "--out", tmp_path / "out"]) == 0
        header, rows = read_csv(tmp_path / "out" / "run" / "results.csv")
        assert header == ["model", "metric", "value"]
        models = {r[0] for r in rows}
        assert models == {"single-d", "dns"}
        _, seed_rows = read_csv(tmp_path / "out" / "run" / "per_seed.csv")
        assert {(r[0], r[1]) for r in seed_rows} == {
            ("single-d", "1"), ("single-d", "2"), ("dns", "1"), ("dns", "2")
        }

    def test_single_trainer_rejected(self, tmp_path):
        config = write_config(tmp_path, self.CONFIG.replace(
            "trainers = single-d,dns", "trainers = single-d"))
        assert run(["compare", "--config", config, "--out", tmp_path / "out"]) == 1

    def test_budget_parity_for_dual_d(self):
        assert parity_outer_epochs(budget=60, inner=30) == 1
        assert parity_outer_epochs(budget=120, inner=30) == 2
        assert parity_outer_epochs(budget=4, inner=30) == 1

    def test_parity_override_warns(self, tmp_path):
        body = self.CONFIG.replace("trainers = single-d,dns", "trainers = single-d,dual-d")
        body += "dual_d_outer = 3\n"
        config = write_config(tmp_path, body)
        assert run(["compare", "--config", config, "--out", tmp_path / "out"]) == 0
        _, rows = read_csv(tmp_path / "out" / "run" / "results.csv")
        assert any(r[0] == "warning" and r[1] == "budget_parity" for r in rows)


class TestVariance:
    CONFIG = """
[variance]
fractions = 0.002,0.005,0.015
b = 0.5
num_queries = 4
pool_size = 300
feature_dim = 5
train_epochs = 30
learning_rate = 0.3
mc_samples = 3000
seed = 7
b_sweep = 0.5,0.6,0.7,0.8,0.9
"""

    def test_three_row_study(self, tmp_path):
        config = write_config(tmp_path, self.CONFIG)
        assert run(["variance", "--config", config, "--out", tmp_path / "out"]) == 0
        header, rows = read_csv(tmp_path / "out" / "run" / "study.csv")
        assert header == ["fraction", "b", "q_max", "bound_rhs", "exact_variance",
                          "mc_variance", "mc_se", "p_a1"]
        assert [r[0] for r in rows] == ["0.002", "0.005", "0.015"]

    def test_sweep_monotone_above_anchor(self, tmp_path):
        config = write_config(tmp_path, self.CONFIG)
        assert run(["variance", "--config", config, "--out", tmp_path / "out"]) == 0
        _, rows = read_csv(tmp_path / "out" / "run" / "b_sweep.csv")
        anchor = float(rows[0][1])
        bounds = [float(r[2]) for r in rows if float(r[0]) > anchor]
        assert len(bounds) >= 2
        assert all(b2 > b1 for b1, b2 in zip(bounds, bounds[1:]))

    def test_rerun_identical(self, tmp_path):
        config = write_config(tmp_path, self.CONFIG)
        for out in ("v1", "v2"):
            assert run(["variance", "--config", config, "--out", tmp_path / out]) == 0
        for name in ("study.csv", "bound_chain.csv", "b_sweep.csv"):
            assert filecmp.cmp(tmp_path / "v1" / "run" / name,
                               tmp_path / "v2" / "run" / name, shallow=False)


class TestOutputRoot:
    def test_env_var_sets_default_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RANK_LAB_OUT", str(tmp_path / "envout"))
        config = write_config(tmp_path, TestPretrain.CONFIG)
        assert run(["pretrain", "--config", config]) == 0
        assert (tmp_path / "envout" / "run" / "curves.csv").exists()
