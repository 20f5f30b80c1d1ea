"""Harness: file formats, config parsing, experiment drivers, CLI surface."""

import numpy as np
import pytest

from concord import PointCloud, TrainConfig
from concord.cli import main
from concord.dataio import (
    ExperimentManifest,
    load_dataset,
    parse_config_text,
    read_config,
    read_manifest,
    read_metrics_csv,
    read_pcld,
    read_xyz,
    serialize_config,
    write_config,
    write_dataset,
    write_manifest,
    write_metrics_csv,
    write_pcld,
    write_xyz,
)
from concord.errors import ConfigError
from concord.experiments import (
    cmd_ablation_alphabeta,
    cmd_report,
    cmd_toyset_experiment,
    effective_jobs,
    run_training,
)
from concord.model import load_checkpoint
from concord.toyset import ToyParams, generate_one_to_many_corpus

TINY = TrainConfig(epochs=2, batch_size=4, n_views=2, missing_ratio=0.5,
                   lr_max=5e-3, lr_min=2.5e-3, alpha=0.1, beta=1.0, seed=0,
                   input_size=8, output_size=8, encoder_widths=(8, 12),
                   decoder_widths=(10,))


@pytest.fixture(scope="module")
def tiny_objects():
    rng = np.random.default_rng(5)
    return [PointCloud(rng.random((20, 3)), label=f"obj-{i}") for i in range(10)]


class TestCloudFiles:
    def test_xyz_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.standard_normal((17, 3)), label="a")
        write_xyz(tmp_path / "c.xyz", cloud)
        back = read_xyz(tmp_path / "c.xyz", label="a")
        np.testing.assert_array_equal(back.points, cloud.points)

    def test_xyz_single_point(self, tmp_path):
        write_xyz(tmp_path / "one.xyz", [(0.25, -1.5, 3.0)])
        back = read_xyz(tmp_path / "one.xyz")
        assert back.points.shape == (1, 3)

    def test_pcld_round_trip(self, tmp_path, rng):
        cloud = PointCloud(rng.standard_normal((23, 3)).astype(np.float32))
        write_pcld(tmp_path / "c.pcld", cloud)
        back = read_pcld(tmp_path / "c.pcld")
        np.testing.assert_allclose(back.points, cloud.points, atol=1e-6)

    def test_pcld_magic_guard(self, tmp_path):
        (tmp_path / "bad.pcld").write_bytes(b"WRONG" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            read_pcld(tmp_path / "bad.pcld")

    @pytest.mark.parametrize("fmt", ["xyz", "pcld1"])
    def test_dataset_round_trip(self, tmp_path, rng, fmt):
        clouds = [PointCloud(rng.random((9, 3)), label=f"c{i}") for i in range(4)]
        write_dataset(tmp_path / "ds", clouds, fmt=fmt)
        back = load_dataset(tmp_path / "ds")
        assert [c.label for c in back] == [c.label for c in clouds]
        tol = 0 if fmt == "xyz" else 1e-6
        for a, b in zip(back, clouds):
            np.testing.assert_allclose(a.points, b.points, atol=tol)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ValueError, match="dataset"):
            load_dataset(tmp_path)


class TestConfig:
    def test_round_trip_fixed_point(self):
        text = serialize_config(TINY)
        cfg = parse_config_text(text)
        assert cfg == TINY
        assert serialize_config(cfg) == text

    def test_unknown_key_reports_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("epochs = 2\nnot_a_key = 5\n")
        with pytest.raises(ConfigError, match=r"bad\.cfg:2.*not_a_key"):
            read_config(path)

    def test_bad_value_reports_line(self):
        with pytest.raises(ConfigError, match="line 3"):
            parse_config_text("epochs = 2\nseed = 1\nalpha = banana\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("epochs = 2\nepochs = 3\n")

    def test_comments_and_blank_lines(self):
        cfg = parse_config_text("# comment\n\nepochs = 7\n")
        assert cfg.epochs == 7

    def test_semantic_validation_applies(self):
        with pytest.raises(ValueError, match="insufficient views"):
            parse_config_text("alpha = 0.5\nn_views = 1\n")

    def test_widths_round_trip(self, tmp_path):
        cfg = TrainConfig(encoder_widths=(3, 5, 7), decoder_widths=())
        write_config(tmp_path / "c.cfg", cfg)
        assert read_config(tmp_path / "c.cfg") == cfg


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = ExperimentManifest(kind="train", config=TINY, seeds=(0, 1),
                                      outputs={"metrics": "metrics.csv"})
        write_manifest(tmp_path / "m.json", manifest)
        assert read_manifest(tmp_path / "m.json") == manifest


class TestMetricsCsv:
    def test_round_trip_and_skip(self, tmp_path):
        rows = [("r", 1, "eval", 0.5, 0.25, 0.1, 0.9, 0.0),
                ("r", 2, "eval", 0.25, 0.2, 0.05, 0.95, 0.0)]
        path = tmp_path / "m.csv"
        write_metrics_csv(path, rows)
        with open(path, "a") as fh:
            fh.write("garbage,row\n")
        parsed, skipped = read_metrics_csv(path)
        assert len(parsed) == 2 and skipped == 1
        assert parsed[0]["cd_l2"] == 0.5


class TestRunTraining:
    def test_writes_outputs(self, tmp_path, tiny_objects):
        out = tmp_path / "run1"
        params, history = run_training(TINY, tiny_objects, out)
        assert (out / "manifest.json").exists()
        assert (out / "checkpoint.bin").exists()
        assert (out / "metrics.csv").exists()
        assert (out / "train_log.csv").exists()
        rows, skipped = read_metrics_csv(out / "metrics.csv")
        assert skipped == 0
        assert len(rows) == 2 * TINY.epochs  # train + eval row per epoch
        loaded = load_checkpoint(out / "checkpoint.bin")
        assert loaded.output_size == TINY.output_size

    def test_metrics_deterministic_rerun(self, tmp_path, tiny_objects):
        run_training(TINY, tiny_objects, tmp_path / "a", run_id="run")
        run_training(TINY, tiny_objects, tmp_path / "b", run_id="run")
        assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


class TestCli:
    def _write_corpus(self, tmp_path, n=8):
        rng = np.random.default_rng(1)
        clouds = [PointCloud(rng.random((20, 3)), label=f"o{i}") for i in range(n)]
        write_dataset(tmp_path / "data", clouds)
        return tmp_path / "data"

    def test_gen_corpus_and_train_and_eval(self, tmp_path, capsys):
        assert main(["gen-corpus", "--out", str(tmp_path / "corpus"), "--count", "2",
                     "--points", "24", "--seed", "3"]) == 0
        clouds = load_dataset(tmp_path / "corpus")
        assert len(clouds) == 10  # 2 per family

        cfg_path = tmp_path / "cfg.cfg"
        write_config(cfg_path, TINY)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg_path), "--data", str(tmp_path / "corpus"),
                     "--out", str(out)]) == 0
        assert (out / "checkpoint.bin").exists()

        assert main(["eval", "--checkpoint", str(out / "checkpoint.bin"),
                     "--data", str(tmp_path / "corpus"), "--out", str(tmp_path / "ev"),
                     "--ratio", "0.25,0.5,0.75"]) == 0
        rows, _ = read_metrics_csv(tmp_path / "ev/eval_metrics.csv")
        splits = {r["split"] for r in rows}
        assert splits == {"eval@0.25", "eval@0.5", "eval@0.75"}
        # per-object rows plus one aggregate row per ratio
        assert sum(r["run"] == "aggregate" for r in rows) == 3

    def test_train_rerun_byte_identical(self, tmp_path):
        data = self._write_corpus(tmp_path)
        cfg_path = tmp_path / "cfg.cfg"
        write_config(cfg_path, TINY)
        assert main(["train", "--config", str(cfg_path), "--data", str(data),
                     "--out", str(tmp_path / "r1")]) == 0
        assert main(["train", "--config", str(cfg_path), "--data", str(data),
                     "--out", str(tmp_path / "r2")]) == 0
        a = (tmp_path / "r1/metrics.csv").read_text().replace("r1", "run")
        b = (tmp_path / "r2/metrics.csv").read_text().replace("r2", "run")
        assert a == b

    def test_invalid_config_exit_code(self, tmp_path):
        data = self._write_corpus(tmp_path)
        cfg_path = tmp_path / "bad.cfg"
        cfg_path.write_text("alpha = 0.5\nn_views = 1\n")
        assert main(["train", "--config", str(cfg_path), "--data", str(data),
                     "--out", str(tmp_path / "r")]) == 2

    def test_unreadable_dataset_exit_code(self, tmp_path):
        cfg_path = tmp_path / "cfg.cfg"
        write_config(cfg_path, TINY)
        assert main(["train", "--config", str(cfg_path), "--data", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "r")]) == 2

    def test_divergence_exit_code(self, tmp_path):
        data = self._write_corpus(tmp_path)
        cfg_path = tmp_path / "cfg.cfg"
        write_config(cfg_path, TrainConfig(
            epochs=3, batch_size=4, n_views=1, alpha=0.0, beta=0.0,
            missing_ratio=0.5, input_size=8, output_size=4,
            encoder_widths=(4,), decoder_widths=(), eval_fraction=0.0,
            lr_max=1e200, lr_min=1e200))
        with np.errstate(all="ignore"):
            assert main(["train", "--config", str(cfg_path), "--data", str(data),
                         "--out", str(tmp_path / "r")]) == 3

    def test_report_empty_dir(self, tmp_path):
        (tmp_path / "runs").mkdir()
        assert main(["report", "--runs", str(tmp_path / "runs"),
                     "--out", str(tmp_path / "rep")]) == 2


class TestAblationDrivers:
    def test_alphabeta_grid_rows_and_collapse(self, tmp_path, tiny_objects):
        grid = ((0.0, 0.0), (0.1, 1.0))
        rows = cmd_ablation_alphabeta(TINY, tiny_objects, tmp_path / "ab",
                                      grid=grid, seeds=(0,), jobs=1)
        med = [r for r in rows if r[2] == "median"]
        assert len(med) == 2
        assert (tmp_path / "ab/summary.csv").exists()
        # cell (0,0) equals a plain training run with the same seed
        from dataclasses import replace
        _, hist = run_training(replace(TINY, alpha=0.0, beta=0.0),
                               tiny_objects, tmp_path / "plain")
        cell = [r for r in rows if r[:2] == (0.0, 0.0) and r[2] == "0"][0]
        assert cell[3] == hist[-1].eval_metrics.cd_l2

    def test_ablation_n_summary(self, tmp_path, tiny_objects):
        from concord.experiments import cmd_ablation_n
        rows = cmd_ablation_n(TINY, tiny_objects, tmp_path / "an",
                              n_list=(2, 3), seeds=(0,), budget=6, jobs=1)
        med = {r[0]: r for r in rows if r[2] == "median"}
        assert set(med) == {2, 3}
        assert med[2][1] == 3 and med[3][1] == 2  # batch = budget // n
        assert (tmp_path / "an/summary.csv").exists()

    def test_parallel_jobs_match_sequential(self, tmp_path, tiny_objects):
        grid = ((0.0, 1.0), (0.1, 1.0))
        seq = cmd_ablation_alphabeta(TINY, tiny_objects, tmp_path / "seq",
                                     grid=grid, seeds=(0,), jobs=1)
        par = cmd_ablation_alphabeta(TINY, tiny_objects, tmp_path / "par",
                                     grid=grid, seeds=(0,), jobs=2)
        assert seq == par

    def test_effective_jobs_env_cap(self, monkeypatch):
        monkeypatch.setenv("CONCORD_THREADS", "2")
        assert effective_jobs(8) == 2
        monkeypatch.delenv("CONCORD_THREADS")
        assert effective_jobs(8) == 8


class TestToysetDriver:
    def test_summary_rows_and_gate(self, tmp_path):
        objects = generate_one_to_many_corpus(10, points=64, seed=2)  # 40 objects
        cfg = TrainConfig(epochs=1, batch_size=8, n_views=1, alpha=0.0, beta=0.0,
                          missing_ratio=0.75, input_size=8, output_size=16,
                          encoder_widths=(8,), decoder_widths=(8,), seed=0,
                          lr_max=5e-3, lr_min=2.5e-3)
        rows, stats = cmd_toyset_experiment(objects, ToyParams(k1=8, k2=2, n=12),
                                            cfg, tmp_path / "toy", replicas=2, mine_seed=1)
        means = [r for r in rows if r[1] == "mean"]
        assert {r[0] for r in means} == {"mined", "uniform"}
        assert len(rows) == 6  # 2 datasets x 2 replicas + 2 mean rows
        assert stats["mined_inc_cd"] < stats["uniform_inc_cd"]
        assert stats["mined_mis_cd"] > stats["uniform_mis_cd"]


class TestReport:
    def test_report_on_runs(self, tmp_path, tiny_objects):
        run_training(TINY, tiny_objects, tmp_path / "runs/r1")
        summary = cmd_report(tmp_path / "runs", tmp_path / "rep")
        assert summary["runs"] == 1
        assert (tmp_path / "rep/aggregate.csv").exists()
        assert (tmp_path / "rep/curve_r1.png").exists()

    def test_report_skips_malformed_rows(self, tmp_path, tiny_objects):
        run_training(TINY, tiny_objects, tmp_path / "runs/r1")
        with open(tmp_path / "runs/r1/metrics.csv", "a") as fh:
            fh.write("bad,row,count\n")
        summary = cmd_report(tmp_path / "runs", tmp_path / "rep")
        assert summary["skipped_rows"] == 1

    def test_ablation_bar_chart(self, tmp_path, tiny_objects):
        grid = ((0.0, 0.0), (0.1, 1.0))
        cmd_ablation_alphabeta(TINY, tiny_objects, tmp_path / "runs/ab",
                               grid=grid, seeds=(0,), jobs=1)
        cmd_report(tmp_path / "runs", tmp_path / "rep")
        assert (tmp_path / "rep/ablation_ab.png").exists()
