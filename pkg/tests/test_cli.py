"""Command-line pipeline: contracts, determinism, and exit codes."""

import json

import numpy as np
import pytest

from trendrec.cli import main
from trendrec.dataset import load_interactions, split_leave_one_out
from trendrec.model import Checkpoint, load_checkpoint, save_checkpoint, init_params, TrainConfig
from trendrec.segmentation import EpochSegmentation


def synth_args(out, users=40, items=100, events=700, seed=2, temperature=0.5):
    return ["synth", "--output", str(out), "--users", str(users), "--items", str(items),
            "--events", str(events), "--feature-dim", "24", "--true-dims", "3",
            "--boundaries", "10000000,20000000", "--temperature", str(temperature),
            "--seed", str(seed)]


def data_args(data):
    return ["--interactions", str(data / "interactions.tsv"),
            "--features", str(data / "features.txt"),
            "--taxonomy", str(data / "taxonomy.tsv")]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    data = tmp_path_factory.mktemp("data")
    assert main(synth_args(data)) == 0
    return data


@pytest.fixture(scope="module")
def trained(tmp_path_factory, dataset, warm_kernels):
    out = tmp_path_factory.mktemp("run")
    args = (["train"] + data_args(dataset)
            + ["--output", str(out), "--variant", "tvbpr+", "--dims", "3",
               "--visual-dims", "3", "--epochs", "3", "--bins", "9",
               "--iterations", "6", "--lr", "0.05", "--seed", "5"])
    assert main(args) == 0
    return out


class TestSynth:
    def test_outputs_pass_validate(self, dataset):
        assert main(["validate"] + data_args(dataset)) == 0

    def test_seed_changes_files_same_schema(self, dataset, tmp_path):
        other = tmp_path / "other"
        assert main(synth_args(other, seed=9)) == 0
        a = (dataset / "interactions.tsv").read_text()
        b = (other / "interactions.tsv").read_text()
        assert a != b
        assert main(["validate"] + data_args(other)) == 0

    def test_infeasible_events_fail_validation(self, tmp_path):
        code = main(synth_args(tmp_path / "bad", users=50, events=50 * 4))
        assert code == 1

    def test_manifest_written(self, dataset):
        manifest = json.loads((dataset / "manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["stats"]["users"] == 40


class TestTrain:
    def test_artifacts_exist(self, trained):
        for name in ("checkpoint.bin", "segments.tsv", "manifest.json", "train.log"):
            assert (trained / name).exists()

    def test_manifest_records_config(self, trained):
        manifest = json.loads((trained / "manifest.json").read_text())
        assert manifest["config"]["num_epochs"] == 3
        assert manifest["config"]["num_bins"] == 9
        assert manifest["config"]["variant"] == "tvbpr+"
        assert "interactions" in manifest["inputs"]

    def test_bpr_mf_checkpoint_has_no_visual_parameters(self, dataset, tmp_path):
        out = tmp_path / "mf"
        args = (["train"] + data_args(dataset)
                + ["--output", str(out), "--variant", "bpr-mf", "--dims", "3",
                   "--iterations", "2", "--seed", "1"])
        assert main(args) == 0
        ckpt = load_checkpoint(out / "checkpoint.bin")
        assert ckpt.params.embedding.size == 0
        assert ckpt.params.visual_bias.size == 0
        assert ckpt.params.visual_user_factors.size == 0
        assert ckpt.params.num_epochs == 1

    def test_pop_variant_trains_instantly(self, dataset, tmp_path):
        out = tmp_path / "pop"
        args = (["train"] + data_args(dataset)
                + ["--output", str(out), "--variant", "pop", "--seed", "1"])
        assert main(args) == 0
        ckpt = load_checkpoint(out / "checkpoint.bin")
        log = load_interactions(dataset / "interactions.tsv")
        split = split_leave_one_out(log, ckpt.config.seed)
        assert np.array_equal(ckpt.params.item_bias[0].astype(int),
                              split.item_train_counts())

    def test_identical_runs_byte_identical(self, dataset, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            args = (["train"] + data_args(dataset)
                    + ["--output", str(out), "--variant", "tvbpr", "--dims", "2",
                       "--visual-dims", "2", "--epochs", "2", "--bins", "4",
                       "--iterations", "4", "--seed", "3", "--threads", "1"])
            assert main(args) == 0
            outs.append(out)
        a, b = outs
        assert (a / "checkpoint.bin").read_bytes() == (b / "checkpoint.bin").read_bytes()
        assert (a / "segments.tsv").read_text() == (b / "segments.tsv").read_text()

    def test_config_file_with_overrides(self, dataset, tmp_path):
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text("variant = vbpr\nlatent_dims = 2\nvisual_dims = 2\n"
                            "iterations = 2\nseed = 4\n# comment\n")
        out = tmp_path / "run"
        args = (["train"] + data_args(dataset)
                + ["--output", str(out), "--config", str(cfg_file), "--iterations", "3"])
        assert main(args) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["variant"] == "vbpr"
        assert manifest["config"]["iterations"] == 3  # flag beats file

    def test_unknown_config_key_fails(self, dataset, tmp_path):
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text("vibe = high\n")
        out = tmp_path / "run"
        args = (["train"] + data_args(dataset)
                + ["--output", str(out), "--config", str(cfg_file)])
        assert main(args) == 1


class TestEval:
    def test_reports_and_determinism(self, dataset, trained, tmp_path):
        outs = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            args = (["eval", "--checkpoint", str(trained / "checkpoint.bin")]
                    + data_args(dataset) + ["--output", str(out), "--mode", "both"])
            assert main(args) == 0
            outs.append(out)
        a, b = outs
        assert (a / "report_all.tsv").read_text() == (b / "report_all.tsv").read_text()
        assert (a / "report_cold.tsv").read_text() == (b / "report_cold.tsv").read_text()
        text = (a / "report_all.tsv").read_text()
        assert "auc\t" in text and "variant\ttvbpr+" in text

    def test_untrained_model_scores_near_half(self, dataset, tmp_path, warm_kernels):
        log = load_interactions(dataset / "interactions.tsv")
        config = TrainConfig(variant="bpr-mf", latent_dims=4, visual_dims=0,
                             num_epochs=1, num_bins=1, seed=0)
        params = init_params(config, log.num_users, log.num_items, 0, seed=123)
        seg = EpochSegmentation.initial(log.t_min, log.t_max, 1, 1)
        ckpt = Checkpoint(params=params, segmentation=seg, config=config,
                          user_ids=log.user_ids, item_ids=log.item_ids, category_ids=[])
        path = tmp_path / "fresh.bin"
        save_checkpoint(ckpt, path)
        out = tmp_path / "eval"
        args = (["eval", "--checkpoint", str(path)] + data_args(dataset)
                + ["--output", str(out), "--mode", "all"])
        assert main(args) == 0
        text = (out / "report_all.tsv").read_text()
        auc_line = [l for l in text.splitlines() if l.startswith("auc\t")][0]
        assert abs(float(auc_line.split("\t")[1]) - 0.5) < 0.12

    def test_id_map_mismatch_rejected(self, trained, tmp_path):
        other = tmp_path / "otherdata"
        assert main(synth_args(other, seed=77)) == 0
        out = tmp_path / "eval"
        args = (["eval", "--checkpoint", str(trained / "checkpoint.bin")]
                + data_args(other) + ["--output", str(out)])
        assert main(args) == 1


class TestExport:
    def test_dims_row_count(self, dataset, trained, tmp_path):
        out = tmp_path / "exp"
        args = (["export", "dims", "--checkpoint", str(trained / "checkpoint.bin")]
                + data_args(dataset) + ["--output", str(out), "--top", "10"])
        assert main(args) == 0
        rows = (out / "dimensions.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + 3 * 10  # header + dims * top
        weights = (out / "dimension_weights.csv").read_text().strip().splitlines()
        assert len(weights) == 1 + 3 * 3  # header + dims * epochs

    def test_segments_line_count(self, dataset, trained, tmp_path):
        out = tmp_path / "exp"
        args = (["export", "segments", "--checkpoint", str(trained / "checkpoint.bin")]
                + data_args(dataset) + ["--output", str(out)])
        assert main(args) == 0
        assert len((out / "segments.tsv").read_text().strip().splitlines()) == 3

    def test_heatmap_cartesian_count(self, dataset, trained, tmp_path):
        out = tmp_path / "exp"
        args = (["export", "heatmap", "--checkpoint", str(trained / "checkpoint.bin")]
                + data_args(dataset) + ["--output", str(out)])
        assert main(args) == 0
        log = load_interactions(dataset / "interactions.tsv")
        rows = (out / "heatmap.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + log.num_items * 3

    def test_styles(self, dataset, trained, tmp_path):
        out = tmp_path / "exp"
        args = (["export", "styles", "--checkpoint", str(trained / "checkpoint.bin")]
                + data_args(dataset) + ["--output", str(out)])
        assert main(args) == 0
        log = load_interactions(dataset / "interactions.tsv")
        rows = (out / "styles.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + log.num_items


class TestExitCodes:
    def test_missing_file_is_validation_failure(self, tmp_path):
        code = main(["validate", "--interactions", str(tmp_path / "nope.tsv")])
        assert code == 1

    def test_bad_variant_rejected_by_parser(self, dataset, tmp_path, capsys):
        with pytest.raises(SystemExit):
            main(["train"] + data_args(dataset)
                 + ["--output", str(tmp_path / "x"), "--variant", "nope"])
