import csv
import json

import pytest

from webdetect.cli import main, parse_config_file
from webdetect.errors import ConfigError

TRAIN_CONFIG = """
# detector settings for the pipeline smoke run
lr = 0.001
batch_pages = 3
max_epochs = 2
seed = 41
k = 4
backbone = small
pretrained_backbone = false
freeze_backbone = true
input_size = 1280
proj_dim = 32
pos_dim = 16
head_hidden = 32
dropout = 0.0
"""

SYNTH_SPEC = """
n_pages = 10
n_domains = 5
elements_per_page = 52
n_decoy_prices = 1
seed = 41
"""


class TestConfigFile:
    def test_coercion_and_comments(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("a = 3\nb = 0.5  # trailing comment\nc = true\nd = off\ne = small\n\n# full comment\n")
        assert parse_config_file(p) == {"a": 3, "b": 0.5, "c": True, "d": False, "e": "small"}

    def test_duplicate_key_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("a = 1\na = 2\n")
        with pytest.raises(ConfigError):
            parse_config_file(p)

    def test_missing_equals_rejected(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("just a line\n")
        with pytest.raises(ConfigError):
            parse_config_file(p)


class TestArgHandling:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "synth" in capsys.readouterr().out

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_required_argument(self, capsys):
        assert main(["synth"]) == 1

    def test_unknown_config_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("banana = 1\n")
        rc = main([
            "train", "--data", str(tmp_path / "m.csv"), "--labels", str(tmp_path / "l.csv"),
            "--config", str(bad), "--out", str(tmp_path / "run"),
        ])
        assert rc == 1
        assert "banana" in capsys.readouterr().err

    def test_train_requires_labels(self, tmp_path, capsys):
        cfg = tmp_path / "t.cfg"
        cfg.write_text(TRAIN_CONFIG)
        rc = main([
            "train", "--data", str(tmp_path / "m.csv"),
            "--config", str(cfg), "--out", str(tmp_path / "run"),
        ])
        assert rc == 1
        assert "--labels" in capsys.readouterr().err

    def test_synth_rejects_bad_spec_value(self, tmp_path, capsys):
        spec = tmp_path / "s.cfg"
        spec.write_text("n_pages = 0\n")
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "d")]) == 1


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    (root / "synth.cfg").write_text(SYNTH_SPEC)
    (root / "train.cfg").write_text(TRAIN_CONFIG)
    assert main(["synth", "--spec", str(root / "synth.cfg"), "--out", str(root / "data")]) == 0
    data = ["--data", str(root / "data" / "manifest.csv")]
    labels = ["--labels", str(root / "data" / "labels.csv")]
    assert main(["ingest", *data, *labels, "--out", str(root / "ingest" / "report.json")]) == 0
    assert main(["build-graph", *data, "--k", "4", "--out", str(root / "graphs" / "graphs.json")]) == 0
    assert main([
        "train", *data, *labels, "--config", str(root / "train.cfg"),
        "--out", str(root / "run"), "--n-folds", "5", "--fold", "0",
    ]) == 0
    return root


class TestPipeline:
    def test_synth_artifacts(self, pipeline):
        rows = list(csv.DictReader(open(pipeline / "data" / "manifest.csv")))
        assert len(rows) == 10
        for row in rows:
            assert (pipeline / "data" / row["screenshot_path"]).exists()
            assert (pipeline / "data" / row["dom_path"]).exists()
        assert (pipeline / "data" / "run_stamp.json").exists()

    def test_ingest_report(self, pipeline):
        report = json.loads((pipeline / "ingest" / "report.json").read_text())
        assert report["pages"] == 10
        assert report["label_totals"]["price"] == 10
        assert all(d["fully_labeled"] for d in report["detail"])

    def test_graph_json(self, pipeline):
        graphs = json.loads((pipeline / "graphs" / "graphs.json").read_text())
        assert len(graphs) == 10
        for g in graphs.values():
            assert g["k"] == 4
            assert all(len(nbrs) == 4 for nbrs in g["neighbors"].values())

    def test_train_artifacts(self, pipeline):
        run = pipeline / "run"
        assert (run / "model.pt").exists()
        report = json.loads((run / "train_report.json").read_text())
        lines = (run / "epochs.jsonl").read_text().splitlines()
        assert len(lines) == report["epochs_run"] == 2
        assert report["train_pages"] == 6 and report["val_pages"] == 2
        stamp = json.loads((run / "run_stamp.json").read_text())
        assert stamp["seed"] == 41
        assert stamp["config"]["backbone"] == "small"
        assert len(stamp["inputs"]) == 2

    def test_eval_runs_and_is_deterministic(self, pipeline):
        data = ["--data", str(pipeline / "data" / "manifest.csv")]
        labels = ["--labels", str(pipeline / "data" / "labels.csv")]
        ckpt = ["--ckpt", str(pipeline / "run" / "model.pt")]
        for name in ("eval1", "eval2"):
            rc = main([
                "eval", *data, *labels, *ckpt, "--k", "4", "--n-folds", "5",
                "--out", str(pipeline / name / "report.json"),
            ])
            assert rc == 0
        a = (pipeline / "eval1" / "report.json").read_bytes()
        b = (pipeline / "eval2" / "report.json").read_bytes()
        assert a == b
        report = json.loads(a)
        assert len(report["folds"]) == 5
        assert set(report["mean"]) == {"price", "title", "image"}
        stamps = [
            (pipeline / name / "run_stamp.json").read_bytes() for name in ("eval1", "eval2")
        ]
        assert stamps[0] == stamps[1]

    def test_predict_emits_all_pages(self, pipeline):
        data = ["--data", str(pipeline / "data" / "manifest.csv")]
        rc = main([
            "predict", *data, "--ckpt", str(pipeline / "run" / "model.pt"),
            "--k", "4", "--out", str(pipeline / "pred" / "pred.json"),
        ])
        assert rc == 0
        payload = json.loads((pipeline / "pred" / "pred.json").read_text())
        assert len(payload) == 10
        for winners in payload.values():
            assert set(winners) == {"price_id", "title_id", "image_id"}
            assert all(isinstance(v, int) for v in winners.values())

    def test_viz_writes_overlay(self, pipeline):
        with open(pipeline / "data" / "labels.csv") as fh:
            row = next(csv.DictReader(fh))
        page_id, price_id = row["page_id"], row["price_id"]
        rc = main([
            "viz", "--data", str(pipeline / "data" / "manifest.csv"),
            "--ckpt", str(pipeline / "run" / "model.pt"),
            "--page", page_id, "--element", price_id,
            "--k", "4", "--out", str(pipeline / "viz"),
        ])
        assert rc == 0
        stem = f"{page_id}_el{price_id}"
        assert (pipeline / "viz" / f"{stem}.png").exists()
        payload = json.loads((pipeline / "viz" / f"{stem}.json").read_text())
        assert len(payload["scores"]) == 4

    def test_viz_unknown_page(self, pipeline, capsys):
        rc = main([
            "viz", "--data", str(pipeline / "data" / "manifest.csv"),
            "--ckpt", str(pipeline / "run" / "model.pt"),
            "--page", "nope", "--element", "100",
            "--out", str(pipeline / "viz2"),
        ])
        assert rc == 1
        assert "nope" in capsys.readouterr().err

    def test_workdir_resolves_relative_paths(self, pipeline):
        rc = main([
            "ingest", "--workdir", str(pipeline),
            "--data", "data/manifest.csv", "--out", "ingest_rel/report.json",
        ])
        assert rc == 0
        assert (pipeline / "ingest_rel" / "report.json").exists()
