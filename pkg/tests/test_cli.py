"""Command-line interface: exit codes, pipelines, determinism, API parity."""

import json

import pytest

from memescan.cli import main
from memescan.dataset import load_manifest, resolve_patches
from memescan.encoders import encode_image, encode_text


def run(args):
    return main(args)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert run(["gen-data", "planted", "--out", str(root), "--n", "20",
                "--seed", "0"]) == 0
    return root


@pytest.fixture(scope="module")
def checkpoint(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "model.mmh"
    code = run(["train", "--manifest", str(corpus / "manifest.jsonl"),
                "--checkpoint", str(path), "--seed", "7", "--epochs", "20",
                "--lr", "1.0", "--d-h", "16", "--vocab", "64",
                "--max-len", "32", "--max-patches", "4"])
    assert code == 0
    return path


class TestExitCodes:
    def test_missing_file_is_io_error(self, tmp_path):
        assert run(["stats", "--manifest", str(tmp_path / "nope.jsonl")]) == 1

    def test_invalid_manifest_is_validation_error(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "x"}\n')
        assert run(["stats", "--manifest", str(bad)]) == 2

    def test_empty_manifest_is_validation_error(self, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        assert run(["stats", "--manifest", str(empty)]) == 2

    def test_divergence_is_numeric_error(self, corpus, tmp_path):
        assert run(["train", "--manifest", str(corpus / "manifest.jsonl"),
                    "--checkpoint", str(tmp_path / "m.mmh"), "--seed", "1",
                    "--epochs", "300", "--lr", "500.0", "--d-h", "8",
                    "--vocab", "32", "--max-len", "16",
                    "--max-patches", "4"]) == 3

    def test_missing_required_option_is_validation_error(self, corpus):
        assert run(["train", "--manifest",
                    str(corpus / "manifest.jsonl")]) == 2

    def test_stats_success(self, corpus, capsys):
        assert run(["stats", "--manifest",
                    str(corpus / "manifest.jsonl")]) == 0
        out = capsys.readouterr().out
        assert "Kitchen" in out and "Total" in out


class TestPredict:
    def test_output_schema_and_invariants(self, corpus, checkpoint, tmp_path):
        out = tmp_path / "preds.jsonl"
        assert run(["predict", "--manifest", str(corpus / "manifest.jsonl"),
                    "--checkpoint", str(checkpoint), "--out", str(out)]) == 0
        objs = [json.loads(l) for l in out.read_text().splitlines()]
        records = load_manifest(corpus / "manifest.jsonl")
        assert [o["id"] for o in objs] == [r.id for r in records]
        for o in objs:
            assert set(o) == {"id", "label", "misogyny_prob", "category",
                              "category_dist"}
            assert 0.0 <= o["misogyny_prob"] <= 1.0
            assert abs(sum(o["category_dist"]) - 1.0) < 1e-9

    def test_deterministic_rerun_byte_identical(self, corpus, checkpoint,
                                                tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        base = ["predict", "--manifest", str(corpus / "manifest.jsonl"),
                "--checkpoint", str(checkpoint)]
        assert run(base + ["--out", str(a)]) == 0
        assert run(base + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_cli_matches_library_api(self, corpus, checkpoint, tmp_path):
        from memescan.model import MemeModel
        out = tmp_path / "preds.jsonl"
        run(["predict", "--manifest", str(corpus / "manifest.jsonl"),
             "--checkpoint", str(checkpoint), "--out", str(out)])
        first = json.loads(out.read_text().splitlines()[0])
        model = MemeModel.load(checkpoint)
        record = load_manifest(corpus / "manifest.jsonl")[0]
        from memescan.encoders import tokenize
        tokens = tokenize(record.text, model.cfg.vocab_size)
        patches = resolve_patches(record, model.cfg.raw_dim, base_dir=corpus)
        _, pred = model.run_record(tokens, patches)
        assert first["label"] == pred.label
        assert first["misogyny_prob"] == pred.misogyny_prob
        assert first["category"] == pred.category.display_name

    def test_feature_bypass(self, corpus, checkpoint, tmp_path):
        from memescan.encoders import save_embeddings, tokenize
        from memescan.model import MemeModel
        model = MemeModel.load(checkpoint)
        record = load_manifest(corpus / "manifest.jsonl")[0]
        tokens = tokenize(record.text, model.cfg.vocab_size)
        patches = resolve_patches(record, model.cfg.raw_dim, base_dir=corpus)
        t_path, i_path = tmp_path / "t.mme", tmp_path / "i.mme"
        save_embeddings(t_path, encode_text(tokens, model.enc))
        save_embeddings(i_path, encode_image(patches, model.enc))
        out = tmp_path / "byp.jsonl"
        assert run(["predict", "--checkpoint", str(checkpoint),
                    "--text-emb", str(t_path), "--image-emb", str(i_path),
                    "--out", str(out)]) == 0
        got = json.loads(out.read_text())
        _, want = model.run_record(tokens, patches)
        assert got["label"] == want.label
        assert got["misogyny_prob"] == want.misogyny_prob


@pytest.fixture(scope="module")
def preds(corpus, checkpoint, tmp_path_factory):
    out = tmp_path_factory.mktemp("explain") / "preds.jsonl"
    run(["predict", "--manifest", str(corpus / "manifest.jsonl"),
         "--checkpoint", str(checkpoint), "--out", str(out)])
    return out


class TestExplainEvaluate:
    def test_explain_stub_deterministic(self, corpus, preds, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        base = ["explain", "--manifest", str(corpus / "manifest.jsonl"),
                "--predictions", str(preds), "--shots", "2"]
        assert run(base + ["--out", str(a)]) == 0
        assert run(base + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        objs = [json.loads(l) for l in a.read_text().splitlines()]
        for o in objs:
            assert o["rationale"]
            assert o["category"] in o["rationale"]

    def test_explain_unknown_prediction_id(self, corpus, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps({"id": "ghost", "label": True,
                                   "category": "Other"}) + "\n")
        assert run(["explain", "--manifest", str(corpus / "manifest.jsonl"),
                    "--predictions", str(bad),
                    "--out", str(tmp_path / "o.jsonl")]) == 2

    def test_evaluate_writes_reports(self, corpus, preds, tmp_path):
        rats = tmp_path / "rats.jsonl"
        run(["explain", "--manifest", str(corpus / "manifest.jsonl"),
             "--predictions", str(preds), "--out", str(rats)])
        report_dir = tmp_path / "report"
        assert run(["evaluate", "--manifest", str(corpus / "manifest.jsonl"),
                    "--predictions", str(preds), "--rationales", str(rats),
                    "--report-dir", str(report_dir)]) == 0
        text = (report_dir / "report.txt").read_text()
        csv_text = (report_dir / "report.csv").read_text()
        assert "MMC (F1)" in text
        assert csv_text.startswith("setup,model,mmc_f1")
        # CSV and text agree value-for-value
        for cell in csv_text.splitlines()[1].split(",")[2:]:
            assert cell in text

    def test_evaluate_unmatched_ids_exit_2(self, corpus, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(json.dumps({"id": "ghost", "label": True,
                                   "category": "Other"}) + "\n")
        assert run(["evaluate", "--manifest", str(corpus / "manifest.jsonl"),
                    "--predictions", str(bad)]) == 2
        assert "ghost" in capsys.readouterr().err

    def test_evaluate_perfect_predictions(self, corpus, tmp_path, capsys):
        records = load_manifest(corpus / "manifest.jsonl")
        perfect = tmp_path / "perfect.jsonl"
        perfect.write_text("".join(
            json.dumps({"id": r.id, "label": r.misogyny_label,
                        "category": r.category.display_name}) + "\n"
            for r in records))
        assert run(["evaluate", "--manifest", str(corpus / "manifest.jsonl"),
                    "--predictions", str(perfect)]) == 0
        out = capsys.readouterr().out
        assert "1.00" in out


class TestConfigFileIntegration:
    def test_config_file_with_flag_override(self, corpus, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"manifest = {corpus / 'manifest.jsonl'}\nseed = 3\n")
        assert run(["stats", "--config", str(cfg)]) == 0
        assert "Total" in capsys.readouterr().out
