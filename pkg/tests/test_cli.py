from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from skyeye_forge.cli import main
from skyeye_forge.jsonl import read_jsonl, write_jsonl

from .oracles import oracle_bleu, oracle_cider, oracle_meteor, oracle_rouge_l


@pytest.fixture()
def workspace(tmp_path):
    """Annotation fixtures + config for a small two-dataset build."""
    captions = [
        {"path": "p1.jpg", "captions": ["two parked planes 1", "a wide runway 1"],
         "width": 640, "height": 480, "split": "train"},
        {"path": "p2.jpg", "captions": ["two parked planes 2", "a wide runway 2"],
         "width": 640, "height": 480, "split": "train"},
        {"path": "p3.jpg", "captions": ["two parked planes 3", "a wide runway 3"],
         "width": 640, "height": 480, "split": "train"},
        {"path": "pv.jpg", "captions": ["a heldout validation image"],
         "width": 640, "height": 480, "split": "val"},
    ]
    vqas = [
        {"path": "p1.jpg", "question": "how many planes?", "answer": "two",
         "category": "presence", "width": 640, "height": 480, "split": "train"},
        {"path": "p1.jpg", "question": "is there a runway?", "answer": "yes",
         "category": "presence", "width": 640, "height": 480, "split": "train"},
        {"path": "p2.jpg", "question": "rural or urban?", "answer": "rural",
         "category": "rural_urban", "width": 640, "height": 480, "split": "train"},
        {"path": "p2.jpg", "question": "is there a plane?", "answer": "yes",
         "category": "presence", "width": 640, "height": 480, "split": "train"},
    ]
    (tmp_path / "captions.json").write_text(json.dumps(captions))
    (tmp_path / "vqa.json").write_text(json.dumps(vqas))
    config = {
        "seed": 11,
        "identifiers_enabled": True,
        "output_dir": "out",
        "datasets": [
            {"dataset_id": "minirs", "kind": "image_caption",
             "input_format": "caption-json", "path": "captions.json",
             "split_map": {"train": "train", "val": "val"}},
            {"dataset_id": "minirs", "kind": "vqa",
             "input_format": "vqa-json", "path": "vqa.json",
             "split_map": {"train": "train", "val": "val"}},
        ],
        "recipes": [
            {"name": "mini-conversa", "member_kinds": ["image_caption", "vqa"],
             "source_dataset_ids": ["minirs"]}
        ],
    }
    config_path = tmp_path / "forge.json"
    config_path.write_text(json.dumps(config))
    return tmp_path, config_path, config


def run(*args, env=None):
    return CliRunner().invoke(main, [str(a) for a in args], env=env, catch_exceptions=False)


class TestIngestCommand:
    def test_writes_record_files(self, workspace):
        tmp_path, config_path, _ = workspace
        result = run("ingest", "--config", config_path)
        assert result.exit_code == 0, result.output
        records = read_jsonl(tmp_path / "out" / "records" / "minirs.records.jsonl")
        # 4 caption records (3 train + 1 val) + 4 vqa records, merged
        assert len(records) == 8
        kinds = {r["kind"] for r in records}
        assert kinds == {"image_caption", "vqa"}

    def test_missing_config_is_exit_2(self):
        result = run("ingest", "--config", "/nonexistent/forge.json")
        assert result.exit_code == 2

    def test_config_from_env_var(self, workspace):
        tmp_path, config_path, _ = workspace
        result = run("ingest", env={"SKYEYE_FORGE_CONFIG": str(config_path)})
        assert result.exit_code == 0, result.output


class TestBuildCommand:
    def test_build_matches_golden_manifest(self, workspace):
        tmp_path, config_path, _ = workspace
        result = run("build", "--config", config_path)
        assert result.exit_code == 0, result.output
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        rows = {(r["dataset_id"], r["task"]): r["sample_count"] for r in manifest["rows"]}
        assert rows == {
            ("minirs", "image_caption"): 6,
            ("minirs", "vqa"): 4,
            ("mini-conversa", "multi_task_conversation"): 2,
        }
        assert manifest["total"] == 12
        assert manifest["stage1_total"] == 10
        assert manifest["stage2_total"] == 12
        assert manifest["seed"] == 11
        assert len(manifest["build_config_hash"]) == 64

    def test_build_rebuild_byte_identical(self, workspace):
        tmp_path, config_path, _ = workspace
        run("build", "--config", config_path)
        first = (tmp_path / "out" / "corpus.stage2.jsonl").read_bytes()
        run("build", "--config", config_path)
        assert (tmp_path / "out" / "corpus.stage2.jsonl").read_bytes() == first

    def test_validate_accepts_build_outputs(self, workspace):
        tmp_path, config_path, _ = workspace
        run("build", "--config", config_path)
        out = tmp_path / "out"
        for artifact in ("corpus.samples.jsonl", "corpus.stage1.jsonl", "manifest.json"):
            result = run("validate", out / artifact)
            assert result.exit_code == 0, f"{artifact}: {result.output}"

    def test_planted_leakage_fails_build(self, workspace):
        tmp_path, config_path, config = workspace
        captions = json.loads((tmp_path / "captions.json").read_text())
        captions.append({"path": "pv.jpg", "captions": ["leaky train caption"],
                         "width": 640, "height": 480, "split": "train"})
        (tmp_path / "captions.json").write_text(json.dumps(captions))
        result = run("build", "--config", config_path)
        assert result.exit_code == 1
        assert "pv.jpg" in result.output

    def test_seed_flag_overrides_config(self, workspace):
        tmp_path, config_path, _ = workspace
        run("build", "--config", config_path, "--seed", "99")
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["seed"] == 99


class TestValidateCommand:
    def test_corrupt_sample_file_fails(self, workspace):
        tmp_path, config_path, _ = workspace
        run("build", "--config", config_path)
        path = tmp_path / "out" / "corpus.samples.jsonl"
        rows = read_jsonl(path)
        rows[0]["sample_id"] = "0" * 64
        write_jsonl(path, rows)
        result = run("validate", path)
        assert result.exit_code == 1
        assert "content hash" in result.output


class TestEvalCommand:
    def _caption_fixtures(self, tmp_path):
        refs = [
            {"item_id": "a", "references": ["a plane parked on the runway", "one parked plane"]},
            {"item_id": "b", "references": ["ships near the harbor"]},
            {"item_id": "c", "references": ["a green field with trees"]},
        ]
        preds = [
            {"item_id": "a", "prediction_text": "a plane parked on the runway"},
            {"item_id": "b", "prediction_text": "boats close to the harbor"},
            {"item_id": "c", "prediction_text": "a green field"},
        ]
        write_jsonl(tmp_path / "refs.jsonl", refs)
        write_jsonl(tmp_path / "preds.jsonl", preds)
        corpus = [(p["prediction_text"], r["references"]) for p, r in zip(preds, refs)]
        return corpus

    def test_caption_scores_match_oracle(self, tmp_path):
        corpus = self._caption_fixtures(tmp_path)
        out = tmp_path / "report.json"
        result = run("eval", "--task", "caption",
                     "--references", tmp_path / "refs.jsonl",
                     "--predictions", tmp_path / "preds.jsonl",
                     "--dataset-id", "toy", "--out", out)
        assert result.exit_code == 0, result.output
        scores = json.loads(out.read_text())["scores"]
        assert scores["BLEU-1"] == pytest.approx(100 * oracle_bleu(corpus, 1), abs=1e-6)
        assert scores["BLEU-4"] == pytest.approx(100 * oracle_bleu(corpus, 4), abs=1e-6)
        assert scores["ROUGE_L"] == pytest.approx(100 * oracle_rouge_l(corpus), abs=1e-6)
        assert scores["METEOR"] == pytest.approx(100 * oracle_meteor(corpus), abs=1e-6)
        assert scores["CIDEr"] == pytest.approx(100 * oracle_cider(corpus), abs=1e-6)
        assert "BLEU-1" in result.output and "CIDEr" in result.output

    def test_vqa_eval(self, tmp_path):
        write_jsonl(tmp_path / "refs.jsonl", [
            {"item_id": "1", "gt_answer": "yes", "category": "presence"},
            {"item_id": "2", "gt_answer": "rural", "category": "rural_urban"},
        ])
        write_jsonl(tmp_path / "preds.jsonl", [
            {"item_id": "1", "prediction_text": "Yes."},
            {"item_id": "2", "prediction_text": "urban"},
        ])
        out = tmp_path / "vqa.json"
        result = run("eval", "--task", "vqa", "--references", tmp_path / "refs.jsonl",
                     "--predictions", tmp_path / "preds.jsonl", "--out", out)
        assert result.exit_code == 0, result.output
        scores = json.loads(out.read_text())["scores"]
        assert scores["presence"] == 100.0
        assert scores["rural_urban"] == 0.0
        assert scores["Average Acc"] == 50.0

    def test_grounding_eval(self, tmp_path):
        write_jsonl(tmp_path / "refs.jsonl", [
            {"item_id": "g1", "gt_box": [0, 0, 100, 100], "width": 100, "height": 100},
            {"item_id": "g2", "gt_box": [0, 0, 100, 100], "width": 100, "height": 100},
        ])
        write_jsonl(tmp_path / "preds.jsonl", [
            {"item_id": "g1", "prediction_text": "{<0><0><90><100>}"},
            {"item_id": "g2", "prediction_text": "{<0><0><30><100>}"},
        ])
        out = tmp_path / "g.json"
        result = run("eval", "--task", "grounding", "--references", tmp_path / "refs.jsonl",
                     "--predictions", tmp_path / "preds.jsonl", "--out", out)
        assert result.exit_code == 0, result.output
        assert json.loads(out.read_text())["scores"]["Acc@0.5"] == 50.0

    def test_missing_prediction_is_validation_failure(self, tmp_path):
        write_jsonl(tmp_path / "refs.jsonl", [{"item_id": "a", "references": ["x"]}])
        write_jsonl(tmp_path / "preds.jsonl", [{"item_id": "b", "prediction_text": "y"}])
        result = run("eval", "--task", "caption", "--references", tmp_path / "refs.jsonl",
                     "--predictions", tmp_path / "preds.jsonl")
        assert result.exit_code == 1
        assert "no prediction for item" in result.output


class TestReviewFlow:
    def test_decision_log_applied_on_rebuild(self, workspace):
        tmp_path, config_path, config = workspace
        run("build", "--config", config_path)
        samples = read_jsonl(tmp_path / "out" / "corpus.samples.jsonl")
        rejected_id = samples[0]["sample_id"]
        accepted_id = samples[1]["sample_id"]
        log_path = tmp_path / "decisions.jsonl"
        write_jsonl(log_path, [
            {"sample_id": rejected_id, "verdict": "reject", "reviewer": "qa",
             "timestamp": "2025-03-04T12:00:00Z"},
            {"sample_id": accepted_id, "verdict": "accept", "reviewer": "qa",
             "timestamp": "2025-03-04T12:00:01Z"},
        ])
        config["review"] = {"decision_log": "decisions.jsonl"}
        config_path.write_text(json.dumps(config))

        result = run("build", "--config", config_path)
        assert result.exit_code == 0, result.output
        rebuilt = read_jsonl(tmp_path / "out" / "corpus.samples.jsonl")
        assert len(rebuilt) == len(samples) - 1
        assert rejected_id not in {s["sample_id"] for s in rebuilt}

        result = run("build", "--config", config_path, "--require-accept")
        assert result.exit_code == 0, result.output
        only_accepted = read_jsonl(tmp_path / "out" / "corpus.samples.jsonl")
        assert [s["sample_id"] for s in only_accepted] == [accepted_id]
        assert only_accepted[0]["review_state"] == "accepted"


class TestIngestLenient:
    def test_error_report_written(self, workspace):
        tmp_path, config_path, _ = workspace
        vqas = json.loads((tmp_path / "vqa.json").read_text())
        vqas.append({"path": "bad.jpg", "question": "q?", "answer": "",
                     "width": 640, "height": 480, "split": "train"})
        (tmp_path / "vqa.json").write_text(json.dumps(vqas))
        result = run("ingest", "--config", config_path, "--lenient")
        assert result.exit_code == 0, result.output
        issues = read_jsonl(tmp_path / "out" / "records" / "minirs.errors.jsonl")
        assert len(issues) == 1
        assert "answer" in issues[0]["error"]

    def test_strict_ingest_fails_on_bad_unit(self, workspace):
        tmp_path, config_path, _ = workspace
        vqas = json.loads((tmp_path / "vqa.json").read_text())
        vqas.append({"path": "bad.jpg", "question": "q?", "answer": "",
                     "width": 640, "height": 480, "split": "train"})
        (tmp_path / "vqa.json").write_text(json.dumps(vqas))
        result = run("ingest", "--config", config_path)
        assert result.exit_code == 1


class TestServeCommand:
    def test_missing_corpus_is_config_error(self, workspace):
        tmp_path, config_path, _ = workspace
        result = run("serve", "--config", config_path)
        assert result.exit_code == 2
        assert "run build first" in result.output


class TestUsageErrors:
    def test_unknown_subcommand(self):
        result = CliRunner().invoke(main, ["frobnicate"])
        assert result.exit_code == 2

    def test_unknown_flag(self):
        result = CliRunner().invoke(main, ["eval", "--bogus"])
        assert result.exit_code == 2
