"""Acceptance suite: one test per contract criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``).

Expected values tagged as derived were computed with the brute-force
oracles in tests/oracles.py before being frozen here.
"""

from __future__ import annotations

import json
import random
import threading
import time
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from fastapi.testclient import TestClient

from skyeye_forge.corpus import (
    BuildSettings,
    StageMixConfig,
    build_corpus,
    build_single_task,
    mix_stream,
    write_corpus,
)
from skyeye_forge.domain import (
    CaptionPayload,
    ConversationTurn,
    DEFAULT_IDENTIFIER_TOKENS,
    MediaRef,
    PixelBox,
    SourceRecord,
    TaskKind,
)
from skyeye_forge.errors import CorpusBuildError
from skyeye_forge.geotext import (
    QuantizedBox,
    dequantize_box,
    normalize_pixel_box,
    parse_boxes,
    quantize_box,
    serialize_box,
)
from skyeye_forge.judge import EndpointConfig, aggregate_verdict_log, build_prompt, judge_corpus, JudgeItem
from skyeye_forge.metrics import GroundingItem, bleu, cider, grounding_accuracy, meteor_lite, rouge_l
from skyeye_forge.review import read_decision_log
from skyeye_forge.service import ReviewStore, ServiceSettings, create_app
from skyeye_forge.templating import load_default_pools, recover_turns, render_conversation

from .conftest import FIXTURE_RECIPES, make_fixture_records
from .oracles import oracle_bleu, oracle_cider, oracle_meteor, oracle_rouge_l
from .util import random_caption_corpus

POOLS = load_default_pools()


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}")
        raise
    print(f"ACCEPTANCE PASS: {name}")


def test_metric_oracle_equivalence():
    """bleu/rouge_l/meteor_lite/cider match the brute-force oracles to
    1e-9 on 50 randomized small corpora in under 10 seconds."""
    with criterion("metric-oracle equivalence (50 corpora, 1e-9, <10s)"):
        start = time.monotonic()
        for seed in range(50):
            corpus = random_caption_corpus(random.Random(777_000 + seed))
            for n in range(1, 5):
                assert bleu(corpus, n) == pytest.approx(oracle_bleu(corpus, n), abs=1e-9)
            assert rouge_l(corpus) == pytest.approx(oracle_rouge_l(corpus), abs=1e-9)
            assert meteor_lite(corpus) == pytest.approx(oracle_meteor(corpus), abs=1e-9)
            assert cider(corpus) == pytest.approx(oracle_cider(corpus), abs=1e-9)
        assert time.monotonic() - start < 10.0


def test_bleu_hand_case():
    """Pinned contract value: repeated-token candidate scores 0.5."""
    with criterion("BLEU hand case (the the the the / the cat = 0.5)"):
        assert bleu([("the the the the", ["the cat"])], 1) == 0.5


def test_coordinate_grammar():
    """Serialize->parse identity on 1e5 sampled boxes, quantization drift
    bounded by 0.005, and 1e6 fuzz inputs without an abort."""
    with criterion("coordinate grammar round-trip, drift bound, parser fuzz"):
        rng = random.Random(31337)
        for _ in range(100_000):
            x1, x2 = sorted((rng.randint(0, 100), rng.randint(0, 100)))
            y1, y2 = sorted((rng.randint(0, 100), rng.randint(0, 100)))
            box = QuantizedBox(x1, y1, x2, y2)
            parsed = parse_boxes(serialize_box(box))
            assert parsed.boxes == (box,) and parsed.malformed == 0

        for _ in range(100_000):
            width = rng.randint(1, 4096)
            height = rng.randint(1, 4096)
            x1 = rng.uniform(0, width - 1e-6)
            x2 = rng.uniform(x1 + 1e-6, width)
            y1 = rng.uniform(0, height - 1e-6)
            y2 = rng.uniform(y1 + 1e-6, height)
            pixel = PixelBox(x1, y1, x2, y2)
            unit = dequantize_box(quantize_box(pixel, width, height))
            exact = normalize_pixel_box(pixel, width, height)
            for got, expected in zip(unit.as_tuple(), exact.as_tuple()):
                assert abs(got - expected) <= 0.005 + 1e-12

        for _ in range(1_000_000):
            parse_boxes(rng.randbytes(rng.randrange(0, 24)).decode("latin-1"))


def test_grounding_accuracy_criterion():
    """Threshold fixture scores 66.67 +/- 0.01; a prediction equal to the
    serialized quantized gt is always correct at threshold 0.5."""
    with criterion("grounding accuracy fixture and quantization slack"):
        gt = PixelBox(0, 0, 100, 100)
        items = [
            GroundingItem(f"i{i}", text, gt, 100, 100)
            for i, text in enumerate(
                ["{<0><0><90><100>}", "{<0><0><60><100>}", "{<0><0><30><100>}"]
            )
        ]
        report = grounding_accuracy(items)
        assert 100.0 * report.accuracy == pytest.approx(66.67, abs=0.01)

        rng = random.Random(4242)
        echo_items = []
        for i in range(2_000):
            width, height = rng.randint(32, 4096), rng.randint(32, 4096)
            x1 = rng.uniform(0, width * 0.85)
            y1 = rng.uniform(0, height * 0.85)
            x2 = rng.uniform(x1 + width * 0.1, width)
            y2 = rng.uniform(y1 + height * 0.1, height)
            box = PixelBox(x1, y1, x2, y2)
            prediction = serialize_box(quantize_box(box, width, height))
            echo_items.append(GroundingItem(f"e{i}", prediction, box, width, height))
        assert grounding_accuracy(echo_items).accuracy == 1.0


def test_corpus_determinism(tmp_path):
    """Identical config+seed -> byte-identical artifacts; a different seed
    reorders the stage-2 stream but emits the same sample set."""
    with criterion("corpus determinism and seed isolation"):
        records = make_fixture_records()
        artifacts = []
        for sub in ("a", "b"):
            result = build_corpus(records, FIXTURE_RECIPES, POOLS, BuildSettings(seed=7),
                                  build_config_hash="fixed")
            paths = write_corpus(result, tmp_path / sub)
            artifacts.append({name: path.read_bytes() for name, path in paths.items()})
        assert artifacts[0] == artifacts[1]

        reseeded = build_corpus(records, FIXTURE_RECIPES, POOLS, BuildSettings(seed=8),
                                build_config_hash="fixed")
        baseline = build_corpus(records, FIXTURE_RECIPES, POOLS, BuildSettings(seed=7),
                                build_config_hash="fixed")
        assert {s.sample_id for s in reseeded.samples} == {s.sample_id for s in baseline.samples}
        assert [s.sample_id for s in reseeded.stage2_stream] != [
            s.sample_id for s in baseline.stage2_stream
        ]


def test_leakage_guard():
    """One planted val-split media reference fails the build and names the
    offending sample; clean builds report zero violations."""
    with criterion("leakage guard (planted violation + clean build)"):
        records = make_fixture_records()
        clean = build_corpus(records, FIXTURE_RECIPES, POOLS, BuildSettings(seed=7))
        assert clean.report["leakage_violations"] == []

        planted_media = MediaRef(dataset_id="parkfield", media_kind="image",
                                 path="pv00.jpg", width=640, height=480)
        planted = records + [SourceRecord(
            media=planted_media, kind=TaskKind.IMAGE_CAPTION, split="train",
            payload=CaptionPayload(captions=("a caption that must not train",)),
        )]
        leaky_sample_ids = {
            s.sample_id
            for s in build_single_task(
                [planted[-1]], POOLS, BuildSettings(seed=7)
            )
        }
        with pytest.raises(CorpusBuildError) as err:
            build_corpus(planted, FIXTURE_RECIPES, POOLS, BuildSettings(seed=7))
        message = str(err.value)
        assert "parkfield/pv00.jpg" in message
        assert any(sample_id in message for sample_id in leaky_sample_ids)


def test_conversation_context_contract():
    """1,000 random conversations: earlier turns fully precede later
    answers and recover_turns inverts the renderer exactly."""
    with criterion("conversation context ordering + exact inverse (1000 cases)"):
        rng = random.Random(515)
        words = ["plane", "runway", "ship", "green", "two", "where", "is", "the"]
        for _ in range(1_000):
            turns = []
            for _ in range(rng.randint(1, 6)):
                instruction = " ".join(rng.choice(words) for _ in range(rng.randint(1, 8)))
                answer = " ".join(rng.choice(words) for _ in range(rng.randint(1, 8)))
                turns.append(ConversationTurn(
                    kind=TaskKind.VQA, instruction_text=instruction, answer_text=answer,
                ))
            rendered = render_conversation(turns)
            for later in range(len(turns)):
                answer_start = rendered.turn_spans[later][1][0]
                for earlier in range(later):
                    (istart, iend), (astart, aend) = rendered.turn_spans[earlier]
                    assert iend <= answer_start and aend <= answer_start
                assert rendered.turn_spans[later][0][1] <= answer_start
            assert recover_turns(rendered.text) == [
                (t.instruction_text, t.answer_text) for t in turns
            ]


def test_stage_mixing_fraction():
    """Weights (0.8, 0.2) over a 10,000-draw epoch land in [0.78, 0.82]."""
    with criterion("stage-2 mixing fraction within +/-2%"):
        records = make_fixture_records()
        result = build_corpus(records, FIXTURE_RECIPES, POOLS, BuildSettings(seed=7))
        single = [s for s in result.samples if not s.source_recipe.startswith("conversa:")]
        conversa = [s for s in result.samples if s.source_recipe.startswith("conversa:")]
        config = StageMixConfig(stage=2, single_task_weight=0.8, conversation_weight=0.2,
                                seed=123, epoch_length=10_000)
        stream = mix_stream(config, single, conversa)
        fraction = sum(
            1 for s in stream if not s.source_recipe.startswith("conversa:")
        ) / len(stream)
        assert 0.78 <= fraction <= 0.82


def test_identifier_ablation():
    """Disabled: no configured token appears anywhere. Enabled: every
    instruction carries exactly one."""
    with criterion("task-identifier ablation toggle"):
        records = make_fixture_records()
        tokens = list(DEFAULT_IDENTIFIER_TOKENS.values())

        ablated = build_corpus(records, FIXTURE_RECIPES, POOLS,
                               BuildSettings(seed=7, identifiers_enabled=False))
        for sample in ablated.samples:
            for turn in sample.turns:
                assert turn.identifier is None
                for token in tokens:
                    assert token not in turn.instruction_text
                    assert token not in turn.answer_text

        enabled = build_corpus(records, FIXTURE_RECIPES, POOLS,
                               BuildSettings(seed=7, identifiers_enabled=True))
        for sample in enabled.samples:
            for turn in sample.turns:
                occurrences = sum(turn.instruction_text.count(t) for t in tokens)
                assert occurrences == 1


class _StubJudgeHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        self.server.requests.append(body)
        reply = self.server.policy(body)
        payload = json.dumps(
            {"choices": [{"message": {"role": "assistant", "content": reply}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


def test_judge_protocol(tmp_path):
    """Prompt bytes match the two fixed templates; an alternating yes/no
    stub scores 0.5; offline re-aggregation reproduces the summary."""
    with criterion("judge protocol against local stub"):
        expected_v1 = (
            "There is one remote sensing image caption1 ‘two planes parked’, "
            "and there is another remote sensing image caption2 ‘a parked plane’. "
            "Does remote sensing image caption2 cover all the objects and visual "
            "relations shown in remote sensing image caption1? "
            "Only answer yes or no without any explanation."
        )
        expected_v2 = (
            "There is one remote sensing image caption1 ‘two planes parked’, "
            "and there is another remote sensing image caption2 ‘a parked plane’. "
            "Based on remote sensing image caption1 and your understanding, do you "
            "think remote sensing image caption2 can be used as another caption? "
            "Only answer yes or no without any explanation."
        )
        assert build_prompt(1, "two planes parked", "a parked plane").rendered == expected_v1
        assert build_prompt(2, "two planes parked", "a parked plane").rendered == expected_v2

        def policy(body):
            prompt = body["messages"][0]["content"]
            index = int(prompt.split("generated ")[1].split("’")[0])
            return "yes" if index % 2 == 0 else "No."

        server = HTTPServer(("127.0.0.1", 0), _StubJudgeHandler)
        server.policy = policy
        server.requests = []
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            items = [
                JudgeItem(f"s{i}", f"generated {i}", (f"truth {i}",)) for i in range(10)
            ]
            config = EndpointConfig(
                url=f"http://127.0.0.1:{server.server_port}/v1/chat/completions",
                model="stub", max_in_flight=1, retry_backoff_seconds=0.0,
            )
            log_path = tmp_path / "verdicts.jsonl"
            summary = judge_corpus(items, config, seed=5, log_path=log_path)
            assert summary["variants"]["1"]["accuracy"] == pytest.approx(0.5)
            assert summary["variants"]["2"]["accuracy"] == pytest.approx(0.5)
        finally:
            server.shutdown()
            server.server_close()
        assert aggregate_verdict_log(log_path) == summary


def test_review_loop_headless(tmp_path):
    """build -> POST 2 rejects to the API -> export -> apply -> rebuilt
    corpus has exactly 2 fewer samples with those ids absent."""
    with criterion("headless end-to-end review loop"):
        records = make_fixture_records()
        base = build_corpus(records, FIXTURE_RECIPES, POOLS, BuildSettings(seed=7))
        log_path = tmp_path / "decisions.jsonl"
        store = ReviewStore(base.samples, log_path)
        client = TestClient(create_app(store, ServiceSettings()))

        to_reject = [base.samples[3].sample_id, base.samples[117].sample_id]
        for sample_id in to_reject:
            response = client.post("/v1/decisions", json={
                "sample_id": sample_id, "verdict": "reject", "reviewer": "qa",
            })
            assert response.status_code == 200

        exported = client.get("/v1/export").content
        export_path = tmp_path / "exported.jsonl"
        export_path.write_bytes(exported)
        decisions = read_decision_log(export_path)
        assert len(decisions) == 2

        rebuilt = build_corpus(records, FIXTURE_RECIPES, POOLS, BuildSettings(seed=7),
                               decisions=decisions)
        assert len(rebuilt.samples) == len(base.samples) - 2
        remaining = {s.sample_id for s in rebuilt.samples}
        assert not set(to_reject) & remaining
