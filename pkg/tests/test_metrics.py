from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from skyeye_forge.domain import PixelBox
from skyeye_forge.errors import ValidationError
from skyeye_forge.geotext import quantize_box, serialize_box
from skyeye_forge.metrics import (
    GroundingItem,
    PhraseGroundingItem,
    VqaItem,
    bleu,
    cider,
    grounding_accuracy,
    iou,
    meteor_lite,
    normalize_answer,
    phrase_grounding_scores,
    porter_stem,
    render_table,
    rouge_l,
    tokenize,
    vqa_accuracy,
    vqa_report,
)
from skyeye_forge.metrics.report import caption_report

from .oracles import oracle_bleu, oracle_meteor
from .util import random_caption_corpus


class TestTokenize:
    def test_strips_punctuation_and_case(self):
        assert tokenize("A Plane, parked.") == ["a", "plane", "parked"]

    def test_empty(self):
        assert tokenize("") == []

    @given(st.text(max_size=60))
    def test_idempotent(self, text):
        tokens = tokenize(text)
        assert tokenize(" ".join(tokens)) == tokens


class TestPorterStemmer:
    @pytest.mark.parametrize(
        "word,stem",
        [
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("cats", "cat"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("motoring", "motor"),
            ("hopping", "hop"),
            ("falling", "fall"),
            ("happy", "happi"),
            ("relational", "relat"),
            ("conditional", "condit"),
            ("digitizer", "digit"),
            ("operator", "oper"),
            ("hopefulness", "hope"),
            ("electrical", "electr"),
            ("adjustable", "adjust"),
            ("replacement", "replac"),
            ("adoption", "adopt"),
            ("rate", "rate"),
            ("roll", "roll"),
            ("plane", "plane"),
            ("planes", "plane"),
        ],
    )
    def test_known_vectors(self, word, stem):
        assert porter_stem(word) == stem


class TestBleu:
    def test_identical_pair_is_one(self):
        corpus = [("a plane parked on the runway", ["a plane parked on the runway"])]
        for n in range(1, 5):
            assert bleu(corpus, n) == pytest.approx(1.0)

    def test_repeated_token_clipping(self):
        # classical clipped modified precision: "the" appears once in the
        # reference, so the clipped count is min(4, 1) = 1 and p1 = 1/4;
        # the candidate is longer than the reference so BP = 1.
        corpus = [("the the the the", ["the cat"])]
        expected = oracle_bleu(corpus, 1)
        assert expected == pytest.approx(0.25, abs=1e-12)
        assert bleu(corpus, 1) == pytest.approx(expected, abs=1e-12)

    def test_zero_overlap_is_zero(self):
        assert bleu([("red yellow", ["green blue"])], 1) == 0.0

    def test_no_smoothing_zero_higher_order(self):
        # unigrams overlap but no shared bigram -> BLEU-2 exactly 0
        corpus = [("a plane", ["plane a"])]
        assert bleu(corpus, 1) > 0.0
        assert bleu(corpus, 2) == 0.0

    def test_range(self):
        rng = random.Random(5)
        corpus = random_caption_corpus(rng)
        for n in range(1, 5):
            assert 0.0 <= bleu(corpus, n) <= 1.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValidationError):
            bleu([], 1)

    def test_brevity_penalty_applies(self):
        # perfect p1 but candidate half the reference length: BP = exp(1 - 4/2)
        import math

        corpus = [("a plane", ["a plane parked here"])]
        assert bleu(corpus, 1) == pytest.approx(math.exp(-1.0), abs=1e-12)


class TestRougeL:
    def test_identical_pair(self):
        assert rouge_l([("a plane parked", ["a plane parked"])]) == pytest.approx(1.0)

    def test_hand_case(self):
        # cand a b c d vs ref a c d: LCS 3, P=0.75, R=1.0, beta=1.2
        corpus = [("a b c d", ["a c d"])]
        expected = (1 + 1.44) * 0.75 * 1.0 / (1.0 + 1.44 * 0.75)
        assert rouge_l(corpus) == pytest.approx(expected, abs=1e-12)
        assert rouge_l(corpus) == pytest.approx(0.87980769230769, abs=1e-9)

    def test_disjoint_vocab_zero(self):
        assert rouge_l([("red yellow", ["green blue"])]) == 0.0

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValidationError):
            rouge_l([])


class TestMeteorLite:
    def test_identical_pair_matches_formula(self):
        corpus = [("a plane parked", ["a plane parked"])]
        # perfect match: P = R = 1, F = 1, one chunk over three matches
        expected = 1.0 * (1.0 - 0.5 * (1.0 / 3.0) ** 3.0)
        assert meteor_lite(corpus) == pytest.approx(expected, abs=1e-12)
        assert meteor_lite(corpus) == pytest.approx(oracle_meteor(corpus), abs=1e-12)

    def test_zero_matches(self):
        assert meteor_lite([("red yellow", ["green blue"])]) == 0.0

    def test_stemmed_stage_matches(self):
        # no exact token overlap, but stems align
        assert meteor_lite([("planes parked", ["plane parking"])]) > 0.0

    def test_extra_reference_never_lowers_score(self):
        base = [("a plane parked", ["a plane parked on the runway"])]
        extended = [("a plane parked", ["a plane parked on the runway", "zebra crossing"])]
        assert meteor_lite(extended) >= meteor_lite(base)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValidationError):
            meteor_lite([])


class TestCider:
    def test_zero_overlap_corpus(self):
        corpus = [
            ("red yellow", ["green blue"]),
            ("purple orange", ["white black"]),
        ]
        assert cider(corpus) == 0.0

    def test_single_item_rejected(self):
        with pytest.raises(ValidationError, match="IDF degenerate"):
            cider([("a plane", ["a plane"])])

    def test_item_scores_within_bounds(self):
        rng = random.Random(11)
        corpus = random_caption_corpus(rng)
        score = cider(corpus)
        assert 0.0 <= score <= 10.0

    def test_identical_candidates_score_higher_than_disjoint(self):
        refs = [["a plane on the runway"], ["ships near the road"], ["a green field"]]
        perfect = [(r[0], r) for r in refs]
        broken = [("xyzzy qwerty", r) for r in refs]
        assert cider(perfect) > cider(broken)


class TestEchoDominance:
    """A candidate equal to one of its references never scores below a
    perturbed candidate on the same references."""

    REFS = [
        ["a plane parked on the runway", "one parked plane"],
        ["ships near the harbor"],
        ["a green field with trees"],
    ]
    PERTURBED = ["a plane parked on the grass", "ships far from the harbor", "a dry field"]

    def _corpora(self):
        echo = [(refs[0], refs) for refs in self.REFS]
        off = [(cand, refs) for cand, refs in zip(self.PERTURBED, self.REFS)]
        return echo, off

    def test_bleu_and_rouge_are_exactly_one(self):
        echo, _ = self._corpora()
        assert bleu(echo, 4) == pytest.approx(1.0)
        assert rouge_l(echo) == pytest.approx(1.0)

    def test_meteor_and_cider_dominate(self):
        echo, off = self._corpora()
        assert meteor_lite(echo) >= meteor_lite(off)
        assert cider(echo) >= cider(off)


class TestIou:
    def test_identical(self):
        assert iou((0.1, 0.1, 0.5, 0.5), (0.1, 0.1, 0.5, 0.5)) == pytest.approx(1.0)

    def test_disjoint(self):
        assert iou((0.0, 0.0, 0.2, 0.2), (0.5, 0.5, 0.9, 0.9)) == 0.0

    def test_hand_case_one_third(self):
        assert iou((0.0, 0.0, 0.1, 0.1), (0.05, 0.0, 0.15, 0.1)) == pytest.approx(1 / 3)


def _grounding_fixture():
    # gt covers the whole 100x100 image; predictions cover 90/60/30 percent
    gt = PixelBox(0, 0, 100, 100)
    preds = ["{<0><0><90><100>}", "{<0><0><60><100>}", "{<0><0><30><100>}"]
    return [
        GroundingItem(item_id=f"item{i}", prediction_text=p, gt_box=gt, width=100, height=100)
        for i, p in enumerate(preds)
    ]


class TestGroundingAccuracy:
    def test_threshold_fixture(self):
        report = grounding_accuracy(_grounding_fixture())
        assert report.accuracy == pytest.approx(2 / 3, abs=1e-9)
        assert report.parse_failure_rate == 0.0

    def test_unparseable_counts_as_failure(self):
        items = [
            GroundingItem("a", "no box in this text", PixelBox(0, 0, 50, 50), 100, 100),
        ]
        report = grounding_accuracy(items)
        assert report.accuracy == 0.0
        assert report.parse_failure_rate == 1.0

    def test_serialized_gt_always_correct(self):
        rng = random.Random(99)
        items = []
        for i in range(200):
            width, height = rng.randint(50, 2000), rng.randint(50, 2000)
            # extents of at least 10% of the image keep quantization drift
            # well inside the 0.5 IoU threshold
            x1 = rng.uniform(0, width * 0.8)
            y1 = rng.uniform(0, height * 0.8)
            x2 = rng.uniform(x1 + width * 0.1, width)
            y2 = rng.uniform(y1 + height * 0.1, height)
            gt = PixelBox(x1, y1, x2, y2)
            pred = serialize_box(quantize_box(gt, width, height))
            items.append(GroundingItem(f"i{i}", pred, gt, width, height))
        report = grounding_accuracy(items)
        assert report.accuracy == 1.0

    def test_monotone_in_threshold(self):
        items = _grounding_fixture()
        accs = [grounding_accuracy(items, t).accuracy for t in (0.25, 0.5, 0.75, 0.95)]
        assert accs == sorted(accs, reverse=True)


class TestPhraseGrounding:
    def test_greedy_matching(self):
        gt = (PixelBox(0, 0, 50, 50), PixelBox(50, 50, 100, 100))
        pred = "{<0><0><50><50>}<delim>{<0><0><10><10>}"
        report = phrase_grounding_scores(
            [PhraseGroundingItem("x", pred, gt, 100, 100)]
        )
        assert report.matched == 1
        assert report.precision == pytest.approx(0.5)
        assert report.recall == pytest.approx(0.5)
        assert report.f1 == pytest.approx(0.5)


class TestVqa:
    def test_normalization(self):
        assert normalize_answer("Yes.") == "yes"
        assert normalize_answer("  Rural ") == "rural"

    def test_all_correct(self):
        items = [VqaItem("1", "Yes.", "yes", "presence")]
        report = vqa_accuracy(items)
        assert report.per_category == {"presence": 1.0}
        assert report.average_acc == 1.0

    def test_macro_average(self):
        items = []
        for i in range(5):
            items.append(VqaItem(f"a{i}", "yes" if i < 4 else "no", "yes", "presence"))
        for i in range(5):
            items.append(VqaItem(f"b{i}", "rural" if i < 3 else "urban", "rural", "area"))
        report = vqa_accuracy(items)
        assert report.per_category["presence"] == pytest.approx(0.8)
        assert report.per_category["area"] == pytest.approx(0.6)
        assert report.average_acc == pytest.approx(0.7)
        assert report.micro_acc == pytest.approx(0.7)

    def test_uncategorized_bucket(self):
        report = vqa_accuracy([VqaItem("1", "four", "four", None)])
        assert report.per_category == {"all": 1.0}


class TestReports:
    def test_caption_report_scaled(self):
        corpus = [
            ("a plane parked", ["a plane parked"]),
            ("ships on the road", ["ships on the road"]),
        ]
        report = caption_report("fixture", corpus)
        assert report.scores["BLEU-1"] == pytest.approx(100.0)
        assert report.scores["ROUGE_L"] == pytest.approx(100.0)
        assert 0 <= report.scores["METEOR"] <= 100
        assert report.scores["CIDEr"] >= 0
        assert report.scores["length_ratio"] == pytest.approx(1.0)

    def test_reference_and_item_order_invariance(self):
        rng = random.Random(3)
        corpus = random_caption_corpus(rng, min_items=4)
        shuffled_refs = [(c, list(reversed(refs))) for c, refs in corpus]
        reordered = list(reversed(shuffled_refs))
        for metric in (rouge_l, meteor_lite, cider, lambda c: bleu(c, 4)):
            assert metric(corpus) == pytest.approx(metric(reordered), abs=1e-12)

    def test_render_table_shape(self):
        report = vqa_report("rsvqa", [VqaItem("1", "yes", "yes", "presence")])
        text = render_table(report)
        lines = text.splitlines()
        assert lines[0].startswith("rsvqa")
        assert "Average Acc" in lines[2]
        assert len(lines) == 4
