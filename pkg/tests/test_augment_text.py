import numpy as np
import pytest

from app.augment.image import FLIP, AugmentationRecord
from app.augment.lexicon import PositionLexicon, TextResources, load_mirror, load_synonyms
from app.augment.text import (
    EdaParams,
    TextCandidateSet,
    generate_candidates,
    pick_training_text,
    random_deletion,
    random_swap,
    semantic_filter,
    strong_text_augment,
    synonym_replacement,
    weak_text_adapt,
)
from app.core import Expression
from app.errors import ConfigurationError, EmbeddingComputationError
from app.seeding import rng_for

FLIPPED = AugmentationRecord(((FLIP, {}),))
NOT_FLIPPED = AugmentationRecord((("resize", {"height": 4, "width": 4}),))


def _lookup_embedder(table):
    return lambda expr: np.asarray(table[expr.text], dtype=float)


class TestWeakTextAdapt:
    def test_flipped_position_word_is_mirrored(self, resources):
        out = weak_text_adapt(Expression("bags at left"), FLIPPED, resources.mirror)
        assert out.text == "bags at right"

    def test_no_position_words(self, resources):
        assert weak_text_adapt(Expression("black cat"), FLIPPED, resources.mirror).text == "black cat"

    def test_swap_is_simultaneous(self, resources):
        out = weak_text_adapt(Expression("left of right bag"), FLIPPED, resources.mirror)
        assert out.text == "right of left bag"

    def test_unflipped_is_unchanged(self, resources):
        expr = Expression("bags at left")
        assert weak_text_adapt(expr, NOT_FLIPPED, resources.mirror) is expr

    def test_second_flip_restores_the_text(self, resources):
        expr = Expression("square on the left of the rightmost ring")
        twice = weak_text_adapt(weak_text_adapt(expr, FLIPPED, resources.mirror), FLIPPED, resources.mirror)
        assert twice.text == expr.text

    def test_double_flip_is_not_a_flip(self, resources):
        record = AugmentationRecord(((FLIP, {}), (FLIP, {})))
        assert weak_text_adapt(Expression("leftmost cup"), record, resources.mirror).text == "leftmost cup"


class TestStrongTextOps:
    def test_swap_on_single_token(self):
        assert random_swap(["cat"], rng_for(0, "t")) == ["cat"]

    def test_swap_exchanges_two_positions(self):
        out = random_swap(["a", "b", "c", "d"], rng_for(0, "t"))
        assert sorted(out) == ["a", "b", "c", "d"]
        assert sum(x != y for x, y in zip(out, ["a", "b", "c", "d"])) == 2

    def test_deletion_with_zero_probability(self):
        assert random_deletion(["the", "red", "ball"], 0.0, rng_for(0, "t")) == ["the", "red", "ball"]

    def test_deletion_never_empties_the_sentence(self):
        tokens = ["the", "red", "ball"]
        for seed in range(10):
            out = random_deletion(tokens, 1.0, rng_for(seed, "t"))
            assert len(out) == 1 and out[0] in tokens

    def test_single_entry_lexicon_forces_replacement(self):
        out = synonym_replacement(("left", "guy"), 1, {"guy": ("man",)}, frozenset(), rng_for(0, "t"))
        assert out == ["left", "man"]

    def test_stopwords_are_never_replaced(self):
        out = synonym_replacement(("the", "guy"), 2, {"the": ("a",)}, frozenset({"the"}), rng_for(0, "t"))
        assert out == ["the", "guy"]

    def test_strong_augment_returns_nonempty_expression(self, resources):
        params = EdaParams(p_rd=1.0)
        for seed in range(30):
            out = strong_text_augment(Expression("red circle on the left"), rng_for(seed, "t"), params, resources)
            assert out.tokens


class TestCandidates:
    def test_count_is_exact(self, resources):
        cands = generate_candidates(Expression("guy on the left"), 10, rng_for(0, "t"), EdaParams(), resources)
        assert len(cands) == 10

    def test_degenerate_ops_return_the_original(self):
        bare = TextResources(synonyms={}, mirror=PositionLexicon(frozenset()), stopwords=frozenset())
        cands = generate_candidates(Expression("cat"), 1, rng_for(0, "t"), EdaParams(p_rd=0.0), bare)
        assert [c.text for c in cands] == ["cat"]

    def test_same_seed_same_candidates(self, resources):
        expr = Expression("small blue square at the top")
        a = generate_candidates(expr, 10, rng_for(7, "t"), EdaParams(), resources)
        b = generate_candidates(expr, 10, rng_for(7, "t"), EdaParams(), resources)
        assert [c.text for c in a] == [c.text for c in b]

    def test_count_must_be_positive(self, resources):
        with pytest.raises(ValueError):
            generate_candidates(Expression("cat"), 0, rng_for(0, "t"), EdaParams(), resources)


class TestSemanticFilter:
    def test_identical_candidate_scores_one(self, resources):
        from app.tools.embedder import HashEmbedder

        weak = Expression("red circle")
        out = semantic_filter(weak, [Expression("red circle")], HashEmbedder(256), 1.0)
        assert out.candidates[0][1] == 1.0
        assert len(out.retained) == 1

    def test_hand_values(self):
        embed = _lookup_embedder({"w": [1, 0], "orth": [0, 1], "diag": [1, 1]})
        out = semantic_filter(Expression("w"), [Expression("orth"), Expression("diag")], embed, 0.8)
        thetas = [theta for _, theta in out.candidates]
        assert thetas[0] == pytest.approx(0.0)
        assert thetas[1] == pytest.approx(1 / np.sqrt(2))
        assert out.retained == ()

    def test_zero_norm_names_the_text(self):
        embed = _lookup_embedder({"w": [1, 0], "empty": [0, 0]})
        with pytest.raises(EmbeddingComputationError, match="empty"):
            semantic_filter(Expression("w"), [Expression("empty")], embed, 0.8)

    def test_retained_respects_threshold_and_order(self):
        gen = np.random.default_rng(0)
        for _ in range(1000):
            k = int(gen.integers(1, 6))
            table = {f"c{i}": gen.normal(size=4) for i in range(k)}
            table["w"] = gen.normal(size=4)
            threshold = float(gen.uniform(-1, 1))
            out = semantic_filter(
                Expression("w"), [Expression(f"c{i}") for i in range(k)], _lookup_embedder(table), threshold
            )
            assert all(theta >= threshold for _, theta in out.retained)
            assert all(-1.0 <= theta <= 1.0 for _, theta in out.candidates)
            expected = [e.text for e, theta in out.candidates if theta >= threshold]
            assert [e.text for e, _ in out.retained] == expected


class TestPick:
    def test_single_retained(self):
        x = Expression("x")
        assert pick_training_text(TextCandidateSet(Expression("w"), ((x, 0.9),), 0.8), rng_for(0, "t")) == x

    def test_empty_falls_back_to_weak_text(self):
        weak = Expression("w")
        s = TextCandidateSet(weak, ((Expression("x"), 0.1),), 0.8)
        assert pick_training_text(s, rng_for(0, "t")) == weak

    def test_choice_is_seed_deterministic(self):
        s = TextCandidateSet(Expression("w"), ((Expression("a"), 0.9), (Expression("b"), 0.95)), 0.8)
        picks = {pick_training_text(s, rng_for(5, "t")).text for _ in range(5)}
        assert len(picks) == 1
        assert picks <= {"a", "b"}


class TestLexicon:
    def test_bundled_mirror_pairs(self, resources):
        assert resources.mirror.mirror("left") == "right"
        assert resources.mirror.mirror("rightmost") == "leftmost"
        assert resources.mirror.mirror("cat") == "cat"

    def test_self_pair_is_rejected(self):
        with pytest.raises(ConfigurationError):
            PositionLexicon(frozenset({("left", "left")}))

    def test_word_in_two_pairs_is_rejected(self):
        with pytest.raises(ConfigurationError):
            PositionLexicon(frozenset({("left", "right"), ("left", "east")}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_mirror(tmp_path / "nope.tsv")

    def test_malformed_synonym_line(self, tmp_path):
        path = tmp_path / "syn.tsv"
        path.write_text("# comment\nguy man,dude\n")
        with pytest.raises(ConfigurationError, match=":2:"):
            load_synonyms(path)

    def test_vocabulary_covers_synonyms_and_mirrors(self, resources):
        vocab = resources.vocabulary()
        assert {"guy", "man", "left", "right"} <= vocab
