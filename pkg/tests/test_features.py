import numpy as np
import pytest
from hypothesis import given, strategies as st

from jitrisk.dataset import ValidationError
from jitrisk.features import (
    NUM_TOKEN,
    STR_TOKEN,
    Vocabulary,
    assemble_feature_matrix,
    build_vocabulary,
    extract_bag_of_tokens,
    tokenize_line,
)
from conftest import make_commit


class TestTokenizeLine:
    # golden realizations pinned for this tokenizer
    @pytest.mark.parametrize(
        "line,expected",
        [
            ("if (x == 1) {", ["if", "x", NUM_TOKEN]),
            ('msg = "error";', ["msg", STR_TOKEN]),
            ("", []),
            ("foo_bar(baz)", ["foo_bar", "baz"]),
            ("Foo foo", ["Foo", "foo"]),
            ("v = 0x1A;", ["v", NUM_TOKEN]),
            ("pi = 3.14", ["pi", NUM_TOKEN, NUM_TOKEN]),
            ("n = 1e5", ["n", NUM_TOKEN]),
            ("s = 'a; b='", ["s", STR_TOKEN]),
            ('quote = "she said \\"hi\\""', ["quote", STR_TOKEN]),
            ("a+b-c*d", ["a", "b", "c", "d"]),
            ("x2go", ["x2go"]),
        ],
    )
    def test_golden(self, line, expected):
        assert tokenize_line(line) == expected

    @given(st.text(max_size=80))
    def test_token_character_class(self, line):
        allowed = set("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_")
        for token in tokenize_line(line):
            if token in (NUM_TOKEN, STR_TOKEN):
                continue
            assert token and set(token) <= allowed
            assert "<" not in token and ">" not in token

    @given(st.text(max_size=80))
    def test_total_function(self, line):
        tokenize_line(line)  # never raises


class TestExtractBag:
    def test_counts_across_lines(self):
        c = make_commit(added=("a b", "a"))
        assert extract_bag_of_tokens(c) == {"a": 2, "b": 1}

    def test_empty_commit(self):
        c = make_commit(added=())
        assert extract_bag_of_tokens(c) == {}

    def test_added_and_removed_share_one_bag(self):
        c = make_commit(added=("x",), removed=("x",))
        assert extract_bag_of_tokens(c) == {"x": 2}


class TestBuildVocabulary:
    def test_lexicographic_indices(self):
        vocab = build_vocabulary([make_commit(added=("b a",))])
        assert vocab.token_to_index == {"a": 0, "b": 1}

    def test_frozen_on_train(self):
        vocab = build_vocabulary([make_commit(added=("a",))])
        assert "zee" not in vocab.token_to_index

    def test_empty_change_commits_give_empty_vocab(self):
        vocab = build_vocabulary([make_commit(added=()), make_commit("c2", 2, added=())])
        assert vocab.size == 0

    def test_empty_vocab_fails_at_fit(self):
        from jitrisk.forest import fit_forest

        commits = [make_commit("c1", 1, added=()), make_commit("c2", 2, added=())]
        vocab = build_vocabulary(commits)
        fm = assemble_feature_matrix(commits, vocab)
        with pytest.raises(ValidationError, match="vocabulary"):
            fit_forest(fm, [True, False], n_trees=2, seed=0)

    def test_min_count(self):
        commits = [make_commit(added=("rare common", "common"))]
        vocab = build_vocabulary(commits, min_count=2)
        assert vocab.token_to_index == {"common": 0}

    def test_no_commits_rejected(self):
        with pytest.raises(ValidationError):
            build_vocabulary([])

    def test_json_round_trip(self, tmp_path):
        vocab = build_vocabulary([make_commit(added=("b a c",))])
        path = tmp_path / "vocab.json"
        vocab.save(path)
        assert Vocabulary.load(path) == vocab


class TestAssembleMatrix:
    def test_counts_land_in_vocab_columns(self):
        vocab = Vocabulary({"a": 0, "b": 1})
        fm = assemble_feature_matrix([make_commit(added=("a a",))], vocab)
        assert fm.row_token_counts(0) == {0: 2.0}

    def test_oov_dropped_dense_intact(self):
        vocab = Vocabulary({"a": 0})
        c = make_commit(added=("zee zee",), metrics=[1.5] + [0.0] * 13)
        fm = assemble_feature_matrix([c], vocab)
        assert fm.row_token_counts(0) == {}
        assert fm.metrics[0, 0] == 1.5

    def test_zero_commits(self):
        fm = assemble_feature_matrix([], Vocabulary({"a": 0}))
        assert fm.n_rows == 0 and fm.feature_count == 15

    def test_metric_length_validated(self):
        from dataclasses import replace

        c = replace(make_commit(), metrics=(1.0, 2.0))
        with pytest.raises(ValidationError, match="metrics"):
            assemble_feature_matrix([c], Vocabulary({"a": 0}))

    def test_deterministic(self):
        commits = [make_commit(added=("a b b", "c")), make_commit("c2", 2, added=("b",))]
        vocab = build_vocabulary(commits)
        a = assemble_feature_matrix(commits, vocab)
        b = assemble_feature_matrix(commits, vocab)
        assert (a.token_counts != b.token_counts).nnz == 0
        assert np.array_equal(a.metrics, b.metrics)

    def test_sparse_count_sum_matches_in_vocab_occurrences(self):
        commits = [make_commit(added=("a b a", "c d")), make_commit("c2", 2, added=("a",))]
        vocab = Vocabulary({"a": 0, "b": 1})  # c, d out of vocabulary
        fm = assemble_feature_matrix(commits, vocab)
        assert fm.token_counts[0].sum() == 3  # a,a,b
        assert fm.token_counts[1].sum() == 1
