"""Bag-of-tokens features over changed lines, plus the dense commit-metric
block, under a vocabulary frozen on training data.

Tokenization is deliberately simple and pinned by golden tests: string
literals collapse to <STR>, numeric fragments to <NUM>, everything else
splits on characters outside [A-Za-z0-9_]. No lowercasing, stemming or
lemmatization; case carries meaning in source code.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .dataset import METRIC_COUNT, CommitRecord, ValidationError

NUM_TOKEN = "<NUM>"
STR_TOKEN = "<STR>"

# Double- or single-quoted spans with backslash escapes; replaced first so
# punctuation inside literals never leaks tokens.
_STRING_LITERAL = re.compile(r'"(?:\\.|[^"\\])*"|\'(?:\\.|[^\'\\])*\'')
_WORD = re.compile(r"[A-Za-z0-9_]+")
# A fragment is numeric if it is a plain integer, hex, or exponent form.
# Decimal floats split at the dot and yield one <NUM> per side.
_NUMERIC = re.compile(r"0[xX][0-9a-fA-F]+|[0-9]+[eE][0-9]+|[0-9]+")


def tokenize_line(line: str) -> list[str]:
    """Split one source line into tokens; total function, never raises."""
    tokens: list[str] = []

    def words(segment: str) -> None:
        for m in _WORD.finditer(segment):
            frag = m.group()
            tokens.append(NUM_TOKEN if _NUMERIC.fullmatch(frag) else frag)

    pos = 0
    for m in _STRING_LITERAL.finditer(line):
        words(line[pos : m.start()])
        tokens.append(STR_TOKEN)
        pos = m.end()
    words(line[pos:])
    return tokens


def extract_bag_of_tokens(commit: CommitRecord) -> Counter[str]:
    """Token occurrence counts over all added and removed lines of all
    files; both sides share one undifferentiated bag."""
    bag: Counter[str] = Counter()
    for fc in commit.files:
        for _, text in fc.added_lines:
            bag.update(tokenize_line(text))
        for _, text in fc.removed_lines:
            bag.update(tokenize_line(text))
    return bag


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-column mapping frozen on training commits; indices are
    assigned in lexicographic token order for determinism."""

    token_to_index: dict[str, int]

    @property
    def size(self) -> int:
        return len(self.token_to_index)

    def to_json(self) -> dict[str, int]:
        return dict(self.token_to_index)

    @classmethod
    def from_json(cls, obj: Mapping[str, int]) -> "Vocabulary":
        vocab = {str(t): int(i) for t, i in obj.items()}
        if sorted(vocab.values()) != list(range(len(vocab))):
            raise ValidationError("vocabulary indices are not a bijection onto 0..size-1")
        return cls(vocab)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=0)

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def build_vocabulary(train: Sequence[CommitRecord], min_count: int = 1) -> Vocabulary:
    """Collect every token occurring at least min_count times in the
    training commits. Test-only tokens never enter the vocabulary."""
    if not train:
        raise ValidationError("cannot build a vocabulary from zero commits")
    totals: Counter[str] = Counter()
    for commit in train:
        totals.update(extract_bag_of_tokens(commit))
    kept = sorted(t for t, c in totals.items() if c >= min_count)
    return Vocabulary({t: i for i, t in enumerate(kept)})


@dataclass
class FeatureMatrix:
    """Sparse token counts plus the dense 14-metric block, one row per
    commit, tied to the vocabulary the tokens were indexed under."""

    token_counts: sp.csr_matrix
    metrics: np.ndarray
    row_ids: list[str]
    vocab: Vocabulary
    _combined: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    @property
    def n_rows(self) -> int:
        return self.token_counts.shape[0]

    @property
    def feature_count(self) -> int:
        return self.vocab.size + METRIC_COUNT

    def combined(self) -> sp.csr_matrix:
        """Token columns followed by the 14 metric columns, as one CSR."""
        if self._combined is None:
            dense_part = sp.csr_matrix(self.metrics)
            combined = sp.hstack([self.token_counts, dense_part], format="csr")
            combined.data = combined.data.astype(np.float64, copy=False)
            combined.eliminate_zeros()
            self._combined = combined
        return self._combined

    def row_token_counts(self, i: int) -> dict[int, float]:
        row = self.token_counts.getrow(i)
        return dict(zip(row.indices.tolist(), row.data.tolist()))


def assemble_feature_matrix(
    commits: Sequence[CommitRecord], vocab: Vocabulary
) -> FeatureMatrix:
    """Vectorize commits under a frozen vocabulary; out-of-vocabulary
    tokens are dropped, the metric block is copied as-is."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    metrics = np.empty((len(commits), METRIC_COUNT), dtype=np.float64)
    row_ids = []
    lookup = vocab.token_to_index
    for r, commit in enumerate(commits):
        if len(commit.metrics) != METRIC_COUNT:
            raise ValidationError(
                f"commit {commit.commit_id!r}: expected {METRIC_COUNT} metrics"
            )
        bag = extract_bag_of_tokens(commit)
        cols = sorted(lookup[t] for t in bag if t in lookup)
        # rebuild counts in column order
        by_col = {lookup[t]: float(c) for t, c in bag.items() if t in lookup}
        indices.extend(cols)
        data.extend(by_col[c] for c in cols)
        indptr.append(len(indices))
        metrics[r] = commit.metrics
        row_ids.append(commit.commit_id)
    token_counts = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64),
         np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int32)),
        shape=(len(commits), vocab.size),
    )
    return FeatureMatrix(token_counts, metrics, row_ids, vocab)


def matrix_from_rows(
    rows: Iterable[Mapping[int, float] | Sequence[float]],
    metrics: np.ndarray,
    row_ids: Sequence[str],
    vocab: Vocabulary,
) -> FeatureMatrix:
    """Assemble a FeatureMatrix from explicit per-row token counts; test
    and rebalance helper."""
    rows = list(rows)
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for row in rows:
        items = (
            sorted(row.items())
            if isinstance(row, Mapping)
            else [(i, v) for i, v in enumerate(row) if v != 0]
        )
        for col, val in items:
            indices.append(col)
            data.append(float(val))
        indptr.append(len(indices))
    token_counts = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64),
         np.asarray(indices, dtype=np.int32),
         np.asarray(indptr, dtype=np.int32)),
        shape=(len(rows), vocab.size),
    )
    return FeatureMatrix(
        token_counts,
        np.asarray(metrics, dtype=np.float64).reshape(len(rows), METRIC_COUNT),
        list(row_ids),
        vocab,
    )
