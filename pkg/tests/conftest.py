import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from jitrisk.dataset import CommitRecord, FileChange, METRIC_COUNT
from jitrisk.features import Vocabulary, matrix_from_rows


def make_commit(
    commit_id="c1",
    timestamp=1,
    added=("x = 1",),
    removed=(),
    path="a.py",
    metrics=None,
    label=False,
    files=None,
):
    if files is None:
        files = (
            FileChange(
                path,
                tuple((i, t) for i, t in enumerate(added)),
                tuple((i, t) for i, t in enumerate(removed)),
            ),
        )
    churn = sum(len(f.added_lines) + len(f.removed_lines) for f in files)
    return CommitRecord(
        commit_id=commit_id,
        timestamp=timestamp,
        files=files,
        churn_loc=churn,
        metrics=tuple(metrics) if metrics else (0.0,) * METRIC_COUNT,
        label=label,
    )


def make_matrix(token_rows, labels=None, vocab_size=None, metrics=None):
    """FeatureMatrix from per-row {column: count} dicts."""
    if vocab_size is None:
        vocab_size = 1 + max((c for row in token_rows for c in row), default=-1)
    vocab = Vocabulary({f"t{i:03d}": i for i in range(vocab_size)})
    n = len(token_rows)
    if metrics is None:
        metrics = np.zeros((n, METRIC_COUNT))
    fm = matrix_from_rows(token_rows, metrics, [f"r{i:03d}" for i in range(n)], vocab)
    if labels is None:
        return fm
    return fm, np.asarray(labels, dtype=bool)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
