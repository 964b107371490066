"""Effort-normalized commit ranking and local surrogate line explanations.

Commits are ranked by defect density: predicted probability divided by
churn. For one commit, token importance comes from a weighted sparse
linear surrogate fitted on model scores of perturbed copies of the
commit (token presence masks), and each added line's risk score is the
sum of the importances of the tokens it contains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .dataset import METRIC_COUNT, CommitRecord, ValidationError
from .features import extract_bag_of_tokens, tokenize_line
from .forest import ForestModel, predict_proba_batch


@dataclass(frozen=True)
class SurrogateConfig:
    """num_samples: perturbations per commit; kernel_width: exponential
    kernel width over cosine distance; top_k_features: surrogate sparsity
    cap (None keeps every token present in the commit)."""

    num_samples: int = 5000
    kernel_width: float = 25.0
    top_k_features: int | None = None
    seed: int = 0
    occurrence_weighted: bool = False
    ridge_lambda: float = 1e-3

    def __post_init__(self) -> None:
        if self.num_samples < 10:
            raise ValidationError("num_samples must be at least 10")
        if self.kernel_width <= 0:
            raise ValidationError("kernel_width must be positive")
        if self.top_k_features is not None and self.top_k_features < 1:
            raise ValidationError("top_k_features must be positive when set")


@dataclass(frozen=True)
class RankedLine:
    file: str
    index: int
    score: float
    text: str


@dataclass(frozen=True)
class LineExplanation:
    commit_id: str
    token_scores: dict[str, float]
    ranked_lines: tuple[RankedLine, ...]


@dataclass(frozen=True)
class RankedCommit:
    commit_id: str
    probability: float
    churn_loc: int
    density: float
    label: bool | None = None


def defect_density(probability: float, churn_loc: int) -> float:
    """Probability per changed line; zero churn clamps the divisor to 1."""
    if not 0.0 <= probability <= 1.0:
        raise ValidationError("probability must be in [0, 1]")
    return probability / max(churn_loc, 1)


def perturb_samples(tokens, n: int, seed: int) -> np.ndarray:
    """n binary keep-masks over the commit's present tokens (a collection
    or its count). The first mask keeps everything; each other mask
    removes a uniform count z in [1, m] of tokens at uniformly chosen
    positions."""
    m = tokens if isinstance(tokens, int) else len(tokens)
    if m < 1:
        raise ValidationError("nothing to explain: commit has no tokens")
    if n < 1:
        raise ValidationError("need at least one sample")
    rng = np.random.default_rng(seed)
    masks = np.ones((n, m), dtype=np.uint8)
    for i in range(1, n):
        z = int(rng.integers(1, m + 1))
        drop = rng.choice(m, size=z, replace=False)
        masks[i, drop] = 0
    return masks


def kernel_weight(original, perturbed, width: float) -> float:
    """exp(-d^2 / width^2) with d = 1 - cosine similarity; an all-zero
    perturbed vector counts as orthogonal (d = 1)."""
    a = np.asarray(original, dtype=np.float64).ravel()
    b = np.asarray(perturbed, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError("vectors must share a dimension")
    na = math.sqrt(float(a @ a))
    nb = math.sqrt(float(b @ b))
    if na == 0.0 or nb == 0.0:
        d = 1.0
    else:
        d = 1.0 - float(a @ b) / (na * nb)
    return math.exp(-(d * d) / (width * width))


def _weighted_sse(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    """Residual SSE of a weighted least-squares fit with intercept."""
    A = np.hstack([np.ones((X.shape[0], 1)), X])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    resid = y - A @ coef
    return float(np.sum(w * resid * resid))


def k_lasso(
    masks: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    k: int | None = None,
    ridge_lambda: float = 1e-3,
) -> np.ndarray:
    """Sparse local surrogate: forward stepwise selection of k features
    under weighted least squares, then a weighted ridge fit (intercept
    unpenalized) on the selection. Unselected features get coefficient 0;
    constant targets yield all zeros."""
    X = np.asarray(masks, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("need at least 2 perturbation samples")
    if y.shape[0] != X.shape[0] or w.shape[0] != X.shape[0]:
        raise ValidationError("masks, targets and weights disagree")
    m = X.shape[1]
    coefs = np.zeros(m, dtype=np.float64)
    if float(y.max()) == float(y.min()):
        return coefs

    if k is None or k >= m:
        selected = list(range(m))
    else:
        selected = []
        remaining = list(range(m))
        for _ in range(k):
            best_f, best_sse = None, math.inf
            for f in remaining:
                sse = _weighted_sse(X[:, selected + [f]], y, w)
                if sse < best_sse:
                    best_f, best_sse = f, sse
            selected.append(best_f)
            remaining.remove(best_f)
        selected.sort()

    Xs = X[:, selected]
    wsum = float(w.sum())
    mu_x = (w @ Xs) / wsum
    mu_y = float(w @ y) / wsum
    Xc = Xs - mu_x
    yc = y - mu_y
    gram = (Xc * w[:, None]).T @ Xc
    gram[np.diag_indices_from(gram)] += ridge_lambda
    beta = np.linalg.solve(gram, (Xc * w[:, None]).T @ yc)
    coefs[selected] = beta
    return coefs


def _masked_rows(
    model: ForestModel,
    masks: np.ndarray,
    tokens: Sequence[str],
    counts: dict[str, int],
    metrics: Sequence[float],
) -> sp.csr_matrix:
    """Model-space rows for each mask: kept tokens keep their counts,
    dropped token columns go to zero, the metric block stays fixed."""
    vocab = model.vocabulary.token_to_index
    vocab_cols = np.array(
        [vocab.get(t, -1) for t in tokens], dtype=np.int64
    )
    known = vocab_cols >= 0
    n = masks.shape[0]
    rows_i, cols_i = np.nonzero(masks[:, known])
    tok_cols = vocab_cols[known][cols_i]
    tok_data = np.array(
        [counts[t] for t in np.asarray(tokens, dtype=object)[known]],
        dtype=np.float64,
    )[cols_i]

    v = model.vocabulary.size
    met = np.asarray(metrics, dtype=np.float64)
    met_rows = np.repeat(np.arange(n), METRIC_COUNT)
    met_cols = np.tile(np.arange(v, v + METRIC_COUNT), n)
    met_data = np.tile(met, n)

    return sp.csr_matrix(
        (
            np.concatenate([tok_data, met_data]),
            (np.concatenate([rows_i, met_rows]), np.concatenate([tok_cols, met_cols])),
        ),
        shape=(n, model.feature_count),
    )


def explain_commit(
    model: ForestModel, commit: CommitRecord, cfg: SurrogateConfig
) -> LineExplanation:
    """Token importance scores for one commit and the resulting ranking
    of its added lines (descending score, ties by file then index)."""
    if not any(fc.added_lines for fc in commit.files):
        raise ValidationError(f"commit {commit.commit_id!r} has no added lines")
    bag = extract_bag_of_tokens(commit)
    if not bag:
        raise ValidationError(f"nothing to explain: commit {commit.commit_id!r} is empty")
    tokens = sorted(bag)
    m = len(tokens)

    masks = perturb_samples(m, cfg.num_samples, cfg.seed)
    rows = _masked_rows(model, masks, tokens, bag, commit.metrics)
    targets = predict_proba_batch(model, rows)
    original = np.ones(m, dtype=np.float64)
    weights = np.array(
        [kernel_weight(original, masks[i], cfg.kernel_width) for i in range(masks.shape[0])]
    )
    coefs = k_lasso(masks, targets, weights, cfg.top_k_features, cfg.ridge_lambda)
    token_scores = {t: float(c) for t, c in zip(tokens, coefs)}
    return LineExplanation(
        commit_id=commit.commit_id,
        token_scores=token_scores,
        ranked_lines=score_lines(token_scores, commit, cfg.occurrence_weighted),
    )


def score_lines(
    token_scores: dict[str, float],
    commit: CommitRecord,
    occurrence_weighted: bool = False,
) -> tuple[RankedLine, ...]:
    """Rank a commit's added lines by the summed importance of the tokens
    each line contains (distinct tokens by default). Descending score,
    ties by (file, index)."""
    ranked = []
    for path, idx, text in commit.added_lines():
        line_tokens = tokenize_line(text)
        if not occurrence_weighted:
            line_tokens = sorted(set(line_tokens))
        score = sum(token_scores.get(t, 0.0) for t in line_tokens)
        ranked.append(RankedLine(path, idx, float(score), text))
    ranked.sort(key=lambda ln: (-ln.score, ln.file, ln.index))
    return tuple(ranked)


def rank_commits(
    model: ForestModel, commits: Sequence[CommitRecord]
) -> list[RankedCommit]:
    """Density-descending commit ranking; ties broken by commit_id."""
    from .features import assemble_feature_matrix

    if not commits:
        return []
    fm = assemble_feature_matrix(commits, model.vocabulary)
    probs = predict_proba_batch(model, fm)
    ranked = [
        RankedCommit(
            commit_id=c.commit_id,
            probability=float(p),
            churn_loc=c.churn_loc,
            density=defect_density(float(p), c.churn_loc),
            label=c.label,
        )
        for c, p in zip(commits, probs)
    ]
    ranked.sort(key=lambda r: (-r.density, r.commit_id))
    return ranked
