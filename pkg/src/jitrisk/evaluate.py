"""Commit-level, effort-aware and line-level evaluation measures, plus
the paired statistical tests (Wilcoxon signed-rank, Cliff's delta).

Effort budgets are strict: the commit (or line) whose churn crosses the
budget is excluded. Recall targets round up (finding 20% of 3 defects
means finding 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .dataset import LineKey, ValidationError, ceil_fraction
from .explain import RankedCommit, defect_density


def auc(scores, labels) -> float:
    """Area under the ROC curve, Mann-Whitney style: the probability that
    a random positive outscores a random negative, ties counting half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise ValidationError("scores and labels disagree")
    n_pos = int(y.sum())
    n_neg = int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC requires both classes")
    ranks = rankdata(s)  # average ranks resolve ties exactly
    u = float(ranks[y].sum()) - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def distance_to_heaven(recall: float, far: float) -> float:
    """Root mean square of (1 - recall) and FAR."""
    return math.sqrt(((1.0 - recall) ** 2 + far**2) / 2.0)


def confusion_metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    """Precision, recall, F1, false alarm rate and distance-to-heaven at
    the given probability threshold (predicted positive on >=). Empty
    denominators fall back to 0 by convention."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    tn = int(np.sum(~pred & ~y))
    fn = int(np.sum(~pred & y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    far = fp / (fp + tn) if fp + tn else 0.0
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1_score(precision, recall),
        "far": far,
        "d2h": distance_to_heaven(recall, far),
    }


def _require_labels(ranking: Sequence[RankedCommit]) -> None:
    if any(r.label is None for r in ranking):
        raise ValidationError("ranking entries need labels for this metric")


def pci_at_effort(
    ranking: Sequence[RankedCommit], loc_budget_fraction: float = 0.2
) -> float:
    """Fraction of actual defect-introducing commits inspected within the
    churn budget; the commit that crosses the budget is excluded."""
    if not ranking:
        raise ValidationError("empty ranking")
    _require_labels(ranking)
    total_defects = sum(1 for r in ranking if r.label)
    if total_defects == 0:
        raise ValidationError("no defect-introducing commits in the ranking")
    budget = loc_budget_fraction * sum(r.churn_loc for r in ranking)
    inspected = 0
    found = 0
    for r in ranking:
        if inspected + r.churn_loc > budget:
            break
        inspected += r.churn_loc
        if r.label:
            found += 1
    return found / total_defects


def effort_at_recall(
    ranking: Sequence[RankedCommit], recall_target: float = 0.2
) -> float:
    """Churn fraction spent walking the ranking until the target share of
    defect commits has been found (the finding commit included)."""
    _require_labels(ranking)
    total_defects = sum(1 for r in ranking if r.label)
    if total_defects == 0:
        raise ValidationError("no defect-introducing commits in the ranking")
    total_churn = sum(r.churn_loc for r in ranking)
    if total_churn == 0:
        return 0.0
    need = ceil_fraction(total_defects, recall_target)
    spent = 0
    found = 0
    for r in ranking:
        spent += r.churn_loc
        if r.label:
            found += 1
            if found >= need:
                return spent / total_churn
    return 1.0


def _lift_area(order: Sequence[RankedCommit]) -> float:
    """Area under the churn-based cumulative lift curve of an ordering."""
    total_churn = sum(r.churn_loc for r in order)
    total_defects = sum(1 for r in order if r.label)
    xs = [0.0]
    ys = [0.0]
    cum_churn = 0
    cum_def = 0
    for r in order:
        cum_churn += r.churn_loc
        cum_def += 1 if r.label else 0
        xs.append(cum_churn / total_churn if total_churn else 0.0)
        ys.append(cum_def / total_defects)
    return float(np.trapezoid(ys, xs))


def popt(ranking: Sequence[RankedCommit]) -> float:
    """Normalized area between the model's effort-based lift curve and
    the optimal/worst curves (ranked by actual defect density descending
    resp. ascending, ties by commit_id)."""
    if not ranking:
        raise ValidationError("empty ranking")
    _require_labels(ranking)
    if not any(r.label for r in ranking):
        raise ValidationError("no defect-introducing commits in the ranking")

    def actual_density(r: RankedCommit) -> float:
        return defect_density(1.0 if r.label else 0.0, r.churn_loc)

    optimal = sorted(ranking, key=lambda r: (-actual_density(r), r.commit_id))
    worst = sorted(ranking, key=lambda r: (actual_density(r), r.commit_id))
    area_opt = _lift_area(optimal)
    area_worst = _lift_area(worst)
    area_model = _lift_area(ranking)
    denom = area_opt - area_worst
    if denom == 0.0:
        return 1.0
    return 1.0 - (area_opt - area_model) / denom


@dataclass(frozen=True)
class LineMetrics:
    top10_accuracy: float
    recall_at_20_loc: float
    effort_at_20_recall: float
    ifa: int


def line_metrics(
    ranking,
    truth: frozenset[LineKey] | set[LineKey],
    cap_top10_denominator: bool = False,
) -> LineMetrics:
    """Line-level measures for one commit's ranked added lines; ranking
    is a LineExplanation or a sequence of (file, index) keys.

    top10: share of actual defective lines inside the top-10 (denominator
    |truth| by default; min(10, |truth|) behind the flag). recall20 counts
    hits in the top ceil(0.2 * L) lines. effort20 is the 1-based rank
    position, as a fraction of L, where ceil(0.2 * |truth|) defective
    lines have been seen. ifa counts clean lines before the first hit.
    """
    if hasattr(ranking, "ranked_lines"):
        ranked_keys: Sequence[LineKey] = [
            (ln.file, ln.index) for ln in ranking.ranked_lines
        ]
    else:
        ranked_keys = list(ranking)
    if not truth:
        raise ValidationError("line metrics need at least one defective line")
    truth = frozenset(truth)
    if not truth <= set(ranked_keys):
        raise ValidationError("defective lines missing from the ranking")
    n = len(ranked_keys)

    top10_hits = sum(1 for key in ranked_keys[:10] if key in truth)
    denom = min(10, len(truth)) if cap_top10_denominator else len(truth)
    top10 = top10_hits / denom

    budget = ceil_fraction(n, 0.2)
    recall20 = sum(1 for key in ranked_keys[:budget] if key in truth) / len(truth)

    need = ceil_fraction(len(truth), 0.2)
    seen = 0
    effort_pos = n
    for i, key in enumerate(ranked_keys):
        if key in truth:
            seen += 1
            if seen >= need:
                effort_pos = i + 1
                break
    effort20 = effort_pos / n

    ifa = 0
    for key in ranked_keys:
        if key in truth:
            break
        ifa += 1
    return LineMetrics(top10, recall20, effort20, ifa)


def wilcoxon_signed_rank(x, y) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired samples. Exact
    (enumeration over sign assignments, ties carrying average ranks) up
    to n = 25 nonzero differences; normal approximation with tie
    correction beyond. All-zero differences give p = 1."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError("paired samples must have equal length")
    d = a - b
    d = d[d != 0.0]
    n = d.shape[0]
    if n == 0:
        return 1.0
    if n < 5:
        raise ValidationError("need at least 5 nonzero differences")
    ranks = rankdata(np.abs(d))
    t_pos = float(ranks[d > 0].sum())

    if n <= 25:
        # exact distribution over all 2^n sign assignments via subset-sum
        # counting on doubled (integer) ranks
        doubled = np.rint(2 * ranks).astype(np.int64)
        total = int(doubled.sum())
        counts = np.zeros(total + 1, dtype=np.int64)
        counts[0] = 1
        for r in doubled:
            counts[r:] += counts[: total + 1 - r]
        mu2 = total / 2.0
        dev = abs(2 * t_pos - mu2)
        sums = np.arange(total + 1, dtype=np.float64)
        p = counts[np.abs(sums - mu2) >= dev - 1e-9].sum() / float(2**n)
        return min(float(p), 1.0)

    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts).sum())) / 48.0
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if sigma2 <= 0:
        return 1.0
    z = (t_pos - mu) / math.sqrt(sigma2)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


CLIFF_LABELS = ((0.147, "negligible"), (0.33, "small"), (0.474, "medium"))


def cliffs_delta(x, y) -> tuple[float, str]:
    """Cliff's delta (#{x>y} - #{x<y}) / (|x||y|) with the conventional
    magnitude label on |delta|."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValidationError("both samples must be non-empty")
    bs = np.sort(b)
    greater = int(np.searchsorted(bs, a, side="left").sum())
    less = int((b.size - np.searchsorted(bs, a, side="right")).sum())
    delta = (greater - less) / (a.size * b.size)
    mag = abs(delta)
    for cut, label in CLIFF_LABELS:
        if mag < cut:
            return delta, label
    return delta, "large"


@dataclass
class EvalReport:
    commit_metrics: dict[str, float]
    line_values: dict[str, list[float]] | None = None
    line_medians: dict[str, float] | None = None

    def to_json(self) -> dict:
        doc: dict = {"commit_metrics": self.commit_metrics}
        if self.line_medians is not None:
            doc["line_medians"] = self.line_medians
            doc["line_values"] = self.line_values
        return doc

    def to_csv_rows(self) -> list[tuple[str, float]]:
        rows = [(name, value) for name, value in sorted(self.commit_metrics.items())]
        if self.line_medians is not None:
            rows.extend(
                (f"line_{name}_median", value)
                for name, value in sorted(self.line_medians.items())
            )
        return rows


def summarize_lines(per_commit: Sequence[LineMetrics]) -> tuple[dict, dict]:
    """Per-commit value lists and their medians, keyed by metric name."""
    values = {
        "top10_accuracy": [m.top10_accuracy for m in per_commit],
        "recall_at_20_loc": [m.recall_at_20_loc for m in per_commit],
        "effort_at_20_recall": [m.effort_at_20_recall for m in per_commit],
        "ifa": [float(m.ifa) for m in per_commit],
    }
    medians = {k: float(np.median(v)) for k, v in values.items() if v}
    return values, medians
