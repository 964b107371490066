"""From-scratch random forest over sparse commit features.

Trees are grown CART-style with Gini gain, sqrt-of-feature-count
candidate sampling per node and no depth cap; stopping is purity,
non-positive gain, or fewer than two rows. The hot work (split search,
partition, prediction) lives in jitrisk._kernels; this module owns the
deterministic recipe: per-tree RNG seeded as seed XOR tree index, the
bootstrap draw first, then one candidate draw per node in depth-first
left-to-right order, so results never depend on thread schedule.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .dataset import METRIC_COUNT, ValidationError
from .features import FeatureMatrix, Vocabulary

if TYPE_CHECKING:
    from .rebalance import SmoteConfig

MAGIC = "jitrisk-forest"
FORMAT_VERSION = 1
DEFAULT_TREES = 300


class TreeNode:
    """Read-only view onto one node of a flat-array tree."""

    __slots__ = ("_tree", "_index")

    def __init__(self, tree: "Tree", index: int):
        self._tree = tree
        self._index = index

    @property
    def is_leaf(self) -> bool:
        return self._tree.feature[self._index] < 0

    @property
    def feature_index(self) -> int:
        return int(self._tree.feature[self._index])

    @property
    def threshold(self) -> float:
        return float(self._tree.threshold[self._index])

    @property
    def left(self) -> "TreeNode":
        return TreeNode(self._tree, int(self._tree.left[self._index]))

    @property
    def right(self) -> "TreeNode":
        return TreeNode(self._tree, int(self._tree.right[self._index]))

    @property
    def class_counts(self) -> tuple[int, int]:
        """(clean, defective) rows that reached this node."""
        return (
            int(self._tree.count_clean[self._index]),
            int(self._tree.count_defective[self._index]),
        )


@dataclass
class Tree:
    """One fitted decision tree as parallel node arrays (node 0 = root;
    feature == -1 marks a leaf)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count_clean: np.ndarray
    count_defective: np.ndarray

    @property
    def root(self) -> TreeNode:
        return TreeNode(self, 0)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass
class ForestModel:
    trees: list[Tree]
    vocabulary: Vocabulary
    feature_count: int
    seed: int
    smote: "SmoteConfig | None" = None
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _csc_parts(X: sp.spmatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    csc = X.tocsc()
    csc.eliminate_zeros()
    return (
        np.asarray(csc.indptr, dtype=np.int64),
        np.asarray(csc.indices, dtype=np.int64),
        np.asarray(csc.data, dtype=np.float64),
    )


def _grow_tree(
    indptr: np.ndarray,
    indices: np.ndarray,
    data: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_features: int,
    n_features: int,
) -> Tree:
    kern = _kernels.active()
    n = y.shape[0]
    samples = np.arange(n, dtype=np.int64)
    pos = np.arange(n, dtype=np.int64)

    feats: list[int] = []
    thresholds: list[float] = []
    lefts: list[int] = []
    rights: list[int] = []
    c_clean: list[int] = []
    c_def: list[int] = []

    # (start, end, n_pos, parent, as_right); right child pushed first so the
    # left subtree is grown first and RNG consumption follows preorder
    stack: list[tuple[int, int, int, int, bool]] = [(0, n, int(y.sum()), -1, False)]
    while stack:
        start, end, n_pos, parent, as_right = stack.pop()
        node_id = len(feats)
        if parent >= 0:
            if as_right:
                rights[parent] = node_id
            else:
                lefts[parent] = node_id
        n_node = end - start
        feats.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        c_clean.append(n_node - n_pos)
        c_def.append(n_pos)
        if n_node < 2 or n_pos == 0 or n_pos == n_node:
            continue
        candidates = np.ascontiguousarray(
            rng.choice(n_features, size=max_features, replace=False), dtype=np.int64
        )
        f, thr, gain = kern.best_split(
            indptr, indices, data, y, pos, start, end, n_pos, candidates
        )
        if f < 0:
            continue  # no candidate with positive gain: leaf
        n_left, pos_left = kern.partition(
            indptr, indices, data, y, samples, pos, start, end, f, thr
        )
        feats[node_id] = f
        thresholds[node_id] = thr
        stack.append((start + n_left, end, n_pos - pos_left, node_id, True))
        stack.append((start, start + n_left, pos_left, node_id, False))

    return Tree(
        feature=np.asarray(feats, dtype=np.int64),
        threshold=np.asarray(thresholds, dtype=np.float64),
        left=np.asarray(lefts, dtype=np.int64),
        right=np.asarray(rights, dtype=np.int64),
        count_clean=np.asarray(c_clean, dtype=np.int64),
        count_defective=np.asarray(c_def, dtype=np.int64),
    )


def _as_csr(X) -> sp.csr_matrix:
    if isinstance(X, FeatureMatrix):
        return X.combined()
    if sp.issparse(X):
        return X.tocsr()
    return sp.csr_matrix(np.asarray(X, dtype=np.float64))


def fit_tree(X, y, rng: np.random.Generator, max_features: int | None = None) -> Tree:
    """Grow a single tree on the given rows (no bootstrap)."""
    Xc = _as_csr(X)
    y8 = np.ascontiguousarray(np.asarray(y, dtype=bool), dtype=np.uint8)
    if y8.shape[0] != Xc.shape[0] or y8.shape[0] < 1:
        raise ValidationError("labels and rows disagree or are empty")
    n_features = Xc.shape[1]
    if max_features is None:
        max_features = math.ceil(math.sqrt(n_features))
    max_features = min(max_features, n_features)
    indptr, indices, data = _csc_parts(Xc)
    return _grow_tree(indptr, indices, data, y8, rng, max_features, n_features)


def fit_forest(
    matrix: FeatureMatrix,
    labels,
    n_trees: int = DEFAULT_TREES,
    seed: int = 0,
    threads: int = 1,
    max_features: int | None = None,
) -> ForestModel:
    """Fit the forest: each tree sees a same-size bootstrap sample drawn
    from its own RNG (seed XOR tree index), so any thread schedule yields
    the same model."""
    if seed < 0:
        raise ValidationError("seed must be non-negative")
    if matrix.vocab.size == 0:
        raise ValidationError("cannot fit on an empty vocabulary")
    X = matrix.combined()
    y = np.asarray(labels, dtype=bool)
    if y.shape[0] != X.shape[0]:
        raise ValidationError("labels and rows disagree")
    if y.all() or not y.any():
        raise ValidationError("training data contains a single class")
    y8 = np.ascontiguousarray(y, dtype=np.uint8)
    n = X.shape[0]
    n_features = X.shape[1]
    mf = max_features
    if mf is None:
        mf = math.ceil(math.sqrt(n_features))
    mf = min(mf, n_features)

    def build(t: int) -> Tree:
        rng = np.random.default_rng(seed ^ t)
        idx = rng.integers(0, n, size=n)
        boot = X[idx]
        indptr, indices, data = _csc_parts(boot)
        return _grow_tree(indptr, indices, data, y8[idx], rng, mf, n_features)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(build, range(n_trees)))
    else:
        trees = [build(t) for t in range(n_trees)]
    return ForestModel(
        trees=trees,
        vocabulary=matrix.vocab,
        feature_count=n_features,
        seed=seed,
    )


def _packed(model: ForestModel) -> tuple:
    if model._packed is None:
        sizes = [t.n_nodes for t in model.trees]
        offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        feature = np.concatenate([t.feature for t in model.trees])
        threshold = np.concatenate([t.threshold for t in model.trees])
        left = np.concatenate(
            [np.where(t.left >= 0, t.left + off, -1) for t, off in zip(model.trees, offsets)]
        )
        right = np.concatenate(
            [np.where(t.right >= 0, t.right + off, -1) for t, off in zip(model.trees, offsets)]
        )
        total = np.concatenate(
            [t.count_clean + t.count_defective for t in model.trees]
        )
        defect = np.concatenate([t.count_defective for t in model.trees])
        frac = defect / total
        model._packed = (
            offsets,
            np.ascontiguousarray(feature),
            np.ascontiguousarray(threshold),
            np.ascontiguousarray(left),
            np.ascontiguousarray(right),
            np.ascontiguousarray(frac),
        )
    return model._packed


def predict_proba_batch(model: ForestModel, X) -> np.ndarray:
    """Defective-class probability (mean leaf fraction over trees) for
    each row of a CSR / FeatureMatrix batch."""
    Xc = _as_csr(X)
    if Xc.shape[1] != model.feature_count:
        raise ValidationError(
            f"row dimension {Xc.shape[1]} != model feature count {model.feature_count}"
        )
    offsets, feature, threshold, left, right, frac = _packed(model)
    kern = _kernels.active()
    return kern.predict_rows(
        offsets, feature, threshold, left, right, frac,
        np.asarray(Xc.indptr, dtype=np.int64),
        np.asarray(Xc.indices, dtype=np.int64),
        np.asarray(Xc.data, dtype=np.float64),
        Xc.shape[0], model.feature_count,
    )


def predict_proba(model: ForestModel, row) -> float:
    if sp.issparse(row):
        mat = row.tocsr()
    else:
        arr = np.asarray(row, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError("expected a single row")
        mat = sp.csr_matrix(arr.reshape(1, -1))
    return float(predict_proba_batch(model, mat)[0])


def classify(model: ForestModel, row, threshold: float = 0.5) -> bool:
    return predict_proba(model, row) >= threshold


def _tree_to_json(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "count_clean": tree.count_clean.tolist(),
        "count_defective": tree.count_defective.tolist(),
    }


def _tree_from_json(obj: dict) -> Tree:
    tree = Tree(
        feature=np.asarray(obj["feature"], dtype=np.int64),
        threshold=np.asarray(obj["threshold"], dtype=np.float64),
        left=np.asarray(obj["left"], dtype=np.int64),
        right=np.asarray(obj["right"], dtype=np.int64),
        count_clean=np.asarray(obj["count_clean"], dtype=np.int64),
        count_defective=np.asarray(obj["count_defective"], dtype=np.int64),
    )
    return tree


def validate_tree(tree: Tree, feature_count: int | None = None) -> None:
    """Structural checks; the prediction kernel indexes without bounds
    checks, so corrupt node arrays must be rejected up front."""
    n = tree.feature.shape[0]
    arrays = (tree.threshold, tree.left, tree.right, tree.count_clean, tree.count_defective)
    if n < 1 or any(a.shape[0] != n for a in arrays):
        raise ValidationError("tree node arrays are empty or of unequal length")
    internal = tree.feature >= 0
    children = np.concatenate([tree.left[internal], tree.right[internal]])
    if internal.any() and (children.min() < 0 or children.max() >= n):
        raise ValidationError("tree child index out of range")
    if ((tree.left[~internal] != -1) | (tree.right[~internal] != -1)).any():
        raise ValidationError("leaf nodes must not have children")
    if ((tree.count_clean + tree.count_defective) < 1).any():
        raise ValidationError("every node needs at least one training row")
    if feature_count is not None and internal.any():
        if tree.feature[internal].max() >= feature_count:
            raise ValidationError("split feature index out of range")


def save_model(model: ForestModel, path: str | Path) -> None:
    from dataclasses import asdict

    doc = {
        "magic": MAGIC,
        "format_version": FORMAT_VERSION,
        "seed": model.seed,
        "feature_count": model.feature_count,
        "smote": asdict(model.smote) if model.smote is not None else None,
        "vocabulary": model.vocabulary.to_json(),
        "trees": [_tree_to_json(t) for t in model.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: str | Path) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("magic") != MAGIC:
        raise ValidationError(f"{path}: not a jitrisk forest model file")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            f"{path}: model format version {doc.get('format_version')} "
            f"unsupported (expected {FORMAT_VERSION})"
        )
    vocab = Vocabulary.from_json(doc["vocabulary"])
    feature_count = int(doc["feature_count"])
    if feature_count != vocab.size + METRIC_COUNT:
        raise ValidationError(f"{path}: feature count and vocabulary disagree")
    smote = None
    if doc.get("smote") is not None:
        from .rebalance import SmoteConfig

        smote = SmoteConfig(**doc["smote"])
    trees = [_tree_from_json(t) for t in doc["trees"]]
    for tree in trees:
        validate_tree(tree, feature_count)
    return ForestModel(
        trees=trees,
        vocabulary=vocab,
        feature_count=feature_count,
        seed=int(doc["seed"]),
        smote=smote,
    )
