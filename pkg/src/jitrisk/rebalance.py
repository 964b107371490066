"""Class rebalancing: SMOTE over the combined token+metric vector, with
the neighbor count k tuned by a small differential-evolution loop whose
fitness is validation AUC of a surrogate forest.

SMOTE here synthesizes minority (defective) rows only, by default up to
parity with the majority class; an optional majority undersample
fraction is exposed but off by default. Interpolation happens in raw
feature units, matching the rest of the pipeline (no scaling anywhere).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .dataset import ValidationError, ceil_fraction
from .features import FeatureMatrix

log = logging.getLogger(__name__)

K_MIN, K_MAX = 1, 20


@dataclass(frozen=True)
class SmoteConfig:
    """k: neighbor count; target_ratio: minority/majority ratio after
    oversampling; minkowski_power: distance exponent r; majority_fraction:
    optional undersample of the majority class (1.0 keeps all)."""

    k_neighbors: int = 5
    target_ratio: float = 1.0
    minkowski_power: float = 2.0
    majority_fraction: float = 1.0

    def __post_init__(self) -> None:
        if not K_MIN <= self.k_neighbors <= K_MAX:
            raise ValidationError(f"k_neighbors must be in [{K_MIN}, {K_MAX}]")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValidationError("target_ratio must be in (0, 1]")
        if self.minkowski_power < 1.0:
            raise ValidationError("minkowski_power must be >= 1")
        if not 0.0 < self.majority_fraction <= 1.0:
            raise ValidationError("majority_fraction must be in (0, 1]")

    def synthetics_per_minority_row(self, n_minority: int, n_majority: int) -> int:
        """The derived per-sample synthetic count m for this imbalance."""
        deficit = max(int(round(self.target_ratio * n_majority)) - n_minority, 0)
        return math.ceil(deficit / n_minority) if n_minority else 0


@dataclass(frozen=True)
class DEConfig:
    population_size: int = 10
    mutation_factor: float = 0.7
    crossover_probability: float = 0.3
    generations: int = 10
    bounds: tuple[int, int] = (K_MIN, K_MAX)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.mutation_factor < 2.0:
            raise ValidationError("mutation_factor must be in (0, 2)")
        if not 0.0 <= self.crossover_probability <= 1.0:
            raise ValidationError("crossover_probability must be in [0, 1]")
        if self.population_size < 4:
            raise ValidationError("population_size must be at least 4 for DE/rand/1")
        if self.generations < 0:
            raise ValidationError("generations must be non-negative")


def minkowski_distance(a, b, r: float = 2.0) -> float:
    """(sum |a_i - b_i|^r)^(1/r); raises on dimension mismatch."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if r < 1.0:
        raise ValidationError("Minkowski power must be >= 1")
    return float(np.sum(np.abs(a - b) ** r) ** (1.0 / r))


def _minority_neighbors(minority: np.ndarray, k: int, r: float) -> np.ndarray:
    """k nearest minority neighbors of each minority row (self excluded),
    ties broken by row index."""
    dist = cdist(minority, minority, metric="minkowski", p=r)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k]


def smote_oversample(
    matrix: FeatureMatrix, labels, cfg: SmoteConfig, seed: int
) -> tuple[FeatureMatrix, np.ndarray]:
    """Oversample the defective class with SMOTE interpolation.

    Synthetic rows are x + gap * (neighbor - x) with gap ~ Uniform(0, 1)
    and the neighbor drawn among the k nearest minority rows under the
    Minkowski-r metric. RNG draw order (after seeding): majority
    undersample subset, then base row indices, then neighbor slots, then
    gaps — tests replay this order to derive expected rows.
    """
    y = np.asarray(labels, dtype=bool)
    if y.shape[0] != matrix.n_rows:
        raise ValidationError("labels and rows disagree")
    rng = np.random.default_rng(seed)

    minority_idx = np.flatnonzero(y)
    majority_idx = np.flatnonzero(~y)
    n_min, n_maj = minority_idx.shape[0], majority_idx.shape[0]

    if cfg.majority_fraction < 1.0 and n_maj > 0:
        keep = int(round(cfg.majority_fraction * n_maj))
        kept = np.sort(rng.choice(n_maj, size=keep, replace=False))
        majority_idx = majority_idx[kept]
        n_maj = majority_idx.shape[0]
        retained = np.sort(np.concatenate([minority_idx, majority_idx]))
    else:
        retained = np.arange(matrix.n_rows)

    deficit = int(round(cfg.target_ratio * n_maj)) - n_min
    if deficit <= 0:
        if cfg.majority_fraction >= 1.0:
            return matrix, y
        base = _take_rows(matrix, retained)
        return base, y[retained]
    if n_min < 2:
        raise ValidationError("SMOTE needs at least 2 minority rows")

    k = cfg.k_neighbors
    if k >= n_min:
        log.warning("k=%d >= minority count %d; clamping to %d", k, n_min, n_min - 1)
        k = n_min - 1

    X = matrix.combined()
    minority = X[minority_idx].toarray().astype(np.float64, copy=False)
    neighbors = _minority_neighbors(minority, k, cfg.minkowski_power)

    bases = rng.integers(0, n_min, size=deficit)
    slots = rng.integers(0, k, size=deficit)
    gaps = rng.random(deficit)

    synth = np.empty((deficit, X.shape[1]), dtype=np.float64)
    for i in range(deficit):
        base = minority[bases[i]]
        nb = minority[neighbors[bases[i], slots[i]]]
        synth[i] = base + gaps[i] * (nb - base)

    vocab_size = matrix.vocab.size
    synth_tokens = sp.csr_matrix(synth[:, :vocab_size])
    synth_metrics = synth[:, vocab_size:]

    base_fm = matrix if cfg.majority_fraction >= 1.0 else _take_rows(matrix, retained)
    new_tokens = sp.vstack([base_fm.token_counts, synth_tokens], format="csr")
    new_metrics = np.vstack([base_fm.metrics, synth_metrics])
    new_ids = base_fm.row_ids + [f"smote-{i:06d}" for i in range(deficit)]
    new_y = np.concatenate([y[retained], np.ones(deficit, dtype=bool)])
    return FeatureMatrix(new_tokens, new_metrics, new_ids, matrix.vocab), new_y


def _take_rows(matrix: FeatureMatrix, idx: np.ndarray) -> FeatureMatrix:
    return FeatureMatrix(
        matrix.token_counts[idx],
        matrix.metrics[idx],
        [matrix.row_ids[i] for i in idx],
        matrix.vocab,
    )


@dataclass(frozen=True)
class DEEvaluation:
    generation: int
    candidate: float
    k: int
    fitness: float


@dataclass(frozen=True)
class DEResult:
    best_k: int
    best_fitness: float
    trace: tuple[DEEvaluation, ...]


def de_optimize(fitness: Callable[[int], float], cfg: DEConfig) -> DEResult:
    """DE/rand/1/bin over one real-valued variable, clipped to bounds and
    rounded to integer at evaluation time. Fitness values per integer are
    memoized; the result is the argmax over everything evaluated, first
    evaluation winning ties. A trial replaces its target on fitness >=."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.bounds
    cache: dict[int, float] = {}
    trace: list[DEEvaluation] = []
    best_k = None
    best_fit = -math.inf

    def evaluate(x: float, generation: int) -> float:
        nonlocal best_k, best_fit
        k = int(round(min(max(x, lo), hi)))
        k = min(max(k, lo), hi)
        if k not in cache:
            cache[k] = float(fitness(k))
        value = cache[k]
        trace.append(DEEvaluation(generation, float(x), k, value))
        if value > best_fit:
            best_k, best_fit = k, value
        return value

    population = rng.uniform(lo, hi, size=cfg.population_size)
    scores = np.array([evaluate(x, 0) for x in population])

    for gen in range(1, cfg.generations + 1):
        for i in range(cfg.population_size):
            pool = [j for j in range(cfg.population_size) if j != i]
            a, b, c = rng.choice(len(pool), size=3, replace=False)
            mutant = population[pool[a]] + cfg.mutation_factor * (
                population[pool[b]] - population[pool[c]]
            )
            # binomial crossover degenerates with one search dimension:
            # the forced j_rand coordinate always takes the mutant, so
            # crossover_probability has no effect here
            trial = float(min(max(mutant, lo), hi))
            trial_fit = evaluate(trial, gen)
            if trial_fit >= scores[i]:
                population[i] = trial
                scores[i] = trial_fit

    assert best_k is not None
    return DEResult(best_k=best_k, best_fitness=best_fit, trace=tuple(trace))


@dataclass(frozen=True, eq=False)
class TuneResult:
    matrix: FeatureMatrix
    labels: np.ndarray
    config: SmoteConfig
    report: dict


def tune_and_rebalance(
    matrix: FeatureMatrix,
    labels,
    de: DEConfig,
    seed: int,
    smote: SmoteConfig = SmoteConfig(),
    surrogate_trees: int = 50,
    threads: int = 1,
) -> TuneResult:
    """Pick k by DE on validation AUC, then SMOTE the full training set
    with the winner. Rows must arrive in time order; the inner 80/20
    train/validation split is chronological, falling back to a seeded
    stratified split when a slice would miss a class."""
    y = np.asarray(labels, dtype=bool)
    n = y.shape[0]
    if not (y.any() and (~y).any()):
        raise ValidationError("tuning needs both classes in the training set")

    cut = ceil_fraction(n, 0.8)
    inner_idx = np.arange(cut)
    val_idx = np.arange(cut, n)
    split_kind = "time"
    if cut >= n or not _both_classes(y[inner_idx]) or not _both_classes(y[val_idx]):
        log.warning("time-ordered 80/20 leaves a one-class slice; "
                    "falling back to a stratified random split")
        split_kind = "stratified"
        rng = np.random.default_rng(seed)
        inner_parts, val_parts = [], []
        for cls in (False, True):
            cls_idx = np.flatnonzero(y == cls)
            perm = rng.permutation(cls_idx)
            c = ceil_fraction(perm.shape[0], 0.8)
            inner_parts.append(perm[:c])
            val_parts.append(perm[c:])
        inner_idx = np.sort(np.concatenate(inner_parts))
        val_idx = np.sort(np.concatenate(val_parts))

    inner_fm = _take_rows(matrix, inner_idx)
    val_fm = _take_rows(matrix, val_idx)
    y_inner, y_val = y[inner_idx], y[val_idx]

    fitness = _validation_fitness(
        inner_fm, y_inner, val_fm, y_val, smote, seed, surrogate_trees, threads
    )
    result = de_optimize(fitness, de)
    chosen = replace(smote, k_neighbors=result.best_k)
    fm_out, y_out = smote_oversample(matrix, y, chosen, seed=seed)
    report = {
        "chosen_k": result.best_k,
        "best_fitness": result.best_fitness,
        "validation_split": split_kind,
        "trace": [
            {
                "generation": ev.generation,
                "candidate": ev.candidate,
                "k": ev.k,
                "fitness": ev.fitness,
            }
            for ev in result.trace
        ],
    }
    return TuneResult(matrix=fm_out, labels=y_out, config=chosen, report=report)


def _validation_fitness(
    inner_fm: FeatureMatrix,
    y_inner: np.ndarray,
    val_fm: FeatureMatrix,
    y_val: np.ndarray,
    smote: SmoteConfig,
    seed: int,
    surrogate_trees: int,
    threads: int,
) -> Callable[[int], float]:
    """fitness(k) = validation AUC of a surrogate forest trained on
    SMOTE(inner, k); also the grid-search oracle used in tests."""
    from .evaluate import auc
    from .forest import fit_forest, predict_proba_batch

    def fitness(k: int) -> float:
        cfg_k = replace(smote, k_neighbors=k)
        try:
            fm_k, y_k = smote_oversample(
                inner_fm, y_inner, cfg_k, seed=_derive_seed(seed, k)
            )
        except ValidationError:
            fm_k, y_k = inner_fm, y_inner  # too few minority rows: fit as-is
        surrogate = fit_forest(
            fm_k, y_k, n_trees=surrogate_trees,
            seed=_derive_seed(seed, 1000 + k), threads=threads,
        )
        scores = predict_proba_batch(surrogate, val_fm)
        return auc(scores, y_val)

    return fitness


def _both_classes(y: np.ndarray) -> bool:
    return y.size > 0 and bool(y.any()) and bool((~y).any())


def _derive_seed(seed: int, salt: int) -> int:
    """Independent non-negative child seed for (seed, salt)."""
    return int(np.random.SeedSequence((seed, salt)).generate_state(1)[0])
