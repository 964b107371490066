#!/usr/bin/env python3
"""Compare the compiled kernel extension against the pure numpy fallback.

Fits the same forest with both backends on a synthetic sparse problem,
times training and batch prediction, and checks that the outputs are
bit-identical (they must be; the backends share one arithmetic recipe).

    python benchmarks/bench_backends.py [--rows 800] [--features 2000]
                                        [--trees 10] [--density 0.01]
"""

import argparse
import sys
import time

import numpy as np

from jitrisk import _kernels
from jitrisk.dataset import METRIC_COUNT
from jitrisk.features import FeatureMatrix, Vocabulary
from jitrisk.forest import fit_forest, predict_proba_batch


def synthetic_matrix(rows: int, features: int, density: float, seed: int):
    import scipy.sparse as sp

    rng = np.random.default_rng(seed)
    tokens = sp.random(
        rows, features, density=density, format="csr",
        random_state=np.random.RandomState(seed),
    )
    tokens.data = np.ceil(tokens.data * 5)
    vocab = Vocabulary({f"tok{i:05d}": i for i in range(features)})
    fm = FeatureMatrix(
        tokens, rng.random((rows, METRIC_COUNT)), [f"r{i}" for i in range(rows)], vocab
    )
    labels = rng.random(rows) < 0.3
    # planted signal in the first column so trees have something to find
    strong = fm.token_counts.tolil()
    for i in np.flatnonzero(labels):
        strong[i, 0] = 3.0
    fm.token_counts = strong.tocsr()
    labels[:2] = [True, False]
    return fm, labels


def run_backend(name, fm, labels, probe, trees, seed):
    _kernels.use(name)
    t0 = time.perf_counter()
    model = fit_forest(fm, labels, n_trees=trees, seed=seed)
    t_fit = time.perf_counter() - t0
    t0 = time.perf_counter()
    proba = predict_proba_batch(model, probe)
    t_predict = time.perf_counter() - t0
    return model, proba, t_fit, t_predict


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=800)
    parser.add_argument("--features", type=int, default=2000)
    parser.add_argument("--trees", type=int, default=10)
    parser.add_argument("--density", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if "compiled" not in _kernels.available():
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1

    fm, labels = synthetic_matrix(args.rows, args.features, args.density, args.seed)
    probe = fm.combined()
    print(
        f"problem: {args.rows} rows x {fm.feature_count} features, "
        f"{probe.nnz} nonzeros, {args.trees} trees"
    )

    results = {}
    for name in ("compiled", "pure"):
        model, proba, t_fit, t_predict = run_backend(
            name, fm, labels, probe, args.trees, args.seed
        )
        results[name] = (model, proba, t_fit, t_predict)
        print(f"{name:>9}: fit {t_fit:8.3f}s   predict {t_predict:8.3f}s")
    _kernels.use("compiled")

    mc, pc, fit_c, pred_c = results["compiled"]
    mp, pp, fit_p, pred_p = results["pure"]
    identical = np.array_equal(pc, pp) and all(
        np.array_equal(a.feature, b.feature) and np.array_equal(a.threshold, b.threshold)
        for a, b in zip(mc.trees, mp.trees)
    )
    print(f"bit-identical models and predictions: {identical}")
    print(f"speedup: fit {fit_p / fit_c:.1f}x, predict {pred_p / pred_c:.1f}x")
    return 0 if identical else 2


if __name__ == "__main__":
    sys.exit(main())
