"""Command-line pipeline: ingest -> featurize -> tune/rebalance -> train
-> rank -> explain -> evaluate.

Every run parameter lives in a flat JSON config file and can be
overridden by a command-line flag (the flag wins). All data goes to
files under --out; diagnostics go to stderr; exit code 0 iff no error.
Outputs are byte-identical across runs with the same seed and inputs,
regardless of --threads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import _kernels
from .dataset import (
    ParseError,
    Split,
    ValidationError,
    label_defective_lines,
    load_commits,
    load_fix_links,
    resolve_split,
    save_commits,
    save_fix_links,
)
from .evaluate import (
    EvalReport,
    auc,
    confusion_metrics,
    effort_at_recall,
    line_metrics,
    pci_at_effort,
    popt,
    summarize_lines,
)
from .explain import SurrogateConfig, explain_commit, rank_commits
from .features import assemble_feature_matrix, build_vocabulary
from .forest import fit_forest, load_model, predict_proba_batch, save_model
from .rebalance import DEConfig, SmoteConfig, tune_and_rebalance
from .synth import SynthConfig, generate_corpus

log = logging.getLogger("jitrisk")


def _default_threads() -> int:
    env = os.environ.get("JITRISK_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class RunConfig:
    dataset: str | None = None
    links: str | None = None
    out: str = "out"
    seed: int = 42
    threads: int = 0  # 0 = resolve from env/cpu count
    train_fraction: float = 0.8
    min_token_count: int = 1
    n_trees: int = 300
    de_population: int = 10
    de_mutation: float = 0.7
    de_crossover: float = 0.3
    de_generations: int = 10
    smote_target_ratio: float = 1.0
    smote_minkowski_power: float = 2.0
    smote_majority_fraction: float = 1.0
    surrogate_trees: int = 50
    surrogate_samples: int = 5000
    kernel_width: float = 25.0
    top_k_features: int | None = None
    classification_threshold: float = 0.5

    @classmethod
    def resolve(cls, args: argparse.Namespace) -> "RunConfig":
        """Config file first, then any flag that was actually given."""
        values: dict = {}
        config_path = getattr(args, "config", None)
        if config_path:
            with open(config_path, encoding="utf-8") as fh:
                loaded = json.load(fh)
            known = {f.name for f in fields(cls)}
            unknown = set(loaded) - known
            if unknown:
                raise ValidationError(f"unknown config keys: {sorted(unknown)}")
            values.update(loaded)
        for f in fields(cls):
            flag = getattr(args, f.name, None)
            if flag is not None:
                values[f.name] = flag
        cfg = cls(**values)
        if cfg.threads <= 0:
            cfg.threads = _default_threads()
        return cfg

    def de_config(self) -> DEConfig:
        return DEConfig(
            population_size=self.de_population,
            mutation_factor=self.de_mutation,
            crossover_probability=self.de_crossover,
            generations=self.de_generations,
            seed=self.seed,
        )

    def smote_config(self) -> SmoteConfig:
        return SmoteConfig(
            target_ratio=self.smote_target_ratio,
            minkowski_power=self.smote_minkowski_power,
            majority_fraction=self.smote_majority_fraction,
        )

    def surrogate_config(self) -> SurrogateConfig:
        return SurrogateConfig(
            num_samples=self.surrogate_samples,
            kernel_width=self.kernel_width,
            top_k_features=self.top_k_features,
            seed=self.seed,
        )


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _load_split(cfg: RunConfig) -> tuple[list, Split]:
    if not cfg.dataset:
        raise ValidationError("no dataset given (use --dataset or the config file)")
    commits = load_commits(cfg.dataset)
    split = resolve_split(commits, cfg.train_fraction)
    return commits, split


def cmd_ingest(cfg: RunConfig) -> None:
    commits = load_commits(cfg.dataset) if cfg.dataset else None
    if commits is None:
        raise ValidationError("no dataset given")
    if cfg.links:
        links = load_fix_links(cfg.links)
        commits = label_defective_lines(commits, links)
    out = _outdir(cfg)
    save_commits(commits, out / "commits.jsonl")
    n_def = sum(1 for c in commits if c.label)
    summary = {
        "commits": len(commits),
        "defect_introducing": n_def,
        "defect_ratio": n_def / len(commits) if commits else 0.0,
        "total_churn": sum(c.churn_loc for c in commits),
        "declared_split": all(c.declared_split for c in commits) if commits else False,
    }
    _write_json(out / "summary.json", summary)
    log.info("ingested %d commits (%d defect-introducing)", len(commits), n_def)


def cmd_synth(cfg: RunConfig, synth: SynthConfig) -> None:
    commits, links = generate_corpus(synth)
    out = _outdir(cfg)
    save_commits(commits, out / "commits.jsonl")
    save_fix_links(links, out / "links.jsonl")
    log.info(
        "wrote %d commits (%d defect-introducing, %d fix links) to %s",
        len(commits), sum(c.label for c in commits), len(links), out,
    )


def cmd_train(cfg: RunConfig) -> None:
    started = time.perf_counter()
    _, split = _load_split(cfg)
    if not split.train:
        raise ValidationError("empty training split")
    vocab = build_vocabulary(split.train, min_count=cfg.min_token_count)
    matrix = assemble_feature_matrix(split.train, vocab)
    labels = np.array([c.label for c in split.train], dtype=bool)

    tuned = tune_and_rebalance(
        matrix,
        labels,
        de=cfg.de_config(),
        seed=cfg.seed,
        smote=cfg.smote_config(),
        surrogate_trees=cfg.surrogate_trees,
        threads=cfg.threads,
    )
    model = fit_forest(
        tuned.matrix, tuned.labels, n_trees=cfg.n_trees,
        seed=cfg.seed, threads=cfg.threads,
    )
    model.smote = tuned.config

    out = _outdir(cfg)
    save_model(model, out / "model.json")
    vocab.save(out / "vocabulary.json")
    _write_json(out / "tuning.json", tuned.report)
    elapsed = time.perf_counter() - started
    log.info(
        "trained %d trees on %d rebalanced rows (vocab %d, backend %s) in %.1fs",
        model.n_trees, tuned.matrix.n_rows, vocab.size,
        _kernels.backend_name(), elapsed,
    )


def _model_path(cfg: RunConfig, arg: str | None) -> Path:
    return Path(arg) if arg else _outdir(cfg) / "model.json"


def cmd_predict(cfg: RunConfig, model_path: str | None) -> None:
    model = load_model(_model_path(cfg, model_path))
    _, split = _load_split(cfg)
    ranking = rank_commits(model, list(split.test))
    out = _outdir(cfg)
    with open(out / "ranking.csv", "w", encoding="utf-8") as fh:
        fh.write("commit_id,probability,churn,density,rank\n")
        for rank, r in enumerate(ranking, start=1):
            fh.write(f"{r.commit_id},{r.probability!r},{r.churn_loc},{r.density!r},{rank}\n")
    log.info("ranked %d test commits", len(ranking))


def _explanation_doc(model, commit, cfg: RunConfig, probability: float) -> dict:
    explanation = explain_commit(model, commit, cfg.surrogate_config())
    return {
        "commit_id": commit.commit_id,
        "probability": probability,
        "density": probability / max(commit.churn_loc, 1),
        "token_scores": explanation.token_scores,
        "ranked_lines": [
            {"file": ln.file, "index": ln.index, "text": ln.text, "score": ln.score}
            for ln in explanation.ranked_lines
        ],
    }


def cmd_explain(
    cfg: RunConfig, model_path: str | None, commit_ids: list[str],
    all_predicted: bool, force: bool,
) -> None:
    model = load_model(_model_path(cfg, model_path))
    commits, split = _load_split(cfg)

    if all_predicted:
        targets = list(split.test)
    else:
        by_id = {c.commit_id: c for c in commits}
        missing = [cid for cid in commit_ids if cid not in by_id]
        if missing:
            raise ValidationError(f"unknown commit ids: {missing}")
        targets = [by_id[cid] for cid in commit_ids]
    if not targets:
        raise ValidationError("nothing to explain (give --commit or --all-predicted)")

    matrix = assemble_feature_matrix(targets, model.vocabulary)
    probs = predict_proba_batch(model, matrix)

    out = _outdir(cfg) / "explanations"
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for commit, prob in zip(targets, probs):
        if prob < cfg.classification_threshold and not force:
            log.info(
                "skipping %s: predicted clean (probability %.3f); use --force",
                commit.commit_id, prob,
            )
            continue
        doc = _explanation_doc(model, commit, cfg, float(prob))
        _write_json(out / f"{commit.commit_id}.json", doc)
        written += 1
    log.info("wrote %d explanation files", written)


def cmd_evaluate(cfg: RunConfig, model_path: str | None) -> None:
    model = load_model(_model_path(cfg, model_path))
    commits, split = _load_split(cfg)
    test = list(split.test)
    if not test:
        raise ValidationError("empty test split")

    matrix = assemble_feature_matrix(test, model.vocabulary)
    scores = predict_proba_batch(model, matrix)
    labels = np.array([c.label for c in test], dtype=bool)

    commit_metrics = confusion_metrics(scores, labels, cfg.classification_threshold)
    commit_metrics["auc"] = auc(scores, labels)
    ranking = rank_commits(model, test)
    commit_metrics["pci_at_20_loc"] = pci_at_effort(ranking, 0.2)
    commit_metrics["effort_at_20_recall"] = effort_at_recall(ranking, 0.2)
    commit_metrics["popt"] = popt(ranking)

    line_values = line_medians = None
    if cfg.links:
        links = load_fix_links(cfg.links)
        labeled = label_defective_lines(commits, links)
        truth = {c.commit_id: c.defective_line_keys for c in labeled}
        per_commit = []
        for commit in test:
            if not commit.label:
                continue
            keys = truth.get(commit.commit_id) or frozenset()
            if not keys:
                continue  # no line ground truth: excluded from aggregation
            explanation = explain_commit(model, commit, cfg.surrogate_config())
            ranked_keys = [(ln.file, ln.index) for ln in explanation.ranked_lines]
            per_commit.append(line_metrics(ranked_keys, keys))
        if per_commit:
            line_values, line_medians = summarize_lines(per_commit)
        else:
            log.warning("fix links given but no test commit has line ground truth")
    else:
        log.warning("no fix links given: line-level metrics skipped")

    report = EvalReport(commit_metrics, line_values, line_medians)
    out = _outdir(cfg)
    _write_json(out / "report.json", report.to_json())
    with open(out / "report.csv", "w", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        for name, value in report.to_csv_rows():
            fh.write(f"{name},{value!r}\n")
    log.info("evaluation report written to %s", out)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--dataset", help="commit dataset (JSON-lines)")
    parser.add_argument("--links", help="fix-link file (JSON-lines)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    parser.add_argument("--train-fraction", type=float, dest="train_fraction")
    parser.add_argument("--n-trees", type=int, dest="n_trees")
    parser.add_argument("--min-token-count", type=int, dest="min_token_count")
    parser.add_argument("--de-generations", type=int, dest="de_generations")
    parser.add_argument("--surrogate-trees", type=int, dest="surrogate_trees")
    parser.add_argument("--surrogate-samples", type=int, dest="surrogate_samples")
    parser.add_argument("--kernel-width", type=float, dest="kernel_width")
    parser.add_argument("--top-k-features", type=int, dest="top_k_features")
    parser.add_argument(
        "--threshold", type=float, dest="classification_threshold",
        help="probability threshold for the defect-introducing class",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jitrisk",
        description="Just-in-time defect risk: train, rank and explain commits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset and write its normal form")
    _add_common(p)

    p = sub.add_parser("synth", help="generate a planted-signal benchmark corpus")
    _add_common(p)
    p.add_argument("--commits", type=int, default=2000)
    p.add_argument("--defect-ratio", type=float, default=0.10)
    p.add_argument("--token-pool", type=int, default=300)
    p.add_argument("--risky-pool", type=int, default=6)
    p.add_argument("--max-added", type=int, default=25)

    p = sub.add_parser("train", help="tune SMOTE, rebalance and fit the forest")
    _add_common(p)

    p = sub.add_parser("predict", help="write the density-ranked commit CSV")
    _add_common(p)
    p.add_argument("--model", help="model file (default: <out>/model.json)")

    p = sub.add_parser("explain", help="write per-commit line-risk explanations")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--commit", action="append", default=[], help="commit id (repeatable)")
    p.add_argument("--all-predicted", action="store_true",
                   help="explain every test commit predicted defect-introducing")
    p.add_argument("--force", action="store_true",
                   help="also explain commits predicted clean")

    p = sub.add_parser("evaluate", help="compute commit- and line-level metrics")
    _add_common(p)
    p.add_argument("--model")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.resolve(args)
        if args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "synth":
            cmd_synth(cfg, SynthConfig(
                n_commits=args.commits,
                defect_ratio=args.defect_ratio,
                seed=cfg.seed,
                token_pool=args.token_pool,
                risky_pool=args.risky_pool,
                max_added=args.max_added,
            ))
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "predict":
            cmd_predict(cfg, args.model)
        elif args.command == "explain":
            cmd_explain(cfg, args.model, args.commit, args.all_predicted, args.force)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.model)
    except (ParseError, ValidationError, OSError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
