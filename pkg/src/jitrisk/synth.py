"""Planted-signal benchmark corpus.

Generates a commit stream where a small pool of risky tokens appears
only in the defective lines of defect-introducing commits, so a working
pipeline must (a) separate the classes almost perfectly and (b) rank the
planted lines at the top. Defect ratio defaults to 10%, inside the
8-13% band seen in real JIT datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CommitRecord, FileChange, FixLink

RISKY_TOKENS = (
    "badcall",
    "unsafe_free",
    "tainted_input",
    "race_window",
    "wild_cast",
    "leak_handle",
    "stale_lock",
    "origin_bypass",
)

_VERBS = (
    "get", "set", "update", "read", "write", "init", "load", "save",
    "merge", "flush", "parse", "emit", "open", "close", "check", "send",
)
_NOUNS = (
    "buffer", "index", "count", "state", "node", "entry", "cache", "token",
    "result", "config", "handle", "stream", "record", "queue", "batch", "field",
)

_BENIGN_TEMPLATES = (
    "{a} = {b}({c}, {n});",
    "if ({a} > {n}) {{",
    "return {a}.{b}({c});",
    "{a} += {b};",
    "for (int {a} = {n}; {a} < {b}; {a}++) {{",
    '{a}.log("{b} done");',
    "while ({a} != {b}) {{",
    "{a} = {b} - {c};",
)

_RISKY_TEMPLATES = (
    "{a} = {risky}({b}, {n});",
    "if ({risky}({a}) > {n}) {{",
    "{risky}({a}, {b});",
)


@dataclass(frozen=True)
class SynthConfig:
    n_commits: int = 2000
    defect_ratio: float = 0.10
    seed: int = 0
    token_pool: int = 300
    risky_pool: int = 6
    min_added: int = 5
    max_added: int = 25
    max_removed: int = 6
    max_files: int = 2
    max_defective_lines: int = 6
    base_timestamp: int = 1_577_836_800  # 2020-01-01


def _identifier_pool(size: int) -> list[str]:
    pool = []
    i = 0
    while len(pool) < size:
        verb = _VERBS[i % len(_VERBS)]
        noun = _NOUNS[(i // len(_VERBS)) % len(_NOUNS)]
        suffix = i // (len(_VERBS) * len(_NOUNS))
        pool.append(f"{verb}_{noun}" + (f"_{suffix}" if suffix else ""))
        i += 1
    return pool


def _risky_pool(size: int) -> list[str]:
    pool = list(RISKY_TOKENS[:size])
    while len(pool) < size:
        pool.append(f"hazard_path_{len(pool)}")
    return pool


def generate_corpus(cfg: SynthConfig) -> tuple[list[CommitRecord], list[FixLink]]:
    rng = np.random.default_rng(cfg.seed)
    idents = _identifier_pool(cfg.token_pool)
    risky = _risky_pool(cfg.risky_pool)

    def benign_line() -> str:
        tpl = _BENIGN_TEMPLATES[rng.integers(0, len(_BENIGN_TEMPLATES))]
        return tpl.format(
            a=idents[rng.integers(0, len(idents))],
            b=idents[rng.integers(0, len(idents))],
            c=idents[rng.integers(0, len(idents))],
            n=int(rng.integers(0, 512)),
        )

    def risky_line() -> str:
        tpl = _RISKY_TEMPLATES[rng.integers(0, len(_RISKY_TEMPLATES))]
        return tpl.format(
            risky=risky[rng.integers(0, len(risky))],
            a=idents[rng.integers(0, len(idents))],
            b=idents[rng.integers(0, len(idents))],
            n=int(rng.integers(0, 512)),
        )

    commits: list[CommitRecord] = []
    links: list[FixLink] = []
    for i in range(cfg.n_commits):
        commit_id = f"c{i:06d}"
        label = bool(rng.random() < cfg.defect_ratio)
        n_files = int(rng.integers(1, cfg.max_files + 1))

        files = []
        for j in range(n_files):
            path = f"src/m{int(rng.integers(0, 40)):02d}/unit_{j}.c"
            n_added = int(rng.integers(cfg.min_added, cfg.max_added + 1))
            n_removed = int(rng.integers(0, cfg.max_removed + 1))
            added = tuple((k, benign_line()) for k in range(n_added))
            removed = tuple((k, benign_line()) for k in range(n_removed))
            files.append(FileChange(path, added, removed))

        defective_keys: list[tuple[str, int]] = []
        if label:
            flat = [(fi, k) for fi, fc in enumerate(files) for k, _ in fc.added_lines]
            n_def = int(rng.integers(1, min(cfg.max_defective_lines, len(flat)) + 1))
            chosen = rng.choice(len(flat), size=n_def, replace=False)
            for c in sorted(int(v) for v in chosen):
                fi, k = flat[c]
                fc = files[fi]
                new_added = list(fc.added_lines)
                new_added[k] = (k, risky_line())
                files[fi] = FileChange(fc.path, tuple(new_added), fc.removed_lines)
                defective_keys.append((fc.path, k))

        la = sum(len(fc.added_lines) for fc in files)
        ld = sum(len(fc.removed_lines) for fc in files)
        metrics = (
            float(n_files),                       # ns
            float(n_files),                       # nd
            float(n_files),                       # nf
            float(rng.random()),                  # entropy
            float(la),                            # la
            float(ld),                            # ld
            float(rng.integers(50, 5000)),        # lt
            float(rng.integers(0, 2)),            # fix
            float(rng.integers(1, 30)),           # ndev
            float(rng.random() * 365.0),          # age
            float(rng.integers(1, 20)),           # nuc
            float(rng.integers(1, 500)),          # exp
            float(rng.random() * 100.0),          # rexp
            float(rng.integers(1, 200)),          # sexp
        )
        commits.append(
            CommitRecord(
                commit_id=commit_id,
                timestamp=cfg.base_timestamp + i * 3600,
                files=tuple(files),
                churn_loc=la + ld,
                metrics=metrics,
                label=label,
            )
        )

        if defective_keys:
            # occasionally split the keys over two fixing commits to
            # exercise the link-union path
            if len(defective_keys) >= 2 and rng.random() < 0.25:
                half = len(defective_keys) // 2
                groups = [defective_keys[:half], defective_keys[half:]]
            else:
                groups = [defective_keys]
            for g, keys in enumerate(groups):
                links.append(
                    FixLink(
                        introducing_commit_id=commit_id,
                        fixing_commit_id=f"fix-{commit_id}-{g}",
                        touched_keys=frozenset(keys),
                    )
                )
    return commits, links
