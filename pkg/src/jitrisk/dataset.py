"""Commit dataset ingestion: JSON-lines loading, unified-diff parsing,
line-level ground-truth labeling and the chronological train/test split.

The on-disk format is JSON-lines, one object per commit:

    {"commit_id": ..., "timestamp": ..., "diff": "<unified diff>",
     "metrics": [14 numbers], "label": 0/1,
     "split": "train"/"test" (optional), "churn": int (optional),
     "defective_lines": [[path, added_index], ...] (optional)}

Fix links live in a second JSON-lines file:

    {"introducing": ..., "fixing": ..., "touched": [[path, added_index], ...]}
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

METRIC_COUNT = 14
#: The Kamei commit-level metric set, in the order expected in dataset files.
METRIC_NAMES = (
    "ns", "nd", "nf", "entropy", "la", "ld", "lt", "fix",
    "ndev", "age", "nuc", "exp", "rexp", "sexp",
)

LineKey = tuple[str, int]


class ParseError(ValueError):
    """Raised for malformed input files (bad JSON, bad diff syntax)."""


class ValidationError(ValueError):
    """Raised when well-formed input violates a dataset invariant."""


@dataclass(frozen=True)
class FileChange:
    """Added/removed lines of one file, indexed per side from 0."""

    path: str
    added_lines: tuple[tuple[int, str], ...] = ()
    removed_lines: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class CommitRecord:
    commit_id: str
    timestamp: int
    files: tuple[FileChange, ...]
    churn_loc: int
    metrics: tuple[float, ...]
    label: bool
    defective_line_keys: frozenset[LineKey] | None = None
    declared_split: str | None = None

    def added_line_keys(self) -> frozenset[LineKey]:
        return frozenset(
            (fc.path, idx) for fc in self.files for idx, _ in fc.added_lines
        )

    def added_lines(self) -> list[tuple[str, int, str]]:
        """All added lines as (path, index, text), in file order."""
        return [
            (fc.path, idx, text) for fc in self.files for idx, text in fc.added_lines
        ]


@dataclass(frozen=True)
class FixLink:
    introducing_commit_id: str
    fixing_commit_id: str
    touched_keys: frozenset[LineKey]


@dataclass(frozen=True)
class Split:
    train: tuple[CommitRecord, ...]
    test: tuple[CommitRecord, ...]


_HUNK_RE = re.compile(r"^@@ -\d+(?:,\d+)? \+\d+(?:,\d+)? @@")
_FROM_FILE_RE = re.compile(r"^--- (?:/dev/null|a/(?P<path>.*)|(?P<bare>[^\t]*))")
_TO_FILE_RE = re.compile(r"^\+\+\+ (?:/dev/null|b/(?P<path>.*)|(?P<bare>[^\t]*))")
_BINARY_RE = re.compile(r"^Binary files .* differ$")


def parse_unified_diff(text: str) -> list[FileChange]:
    """Extract per-file added/removed lines from a unified diff.

    Lines starting with "+" (except the "+++" header) are added, "-"
    (except "---") removed; context and metadata lines are ignored.
    Indices count added (resp. removed) lines per file from 0, across
    hunks. Binary-file entries are skipped with a warning.
    """
    files: list[FileChange] = []
    path: str | None = None
    from_path: str | None = None
    added: list[tuple[int, str]] = []
    removed: list[tuple[int, str]] = []
    in_hunk = False
    had_hunk = False

    def flush() -> None:
        nonlocal added, removed, had_hunk
        if path is not None and had_hunk:
            files.append(FileChange(path, tuple(added), tuple(removed)))
        added, removed = [], []
        had_hunk = False

    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith("diff "):
            flush()
            path, from_path, in_hunk = None, None, False
        elif line.startswith("--- "):
            m = _FROM_FILE_RE.match(line)
            from_path = (m.group("path") or m.group("bare")) if m else None
            in_hunk = False
        elif line.startswith("+++ "):
            flush()
            m = _TO_FILE_RE.match(line)
            to_path = (m.group("path") or m.group("bare")) if m else None
            path = to_path if to_path else from_path
            in_hunk = False
        elif line.startswith("@@"):
            if not _HUNK_RE.match(line):
                raise ParseError(f"diff line {lineno}: malformed hunk header {line!r}")
            if path is None:
                raise ParseError(f"diff line {lineno}: hunk before any file header")
            in_hunk = True
            had_hunk = True
        elif _BINARY_RE.match(line):
            log.warning("skipping binary file entry: %s", line)
            path, in_hunk = None, False
        elif in_hunk:
            if line.startswith("+"):
                added.append((len(added), line[1:]))
            elif line.startswith("-"):
                removed.append((len(removed), line[1:]))
            # context (" ") and "\ No newline..." markers carry no change
    flush()
    return files


def format_unified_diff(files: Sequence[FileChange]) -> str:
    """Render FileChanges back into a minimal one-hunk-per-file diff.

    Inverse of parse_unified_diff up to hunk layout: removed lines are
    emitted first, then added lines, so parsing the output reproduces
    the same FileChange tuples.
    """
    out: list[str] = []
    for fc in files:
        out.append(f"--- a/{fc.path}")
        out.append(f"+++ b/{fc.path}")
        out.append(f"@@ -1,{len(fc.removed_lines)} +1,{len(fc.added_lines)} @@")
        for _, text in fc.removed_lines:
            out.append(f"-{text}")
        for _, text in fc.added_lines:
            out.append(f"+{text}")
    return "\n".join(out) + ("\n" if out else "")


def _commit_churn(files: Iterable[FileChange]) -> int:
    return sum(len(fc.added_lines) + len(fc.removed_lines) for fc in files)


def commit_from_json(obj: dict, where: str = "record") -> CommitRecord:
    try:
        commit_id = str(obj["commit_id"])
        timestamp = int(obj["timestamp"])
        diff = obj["diff"]
        metrics = tuple(float(v) for v in obj["metrics"])
        label = bool(obj["label"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: missing or malformed field ({exc})") from exc
    if timestamp <= 0:
        raise ValidationError(f"{where}: timestamp must be strictly positive")
    if len(metrics) != METRIC_COUNT:
        raise ValidationError(
            f"{where}: expected {METRIC_COUNT} metrics, got {len(metrics)}"
        )
    if not all(math.isfinite(v) for v in metrics):
        raise ValidationError(f"{where}: non-finite metric value")

    files = tuple(parse_unified_diff(diff))
    churn = _commit_churn(files)
    declared = obj.get("churn")
    if declared is not None and int(declared) != churn:
        raise ValidationError(
            f"{where}: declared churn {declared} != recomputed churn {churn}"
        )

    split = obj.get("split")
    if split is not None and split not in ("train", "test"):
        raise ValidationError(f"{where}: split must be 'train' or 'test'")

    defective = None
    if obj.get("defective_lines") is not None:
        defective = frozenset((str(p), int(i)) for p, i in obj["defective_lines"])

    record = CommitRecord(
        commit_id=commit_id,
        timestamp=timestamp,
        files=files,
        churn_loc=churn,
        metrics=metrics,
        label=label,
        defective_line_keys=defective,
        declared_split=split,
    )
    if defective is not None and not defective <= record.added_line_keys():
        raise ValidationError(
            f"{where}: defective_lines not a subset of the commit's added lines"
        )
    return record


def commit_to_json(commit: CommitRecord) -> dict:
    obj: dict = {
        "commit_id": commit.commit_id,
        "timestamp": commit.timestamp,
        "diff": format_unified_diff(commit.files),
        "metrics": list(commit.metrics),
        "label": int(commit.label),
        "churn": commit.churn_loc,
    }
    if commit.declared_split is not None:
        obj["split"] = commit.declared_split
    if commit.defective_line_keys is not None:
        obj["defective_lines"] = sorted(
            [p, i] for p, i in commit.defective_line_keys
        )
    return obj


def load_commits(path: str | Path) -> list[CommitRecord]:
    """Load a JSON-lines commit dataset; churn is recomputed from the diff
    and checked against any declared value."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}, line {lineno}: invalid JSON ({exc})") from exc
            records.append(commit_from_json(obj, where=f"{path}, line {lineno}"))
    return records


def save_commits(commits: Iterable[CommitRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for commit in commits:
            fh.write(json.dumps(commit_to_json(commit), sort_keys=True) + "\n")


def load_fix_links(path: str | Path) -> list[FixLink]:
    links = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                touched = frozenset((str(p), int(i)) for p, i in obj["touched"])
                link = FixLink(str(obj["introducing"]), str(obj["fixing"]), touched)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}, line {lineno}: bad fix link ({exc})") from exc
            if not link.touched_keys:
                raise ValidationError(f"{path}, line {lineno}: empty touched set")
            links.append(link)
    return links


def save_fix_links(links: Iterable[FixLink], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for link in links:
            obj = {
                "introducing": link.introducing_commit_id,
                "fixing": link.fixing_commit_id,
                "touched": sorted([p, i] for p, i in link.touched_keys),
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def label_defective_lines(
    commits: Sequence[CommitRecord], links: Sequence[FixLink]
) -> list[CommitRecord]:
    """Attach line-level ground truth: a commit's defective lines are the
    union of its links' touched keys, restricted to its own added lines.
    Commits without links get an empty set. Idempotent and independent of
    link order."""
    by_id: dict[str, set[LineKey]] = {c.commit_id: set() for c in commits}
    for link in links:
        if link.introducing_commit_id not in by_id:
            raise ValidationError(
                f"fix link references unknown commit {link.introducing_commit_id!r}"
            )
        by_id[link.introducing_commit_id] |= link.touched_keys
    return [
        replace(
            c,
            defective_line_keys=frozenset(by_id[c.commit_id]) & c.added_line_keys(),
        )
        for c in commits
    ]


def ceil_fraction(n: int, fraction: float) -> int:
    """ceil(n * fraction) guarded against float noise on exact products."""
    raw = n * fraction
    nearest = round(raw)
    if abs(raw - nearest) < 1e-9:
        return int(nearest)
    return int(math.ceil(raw))


def time_split(commits: Sequence[CommitRecord], train_fraction: float) -> Split:
    """Chronological split: first ceil(n * train_fraction) commits train,
    rest test; ties on timestamp broken by commit_id."""
    if not commits:
        raise ValidationError("cannot split an empty commit list")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must be in (0, 1)")
    ordered = sorted(commits, key=lambda c: (c.timestamp, c.commit_id))
    cut = ceil_fraction(len(ordered), train_fraction)
    return Split(train=tuple(ordered[:cut]), test=tuple(ordered[cut:]))


def resolve_split(commits: Sequence[CommitRecord], train_fraction: float) -> Split:
    """Honor a split declared in the dataset; otherwise fall back to
    time_split. A partially declared split is rejected."""
    declared = [c for c in commits if c.declared_split is not None]
    if not declared:
        return time_split(commits, train_fraction)
    if len(declared) != len(commits):
        raise ValidationError(
            f"split declared on {len(declared)} of {len(commits)} commits; "
            "must be all or none"
        )
    train = tuple(c for c in commits if c.declared_split == "train")
    test = tuple(c for c in commits if c.declared_split == "test")
    return Split(train=train, test=test)
