"""Length statistics: monthly article/edit sizes and accuracy by input length."""
from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from typing import IO, Iterable, Sequence

from .corpus import Revision, group_by_page, sort_and_pair
from .diff import line_diff, split_lines


@dataclass(frozen=True)
class MonthRow:
    month: str
    n_revisions: int
    mean_article_chars: float
    n_edits: int
    mean_edit_chars: float | None


@dataclass(frozen=True)
class BucketRow:
    lo: int
    hi: float
    n: int
    accuracy: float | None


def edit_chars(prev: Revision, curr: Revision) -> int:
    """Characters on removed plus added lines of the line diff."""
    hunks = line_diff(split_lines(prev.wikitext), split_lines(curr.wikitext))
    return sum(len(line) for h in hunks for line in h.removed_lines + h.added_lines)


def stats_lengths(revisions: Iterable[Revision]) -> list[MonthRow]:
    """Per calendar month: mean article length and mean edit length in characters.

    An edit is attributed to the month of its newer revision; a month with
    revisions but no predecessor pairs has ``mean_edit_chars=None``.
    """
    revisions = list(revisions)
    if not revisions:
        raise ValueError("need at least one revision")
    articles: dict[str, list[int]] = {}
    edits: dict[str, list[int]] = {}
    for r in revisions:
        articles.setdefault(r.timestamp.strftime("%Y-%m"), []).append(len(r.wikitext))
    for revs in group_by_page(revisions).values():
        for prev, curr in sort_and_pair(revs):
            edits.setdefault(curr.timestamp.strftime("%Y-%m"), []).append(edit_chars(prev, curr))
    rows = []
    for month in sorted(articles):
        e = edits.get(month, [])
        rows.append(MonthRow(month, len(articles[month]), sum(articles[month]) / len(articles[month]),
                             len(e), sum(e) / len(e) if e else None))
    return rows


def default_edges(max_len: int, start: int = 256) -> list[int]:
    edges = [start]
    while edges[-1] <= max_len:
        edges.append(edges[-1] * 2)
    return edges


def stats_len_vs_acc(pairs: Sequence[tuple[int, bool]], edges: Sequence[int] | None = None) -> list[BucketRow]:
    """Accuracy per length bucket ``[edge_i, edge_{i+1})`` starting from zero."""
    if not pairs:
        raise ValueError("need at least one (length, correct) pair")
    edges = sorted(edges) if edges else default_edges(max(n for n, _ in pairs))
    bounds = [0] + [e for e in edges if e > 0] + [math.inf]
    rows = []
    for lo, hi in zip(bounds, bounds[1:]):
        hits = [c for n, c in pairs if lo <= n < hi]
        rows.append(BucketRow(lo, hi, len(hits), sum(hits) / len(hits) if hits else None))
    return rows


def write_csv(rows: Sequence, stream: IO[str]) -> None:
    if not rows:
        return
    w = csv.writer(stream, lineterminator="\n")
    w.writerow([f.name for f in fields(rows[0])])
    for row in rows:
        w.writerow(["" if v is None else v for v in astuple(row)])
