"""MediaWiki dump ingestion and the line-delimited corpus format."""
from __future__ import annotations

import bz2
import gzip
import io
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence
from xml.parsers import expat
from xml.sax.saxutils import escape

import numpy as np

from .errors import DataError, DumpParseError
from .extraction import Edit, ExtractionConfig, extract_edit, tokenize

log = logging.getLogger(__name__)

DEFAULT_CLASSES = ("FA", "GA", "B", "C", "Start", "Stub")
SPLITS = ("train", "valid", "test")


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class Revision:
    rev_id: int
    timestamp: datetime
    wikitext: str = ""
    message: str = ""
    parent_id: int | None = None
    contributor: str | None = None
    page_title: str | None = None


@dataclass(frozen=True)
class QualityDistribution:
    class_names: tuple[str, ...]
    probs: tuple[float, ...]
    renormalized: bool = field(default=False, compare=False)

    def __post_init__(self):
        if len(self.class_names) != len(self.probs):
            raise ValueError("class_names and probs differ in length")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be distinct")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-6:
            raise ValueError(f"probabilities must be >= 0 and sum to 1, got {self.probs}")

    @classmethod
    def from_mapping(cls, probs: Mapping[str, float], class_names: Sequence[str] = DEFAULT_CLASSES,
                     tol: float = 1e-2) -> "QualityDistribution":
        """Order ``probs`` canonically; renormalize when the sum is off by at most ``tol``."""
        unknown = set(probs) - set(class_names)
        if unknown:
            raise DataError(f"unknown quality classes {sorted(unknown)}")
        vec = [float(probs.get(c, 0.0)) for c in class_names]
        if any(p < 0 or not math.isfinite(p) for p in vec):
            raise DataError(f"invalid probabilities {vec}")
        total = sum(vec)
        if abs(total - 1.0) > tol:
            raise DataError(f"probabilities sum to {total}, beyond tolerance {tol}")
        renorm = abs(total - 1.0) > 1e-12
        if renorm:
            vec = [p / total for p in vec]
        return cls(tuple(class_names), tuple(vec), renorm)

    @classmethod
    def one_hot(cls, label: str, class_names: Sequence[str] = DEFAULT_CLASSES) -> "QualityDistribution":
        if label not in class_names:
            raise DataError(f"unknown quality class {label!r}")
        return cls(tuple(class_names), tuple(1.0 if c == label else 0.0 for c in class_names))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.class_names, self.probs))

    def argmax(self) -> str:
        return self.class_names[int(np.argmax(self.probs))]


@dataclass(frozen=True)
class CorpusRecord:
    rev_id: int
    edit: Edit
    message: tuple[str, ...]
    quality: QualityDistribution | None = None
    gold: bool = False
    split: str | None = None
    parent_id: int | None = None
    timestamp: datetime | None = None
    page: str | None = None

    def __post_init__(self):
        if not self.message:
            raise ValueError(f"record {self.rev_id} has an empty message")
        if self.split is not None and self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def to_json(self) -> dict:
        return {
            "rev_id": self.rev_id,
            "parent_id": self.parent_id,
            "page": self.page,
            "timestamp": format_timestamp(self.timestamp) if self.timestamp else None,
            "edit": self.edit.to_dict(),
            "message": list(self.message),
            "quality": self.quality.as_dict() if self.quality else None,
            "gold": self.gold,
            "split": self.split,
        }

    @classmethod
    def from_json(cls, d: dict, class_names: Sequence[str] | None = None) -> "CorpusRecord":
        quality = None
        if d.get("quality") is not None:
            names = class_names or tuple(d["quality"])
            quality = QualityDistribution.from_mapping(d["quality"], names)
        return cls(
            rev_id=int(d["rev_id"]),
            edit=Edit.from_dict(d["edit"]),
            message=tuple(d["message"]),
            quality=quality,
            gold=bool(d.get("gold", False)),
            split=d.get("split"),
            parent_id=d.get("parent_id"),
            timestamp=parse_timestamp(d["timestamp"]) if d.get("timestamp") else None,
            page=d.get("page"),
        )


# --- dump parsing ------------------------------------------------------------------------------

def open_dump(path) -> IO[bytes]:
    """Open a dump file, sniffing gzip/bzip2 compression from the magic bytes."""
    fh = open(path, "rb")
    head = fh.read(3)
    fh.seek(0)
    if head[:2] == b"\x1f\x8b":
        return gzip.GzipFile(fileobj=fh)
    if head == b"BZh":
        return bz2.BZ2File(fh)
    return fh


class DumpParser:
    """Streaming parser for ``<mediawiki><page><revision>`` exports.

    Iterating yields ``Revision`` objects in document order. ``skipped``
    counts revisions dropped for lacking an id.
    """

    _FIELDS = {
        ("revision", "id"): "rev_id",
        ("revision", "parentid"): "parent_id",
        ("revision", "timestamp"): "timestamp",
        ("revision", "comment"): "message",
        ("revision", "text"): "wikitext",
        ("contributor", "username"): "contributor",
        ("contributor", "ip"): "contributor",
        ("page", "title"): "title",
    }

    def __init__(self, stream: IO[bytes], chunk_size: int = 1 << 16):
        self.stream = stream
        self.chunk_size = chunk_size
        self.skipped = 0
        self.count = 0

    def __iter__(self) -> Iterator[Revision]:
        parser = expat.ParserCreate()
        parser.buffer_text = True
        stack: list[str] = []
        ready: list[Revision] = []
        state = {"title": None, "rev": None, "field": None, "buf": []}

        def start(name, attrs):
            parent = stack[-1] if stack else None
            stack.append(name)
            if name == "revision":
                state["rev"] = {}
            key = self._FIELDS.get((parent, name))
            if key and (key == "title" or state["rev"] is not None):
                state["field"] = key
                state["buf"] = []

        def end(name):
            stack.pop()
            key = state["field"]
            if key is not None and self._FIELDS.get((stack[-1] if stack else None, name)) == key:
                value = "".join(state["buf"])
                if key == "title":
                    state["title"] = value
                else:
                    state["rev"][key] = value
                state["field"] = None
            if name == "revision":
                rev = self._make(state["rev"], state["title"])
                state["rev"] = None
                if rev is not None:
                    ready.append(rev)

        def chars(data):
            if state["field"] is not None:
                state["buf"].append(data)

        parser.StartElementHandler = start
        parser.EndElementHandler = end
        parser.CharacterDataHandler = chars
        while True:
            chunk = self.stream.read(self.chunk_size)
            try:
                parser.Parse(chunk, not chunk)
            except expat.ExpatError as err:
                raise DumpParseError(f"malformed dump XML: {expat.ErrorString(err.code)}",
                                     parser.ErrorByteIndex) from None
            yield from ready
            ready.clear()
            if not chunk:
                break

    def _make(self, fields: dict, title) -> Revision | None:
        rev_id = fields.get("rev_id", "").strip()
        if not rev_id:
            self.skipped += 1
            log.warning("skipping revision without id on page %r", title)
            return None
        parent = fields.get("parent_id", "").strip()
        ts = fields.get("timestamp", "").strip()
        self.count += 1
        return Revision(
            rev_id=int(rev_id),
            timestamp=parse_timestamp(ts) if ts else datetime.fromtimestamp(0, timezone.utc),
            wikitext=fields.get("wikitext", ""),
            message=fields.get("message", ""),
            parent_id=int(parent) if parent else None,
            contributor=fields.get("contributor"),
            page_title=title,
        )


def parse_dump(xml_stream: IO[bytes]) -> Iterator[Revision]:
    return iter(DumpParser(xml_stream))


def _xml_text(text: str) -> str:
    # a raw CR would be normalized away by any XML parser
    return escape(text, {"\r": "&#13;"})


def write_dump(revisions: Iterable[Revision], stream: IO[str], title: str | None = None) -> None:
    """Serialize revisions as a single-page MediaWiki export."""
    revisions = list(revisions)
    title = title or (revisions[0].page_title if revisions and revisions[0].page_title else "Page")
    w = stream.write
    w('<mediawiki xmlns="http://www.mediawiki.org/xml/export-0.10/" xml:lang="en">\n')
    w(f"  <page>\n    <title>{escape(title)}</title>\n    <ns>0</ns>\n")
    for r in revisions:
        w("    <revision>\n")
        w(f"      <id>{r.rev_id}</id>\n")
        if r.parent_id is not None:
            w(f"      <parentid>{r.parent_id}</parentid>\n")
        w(f"      <timestamp>{format_timestamp(r.timestamp)}</timestamp>\n")
        if r.contributor is not None:
            w(f"      <contributor><username>{escape(r.contributor)}</username></contributor>\n")
        if r.message:
            w(f"      <comment>{_xml_text(r.message)}</comment>\n")
        w(f'      <text xml:space="preserve">{_xml_text(r.wikitext)}</text>\n')
        w("    </revision>\n")
    w("  </page>\n</mediawiki>\n")


def group_by_page(revisions: Iterable[Revision]) -> dict[str | None, list[Revision]]:
    pages: dict[str | None, list[Revision]] = {}
    for r in revisions:
        pages.setdefault(r.page_title, []).append(r)
    return pages


def sort_and_pair(revs: Sequence[Revision]) -> list[tuple[Revision, Revision]]:
    """Consecutive (previous, current) pairs after sorting by (timestamp, rev_id)."""
    ordered = sorted(revs, key=lambda r: (r.timestamp, r.rev_id))
    return list(zip(ordered, ordered[1:]))


# --- corpus construction ----------------------------------------------------------------------------

def build_corpus(pairs: Iterable[tuple[Revision, Revision]],
                 labels: Mapping[int, QualityDistribution] | None = None,
                 cfg: ExtractionConfig | None = None,
                 min_sentences: int = 1,
                 gold: bool = False) -> tuple[list[CorpusRecord], Counter]:
    """Extract edits and keep pairs with a message and enough edit-sentences.

    The current revision supplies the message and (when ``labels`` is given)
    the quality label. Returns the records and a counter of drop reasons.
    """
    cfg = cfg or ExtractionConfig()
    records, stats = [], Counter()
    for prev, curr in pairs:
        stats["pairs"] += 1
        message = tuple(tokenize(curr.message))
        if not message:
            stats["no_message"] += 1
            continue
        edit = extract_edit(prev.wikitext, curr.wikitext, cfg)
        if len(edit.sentences) < min_sentences:
            if edit.n_hunks == 0:
                stats["no_diff"] += 1
            elif not edit.sentences:
                stats["markup_churn"] += 1
            else:
                stats["too_few_sentences"] += 1
            continue
        quality = None
        if labels is not None:
            quality = labels.get(curr.rev_id)
            if quality is None:
                stats["unlabeled"] += 1
                continue
        records.append(CorpusRecord(curr.rev_id, edit, message, quality, gold, None,
                                    prev.rev_id, curr.timestamp, curr.page_title))
        stats["kept"] += 1
    return records, stats


def split_sizes(n: int) -> tuple[int, int, int]:
    n_train, n_valid = (7 * n) // 10, n // 10
    return n_train, n_valid, n - n_train - n_valid


def split_corpus(records: Sequence[CorpusRecord], seed: int = 0) -> list[CorpusRecord]:
    """Assign train/valid/test labels 70/10/20 after a seeded shuffle.

    Records come back in their input order.
    """
    n = len(records)
    if n < 10:
        raise DataError(f"need at least 10 records to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train, n_valid, _ = split_sizes(n)
    split_of = np.empty(n, dtype=object)
    split_of[perm[:n_train]] = "train"
    split_of[perm[n_train:n_train + n_valid]] = "valid"
    split_of[perm[n_train + n_valid:]] = "test"
    return [replace(r, split=split_of[i]) for i, r in enumerate(records)]


# --- persistence ----------------------------------------------------------------------------------

def write_corpus(records: Iterable[CorpusRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_corpus(path, class_names: Sequence[str] | None = None) -> list[CorpusRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(CorpusRecord.from_json(json.loads(line), class_names))
            except (KeyError, ValueError, TypeError) as err:
                raise DataError(f"{path}:{lineno}: bad corpus record: {err}") from err
    return records


def read_gold_labels(path, class_names: Sequence[str] = DEFAULT_CLASSES) -> dict[int, QualityDistribution]:
    """Hand-labelled classes (Wikiclass style) as one-hot distributions.

    Accepts JSON lines with ``rev_id`` and one of ``wp10``/``label``/``class``,
    or a two-column tab/comma separated file ``rev_id, class``.
    """
    labels = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(io.StringIO(text), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("{"):
            d = json.loads(line)
            rev_id = d.get("rev_id", d.get("revid"))
            label = next((d[k] for k in ("wp10", "label", "class", "quality") if k in d), None)
        else:
            parts = [p.strip() for p in line.replace("\t", ",").split(",")]
            if not parts[0].isdigit():
                continue  # header row
            rev_id, label = parts[0], parts[1] if len(parts) > 1 else None
        if rev_id is None or label is None:
            raise DataError(f"{path}:{lineno}: need a revision id and a class")
        labels[int(rev_id)] = QualityDistribution.one_hot(label, class_names)
    return labels
