"""From a revision pair to a set of token-labeled edit-sentences."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .diff import ADD, DEL, KEEP, line_diff, split_lines, token_diff

LABELS = (KEEP, ADD, DEL)

# --- tokenization -----------------------------------------------------------

_MARKUP = [
    r"<!--", r"-->", r"\[\[", r"\]\]", r"\{\{", r"\}\}", r"\{\|", r"\|\}", r"\|-", r"\|\+",
    r"'{2,5}", r"={2,6}", r"</?[A-Za-z][A-Za-z0-9]*/?>?", r"&[a-zA-Z]+;", r"~{3,5}",
]
_TOKEN_RE = re.compile("|".join(_MARKUP) + r"|\w+(?:['’]\w+)*|\S", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Split on whitespace, detach punctuation, keep wikitext markup atomic.

    Tokens never contain whitespace and their concatenation equals ``text``
    with all whitespace removed.
    """
    return _TOKEN_RE.findall(text)


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


# --- sentence segmentation ----------------------------------------------------

ABBREVIATIONS = {
    "en": {
        "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "vs", "etc", "e.g", "i.e",
        "inc", "ltd", "co", "corp", "no", "vol", "fig", "gen", "col", "lt", "sgt", "capt",
        "rev", "gov", "sen", "rep", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
        "sept", "oct", "nov", "dec", "approx", "ca", "cf", "al", "u.s", "u.k", "d.c",
    },
    "de": {
        "dr", "prof", "nr", "st", "bzw", "ca", "usw", "vgl", "evtl", "ggf", "z.b", "u.a",
        "d.h", "s.o", "s.u", "inkl", "exkl", "hrsg", "jh", "jhd", "mio", "mrd", "bspw",
        "abs", "abschn", "bd", "geb", "gest", "str", "tel", "u.ä", "v.a", "z.t",
    },
}
ABBREVIATIONS["other"] = ABBREVIATIONS["en"] | ABBREVIATIONS["de"]

_BOUNDARY_RE = re.compile(r"([.!?]+)([\"'”’)\]]*)(\s+)(?=[\"'“‘(\[]*[A-ZÄÖÜ])")

Segmenter = Callable[[str, str], "list[str]"]


def _is_abbreviation(prefix: str, lang: str) -> bool:
    words = prefix.split()
    if not words:
        return False
    word = words[-1].lstrip("(\"'[").lower()
    if len(word) == 1 and word.isalpha():
        # initials such as "J. Smith"
        return True
    return word in ABBREVIATIONS.get(lang, ABBREVIATIONS["other"])


def rule_segmenter(text: str, lang: str = "en") -> list[str]:
    """Rule-based splitter: terminator, whitespace, then an uppercase letter."""
    sentences = []
    for line in text.split("\n"):
        start = 0
        for m in _BOUNDARY_RE.finditer(line):
            if m.group(1) == "." and _is_abbreviation(line[start:m.start(1)], lang):
                continue
            sentence = line[start:m.end(2)].strip()
            if sentence:
                sentences.append(sentence)
            start = m.end(3)
        tail = line[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


def line_segmenter(text: str, lang: str = "en") -> list[str]:
    """For pre-segmented input: every non-blank line is one sentence."""
    return [line.strip() for line in text.split("\n") if line.strip()]


SEGMENTERS: dict[str, Segmenter] = {"rules": rule_segmenter, "lines": line_segmenter}


def register_segmenter(name: str, func: Segmenter) -> None:
    SEGMENTERS[name] = func


def segment_sentences(text: str, lang: str = "en", segmenter: str | Segmenter = "rules") -> list[str]:
    func = SEGMENTERS[segmenter] if isinstance(segmenter, str) else segmenter
    return func(text, lang)


# --- sentence bookkeeping -----------------------------------------------------

def dedup_common(removed_sents: Sequence[str], added_sents: Sequence[str]) -> tuple[list[str], list[str]]:
    """Cancel sentences present on both sides, one occurrence against one."""
    common = Counter(map(normalize_ws, removed_sents)) & Counter(map(normalize_ws, added_sents))

    def drop(sents):
        budget = Counter(common)
        kept = []
        for s in sents:
            key = normalize_ws(s)
            if budget[key] > 0:
                budget[key] -= 1
            else:
                kept.append(s)
        return kept

    return drop(removed_sents), drop(added_sents)


def lcs_length(a: str, b: str) -> int:
    """Length of the longest common subsequence, bit-parallel (Hyyrö 2004)."""
    if not a or not b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    masks: dict[str, int] = {}
    for i, ch in enumerate(a):
        masks[ch] = masks.get(ch, 0) | (1 << i)
    full = (1 << len(a)) - 1
    v = full
    for ch in b:
        u = v & masks.get(ch, 0)
        v = ((v + u) | (v - u)) & full
    return len(a) - bin(v).count("1")


def similarity(a: str, b: str) -> float:
    a, b = normalize_ws(a), normalize_ws(b)
    if not a or not b:
        return 0.0
    return 2.0 * lcs_length(a, b) / (len(a) + len(b))


@dataclass(frozen=True)
class SentencePair:
    before: str
    after: str
    similarity: float = 0.0

    def __post_init__(self):
        if not self.before and not self.after:
            raise ValueError("sentence pair with both sides empty")
        if (not self.before or not self.after) and self.similarity != 0.0:
            raise ValueError("a one-sided pair has similarity 0")


def match_pairs(removed_sents: Sequence[str], added_sents: Sequence[str], threshold: float = 0.5) -> list[SentencePair]:
    """Greedy best-first pairing of removed and added sentences."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly between 0 and 1")
    norm_r = [normalize_ws(s) for s in removed_sents]
    norm_a = [normalize_ws(s) for s in added_sents]
    candidates = []
    for i, r in enumerate(norm_r):
        for j, a in enumerate(norm_a):
            if not r or not a:
                continue
            # ratio can't exceed 2*min/(sum); skip hopeless pairs cheaply
            if 2.0 * min(len(r), len(a)) / (len(r) + len(a)) < threshold:
                continue
            ratio = 2.0 * lcs_length(r, a) / (len(r) + len(a))
            if ratio >= threshold:
                candidates.append((-ratio, i, j))
    candidates.sort()
    used_r, used_a = {}, set()
    for neg_ratio, i, j in candidates:
        if i in used_r or j in used_a:
            continue
        used_r[i] = (j, -neg_ratio)
        used_a.add(j)

    pairs = []
    for i, s in enumerate(removed_sents):
        if i in used_r:
            j, ratio = used_r[i]
            pairs.append(SentencePair(s, added_sents[j], ratio))
        else:
            pairs.append(SentencePair(s, ""))
    pairs.extend(SentencePair("", s) for j, s in enumerate(added_sents) if j not in used_a)
    return pairs


# --- edit representation ------------------------------------------------------

@dataclass(frozen=True)
class EditSentence:
    tokens: tuple[str, ...]
    labels: str

    def __post_init__(self):
        if len(self.tokens) != len(self.labels) or not self.tokens:
            raise ValueError("edit-sentence needs one label per token and at least one token")
        if set(self.labels) - set(LABELS):
            raise ValueError(f"unknown labels in {self.labels!r}")

    def before(self) -> list[str]:
        return [t for t, lab in zip(self.tokens, self.labels) if lab != ADD]

    def after(self) -> list[str]:
        return [t for t, lab in zip(self.tokens, self.labels) if lab != DEL]

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "labels": self.labels}

    @classmethod
    def from_dict(cls, d: dict) -> "EditSentence":
        return cls(tuple(d["tokens"]), d["labels"])


@dataclass(frozen=True)
class Edit:
    sentences: tuple[EditSentence, ...] = ()
    n_hunks: int = 0
    chars_added: int = 0
    chars_removed: int = 0

    def __len__(self):
        return len(self.sentences)

    @property
    def n_chars(self) -> int:
        return self.chars_added + self.chars_removed

    def to_dict(self) -> dict:
        return {
            "sentences": [s.to_dict() for s in self.sentences],
            "n_hunks": self.n_hunks,
            "chars_added": self.chars_added,
            "chars_removed": self.chars_removed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Edit":
        return cls(
            tuple(EditSentence.from_dict(s) for s in d["sentences"]),
            d.get("n_hunks", 0),
            d.get("chars_added", 0),
            d.get("chars_removed", 0),
        )


def build_edit_sentence(pair: SentencePair, tokenizer: Callable[[str], list[str]] = tokenize) -> EditSentence:
    alignment = token_diff(tokenizer(pair.before), tokenizer(pair.after))
    if not alignment.ops:
        raise ValueError("both sides of the sentence pair tokenize to nothing")
    return EditSentence(tuple(alignment.tokens), alignment.labels)


@dataclass(frozen=True)
class ExtractionConfig:
    lang: str = "en"
    match_threshold: float = 0.5
    segmenter: str = "rules"
    tokenizer: Callable[[str], list[str]] = field(default=tokenize, compare=False)


def extract_edit(prev_text: str, curr_text: str, cfg: ExtractionConfig | None = None) -> Edit:
    """Diff two wikitext versions and build the edit representation."""
    cfg = cfg or ExtractionConfig()
    hunks = line_diff(split_lines(prev_text), split_lines(curr_text))
    sentences = []
    added = removed = 0
    for hunk in hunks:
        removed += sum(len(line) for line in hunk.removed_lines)
        added += sum(len(line) for line in hunk.added_lines)
        old = segment_sentences("\n".join(hunk.removed_lines), cfg.lang, cfg.segmenter)
        new = segment_sentences("\n".join(hunk.added_lines), cfg.lang, cfg.segmenter)
        old, new = dedup_common(old, new)
        for pair in match_pairs(old, new, cfg.match_threshold):
            if not cfg.tokenizer(pair.before) and not cfg.tokenizer(pair.after):
                continue
            sentences.append(build_edit_sentence(pair, cfg.tokenizer))
    return Edit(tuple(sentences), len(hunks), added, removed)


def _text(rev) -> str:
    return rev if isinstance(rev, str) else rev.wikitext


class EditExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping (previous, current) revision pairs to ``Edit`` objects.

    Items of ``X`` are 2-tuples of wikitext strings or of ``Revision`` objects.
    Stateless: ``fit`` only validates the parameters.
    """

    def __init__(self, lang="en", match_threshold=0.5, segmenter="rules"):
        self.lang = lang
        self.match_threshold = match_threshold
        self.segmenter = segmenter

    def fit(self, X=None, y=None):
        if not 0.0 < self.match_threshold < 1.0:
            raise ValueError("match_threshold must lie strictly between 0 and 1")
        if isinstance(self.segmenter, str) and self.segmenter not in SEGMENTERS:
            raise ValueError(f"unknown segmenter {self.segmenter!r}")
        self.n_features_in_ = 2
        return self

    def transform(self, X: Iterable) -> list[Edit]:
        cfg = ExtractionConfig(self.lang, self.match_threshold, self.segmenter)
        return [extract_edit(_text(prev), _text(curr), cfg) for prev, curr in X]

    def __sklearn_is_fitted__(self):
        return True
