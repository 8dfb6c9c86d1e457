"""Deterministic synthetic data: revision histories, mutations and small corpora.

Used by the test-suite and to regenerate the files bundled under ``data/``.
"""
from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .corpus import DEFAULT_CLASSES, CorpusRecord, QualityDistribution, Revision
from .extraction import extract_edit, tokenize
from .ores import make_response

DATA_DIR = Path(__file__).parent / "data"

WORDS = (
    "river city army treaty empire king council railway harbor festival museum league album "
    "band season election party bridge castle church valley island province census mayor "
    "battle navy airport station tower forest mountain village school college university "
    "novel poem film song record tour player coach stadium market bank factory mine"
).split()
VERBS = "built founded won lost opened signed moved joined released recorded elected named".split()
LINKS = ["[[Paris]]", "[[Berlin]]", "[[World War II]]", "[[United States]]", "[[Rome]]"]
CATEGORIES = ["[[Category:History]]", "[[Category:Geography]]", "[[Category:Music]]"]


def random_sentence(rng: np.random.Generator, min_words=5, max_words=12) -> str:
    n = int(rng.integers(min_words, max_words + 1))
    words = [str(rng.choice(WORDS)) for _ in range(n)]
    words[int(rng.integers(1, n))] = str(rng.choice(VERBS))
    if rng.random() < 0.3:
        words[int(rng.integers(0, n))] = str(rng.choice(LINKS))
    if rng.random() < 0.15:
        words.append(f"in {int(rng.integers(1800, 2020))}")
    words[0] = words[0].capitalize() if not words[0].startswith("[[") else words[0]
    return " ".join(words) + "."


def random_article(rng: np.random.Generator, n_paragraphs=4, sentences=3) -> str:
    paras = [" ".join(random_sentence(rng) for _ in range(sentences)) for _ in range(n_paragraphs)]
    return "\n\n".join(paras) + "\n"


MUTATIONS = ("insert", "delete", "replace_sentence", "replace_word", "markup_churn", "new_paragraph")


def mutate(text: str, rng: np.random.Generator, kind: str | None = None) -> tuple[str, str]:
    """Apply one scripted edit to an article; returns ``(new_text, kind)``."""
    kind = kind or str(rng.choice(MUTATIONS))
    lines = text.split("\n")
    body = [i for i, line in enumerate(lines) if line.strip() and not line.startswith("[[Category")]
    if not body:
        kind = "new_paragraph"
    if kind == "new_paragraph":
        lines.insert(len(lines) - 1 if lines and lines[-1] == "" else len(lines),
                     " ".join(random_sentence(rng) for _ in range(2)))
        return "\n".join(lines), kind
    if kind == "markup_churn":
        cat = str(rng.choice(CATEGORIES))
        if cat in lines:
            lines.remove(cat)
        else:
            lines.insert(len(lines) - 1 if lines[-1] == "" else len(lines), cat)
        return "\n".join(lines), kind
    i = int(rng.choice(body))
    sents = [s for s in lines[i].split(". ") if s]
    j = int(rng.integers(0, len(sents)))
    if kind == "insert":
        sents.insert(j, random_sentence(rng).rstrip("."))
    elif kind == "delete" and len(sents) > 1:
        sents.pop(j)
    elif kind == "replace_sentence":
        sents[j] = random_sentence(rng).rstrip(".")
    else:
        kind = "replace_word"
        words = sents[j].split(" ")
        words[int(rng.integers(0, len(words)))] = str(rng.choice(WORDS))
        sents[j] = " ".join(words)
    line = ". ".join(s.rstrip(".") for s in sents)
    lines[i] = line if line.endswith(".") else line + "."
    return "\n".join(lines), kind


# --- separable corpus ---------------------------------------------------------------------------------

CLASS_MARKERS = {
    "FA": "brilliant", "GA": "solid", "B": "decent", "C": "patchy", "Start": "rough", "Stub": "tiny",
}
CLASS_MESSAGES = {
    "FA": "polish featured prose carefully",
    "GA": "expand good article section",
    "B": "add sources for claims",
    "C": "fix grammar and layout",
    "Start": "start new history section",
    "Stub": "tag stub for cleanup",
}


def soft_target(label: str, classes=DEFAULT_CLASSES, peak=0.75) -> QualityDistribution:
    rest = (1.0 - peak) / (len(classes) - 1)
    return QualityDistribution(tuple(classes), tuple(peak if c == label else rest for c in classes))


def separable_corpus(n: int = 32, seed: int = 0, classes=DEFAULT_CLASSES, split: str | None = "train"):
    """Records whose class is fixed by a marker token and whose message is fixed by the class."""
    rng = np.random.default_rng(seed)
    records = []
    base = datetime(2020, 1, 1, tzinfo=timezone.utc)
    for k in range(n):
        label = classes[k % len(classes)]
        prev = random_sentence(rng) + " " + random_sentence(rng)
        extra = random_sentence(rng, 3, 6).rstrip(".")
        words = extra.split(" ")
        words.insert(int(rng.integers(1, len(words) + 1)), CLASS_MARKERS[label])
        added = " ".join(words) + "."
        curr = prev + " " + added if rng.random() < 0.5 else added + " " + prev
        edit = extract_edit(prev, curr)
        records.append(CorpusRecord(
            rev_id=1000 + k, edit=edit, message=tuple(tokenize(CLASS_MESSAGES[label])),
            quality=soft_target(label, classes), gold=False, split=split, parent_id=900 + k,
            timestamp=base + timedelta(hours=k), page="Fixture"))
    return records


# --- revision histories ------------------------------------------------------------------------------

def mini_history(n: int = 200, seed: int = 7, title: str = "Sample article") -> list[Revision]:
    """A single-page history of ``n`` revisions built by scripted mutations."""
    rng = np.random.default_rng(seed)
    text = random_article(rng)
    ts = datetime(2015, 1, 1, tzinfo=timezone.utc)
    revs = []
    parent = None
    for k in range(n):
        rev_id = 50_000 + 3 * k
        if k == 0:
            message = "create article"
        else:
            text, kind = mutate(text, rng)
            roll = rng.random()
            if roll < 0.1:
                message = ""
            else:
                message = {
                    "insert": "add sentence", "delete": "remove claim", "replace_sentence": "rewrite sentence",
                    "replace_word": "fix wording", "markup_churn": "categorize", "new_paragraph": "expand article",
                }[kind]
        revs.append(Revision(rev_id, ts, text, message, parent, f"User{int(rng.integers(1, 20))}", title))
        parent = rev_id
        ts += timedelta(hours=int(rng.integers(1, 72)))
    return revs


def quality_for_length(n_chars: int, rng: np.random.Generator, classes=DEFAULT_CLASSES) -> dict:
    """Pseudo-ORES distribution favouring better classes for longer articles."""
    # classes are ordered best to worst; longer text shifts mass toward the front
    position = np.clip(5.0 - n_chars / 600.0, 0.0, 5.0)
    logits = -0.8 * (np.arange(len(classes)) - position) ** 2 + rng.normal(0, 0.1, len(classes))
    probs = np.exp(logits - logits.max())
    probs = np.round(probs / probs.sum(), 4)
    probs[np.argmax(probs)] += round(1.0 - probs.sum(), 4)
    return {c: float(p) for c, p in zip(classes, probs)}


def write_ores_cache(revs, cache_dir, wiki="enwiki", model="articlequality", seed=11) -> None:
    rng = np.random.default_rng(seed)
    root = Path(cache_dir) / wiki / model
    root.mkdir(parents=True, exist_ok=True)
    for r in revs:
        body = make_response(wiki, r.rev_id, quality_for_length(len(r.wikitext), rng), model)
        (root / f"{r.rev_id}.json").write_text(json.dumps(body, sort_keys=True), encoding="utf-8")


def growing_history(months: int = 24, per_month: int = 4, start_chars: int = 2000,
                    growth_per_rev: int = 120, seed: int = 3) -> list[Revision]:
    """Articles growing linearly while each edit adds one bounded-size line."""
    rng = np.random.default_rng(seed)
    lines = []
    while sum(len(x) + 1 for x in lines) < start_chars:
        lines.append(random_sentence(rng))
    revs = []
    rev_id = 10
    for m in range(months):
        for k in range(per_month):
            target = sum(len(x) + 1 for x in lines) + growth_per_rev
            line = random_sentence(rng)
            while len(line) < growth_per_rev - 1:
                line = line[:-1] + " " + random_sentence(rng).lower()
            lines.append(line[:growth_per_rev - 1])
            ts = datetime(2010 + (m // 12), m % 12 + 1, 1 + 5 * k, 12, tzinfo=timezone.utc)
            revs.append(Revision(rev_id, ts, "\n".join(lines) + "\n", "grow", None, None, "Growing"))
            assert sum(len(x) + 1 for x in lines) == target
            rev_id += 1
    return revs
