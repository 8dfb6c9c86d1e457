"""Classification and generation metrics."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Stand-in count for zero unigram matches: keeps BLEU positive for any
# non-empty candidate while staying far below any real match.
UNIGRAM_FLOOR = 1e-9


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4_sentence(candidate: Sequence[str], reference: Sequence[str], max_n: int = 4) -> float:
    """Smoothed sentence-level BLEU.

    Clipped n-gram precisions for n = 1..max_n, add-one smoothing for n >= 2,
    geometric mean, times the brevity penalty ``min(1, exp(1 - r/c))``.
    """
    if not reference:
        raise ValueError("reference must be non-empty")
    if not candidate:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand, ref = _ngrams(candidate, n), _ngrams(reference, n)
        matches = sum(min(c, ref[g]) for g, c in cand.items())
        total = max(len(candidate) - n + 1, 0)
        if n == 1:
            p = matches / total if matches else UNIGRAM_FLOOR / total
        else:
            p = (matches + 1) / (total + 1)
        log_sum += math.log(p)
    c, r = len(candidate), len(reference)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)
    return bp * math.exp(log_sum / max_n)


def mean_bleu(candidates, references) -> float:
    scores = [bleu4_sentence(c, r) for c, r in zip(candidates, references)]
    return float(np.mean(scores)) if scores else 0.0


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        cm[t, p] += 1
    return cm


@dataclass
class EvalReport:
    accuracy: float | None
    macro_f1: float | None
    bleu4: float | None = None
    per_class: dict = field(default_factory=dict)
    confusion: list = field(default_factory=list)
    absent_classes: list = field(default_factory=list)
    n: int = 0

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "bleu4": self.bleu4,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "absent_classes": self.absent_classes,
        }


def classification_report(y_true, y_pred, class_names: Sequence[str]) -> EvalReport:
    """Accuracy, per-class P/R/F1 and macro-F1.

    Any 0/0 ratio is taken as 0. Classes missing from both gold and
    predictions are listed in ``absent_classes`` and left out of the macro
    average, so a diagonal confusion matrix always gives macro-F1 == accuracy.
    """
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    k = len(class_names)
    cm = confusion_matrix(y_true, y_pred, k)
    total = cm.sum()
    accuracy = float(np.trace(cm) / total) if total else 0.0
    per_class, f1s, absent = {}, [], []
    for c, name in enumerate(class_names):
        tp = cm[c, c]
        pred_c, true_c = cm[:, c].sum(), cm[c, :].sum()
        precision = tp / pred_c if pred_c else 0.0
        recall = tp / true_c if true_c else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[name] = {"precision": float(precision), "recall": float(recall), "f1": float(f1),
                           "support": int(true_c)}
        if pred_c == 0 and true_c == 0:
            absent.append(name)
        else:
            f1s.append(f1)
    macro = float(np.mean(f1s)) if f1s else 0.0
    return EvalReport(accuracy, macro, None, per_class, cm.tolist(), absent, int(total))
