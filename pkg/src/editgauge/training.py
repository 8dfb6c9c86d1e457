"""Training, evaluation and the lambda sweep over corpus records."""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .corpus import CorpusRecord
from .errors import DataError
from .estimator import EditQualityModel, report_for
from .metrics import EvalReport

log = logging.getLogger(__name__)

SWEEP_LAMBDAS = (0.0, 0.2, 0.5, 0.8, 0.9, 1.0)


@dataclass
class TrainConfig:
    lam: float = 0.9
    epochs: int = 20
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    loss_mode: str = "auto"
    encoder: str = "edit-sentence"
    pooling: str = "max"
    combine_message: bool = False
    beam: int = 5
    max_steps: int = 30
    patience: int | None = 5
    d_tok: int = 64
    d_lab: int = 8
    enc_hidden: int = 64
    dec_hidden: int = 128
    msg_hidden: int = 32
    min_msg_freq: int = 2
    clip_norm: float = 5.0
    eval_bleu: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def estimator(self, classes) -> EditQualityModel:
        params = asdict(self)
        params["loss"] = params.pop("loss_mode")
        return EditQualityModel(classes=tuple(classes), **params)


def corpus_classes(records: Sequence[CorpusRecord]) -> tuple[str, ...]:
    names = {r.quality.class_names for r in records if r.quality is not None}
    if len(names) != 1:
        raise DataError("records must carry quality labels over one class set")
    return names.pop()


def to_xy(records: Sequence[CorpusRecord]):
    """Edits, targets and messages; gold records give 1-D class names, others distributions."""
    if not records:
        raise DataError("empty record set")
    if any(r.quality is None for r in records):
        raise DataError("records without quality labels; run the label step first")
    gold = {r.gold for r in records}
    if len(gold) != 1:
        raise DataError("cannot mix gold and silver-labelled records")
    X = [r.edit for r in records]
    if gold.pop():
        y = np.array([r.quality.argmax() for r in records])
    else:
        y = np.array([r.quality.probs for r in records])
    return X, y, [list(r.message) for r in records]


def split_records(records: Sequence[CorpusRecord], split: str) -> list[CorpusRecord]:
    return [r for r in records if r.split == split]


def train(records: Sequence[CorpusRecord], cfg: TrainConfig) -> EditQualityModel:
    """Fit on the train split, select on the valid split; ``model.history_`` is the log."""
    tr, va = split_records(records, "train"), split_records(records, "valid")
    if not tr:
        raise DataError("train split is empty")
    if not va:
        raise DataError("valid split is empty")
    gold = tr[0].gold
    if cfg.loss_mode == "kl" and gold:
        raise DataError("loss 'kl' expects silver (soft) labels but the corpus is gold-labelled")
    if cfg.loss_mode == "ce" and not gold:
        raise DataError("loss 'ce' expects gold labels")
    model = cfg.estimator(corpus_classes(records))
    X, y, m = to_xy(tr)
    model.fit(X, y, messages=m, eval_set=to_xy(va))
    return model


def evaluate(records: Sequence[CorpusRecord], model: EditQualityModel, beam=None, max_steps=None) -> EvalReport:
    """Accuracy against the argmax of each target, macro-F1 and mean sentence BLEU-4."""
    X, y, m = to_xy(records)
    return report_for(model, X, y, m, beam, max_steps)


def length_correctness(records: Sequence[CorpusRecord], model: EditQualityModel) -> list[tuple[int, bool]]:
    """(edit length in characters, prediction correct) for each record."""
    X, y, m = to_xy(records)
    pred = model.predict(X, m if model.combine_message else None)
    return [(r.edit.n_chars, bool(p == r.quality.argmax())) for r, p in zip(records, pred)]


def _sweep_run(args):
    records, cfg = args
    model = train(records, cfg)
    report = evaluate(split_records(records, "valid"), model)
    return {"lam": cfg.lam, "f1": report.macro_f1, "acc": report.accuracy, "bleu": report.bleu4,
            "epochs": model.n_epochs_}


def sweep_lambda(records: Sequence[CorpusRecord], lambdas=SWEEP_LAMBDAS, base: TrainConfig | None = None,
                 n_jobs: int = 1) -> list[dict]:
    """Train and validate one model per lambda under a shared seed."""
    base = base or TrainConfig()
    for lam in lambdas:
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda {lam} outside [0, 1]")
    jobs = [(list(records), TrainConfig(**dict(asdict(base), lam=float(lam)))) for lam in lambdas]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(_sweep_run, jobs))
    return [_sweep_run(j) for j in jobs]


def _row_name(lam: float) -> str:
    if lam == 0.0:
        return "Only Generation (λ=0)"
    if lam == 1.0:
        return "Classification (λ=1)"
    return f"+ Generation λ={lam:g}"


def format_sweep(rows: Sequence[dict], fmt: str = "markdown") -> str:
    def cell(v):
        return "" if v is None else f"{v:.4f}"

    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "lambda", "f1", "acc", "bleu"])
        for r in rows:
            w.writerow([_row_name(r["lam"]), r["lam"], cell(r["f1"]), cell(r["acc"]), cell(r["bleu"])])
        return buf.getvalue()
    lines = ["| Model | F1 | Acc | BLEU |", "|---|---|---|---|"]
    for r in rows:
        lines.append(f"| {_row_name(r['lam'])} | {cell(r['f1']) or '-'} | {cell(r['acc']) or '-'} | "
                     f"{cell(r['bleu']) or '-'} |")
    return "\n".join(lines) + "\n"
