"""scikit-learn style estimator for joint edit classification and message generation."""
from __future__ import annotations

import hashlib
import json
import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import autograd as ag
from . import model as M
from .corpus import DEFAULT_CLASSES
from .errors import CheckpointMismatchError, NumericalError
from .extraction import Edit
from .metrics import bleu4_sentence, classification_report

log = logging.getLogger(__name__)

ARCH_KEYS = ("d_tok", "d_lab", "enc_hidden", "dec_hidden", "msg_hidden", "encoder", "pooling", "combine_message")


def check_edits(X) -> list[Edit]:
    X = list(X)
    if not X:
        raise ValueError("no edits given")
    for i, e in enumerate(X):
        if not isinstance(e, Edit):
            raise TypeError(f"item {i} is {type(e).__name__}, expected Edit")
        if not e.sentences:
            raise ValueError(f"edit {i} has no edit-sentences")
    return X


def check_targets(y, classes) -> tuple[np.ndarray, bool]:
    """Return ``(n x k probability matrix, is_gold)`` from labels or distributions.

    One-dimensional ``y`` holds class names or indices (gold labels); a 2-D
    ``y`` holds soft distributions whose rows must sum to one.
    """
    y = np.asarray(y)
    k = len(classes)
    if y.ndim == 1:
        index = {c: i for i, c in enumerate(classes)}
        idx = []
        for v in y.tolist():
            if isinstance(v, str):
                if v not in index:
                    raise ValueError(f"unknown class {v!r}")
                idx.append(index[v])
            else:
                if not 0 <= int(v) < k:
                    raise ValueError(f"class index {v} out of range")
                idx.append(int(v))
        return np.eye(k)[idx], True
    if y.ndim != 2 or y.shape[1] != k:
        raise ValueError(f"targets must be 1-D labels or an n x {k} matrix")
    y = y.astype(np.float64)
    if np.any(y < 0) or not np.allclose(y.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("target distributions must be non-negative and sum to 1")
    return y, False


def vocab_fingerprint(tok_itos, msg_itos) -> str:
    blob = json.dumps([list(tok_itos), list(msg_itos)], ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class EditQualityModel(ClassifierMixin, BaseEstimator):
    """Edit-sentence BiLSTM quality classifier with an auxiliary message generator.

    The training objective is ``lam * classification + (1 - lam) * generation``.
    ``lam=1`` trains a pure classifier, ``lam=0`` a pure message generator.

    Parameters
    ----------
    lam : float
        Weight of the classification loss.
    encoder : {"edit-sentence", "no-tags", "regular"}
        Input layout; see ``editgauge.model.edit_input``.
    loss : {"auto", "kl", "ce"}
        KL divergence against soft targets or cross-entropy against gold
        labels. ``auto`` picks from the shape of ``y``.
    combine_message : bool
        Feed a pooled BiLSTM encoding of the message to the classifier as
        well (the feature-combination baseline). Messages are then required
        at prediction time.
    patience : int or None
        Early-stopping patience in epochs on the validation set.
    """

    def __init__(self, lam=0.9, encoder="edit-sentence", loss="auto", classes=DEFAULT_CLASSES,
                 d_tok=64, d_lab=8, enc_hidden=64, dec_hidden=128, msg_hidden=32, pooling="max",
                 combine_message=False, epochs=20, batch_size=8, lr=1e-3, clip_norm=5.0, patience=5,
                 beam=5, max_steps=30, min_msg_freq=2, seed=0, eval_bleu=True):
        self.lam = lam
        self.encoder = encoder
        self.loss = loss
        self.classes = classes
        self.d_tok = d_tok
        self.d_lab = d_lab
        self.enc_hidden = enc_hidden
        self.dec_hidden = dec_hidden
        self.msg_hidden = msg_hidden
        self.pooling = pooling
        self.combine_message = combine_message
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.clip_norm = clip_norm
        self.patience = patience
        self.beam = beam
        self.max_steps = max_steps
        self.min_msg_freq = min_msg_freq
        self.seed = seed
        self.eval_bleu = eval_bleu

    def __sklearn_is_fitted__(self):
        return hasattr(self, "params_")

    # --- setup -----------------------------------------------------------------

    def _validate_params(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.encoder not in M.ENCODERS:
            raise ValueError(f"encoder must be one of {M.ENCODERS}")
        if self.loss not in ("auto", "kl", "ce"):
            raise ValueError("loss must be 'auto', 'kl' or 'ce'")
        if self.pooling not in ("max", "mean"):
            raise ValueError("pooling must be 'max' or 'mean'")

    @property
    def uses_generation(self) -> bool:
        return self.lam < 1.0

    @property
    def uses_classification(self) -> bool:
        return self.lam > 0.0

    def _needs_messages(self):
        return self.uses_generation or self.combine_message

    def _model_config(self) -> M.ModelConfig:
        return M.ModelConfig(len(self.tok_vocab_), len(self.msg_vocab_), len(self.classes_),
                             **{k: getattr(self, k) for k in ARCH_KEYS})

    def config_hash(self) -> str:
        check_is_fitted(self)
        blob = {
            "params": {k: v for k, v in self.get_params().items() if k in ARCH_KEYS or k in ("lam", "loss")},
            "classes": list(self.classes_),
            "vocab": self.vocab_fingerprint_,
        }
        blob["params"]["classes"] = list(self.classes_)
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode("utf-8")).hexdigest()

    @property
    def vocab_fingerprint_(self) -> str:
        return vocab_fingerprint(self.tok_vocab_.itos, self.msg_vocab_.itos)

    # --- per-example computation ---------------------------------------------------

    def _features(self, edit, msg_ids, params, cfg):
        enc = M.encode(edit, self.tok_vocab_, params, cfg)
        feats = M.encode_message_and_combine(enc, msg_ids, params, cfg) if cfg.combine_message else enc.pooled
        return enc, feats

    def _example_loss(self, edit, target, gold, msg_ids, params, cfg):
        enc, feats = self._features(edit, msg_ids, params, cfg)
        parts = {"cls": None, "gen": None}
        total = None
        if self.uses_classification:
            logp = M.classify(feats, params)
            cls = ag.cross_entropy_loss(logp, int(np.argmax(target))) if gold else ag.kl_div_loss(logp, target)
            parts["cls"] = cls.item()
            total = cls * self.lam
        if self.uses_generation:
            gen = M.generation_loss(enc, msg_ids, self.msg_vocab_, params)
            parts["gen"] = gen.item()
            total = gen * (1.0 - self.lam) if total is None else total + gen * (1.0 - self.lam)
        return total, parts

    # --- fitting ----------------------------------------------------------------------

    def _prepare(self, X, y, messages):
        X = check_edits(X)
        targets, gold = check_targets(y, self.classes_)
        if len(targets) != len(X):
            raise ValueError("X and y have different lengths")
        if self._needs_messages():
            if messages is None or len(messages) != len(X):
                raise ValueError("messages (one token list per edit) are required for this configuration")
            if any(len(m) == 0 for m in messages):
                raise ValueError("messages must be non-empty")
        return X, targets, gold

    def fit(self, X, y, messages=None, eval_set=None):
        """Train on edits ``X`` with targets ``y``.

        ``eval_set`` is an optional ``(X_val, y_val, messages_val)`` tuple used
        for per-epoch logging and early stopping on validation accuracy.
        """
        self._validate_params()
        self.classes_ = np.asarray(self.classes)
        X, targets, gold = self._prepare(X, y, messages)
        loss_mode = self.loss if self.loss != "auto" else ("ce" if gold else "kl")
        if loss_mode == "ce" and not gold:
            raise ValueError("loss='ce' needs gold (hard) labels")
        if loss_mode == "kl" and gold and self.loss == "kl":
            raise ValueError("loss='kl' needs soft target distributions")
        self.loss_mode_ = loss_mode

        self.tok_vocab_ = M.Vocabulary.build(s.tokens for e in X for s in e.sentences)
        msgs = list(messages) if messages is not None else []
        self.msg_vocab_ = M.Vocabulary.build(msgs, self.min_msg_freq)
        cfg = self._model_config()
        rng = np.random.default_rng(self.seed)
        self.params_ = M.init_params(cfg, rng)
        msg_ids = [self.msg_vocab_.encode(m) for m in msgs] if msgs else [None] * len(X)

        if eval_set is not None:
            X_val, y_val, m_val = (tuple(eval_set) + (None,))[:3]
            X_val, val_targets, val_gold = self._prepare(X_val, y_val, m_val)
            val = (X_val, val_targets, val_gold, m_val)
        else:
            val = None

        opt = ag.Adam(self.params_, lr=self.lr, clip_norm=self.clip_norm)
        self.history_ = []
        best_key, best_params, stale = None, None, 0
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(len(X))
            sums = {"cls": 0.0, "gen": 0.0, "total": 0.0}
            for start in range(0, len(order), self.batch_size):
                batch = order[start:start + self.batch_size]
                opt.zero_grad()
                for i in batch:
                    total, parts = self._example_loss(X[i], targets[i], gold, msg_ids[i], self.params_, cfg)
                    if not np.isfinite(total.item()):
                        raise NumericalError(f"non-finite loss at epoch {epoch}, example {int(i)}")
                    (total * (1.0 / len(batch))).backward()
                    sums["total"] += total.item()
                    for k in ("cls", "gen"):
                        if parts[k] is not None:
                            sums[k] += parts[k]
                opt.step()
            entry = {
                "epoch": epoch,
                "train_loss": sums["total"] / len(X),
                "train_cls_loss": sums["cls"] / len(X) if self.uses_classification else None,
                "train_gen_loss": sums["gen"] / len(X) if self.uses_generation else None,
                "cls_weight": self.lam,
                "gen_weight": 1.0 - self.lam,
            }
            if val is not None:
                entry.update(self._validation(val, cfg))
                key = (entry["val_accuracy"] if self.uses_classification else 0.0, -entry["val_loss"])
                if best_key is None or key > best_key:
                    best_key, stale = key, 0
                    best_params = {k: p.data.copy() for k, p in self.params_.items()}
                    entry["best"] = True
                else:
                    stale += 1
            self.history_.append(entry)
            log.info("epoch %d %s", epoch, {k: v for k, v in entry.items() if k != "epoch"})
            if val is not None and self.patience is not None and stale >= self.patience:
                break
        if best_params is not None:
            for k, p in self.params_.items():
                p.data = best_params[k]
        self.n_epochs_ = len(self.history_)
        return self

    def _validation(self, val, cfg) -> dict:
        X_val, targets, gold, m_val = val
        m_ids = [self.msg_vocab_.encode(m) for m in m_val] if m_val is not None else [None] * len(X_val)
        loss = 0.0
        preds = []
        bleus = []
        for i, edit in enumerate(X_val):
            total, _ = self._example_loss(edit, targets[i], gold, m_ids[i], self.params_, cfg)
            loss += total.item()
            enc, feats = self._features(edit, m_ids[i], self.params_, cfg)
            if self.uses_classification:
                preds.append(int(np.argmax(M.classify(feats, self.params_).data)))
            if self.uses_generation and self.eval_bleu:
                hyp = M.beam_search(enc, self.params_, self.msg_vocab_, self.beam, self.max_steps)
                bleus.append(bleu4_sentence(self.msg_vocab_.decode(hyp), list(m_val[i])))
        out = {"val_loss": loss / len(X_val)}
        if self.uses_classification:
            report = classification_report(targets.argmax(axis=1), preds, list(self.classes_))
            out.update(val_accuracy=report.accuracy, val_macro_f1=report.macro_f1)
        if bleus:
            out["val_bleu4"] = float(np.mean(bleus))
        return out

    # --- inference ------------------------------------------------------------------------

    def _message_ids(self, X, messages):
        if self.combine_message:
            if messages is None or len(messages) != len(X):
                raise ValueError("this model was trained with combine_message=True and needs messages")
            return [self.msg_vocab_.encode(m) for m in messages]
        return [None] * len(X)

    def predict_log_proba(self, X, messages=None) -> np.ndarray:
        check_is_fitted(self)
        if not self.uses_classification:
            raise ValueError("a generation-only model (lam=0) has no classifier")
        X = check_edits(X)
        cfg = self._model_config()
        ids = self._message_ids(X, messages)
        return np.stack([M.classify(self._features(e, m, self.params_, cfg)[1], self.params_).data
                         for e, m in zip(X, ids)])

    def predict_proba(self, X, messages=None) -> np.ndarray:
        return np.exp(self.predict_log_proba(X, messages))

    def predict(self, X, messages=None) -> np.ndarray:
        return self.classes_[self.predict_proba(X, messages).argmax(axis=1)]

    def score(self, X, y, messages=None, sample_weight=None) -> float:
        targets, _ = check_targets(y, self.classes_)
        pred = self.predict_proba(X, messages).argmax(axis=1)
        return float(np.average(pred == targets.argmax(axis=1), weights=sample_weight))

    def generate(self, X, beam=None, max_steps=None) -> list[list[str]]:
        """Beam-search edit messages for each edit."""
        check_is_fitted(self)
        if not self.uses_generation:
            raise ValueError("a classification-only model (lam=1) has no trained generator")
        X = check_edits(X)
        cfg = self._model_config()
        beam = self.beam if beam is None else beam
        max_steps = self.max_steps if max_steps is None else max_steps
        out = []
        for edit in X:
            enc = M.encode(edit, self.tok_vocab_, self.params_, cfg)
            out.append(self.msg_vocab_.decode(M.beam_search(enc, self.params_, self.msg_vocab_, beam, max_steps)))
        return out

    # --- persistence ---------------------------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self)
        params = {k: v for k, v in self.get_params().items()}
        params["classes"] = list(self.classes_)
        meta = {
            "estimator_params": params,
            "loss_mode": self.loss_mode_,
            "tok_vocab": self.tok_vocab_.itos,
            "msg_vocab": self.msg_vocab_.itos,
            "history": self.history_,
            "config_hash": self.config_hash(),
        }
        ag.save_arrays(path, {k: p.data for k, p in self.params_.items()}, meta)

    @classmethod
    def load(cls, path, expected_hash: str | None = None) -> "EditQualityModel":
        arrays, meta = ag.load_arrays(path)
        est = cls(**meta["estimator_params"])
        est.classes_ = np.asarray(est.classes)
        est.loss_mode_ = meta["loss_mode"]
        est.tok_vocab_ = M.Vocabulary(meta["tok_vocab"][len(M.Vocabulary.SPECIALS):])
        est.msg_vocab_ = M.Vocabulary(meta["msg_vocab"][len(M.Vocabulary.SPECIALS):])
        est.history_ = meta.get("history", [])
        est.n_epochs_ = len(est.history_)
        est.params_ = {k: ag.parameter(v, k) for k, v in arrays.items()}
        if est.config_hash() != meta["config_hash"]:
            raise CheckpointMismatchError("checkpoint metadata does not match its stored config hash")
        if expected_hash is not None and expected_hash != meta["config_hash"]:
            raise CheckpointMismatchError("checkpoint config hash differs from the expected one")
        expected = M.init_params(est._model_config(), np.random.default_rng(0))
        for k, t in expected.items():
            if k not in est.params_ or est.params_[k].shape != t.shape:
                raise CheckpointMismatchError(f"parameter {k!r} missing or mis-shaped in checkpoint")
        return est

    def check_corpus(self, train_edits, train_messages) -> None:
        """Raise unless the vocabularies rebuild identically from this training data."""
        check_is_fitted(self)
        tok = M.Vocabulary.build(s.tokens for e in train_edits for s in e.sentences)
        msg = M.Vocabulary.build(train_messages or [], self.min_msg_freq)
        if vocab_fingerprint(tok.itos, msg.itos) != self.vocab_fingerprint_:
            raise CheckpointMismatchError("checkpoint vocabularies do not match this corpus's training split")


def report_for(model: EditQualityModel, X, y, messages=None, beam=None, max_steps=None):
    """``EvalReport`` for a fitted model on one split."""
    check_is_fitted(model)
    X = check_edits(X)
    targets, _ = check_targets(y, model.classes_)
    if model.uses_classification:
        pred = model.predict_proba(X, messages).argmax(axis=1)
        report = classification_report(targets.argmax(axis=1), pred, list(model.classes_))
    else:
        report = classification_report([], [], list(model.classes_))
        report.accuracy = report.macro_f1 = None
        report.n = len(X)
    if model.uses_generation and messages is not None:
        hyps = model.generate(X, beam, max_steps)
        report.bleu4 = float(np.mean([bleu4_sentence(h, list(r)) for h, r in zip(hyps, messages)]))
    return report
