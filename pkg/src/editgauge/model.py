"""Edit encoder, quality classifier and attention decoder.

Functions here are stateless: they take a parameter dictionary (name ->
``Tensor``) plus a ``ModelConfig`` and build the computation. The trainable
estimator wrapping them lives in ``editgauge.estimator``.
"""
from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .diff import ADD, DEL, KEEP
from .extraction import Edit

LABEL_IDS = {KEEP: 0, ADD: 1, DEL: 2}
ENCODERS = ("edit-sentence", "no-tags", "regular")


class Vocabulary:
    PAD, UNK, BOS, EOS, SEP, MARK = range(6)
    SPECIALS = ("<pad>", "<unk>", "<s>", "</s>", "<sep>", "<mark>")

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos = list(self.SPECIALS)
        self.itos.extend(t for t in tokens if t not in self.SPECIALS)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]], min_freq: int = 1) -> "Vocabulary":
        counts = Counter(tok for seq in sequences for tok in seq)
        kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
        return cls(kept)

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def __getitem__(self, token: str) -> int:
        return self.stoi.get(token, self.UNK)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self[t] for t in tokens]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.itos[i] for i in ids]


@dataclass(frozen=True)
class ModelConfig:
    n_tokens: int
    n_msg: int
    n_classes: int
    d_tok: int = 64
    d_lab: int = 8
    enc_hidden: int = 64
    dec_hidden: int = 128
    msg_hidden: int = 32
    encoder: str = "edit-sentence"
    pooling: str = "max"
    combine_message: bool = False

    @property
    def d_enc(self) -> int:
        return 2 * self.enc_hidden

    @property
    def d_msg(self) -> int:
        return 2 * self.msg_hidden if self.combine_message else 0


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fresh parameters; same generator state gives identical arrays."""
    d_in, h, d = cfg.d_tok + cfg.d_lab, cfg.enc_hidden, cfg.dec_hidden
    p = {
        "E_T": ag.init_embedding(rng, cfg.n_tokens, cfg.d_tok),
        "E_L": ag.init_embedding(rng, len(LABEL_IDS), cfg.d_lab),
        "enc_f_W": ag.init_matrix(rng, d_in + h, 4 * h),
        "enc_f_b": ag.parameter(np.zeros(4 * h)),
        "enc_b_W": ag.init_matrix(rng, d_in + h, 4 * h),
        "enc_b_b": ag.parameter(np.zeros(4 * h)),
        "cls_W": ag.init_matrix(rng, cfg.d_enc + cfg.d_msg, cfg.n_classes),
        "cls_b": ag.parameter(np.zeros(cfg.n_classes)),
        "E_M": ag.init_embedding(rng, cfg.n_msg, cfg.d_tok),
        "dec_init_W": ag.init_matrix(rng, cfg.d_enc, d),
        "dec_init_b": ag.parameter(np.zeros(d)),
        "dec_W": ag.init_matrix(rng, cfg.d_tok + d, 4 * d),
        "dec_b": ag.parameter(np.zeros(4 * d)),
        "att_W": ag.init_matrix(rng, d, cfg.d_enc),
        "out_W": ag.init_matrix(rng, d + cfg.d_enc, cfg.n_msg),
        "out_b": ag.parameter(np.zeros(cfg.n_msg)),
    }
    if cfg.combine_message:
        m = cfg.msg_hidden
        p.update({
            "msg_E": ag.init_embedding(rng, cfg.n_msg, cfg.d_tok),
            "msg_f_W": ag.init_matrix(rng, cfg.d_tok + m, 4 * m),
            "msg_f_b": ag.parameter(np.zeros(4 * m)),
            "msg_b_W": ag.init_matrix(rng, cfg.d_tok + m, 4 * m),
            "msg_b_b": ag.parameter(np.zeros(4 * m)),
        })
    for name, t in p.items():
        t.name = name
    return p


# --- encoder --------------------------------------------------------------------------

class EncoderOutput(NamedTuple):
    states: Tensor
    pooled: Tensor


def edit_input(edit: Edit, vocab: Vocabulary, encoder: str = "edit-sentence",
               label_ids: Mapping[str, int] = LABEL_IDS) -> tuple[list[int], list[int] | None]:
    """Token ids (and label ids, unless the variant drops them) for one edit.

    Edit-sentences are joined with SEP; the regular variant lays out each
    pair as ``before MARK after`` instead of interleaving.
    """
    if not edit.sentences:
        raise ValueError("cannot encode an edit without sentences")
    tokens: list[int] = []
    labels: list[int] = []
    for k, sent in enumerate(edit.sentences):
        if k:
            tokens.append(vocab.SEP)
            labels.append(label_ids[KEEP])
        if encoder == "regular":
            tokens.extend(vocab.encode(sent.before()) + [vocab.MARK] + vocab.encode(sent.after()))
        else:
            tokens.extend(vocab.encode(sent.tokens))
            labels.extend(label_ids[lab] for lab in sent.labels)
    if encoder not in ENCODERS:
        raise ValueError(f"unknown encoder variant {encoder!r}")
    return tokens, (labels if encoder == "edit-sentence" else None)


def _pool(states: Tensor, how: str) -> Tensor:
    return ag.max_pool_time(states) if how == "max" else ag.mean_pool_time(states)


def bilstm(X: Tensor, params, prefix: str) -> Tensor:
    fwd = ag.lstm_sequence(X, params[f"{prefix}_f_W"], params[f"{prefix}_f_b"])
    bwd = ag.lstm_sequence(X, params[f"{prefix}_b_W"], params[f"{prefix}_b_b"], reverse=True)
    return ag.concat([fwd, bwd], axis=1)


def encode_ids(token_ids: Sequence[int], label_ids: Sequence[int] | None, params, cfg: ModelConfig) -> EncoderOutput:
    if len(token_ids) == 0:
        raise ValueError("empty input sequence")
    emb = ag.embedding(params["E_T"], token_ids)
    if label_ids is None:
        lab = ag.zeros(len(token_ids), cfg.d_lab)
    else:
        lab = ag.embedding(params["E_L"], label_ids)
    states = bilstm(ag.concat([emb, lab], axis=1), params, "enc")
    return EncoderOutput(states, _pool(states, cfg.pooling))


def encode_edit(edit: Edit, vocab: Vocabulary, params, cfg: ModelConfig,
                label_ids: Mapping[str, int] = LABEL_IDS) -> EncoderOutput:
    """Edit-sentence encoder: [E_T(token) ; E_L(label)] -> BiLSTM -> pooling."""
    variant = "no-tags" if cfg.encoder == "no-tags" else "edit-sentence"
    toks, labs = edit_input(edit, vocab, variant, label_ids)
    return encode_ids(toks, labs, params, cfg)


def encode_regular(edit: Edit, vocab: Vocabulary, params, cfg: ModelConfig) -> EncoderOutput:
    toks, _ = edit_input(edit, vocab, "regular")
    return encode_ids(toks, None, params, cfg)


def encode(edit: Edit, vocab: Vocabulary, params, cfg: ModelConfig) -> EncoderOutput:
    if cfg.encoder == "regular":
        return encode_regular(edit, vocab, params, cfg)
    return encode_edit(edit, vocab, params, cfg)


def encode_message_and_combine(edit_enc: EncoderOutput, message_ids: Sequence[int], params, cfg: ModelConfig) -> Tensor:
    """[edit features ; pooled BiLSTM message features] for the combination baseline."""
    if len(message_ids) == 0:
        raise ValueError("message must be non-empty")
    states = bilstm(ag.embedding(params["msg_E"], message_ids), params, "msg")
    return ag.concat([edit_enc.pooled, _pool(states, cfg.pooling)])


def classify(features: EncoderOutput | Tensor, params) -> Tensor:
    """Log-probabilities over quality classes."""
    x = features.pooled if isinstance(features, EncoderOutput) else features
    return ag.log_softmax(ag.linear(x, params["cls_W"], params["cls_b"]))


# --- decoder ------------------------------------------------------------------------------

def joint_loss(cls_loss, gen_loss, lam: float):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return lam * cls_loss + (1.0 - lam) * gen_loss


def decoder_init(enc: EncoderOutput, params) -> Tensor:
    return ag.tanh(ag.linear(enc.pooled, params["dec_init_W"], params["dec_init_b"]))


def generation_loss(enc: EncoderOutput, message_ids: Sequence[int], vocab: Vocabulary, params) -> Tensor:
    """Teacher-forced mean token NLL of ``message + EOS``."""
    inputs = [vocab.BOS] + list(message_ids)
    targets = list(message_ids) + [vocab.EOS]
    h0 = decoder_init(enc, params)
    H = ag.lstm_sequence(ag.embedding(params["E_M"], inputs), params["dec_W"], params["dec_b"], h0)
    scores = ag.matmul(ag.matmul(H, params["att_W"]), enc.states.T)
    context = ag.matmul(ag.softmax(scores, axis=1), enc.states)
    logits = ag.linear(ag.concat([H, context], axis=1), params["out_W"], params["out_b"])
    return ag.nll_loss(ag.log_softmax(logits, axis=1), targets)


def _arrays(params) -> dict[str, np.ndarray]:
    return {k: (v.data if isinstance(v, Tensor) else np.asarray(v)) for k, v in params.items()}


def decode_step(prev_token: int, dec_state, enc_states, params):
    """One inference step of the attention decoder.

    ``dec_state`` is ``(h, c)``. Returns ``((h, c), attention_weights, logprobs)``.
    """
    p = _arrays(params)
    S = enc_states.data if isinstance(enc_states, Tensor) else np.asarray(enc_states)
    if S.shape[0] == 0:
        raise ValueError("decode_step needs at least one encoder state")
    h, c = dec_state
    xh = np.concatenate([p["E_M"][prev_token], h])
    h, c, _ = ag._cell_forward(xh, c, p["dec_W"], p["dec_b"])
    scores = S @ (p["att_W"].T @ h)
    w = np.exp(scores - scores.max())
    w /= w.sum()
    logits = np.concatenate([h, w @ S]) @ p["out_W"] + p["out_b"]
    logits = logits - logits.max()
    logprobs = logits - np.log(np.exp(logits).sum())
    return (h, c), w, logprobs


def initial_decoder_state(enc: EncoderOutput, params):
    h0 = decoder_init(EncoderOutput(Tensor(enc.states.data), Tensor(enc.pooled.data)), _tensors(params)).data
    return h0, np.zeros_like(h0)


def _tensors(params):
    return {k: (v if isinstance(v, Tensor) else Tensor(v)) for k, v in params.items()}


def beam_search_core(init_state, step_fn: Callable, bos: int, eos: int, beam: int = 5, max_steps: int = 30) -> list[int]:
    """Length-normalized beam search over an arbitrary step function.

    ``step_fn(prev_token, state) -> (next_state, logprobs)``. Hypotheses are
    ranked by total log-probability divided by their length (EOS included).
    Ties are broken by lower token ids, earlier beams first. Returns the best
    finished hypothesis, or the best unfinished one if none reached EOS.
    """
    if beam < 1 or max_steps < 1:
        raise ValueError("beam and max_steps must be >= 1")
    alive = [(0.0, [], init_state)]
    finished = []
    for _ in range(max_steps):
        candidates = []
        for rank, (score, toks, state) in enumerate(alive):
            new_state, logprobs = step_fn(toks[-1] if toks else bos, state)
            length = len(toks) + 1
            for tok in range(len(logprobs)):
                total = score + float(logprobs[tok])
                candidates.append((-total / length, rank, tok, total, new_state))
        best = heapq.nsmallest(beam, candidates, key=lambda c: c[:3])
        next_alive = []
        for neg_norm, rank, tok, total, new_state in best:
            toks = alive[rank][1] + [tok]
            if tok == eos:
                finished.append((neg_norm, toks))
            else:
                next_alive.append((total, toks, new_state))
        alive = next_alive
        if not alive:
            break
    if finished:
        return min(finished, key=lambda f: (f[0], f[1]))[1][:-1]
    pool = [(-total / len(toks), toks) for total, toks, _ in alive]
    return min(pool)[1]


def greedy_decode(init_state, step_fn: Callable, bos: int, eos: int, max_steps: int = 30) -> list[int]:
    state, toks = init_state, []
    for _ in range(max_steps):
        state, logprobs = step_fn(toks[-1] if toks else bos, state)
        tok = int(np.argmax(logprobs))
        if tok == eos:
            break
        toks.append(tok)
    return toks


def _decoder_step_fn(enc: EncoderOutput, params):
    p = _arrays(params)
    S = enc.states.data

    def step(prev, state):
        new_state, _, logprobs = decode_step(prev, state, S, p)
        return new_state, logprobs

    return step


def beam_search(enc: EncoderOutput, params, vocab: Vocabulary, beam: int = 5, max_steps: int = 30) -> list[int]:
    """Message token ids (without EOS) decoded with beam search."""
    return beam_search_core(initial_decoder_state(enc, params), _decoder_step_fn(enc, params),
                            vocab.BOS, vocab.EOS, beam, max_steps)


def greedy(enc: EncoderOutput, params, vocab: Vocabulary, max_steps: int = 30) -> list[int]:
    return greedy_decode(initial_decoder_state(enc, params), _decoder_step_fn(enc, params),
                         vocab.BOS, vocab.EOS, max_steps)
