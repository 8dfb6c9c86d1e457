"""A small reverse-mode autodiff engine over numpy arrays.

Only the layers the edit model needs are provided. Every op builds a node
holding a closure that pushes the output gradient back to its inputs;
``Tensor.backward`` walks the graph in reverse topological order. Gradients
accumulate on leaves across calls until ``zero_grad``.
"""
from __future__ import annotations

import io
import json
import math
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import NumericalError

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((p, False) for p in node._parents)
        # intermediate buffers are per-call; leaves keep accumulating
        for node in order:
            if node._backward is not None:
                node.grad = None
        self._accumulate(np.asarray(grad, dtype=DTYPE))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward) -> Tensor:
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, None, parents, backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True, name=name)


def zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=DTYPE))


# --- elementwise and linear algebra --------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    x, w = a.data, b.data

    def backward(g):
        if x.ndim == 1 and w.ndim == 1:
            a._accumulate(g * w)
            b._accumulate(g * x)
        elif x.ndim == 1:
            a._accumulate(w @ g)
            b._accumulate(np.outer(x, g))
        elif w.ndim == 1:
            a._accumulate(np.outer(g, w))
            b._accumulate(x.T @ g)
        else:
            a._accumulate(g @ w.T)
            b._accumulate(x.T @ g)

    return _node(x @ w, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    return _node(a.data.T, (a,), lambda g: a._accumulate(g.T))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))


def _sigmoid(z):
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)))


def concat(tensors: Iterable[Tensor], axis=-1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            t._accumulate(piece)

    return _node(out, tensors, backward)


def sum_(a: Tensor) -> Tensor:
    return _node(a.data.sum(), (a,), lambda g: a._accumulate(np.broadcast_to(g, a.shape).copy()))


def linear(x, W: Tensor, b: Tensor | None = None) -> Tensor:
    out = matmul(x, W)
    return out if b is None else add(out, b)


def embedding(W: Tensor, ids) -> Tensor:
    """Rows of ``W`` selected by integer ``ids``."""
    ids = np.asarray(ids, dtype=np.intp)

    def backward(g):
        full = np.zeros_like(W.data)
        np.add.at(full, ids, g)
        W._accumulate(full)

    return _node(W.data[ids], (W,), backward)


# --- softmax family and pooling --------------------------------------------------

def log_softmax(a: Tensor, axis=-1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        a._accumulate(g - probs * g.sum(axis=axis, keepdims=True))

    return _node(out, (a,), backward)


def softmax(a: Tensor, axis=-1) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        a._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _node(out, (a,), backward)


def max_pool_time(H: Tensor) -> Tensor:
    """Per-dimension max over rows; gradient goes to the first argmax."""
    if H.data.ndim != 2 or H.shape[0] == 0:
        raise ValueError("max_pool_time needs a non-empty T x d matrix")
    idx = H.data.argmax(axis=0)
    cols = np.arange(H.shape[1])

    def backward(g):
        full = np.zeros_like(H.data)
        full[idx, cols] = g
        H._accumulate(full)

    return _node(H.data[idx, cols], (H,), backward)


def mean_pool_time(H: Tensor) -> Tensor:
    if H.data.ndim != 2 or H.shape[0] == 0:
        raise ValueError("mean_pool_time needs a non-empty T x d matrix")
    T = H.shape[0]
    return _node(H.data.mean(axis=0), (H,), lambda g: H._accumulate(np.tile(g / T, (T, 1))))


# --- recurrent layers ------------------------------------------------------------

def _cell_forward(xh, c, W, b):
    n = c.shape[0]
    z = xh @ W + b
    i = _sigmoid(z[:n])
    f = _sigmoid(z[n:2 * n])
    g = np.tanh(z[2 * n:3 * n])
    o = _sigmoid(z[3 * n:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (i, f, g, o, tc)


def _cell_dz(dh, dc, c_prev, gates):
    """Gradient w.r.t. the gate pre-activations and the previous cell."""
    i, f, g, o, tc = gates
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        dc * i * (1.0 - g * g),
        dh * tc * o * (1.0 - o),
    ])
    return dz, dc * f


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, W: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step; ``W`` is (d_in + d_h) x 4 d_h with gates ordered i, f, g, o."""
    x, h, c = _as_tensor(x), _as_tensor(h), _as_tensor(c)
    d_in, d_h = x.shape[0], h.shape[0]
    if W.shape != (d_in + d_h, 4 * d_h) or b.shape != (4 * d_h,) or c.shape != (d_h,):
        raise ValueError(f"lstm_cell shape mismatch: x{x.shape} h{h.shape} c{c.shape} W{W.shape} b{b.shape}")
    xh = np.concatenate([x.data, h.data])
    h_new, c_new, gates = _cell_forward(xh, c.data, W.data, b.data)
    parents = (x, h, c, W, b)

    def push(dh, dc):
        dz, dc_prev = _cell_dz(dh, dc, c.data, gates)
        dxh = W.data @ dz
        x._accumulate(dxh[:d_in])
        h._accumulate(dxh[d_in:])
        c._accumulate(dc_prev)
        W._accumulate(np.outer(xh, dz))
        b._accumulate(dz)

    zero = np.zeros(d_h)
    h_out = _node(h_new, parents, lambda g: push(g, zero))
    c_out = _node(c_new, parents, lambda g: push(zero, g))
    return h_out, c_out


def lstm_sequence(X: Tensor, W: Tensor, b: Tensor, h0=None, c0=None, reverse=False) -> Tensor:
    """Run an LSTM over the rows of ``X``; returns hidden states aligned with ``X``.

    With ``reverse`` the sequence is consumed last row first, but row t of the
    result still belongs to input row t.
    """
    T, d_in = X.shape
    d_h = W.shape[1] // 4
    if W.shape[0] != d_in + d_h or b.shape != (4 * d_h,):
        raise ValueError(f"lstm_sequence shape mismatch: X{X.shape} W{W.shape} b{b.shape}")
    h0 = _as_tensor(np.zeros(d_h) if h0 is None else h0)
    c0 = _as_tensor(np.zeros(d_h) if c0 is None else c0)
    steps = range(T - 1, -1, -1) if reverse else range(T)
    Wx, Wh = W.data[:d_in], W.data[d_in:]
    zx = X.data @ Wx + b.data
    H = np.empty((T, d_h))
    h, c = h0.data, c0.data
    cache = []
    for t in steps:
        z = zx[t] + h @ Wh
        i = _sigmoid(z[:d_h])
        f = _sigmoid(z[d_h:2 * d_h])
        g = np.tanh(z[2 * d_h:3 * d_h])
        o = _sigmoid(z[3 * d_h:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_prev, c_prev = h, c
        h, c = o * tc, c_new
        H[t] = h
        cache.append((t, h_prev, c_prev, (i, f, g, o, tc)))

    def backward(G):
        dZ = np.zeros((T, 4 * d_h))
        H_prev = np.empty((T, d_h))
        dh_next = np.zeros(d_h)
        dc_next = np.zeros(d_h)
        for t, h_prev, c_prev, gates in reversed(cache):
            dz, dc_next = _cell_dz(G[t] + dh_next, dc_next, c_prev, gates)
            dZ[t] = dz
            H_prev[t] = h_prev
            dh_next = Wh @ dz
        X._accumulate(dZ @ Wx.T)
        W._accumulate(np.concatenate([X.data.T @ dZ, H_prev.T @ dZ]))
        b._accumulate(dZ.sum(axis=0))
        h0._accumulate(dh_next)
        c0._accumulate(dc_next)

    return _node(H, (X, W, b, h0, c0), backward)


# --- losses ------------------------------------------------------------------------

def kl_div_loss(pred_logprobs: Tensor, target_probs) -> Tensor:
    """KL(target || pred) with the 0 log 0 = 0 convention."""
    target = np.asarray(target_probs, dtype=DTYPE)
    if target.shape != pred_logprobs.shape:
        raise ValueError(f"length mismatch: {pred_logprobs.shape} vs {target.shape}")
    pos = target > 0
    value = np.sum(target[pos] * (np.log(target[pos]) - pred_logprobs.data[pos]))
    return _node(value, (pred_logprobs,), lambda g: pred_logprobs._accumulate(-g * target))


def cross_entropy_loss(pred_logprobs: Tensor, gold_class: int) -> Tensor:
    n = pred_logprobs.shape[0]
    if not 0 <= gold_class < n:
        raise IndexError(f"gold class {gold_class} out of range for {n} classes")

    def backward(g):
        full = np.zeros(n)
        full[gold_class] = -g
        pred_logprobs._accumulate(full)

    return _node(-pred_logprobs.data[gold_class], (pred_logprobs,), backward)


def nll_loss(logprobs: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under rows of ``logprobs``."""
    targets = np.asarray(targets, dtype=np.intp)
    rows = np.arange(len(targets))
    n = len(targets)

    def backward(g):
        full = np.zeros_like(logprobs.data)
        full[rows, targets] = -g / n
        logprobs._accumulate(full)

    return _node(-logprobs.data[rows, targets].mean(), (logprobs,), backward)


# --- initialization ------------------------------------------------------------------

def init_matrix(rng: np.random.Generator, fan_in: int, fan_out: int, name=None) -> Tensor:
    a = 1.0 / math.sqrt(fan_in)
    return parameter(rng.uniform(-a, a, size=(fan_in, fan_out)), name)


def init_embedding(rng: np.random.Generator, n: int, d: int, name=None) -> Tensor:
    return parameter(rng.uniform(-0.1, 0.1, size=(n, d)), name)


# --- optimization ----------------------------------------------------------------------

def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> tuple[dict, float]:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm is None or norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: dict,
              lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns ``(new_params, new_state)``.

    ``state`` is ``{"t": int, "m": {...}, "v": {...}}``; missing moments start at zero.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    t = state.get("t", 0) + 1
    m_old, v_old = state.get("m", {}), state.get("v", {})
    new_params, m_new, v_new = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = beta1 * m_old.get(name, 0.0) + (1.0 - beta1) * g
        v = beta2 * v_old.get(name, 0.0) + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        # overflow surfaces through the caller's finiteness check
        with np.errstate(over="ignore", invalid="ignore"):
            new_params[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        m_new[name], v_new[name] = m, v
    return new_params, {"t": t, "m": m_new, "v": v_new}


class Adam:
    def __init__(self, params: Mapping[str, Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8, clip_norm=5.0):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.state: dict = {"t": 0, "m": {}, "v": {}}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self) -> float:
        """Clip, update in place, and return the pre-clipping gradient norm."""
        grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in self.params.items()}
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {name!r}")
        grads, norm = clip_grad_norm(grads, self.clip_norm)
        arrays = {k: p.data for k, p in self.params.items()}
        new, self.state = adam_step(arrays, grads, self.state, self.lr, *self.betas, self.eps)
        for k, p in self.params.items():
            if not np.all(np.isfinite(new[k])):
                raise NumericalError(f"parameter {k!r} became non-finite")
            p.data = new[k]
        return norm


# --- gradient checking ----------------------------------------------------------------------

def relative_error(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric))
    if denom < 1e-12:
        return 0.0
    return abs(analytic - numeric) / denom


def grad_check(f: Callable[[], Tensor], params: Mapping[str, Tensor], eps=1e-5,
               n_samples: int | None = 20, rng: np.random.Generator | None = None, atol: float = 0.0) -> float:
    """Max relative error between backprop and central differences.

    ``f`` recomputes the scalar loss from the current parameter values. Up to
    ``n_samples`` coordinates per parameter are probed (all when ``None``).
    Coordinates whose absolute disagreement is at most ``atol`` count as exact,
    as in ``np.isclose``; central differences carry roughly
    ``machine_eps * |f| / eps`` of roundoff, so relative error is meaningless
    for gradients near that size.
    """
    rng = rng or np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    f().backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if n_samples is not None and flat.size > n_samples:
            coords = rng.choice(flat.size, size=n_samples, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[name].reshape(-1)[i]
            if abs(a - numeric) > atol:
                worst = max(worst, relative_error(a, numeric))
    return worst


# --- checkpoint container -------------------------------------------------------------------

CHECKPOINT_FORMAT = 1


def save_arrays(path, arrays: Mapping[str, np.ndarray], meta: dict) -> None:
    """Write arrays plus a JSON metadata block into one ``.npz`` file."""
    payload = {f"param/{k}": np.asarray(v, dtype=DTYPE) for k, v in arrays.items()}
    header = dict(meta, format=CHECKPOINT_FORMAT)
    payload["meta"] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
        arrays = {k[len("param/"):]: data[k].copy() for k in data.files if k.startswith("param/")}
    return arrays, meta
