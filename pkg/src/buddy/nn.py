"""Minimal reverse-mode autodiff on dense float64 arrays.

Covers exactly what the trainers here need: MLPs with elu/tanh/relu, row-wise
softmax, Gumbel-softmax hard selection with straight-through gradients, and a
handful of shape ops. Broadcasting is limited to scalars and trailing-shape
(bias-row) alignment. All randomness flows through explicitly passed
numpy Generators.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class NnError(ValueError):
    pass


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("data", "grad", "parents", "bwd", "requires_grad")

    def __init__(self, data, parents=(), bwd=None, requires_grad=False):
        self.data = _as_array(data)
        self.grad = None
        self.parents = parents
        self.bwd = bwd
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    # graph construction -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # backward ---------------------------------------------------------------

    def backward(self):
        """Populate grads of all reachable requires_grad tensors.

        The loss must be a scalar (size-1). Repeated calls without clearing
        grads accumulate.
        """
        if self.data.size != 1:
            raise NnError(f"backward needs a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        if self.grad is None:
            self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.bwd is None or node.grad is None:
                continue
            for parent, contribution in node.bwd(node.grad):
                if not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += contribution


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, rng: np.random.Generator | None = None) -> Tensor:
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to `shape` by summing."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if grad.shape[ax] != n:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


# elementwise ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return Tensor(out_data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        scale = _as_array(b)
        return Tensor(a.data * scale, (a,), lambda g: ((a, _unbroadcast(g * scale, a.data.shape)),))
    out_data = a.data * b.data

    def bwd(g):
        return (
            (a, _unbroadcast(g * b.data, a.data.shape)),
            (b, _unbroadcast(g * a.data, b.data.shape)),
        )

    return Tensor(out_data, (a, b), bwd)


def reciprocal(a: Tensor) -> Tensor:
    inv = 1.0 / a.data
    return Tensor(inv, (a,), lambda g: ((a, -g * inv * inv),))


def square(a: Tensor) -> Tensor:
    return Tensor(a.data**2, (a,), lambda g: ((a, 2.0 * g * a.data),))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    return Tensor(e, (a,), lambda g: ((a, g * e),))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), (a,), lambda g: ((a, g / a.data),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return Tensor(t, (a,), lambda g: ((a, g * (1.0 - t * t)),))


def relu(a: Tensor) -> Tensor:
    mask = (a.data > 0).astype(np.float64)
    return Tensor(a.data * mask, (a,), lambda g: ((a, g * mask),))


def elu(a: Tensor) -> Tensor:
    neg = np.exp(np.minimum(a.data, 0.0)) - 1.0
    out = np.where(a.data >= 0, a.data, neg)
    slope = np.where(a.data >= 0, 1.0, neg + 1.0)
    return Tensor(out, (a,), lambda g: ((a, g * slope),))


# reductions and shape ops -----------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.data.shape).copy()),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return ((a, np.broadcast_to(gg, a.data.shape).copy()),)

    return Tensor(out, (a,), bwd)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor(a.data.reshape(shape), (a,), lambda g: ((a, g.reshape(a.data.shape)),))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]

    def bwd(g):
        grads, c = [], 0
        for p, w in zip(parts, widths):
            grads.append((p, g[:, c : c + w]))
            c += w
        return tuple(grads)

    return Tensor(out, tuple(parts), bwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def bwd(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return ((a, full),)

    return Tensor(a.data[:, start:stop], (a,), bwd)


def repeat_rows(a: Tensor, k: int) -> Tensor:
    """Tile each row k times: (B, d) -> (B*k, d); gradient sums back."""
    out = np.repeat(a.data, k, axis=0)

    def bwd(g):
        return ((a, g.reshape(a.data.shape[0], k, -1).sum(axis=1)),)

    return Tensor(out, (a,), bwd)


def transpose(a: Tensor) -> Tensor:
    return Tensor(a.data.T, (a,), lambda g: ((a, g.T),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise NnError("matmul expects 2D operands")

    def bwd(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return Tensor(a.data @ b.data, (a, b), bwd)


def rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    """(B, d) x (B, d) -> (B,) row dot products."""
    out = (a.data * b.data).sum(axis=1)

    def bwd(g):
        return ((a, g[:, None] * b.data), (b, g[:, None] * a.data))

    return Tensor(out, (a, b), bwd)


def weighted_value_sum(weights: Tensor, values: np.ndarray) -> Tensor:
    """einsum('be,bef->bf') with constant values; gradient flows to weights."""
    v = _as_array(values)
    out = np.einsum("be,bef->bf", weights.data, v)
    return Tensor(out, (weights,), lambda g: ((weights, np.einsum("bf,bef->be", g, v)),))


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax along the last axis (1D input treated as one row).

    The max-shift is treated as a constant, which leaves the softmax gradient
    unchanged.
    """
    x = a.data
    one_d = x.ndim == 1
    x2 = x[None, :] if one_d else x
    shifted = x2 - x2.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = s[0] if one_d else s

    def bwd(g):
        g2 = g[None, :] if one_d else g
        dot = (g2 * s).sum(axis=1, keepdims=True)
        grad = s * (g2 - dot)
        return ((a, grad[0] if one_d else grad),)

    return Tensor(out, (a,), bwd)


# sampling -------------------------------------------------------------------


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(u + 1e-20) + 1e-20)


def gumbel_softmax(
    logits,
    temperature: float,
    hard: bool,
    rng: np.random.Generator | None = None,
    noise: bool = True,
) -> Tensor:
    """Row-wise Gumbel-softmax sample over the last axis.

    Soft mode returns softmax((logits + g) / temperature). Hard mode returns a
    one-hot of the row argmax whose gradient is the soft sample's (straight
    through). `noise=False` disables the Gumbel perturbation, which with a
    small temperature degenerates to a plain argmax.
    """
    logits = as_tensor(logits)
    if not np.all(np.isfinite(logits.data)):
        raise NnError("gumbel_softmax got non-finite logits")
    if temperature <= 0:
        raise NnError(f"temperature must be positive, got {temperature}")
    if noise:
        if rng is None:
            raise NnError("noise=True requires an rng")
        g = gumbel_noise(rng, logits.data.shape)
    else:
        g = np.zeros_like(logits.data)
    soft = softmax_rows(mul(add(logits, constant(g)), 1.0 / temperature))
    if not hard:
        return soft
    y = soft.data
    one_d = y.ndim == 1
    y2 = y[None, :] if one_d else y
    onehot = np.zeros_like(y2)
    onehot[np.arange(y2.shape[0]), y2.argmax(axis=1)] = 1.0
    if one_d:
        onehot = onehot[0]
    return add(soft, constant(onehot - y))


# modules ----------------------------------------------------------------------

_ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {"elu": elu, "tanh": tanh, "relu": relu}
_ACTIVATIONS_NP = {
    "elu": lambda x: np.where(x >= 0, x, np.exp(np.minimum(x, 0.0)) - 1.0),
    "tanh": np.tanh,
    "relu": lambda x: np.maximum(x, 0.0),
}


class Mlp:
    """Fully connected layers, hidden activations only, linear output.

    `__call__` builds the autodiff graph; `forward_np` is the grad-free fast
    path used by rollouts and evaluation.
    """

    def __init__(self, sizes: Sequence[int], activation: str = "elu", rng: np.random.Generator | None = None):
        if len(sizes) < 2:
            raise NnError("Mlp needs at least input and output sizes")
        if activation not in _ACTIVATIONS:
            raise NnError(f"unknown activation {activation!r}")
        self.sizes = list(sizes)
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out))))
            self.biases.append(parameter(rng.uniform(-bound, bound, size=(fan_out,))))

    @property
    def params(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def __call__(self, x: Tensor) -> Tensor:
        act = _ACTIVATIONS[self.activation]
        h = as_tensor(x)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = add(matmul(h, w), b)
            if k != last:
                h = act(h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        act = _ACTIVATIONS_NP[self.activation]
        h = _as_array(x)
        squeeze = h.ndim == 1
        if squeeze:
            h = h[None, :]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.data + b.data
            if k != last:
                h = act(h)
        return h[0] if squeeze else h


class CrossAttention:
    """Multi-head hard selection over a candidate set.

    Per head: scores = (W_q q) . (W_k k_e) / sqrt(width); weights come from a
    Gumbel-softmax over scores; the head output is the weights-weighted sum of
    the *raw* value vectors, so a hard head passes one value through verbatim.
    """

    def __init__(self, query_dim: int, key_dim: int, heads: int, width: int = 32,
                 rng: np.random.Generator | None = None):
        if heads < 1:
            raise NnError("need at least one head")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.heads = heads
        self.width = width
        bq, bk = 1.0 / np.sqrt(query_dim), 1.0 / np.sqrt(key_dim)
        self.w_q = [parameter(rng.uniform(-bq, bq, size=(query_dim, width))) for _ in range(heads)]
        self.w_k = [parameter(rng.uniform(-bk, bk, size=(key_dim, width))) for _ in range(heads)]

    @property
    def params(self) -> list[Tensor]:
        return [*self.w_q, *self.w_k]

    def __call__(
        self,
        query: Tensor,
        keys: Tensor,
        values: np.ndarray,
        hard: bool,
        rng: np.random.Generator | None = None,
        temperature: float = 1.0,
        noise: bool = True,
    ) -> tuple[list[Tensor], list[Tensor]]:
        """Single-frame attention: query (d_q,), keys (E, d_k), values (E, d_v).

        Returns (outputs per head, selection weights per head).
        """
        keys = as_tensor(keys)
        if keys.data.ndim != 2 or keys.data.shape[0] < 1:
            raise NnError("keys must be a non-empty (E, d_k) matrix")
        values = _as_array(values)
        q_row = reshape(as_tensor(query), (1, -1))
        outs, weights = [], []
        for wq, wk in zip(self.w_q, self.w_k):
            qh = matmul(q_row, wq)  # (1, width)
            kh = matmul(keys, wk)  # (E, width)
            scores = mul(reshape(matmul(kh, reshape(qh, (-1, 1))), (-1,)), 1.0 / np.sqrt(self.width))
            w = gumbel_softmax(scores, temperature, hard, rng, noise=noise)
            out = reshape(matmul(reshape(w, (1, -1)), constant(values)), (-1,))
            outs.append(out)
            weights.append(w)
        return outs, weights


# optimization ------------------------------------------------------------------


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: dict | None,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], dict]:
    """One functional Adam update; returns (new params, new state)."""
    if state is None:
        state = {"step": 0, "m": [np.zeros_like(p) for p in params],
                 "v": [np.zeros_like(p) for p in params]}
    if len(params) != len(grads) or len(params) != len(state["m"]):
        raise NnError("params/grads/state length mismatch")
    t = state["step"] + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if p.shape != g.shape:
            raise NnError(f"grad shape {g.shape} does not match param shape {p.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, {"step": t, "m": new_m, "v": new_v}


class Adam:
    """In-place Adam over a list of parameter Tensors."""

    def __init__(self, params: list[Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state: dict | None = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = adam_step(
            [p.data for p in self.params], grads, self.state,
            self.lr, self.beta1, self.beta2, self.eps,
        )
        for p, d in zip(self.params, new):
            p.data = d


# checkpoints --------------------------------------------------------------------


def params_checksum(arrays: Sequence[np.ndarray]) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    """JSON container: shapes plus full-precision values, self-describing."""
    doc = {
        "format": "buddy-checkpoint-v1",
        "meta": meta or {},
        "arrays": {
            k: {"shape": list(v.shape), "data": np.asarray(v, dtype=np.float64).reshape(-1).tolist()}
            for k, v in arrays.items()
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "buddy-checkpoint-v1":
        raise NnError(f"not a checkpoint file: {path}")
    arrays = {
        k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
        for k, v in doc["arrays"].items()
    }
    return arrays, doc.get("meta", {})
