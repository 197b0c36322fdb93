"""Minimal reverse-mode automatic differentiation on 2-D float64 arrays.

Every operation returns a fresh `Tensor` holding the result and, when a
gradient is required, a closure that pushes the output adjoint to the
parents. `backward` seeds a scalar root with 1 and walks the recorded
graph once in reverse topological order, summing adjoints over fan-out.

The op set is intentionally small: dense products and sums, elementwise
activations, row gather / scatter-sum (adjoints of each other), and a
numerically stable binary cross-entropy on logits. Everything else in
the package is composed from these.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"


def constant(data):
    return Tensor(data, requires_grad=False)


def _node(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sums an adjoint down to `shape` after numpy broadcasting."""
    for axis in range(2):
        if shape[axis] == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a, b):
    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)
    return _node(a.data @ b.data, (a, b), bw)


def add(a, b):
    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))
    return _node(a.data + b.data, (a, b), bw)


def hadamard(a, b):
    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))
    return _node(a.data * b.data, (a, b), bw)


def scale(a, alpha):
    alpha = float(alpha)

    def bw(g):
        a._accumulate(alpha * g)
    return _node(alpha * a.data, (a,), bw)


def gather(z, idx):
    """Rows of z at the given indices; adjoint scatters back."""
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        z._accumulate(_segment_add(g, idx, z.shape[0]))
    return _node(z.data[idx], (z,), bw)


def _segment_add(values, idx, m):
    out = np.zeros((m, values.shape[1]))
    if idx.size == 0:
        return out
    if np.all(idx[1:] >= idx[:-1]):
        # sorted indices: one reduceat pass beats elementwise add.at
        starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
        out[idx[starts]] = np.add.reduceat(values, starts, axis=0)
    else:
        np.add.at(out, idx, values)
    return out


def scatter_sum(x, idx, m):
    """Sums rows of x into an (m, d) output at the given indices; rows
    that receive nothing stay zero. Adjoint of `gather`.
    """
    idx = np.asarray(idx, dtype=np.int64)
    out = _segment_add(x.data, idx, m)

    def bw(g):
        x._accumulate(g[idx])
    return _node(out, (x,), bw)


def segment_min(x, seg, n_segments):
    """Columnwise minimum per segment; every segment must be non-empty.

    The adjoint routes each output gradient to the first row attaining
    the minimum in its segment.
    """
    seg = np.asarray(seg, dtype=np.int64)
    out = np.empty((n_segments, x.shape[1]))
    argrows = np.empty((n_segments, x.shape[1]), dtype=np.int64)
    for b in range(n_segments):
        rows = np.flatnonzero(seg == b)
        if rows.size == 0:
            raise ValueError(f"segment {b} is empty")
        block = x.data[rows]
        pick = block.argmin(axis=0)
        out[b] = block[pick, np.arange(x.shape[1])]
        argrows[b] = rows[pick]

    def bw(g):
        gx = np.zeros_like(x.data)
        for b in range(n_segments):
            np.add.at(gx, (argrows[b], np.arange(x.shape[1])), g[b])
        x._accumulate(gx)
    return _node(out, (x,), bw)


def relu(a):
    mask = a.data > 0

    def bw(g):
        a._accumulate(g * mask)
    return _node(a.data * mask, (a,), bw)


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def logistic(a):
    out_data = _sigmoid(a.data)

    def bw(g):
        a._accumulate(g * out_data * (1.0 - out_data))
    return _node(out_data, (a,), bw)


def identity(a):
    return a


ACTIVATIONS = {"logistic": logistic, "relu": relu, "identity": identity}


def exp(a):
    out_data = np.exp(a.data)

    def bw(g):
        a._accumulate(g * out_data)
    return _node(out_data, (a,), bw)


def reciprocal(a):
    out_data = 1.0 / a.data

    def bw(g):
        a._accumulate(-g * out_data * out_data)
    return _node(out_data, (a,), bw)


def sum_all(a):
    def bw(g):
        a._accumulate(np.full_like(a.data, g[0, 0]))
    return _node(a.data.sum().reshape(1, 1), (a,), bw)


def bce(logits, targets):
    """Mean binary cross-entropy from logits, in the stable form
    max(x, 0) - x t + log(1 + exp(-|x|)). Returns a 1x1 tensor.
    """
    t = np.asarray(targets, dtype=np.float64).reshape(logits.shape)
    if not np.all((t == 0.0) | (t == 1.0)):
        raise ValueError("bce targets must be 0 or 1")
    x = logits.data
    loss = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    n = x.size

    def bw(g):
        logits._accumulate(g[0, 0] * (_sigmoid(x) - t) / n)
    return _node(loss.mean().reshape(1, 1), (logits,), bw)


def backward(root):
    """Reverse pass from a 1x1 root; adjoints sum over fan-out."""
    if root.shape != (1, 1):
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    topo, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    if root.requires_grad:
        root._accumulate(np.ones((1, 1)))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# optimization


def glorot_uniform(rng, rows, cols):
    bound = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)),
                  requires_grad=True)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = None
    v: list = None

    @classmethod
    def for_params(cls, params, lr):
        state = cls(lr=lr)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(state, params):
    """One update with bias-corrected moments; params without a gradient
    this step are treated as having a zero gradient."""
    if len(params) != len(state.m):
        raise ValueError("parameter list does not match optimizer state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for k, p in enumerate(params):
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        state.m[k] = b1 * state.m[k] + (1 - b1) * g
        state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        m_hat = state.m[k] / (1 - b1 ** state.t)
        v_hat = state.v[k] / (1 - b2 ** state.t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    worst_param: int
    worst_index: tuple


def grad_check(f, params, h=1e-5, tol=1e-4):
    """Checks analytic gradients of a scalar-valued closure against
    central differences (f(x+h) - f(x-h)) / 2h at every parameter entry.

    Relative error uses max(|analytic|, |numeric|, 1e-6) in the
    denominator so near-zero gradients are compared absolutely.
    """
    zero_grads(params)
    out = f()
    backward(out)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]
    worst, worst_param, worst_index = 0.0, -1, ()
    for k, p in enumerate(params):
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p.data[idx]
            p.data[idx] = orig + h
            up = float(f().data[0, 0])
            p.data[idx] = orig - h
            down = float(f().data[0, 0])
            p.data[idx] = orig
            numeric = (up - down) / (2 * h)
            a = analytic[k][idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            if rel > worst:
                worst, worst_param, worst_index = rel, k, idx
    return GradCheckReport(max_rel_error=worst, passed=worst <= tol,
                           worst_param=worst_param, worst_index=worst_index)


# ---------------------------------------------------------------------------
# named-tensor checkpoints

_CKPT_MAGIC = b"WL2P"


def save_tensors(named, path):
    """Flat binary checkpoint: (name, rows, cols, float64 payload) records."""
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(np.asarray([len(named)], dtype="<i8").tobytes())
        for name in sorted(named):
            data = named[name].data if isinstance(named[name], Tensor) \
                else np.asarray(named[name], dtype=np.float64)
            raw = name.encode("utf-8")
            fh.write(np.asarray([len(raw)], dtype="<i8").tobytes())
            fh.write(raw)
            fh.write(np.asarray(data.shape, dtype="<i8").tobytes())
            fh.write(data.astype("<f8").tobytes())


def load_tensors(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint")
    pos = 4
    count = int(np.frombuffer(data[pos:pos + 8], dtype="<i8")[0])
    pos += 8
    out = {}
    for _ in range(count):
        name_len = int(np.frombuffer(data[pos:pos + 8], dtype="<i8")[0])
        pos += 8
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        rows, cols = np.frombuffer(data[pos:pos + 16], dtype="<i8")
        pos += 16
        size = int(rows) * int(cols) * 8
        arr = np.frombuffer(data[pos:pos + size], dtype="<f8")
        if arr.size != rows * cols:
            raise ValueError(f"{path}: truncated checkpoint at {name!r}")
        pos += size
        out[name] = arr.reshape(int(rows), int(cols)).astype(np.float64)
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after checkpoint")
    return out
