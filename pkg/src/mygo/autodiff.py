"""Reverse-mode automatic differentiation on numpy arrays.

A `Tensor` wraps a dense float32/float64 array of rank <= 3 together with a
gradient slot. Operations record their backward rule on the currently active
`Tape`; `Tape.backward` replays the rules in reverse execution order and
accumulates gradients with `+=`, so fan-out adds up naturally. Every op checks
its output for NaN/Inf and fails fast instead of letting a bad step poison the
run.

Only the ops the model needs are implemented. Integer index arrays (gather
ids, gold labels) are plain numpy arrays, not tensors.
"""

from __future__ import annotations

import numpy as np

from .errors import NonDeterministicError, NumericError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """Dense real array (rank <= 3) with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.array(data, dtype=dtype, copy=True) if dtype is not None else np.array(data, copy=True)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if arr.ndim > 3:
            raise ValueError(f"tensor rank {arr.ndim} > 3 not supported")
        _check_finite(arr, name or "tensor")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, dtype={self.data.dtype})"

    # Small amount of sugar so scalar-level tests read naturally.
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _check_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite value produced in {where}")


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


class Tape:
    """Records op backward rules; replays them in reverse on `backward`."""

    _active: list["Tape"] = []

    def __init__(self):
        self._steps = []

    def __enter__(self):
        Tape._active.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._active.pop()
        return False

    @staticmethod
    def current():
        return Tape._active[-1] if Tape._active else None

    def backward(self, root: Tensor):
        """Seed d(root)/d(root)=1 and push gradients back through the tape."""
        if root.data.shape != ():
            raise ValueError("backward root must be a scalar tensor")
        root.grad = np.ones_like(root.data)
        for out, inputs, rule in reversed(self._steps):
            if out.grad is None:
                continue
            grads = rule(out.grad)
            for tensor, grad in zip(inputs, grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor.grad is None:
                    tensor.grad = np.zeros_like(tensor.data)
                tensor.grad += grad


def _make(out_data, inputs, rule, where):
    """Wrap an op result, register the backward rule on the active tape."""
    _check_finite(out_data, where)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = Tape.current()
    if tape is not None and out.requires_grad:
        tape._steps.append((out, inputs, rule))
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, (g_dim, s_dim) in enumerate(zip(grad.shape, shape)):
        if s_dim == 1 and g_dim != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.data + b.data

    def rule(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _make(out, (a, b), rule, "add")


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    out = a.data * b.data

    def rule(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), rule, "mul")


def scale(x, c):
    """Multiply by a python scalar (no broadcasting bookkeeping needed)."""
    c = float(c)
    out = x.data * c

    def rule(g):
        return (g * c,)

    return _make(out, (x,), rule, "scale")


def matmul(a, b):
    """np.matmul semantics for rank 2/3 operands, batch dim broadcast."""
    out = np.matmul(a.data, b.data)

    def rule(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _make(out, (a, b), rule, "matmul")


def affine(x, w, b):
    """x @ w + b with bias broadcast over leading axes."""
    return add(matmul(x, w), b)


def transpose_last(x):
    out = np.swapaxes(x.data, -1, -2).copy()

    def rule(g):
        return (np.swapaxes(g, -1, -2),)

    return _make(out, (x,), rule, "transpose_last")


def reshape(x, shape):
    shape = tuple(shape)
    out = x.data.reshape(shape).copy()

    def rule(g):
        return (g.reshape(x.data.shape),)

    return _make(out, (x,), rule, "reshape")


def concat(parts, axis):
    parts = list(parts)
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def rule(g):
        pieces = []
        for i in range(len(parts)):
            index = [slice(None)] * g.ndim
            index[axis if axis >= 0 else g.ndim + axis] = slice(bounds[i], bounds[i + 1])
            pieces.append(g[tuple(index)])
        return tuple(pieces)

    return _make(out, tuple(parts), rule, "concat")


def slice_axis(x, axis, start, stop):
    axis = axis if axis >= 0 else x.data.ndim + axis
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = x.data[index].copy()

    def rule(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return _make(out, (x,), rule, "slice_axis")


def gather_rows(table, ids):
    """Pick rows of a 2-D table; gradient scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.intp)
    if table.data.ndim != 2:
        raise ValueError("gather_rows expects a 2-D table")
    out = table.data[ids]

    def rule(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        return (gt,)

    return _make(out, (table,), rule, "gather_rows")


def expand_rows(v, count):
    """Tile a (d,) vector into (count, 1, d); gradient sums back."""
    if v.data.ndim != 1:
        raise ValueError("expand_rows expects a 1-D vector")
    out = np.broadcast_to(v.data, (count, 1, v.data.shape[0])).copy()

    def rule(g):
        return (g.sum(axis=(0, 1)),)

    return _make(out, (v,), rule, "expand_rows")


def mean_axis1(x):
    """Mean over axis 1 of a rank-3 tensor: (B, s, d) -> (B, d)."""
    if x.data.ndim != 3:
        raise ValueError("mean_axis1 expects a rank-3 tensor")
    s = x.data.shape[1]
    out = x.data.mean(axis=1)

    def rule(g):
        return (np.repeat(g[:, None, :], s, axis=1) / s,)

    return _make(out, (x,), rule, "mean_axis1")


def sum_all(x):
    out = x.data.sum()

    def rule(g):
        return (np.full_like(x.data, g),)

    return _make(np.asarray(out, dtype=x.data.dtype).reshape(()), (x,), rule, "sum_all")


def relu(x):
    out = np.maximum(x.data, 0)

    def rule(g):
        return (g * (x.data > 0),)

    return _make(out, (x,), rule, "relu")


# ---------------------------------------------------------------------------
# normalization and probability
# ---------------------------------------------------------------------------

def softmax(x):
    """Softmax over the last axis, stabilized by max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def rule(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (x,), rule, "softmax")


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then scale+shift.

    Uses the population variance (divide by d, not d-1).
    """
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    z = centered * inv
    out = z * gamma.data + beta.data

    def rule(g):
        d = x.data.shape[-1]
        reduce_axes = tuple(range(g.ndim - 1))
        g_gamma = (g * z).sum(axis=reduce_axes)
        g_beta = g.sum(axis=reduce_axes)
        gz = g * gamma.data
        gx = inv * (gz - gz.mean(axis=-1, keepdims=True)
                    - z * (gz * z).mean(axis=-1, keepdims=True))
        return (gx, g_gamma, g_beta)

    return _make(out, (x, gamma, beta), rule, "layer_norm")


def apply_dropout_mask(x, keep_mask, p):
    """Inverted dropout given an explicit 0/1 keep mask."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    factor = keep_mask.astype(x.data.dtype) / (1.0 - p)
    out = x.data * factor

    def rule(g):
        return (g * factor,)

    return _make(out, (x,), rule, "dropout")


def dropout(x, p, train, rng):
    """Inverted dropout: identity when not training or p == 0."""
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = rng.random(x.data.shape) >= p
    return apply_dropout_mask(x, keep, p)


def normalize_rows(x):
    """L2-normalize the rows of a 2-D tensor. Zero-norm rows are an error."""
    if x.data.ndim != 2:
        raise ValueError("normalize_rows expects a 2-D tensor")
    norms = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    tiny = np.finfo(x.data.dtype).tiny
    if np.any(norms <= tiny):
        raise NumericError("zero-norm row in normalize_rows")
    out = x.data / norms

    def rule(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return ((g - out * dot) / norms,)

    return _make(out, (x,), rule, "normalize_rows")


def cross_entropy_rows(logits, gold):
    """Sum over rows of -log softmax(logits)[gold].

    Fused log-sum-exp keeps the loss exact for saturated logits and exactly
    zero for single-candidate rows.
    """
    gold = np.asarray(gold, dtype=np.intp)
    if logits.data.ndim != 2:
        raise ValueError("cross_entropy_rows expects 2-D logits")
    rows = np.arange(logits.data.shape[0])
    m = logits.data.max(axis=-1, keepdims=True)
    shifted = logits.data - m
    e = np.exp(shifted)
    sums = e.sum(axis=-1)
    lse = m[:, 0] + np.log(sums)
    per_row = lse - logits.data[rows, gold]
    out = per_row.sum()

    def rule(g):
        soft = e / sums[:, None]
        soft[rows, gold] -= 1.0
        return (soft * g,)

    return _make(np.asarray(out, dtype=logits.data.dtype).reshape(()),
                 (logits,), rule, "cross_entropy_rows")


def cross_entropy_row_values(logits, gold):
    """Per-row cross entropy as a plain numpy vector (no gradient)."""
    gold = np.asarray(gold, dtype=np.intp)
    rows = np.arange(logits.shape[0])
    m = logits.max(axis=-1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=-1))
    return lse - logits[rows, gold]


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(build, params, h=1e-4, exclude_below=1e-8):
    """Compare tape gradients of `build()` against central differences.

    `build` must construct the forward pass from scratch and return a scalar
    Tensor; it is called repeatedly with perturbed parameter entries. Params
    must be float64 ("wide precision"); the computation must be deterministic,
    which is verified by evaluating the baseline twice and demanding bit
    equality.

    Returns (max_rel_err, per_param) where per_param maps a param's name to
    its own max relative error. A coordinate is excluded when the analytic
    gradient magnitude falls below `exclude_below`. Relative error is
    |analytic - numeric| / max(|analytic|, |numeric|).
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 parameters")

    base_a = float(build().data)
    base_b = float(build().data)
    if base_a != base_b:
        raise NonDeterministicError(
            "two baseline evaluations differ; computation is not deterministic")

    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = build()
    tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    max_rel = 0.0
    per_param = {}
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(build().data)
            flat[i] = orig - h
            f_minus = float(build().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a_i = a_flat[i]
            if abs(a_i) < exclude_below:
                continue
            rel = abs(a_i - numeric) / max(abs(a_i), abs(numeric))
            worst = max(worst, rel)
        key = p.name if p.name is not None else f"param{len(per_param)}"
        per_param[key] = worst
        max_rel = max(max_rel, worst)
    return max_rel, per_param
