"""Dense-tensor algebra with a minimal reverse-mode tape.

Tensors wrap NumPy arrays of rank <= 3, float32 for training and inference or
float64 for gradient checking. Recording is define-by-run: while a
:class:`Tape` is active on the current thread, every op appends one node, and
``Tape.backward`` replays the nodes in strict reverse creation order,
accumulating into ``grad`` on every leaf created with ``requires_grad=True``.
With no active tape the same ops run forward-only at full speed.

BLAS (via ``numpy.matmul``) carries the matrix products; the fused kernels in
:mod:`vagnet._kernels` carry softmax, layer norm, ReLU, cross-entropy, and
the Adam update.

Finiteness: leaf tensors built from external data via :func:`tensor` are
scanned and reject NaN/Inf with :class:`NumericError`. Intermediate op
outputs are not scanned on every step; callers that need the guarantee (the
model forward, the training loop) check their boundary values explicitly.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .errors import DimensionError, InputError, NumericError

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A dense array plus the bookkeeping the tape needs.

    ``requires_grad`` marks a leaf whose gradient should be accumulated;
    ``tracked`` marks any tensor (leaf or intermediate) that participates in
    the active tape's graph.
    """

    __slots__ = ("data", "requires_grad", "grad", "tracked")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        if not isinstance(data, np.ndarray) or data.dtype.type not in _FLOAT_DTYPES:
            raise InputError("Tensor expects a float32/float64 ndarray; use tensor()")
        if data.ndim > 3:
            raise DimensionError(f"rank {data.ndim} tensor; only rank <= 3 is supported")
        self.data = data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.tracked = requires_grad

    @classmethod
    def _wrap(cls, data: np.ndarray, tracked: bool) -> "Tensor":
        out = object.__new__(cls)
        out.data = data
        out.requires_grad = False
        out.grad = None
        out.tracked = tracked
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise InputError(f"item() needs a single element; shape is {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, tracked={self.tracked})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    """Build a leaf tensor from external data, rejecting NaN/Inf.

    ``dtype`` defaults to float32 unless the input already carries one of the
    two supported float dtypes.
    """
    arr = np.asarray(data)
    if dtype is None:
        dtype = arr.dtype.type if arr.dtype.type in _FLOAT_DTYPES else np.float32
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if not np.isfinite(arr).all():
        raise NumericError("non-finite value in tensor data")
    return Tensor(arr, requires_grad=requires_grad)


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


# --- tape ------------------------------------------------------------------

@dataclass
class TapeNode:
    """One recorded op: its tag, inputs, output, and backward closure.

    The closure maps the output gradient to one gradient (or None) per input,
    using whatever intermediates it captured at forward time.
    """

    op: str
    inputs: tuple[Tensor, ...]
    out: Tensor
    backward: Callable[[np.ndarray], tuple]


_STACK = threading.local()


def _tapes() -> list["Tape"]:
    stack = getattr(_STACK, "tapes", None)
    if stack is None:
        stack = []
        _STACK.tapes = stack
    return stack


def _active() -> "Tape | None":
    stack = _tapes()
    return stack[-1] if stack else None


class Tape:
    """Append-only record of one forward pass.

    One tape belongs to one logical session on one thread; independent
    sessions may run tapes concurrently on separate threads.
    """

    def __init__(self):
        self._nodes: list[TapeNode] = []

    def __enter__(self) -> "Tape":
        _tapes().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _tapes().pop()
        assert popped is self, "tapes must unwind in LIFO order"

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``grad`` on every tracked leaf."""
        if loss.data.size != 1:
            raise InputError("backward expects a scalar loss")
        if not loss.tracked:
            raise InputError("loss is not connected to this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self._nodes):
            g_out = grads.pop(id(node.out), None)
            if g_out is None:
                continue
            for inp, g in zip(node.inputs, node.backward(g_out)):
                if g is None or not inp.tracked:
                    continue
                if inp.requires_grad:
                    inp.grad = g.copy() if inp.grad is None else inp.grad + g
                else:
                    key = id(inp)
                    held = grads.get(key)
                    grads[key] = g if held is None else held + g


def _record(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
            backward: Callable[[np.ndarray], tuple]) -> Tensor:
    tape = _active()
    tracked = tape is not None and any(t.tracked for t in inputs)
    out = Tensor._wrap(out_data, tracked)
    if tracked:
        tape._nodes.append(TapeNode(op, inputs, out, backward))
    return out


def _rows(arr: np.ndarray) -> np.ndarray:
    """View (or copy) of ``arr`` as 2-D rows over the last axis."""
    return np.ascontiguousarray(arr).reshape(-1, arr.shape[-1])


# --- ops ---------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports (m,k)@(k,n), (B,m,k)@(k,n), (B,m,k)@(B,k,n)."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError("matmul operands must have rank >= 2")
    if ad.shape[-1] != bd.shape[-2]:
        raise DimensionError(
            f"matmul inner extents differ: {ad.shape} @ {bd.shape}")
    if ad.ndim == 2 and bd.ndim == 3:
        raise DimensionError("matmul does not broadcast a 2-D left operand over batches")
    if ad.ndim == 3 and bd.ndim == 3 and ad.shape[0] != bd.shape[0]:
        raise DimensionError(
            f"matmul batch extents differ: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def backward(g: np.ndarray):
        ga = g @ bd.swapaxes(-1, -2)
        if ad.ndim == 3 and bd.ndim == 2:
            gb = np.tensordot(ad, g, axes=([0, 1], [0, 1]))
        else:
            gb = ad.swapaxes(-1, -2) @ g
        return ga, gb

    return _record("matmul", (a, b), out, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a vector broadcast over the last axis."""
    ad, bd = a.data, b.data
    vector_bias = bd.ndim == 1 and ad.shape[-1] == bd.shape[0]
    if not vector_bias and ad.shape != bd.shape:
        raise DimensionError(f"add shapes differ: {ad.shape} + {bd.shape}")
    out = ad + bd

    def backward(g: np.ndarray):
        if vector_bias and g.ndim > 1:
            return g, g.reshape(-1, g.shape[-1]).sum(axis=0)
        return g, g

    return _record("add", (a, b), out, backward)


def add_const(a: Tensor, c: np.ndarray) -> Tensor:
    """Add a constant array (positional table, mask bias); no gradient to it."""
    out = a.data + c

    def backward(g: np.ndarray):
        return (g,)

    return _record("add_const", (a,), out, backward)


def scale(a: Tensor, s: float) -> Tensor:
    out = a.data * s

    def backward(g: np.ndarray):
        return (g * s,)

    return _record("scale", (a,), out, backward)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is 0."""
    shape = x.data.shape
    y2 = K.relu_fwd(_rows(x.data))
    out = y2.reshape(shape)

    def backward(g: np.ndarray):
        return (K.relu_bwd(y2, _rows(g)).reshape(shape),)

    return _record("relu", (x,), out, backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by per-row max subtraction.

    Rows sum to 1; -inf entries (from mask bias) get weight 0, and a fully
    masked row comes back all-zero.
    """
    shape = x.data.shape
    y2 = K.softmax_rows_fwd(_rows(x.data))
    out = y2.reshape(shape)

    def backward(g: np.ndarray):
        return (K.softmax_rows_bwd(y2, _rows(g)).reshape(shape),)

    return _record("softmax_rows", (x,), out, backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then gain * x + bias."""
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise DimensionError("layer_norm gain/bias must match the last axis")
    shape = x.data.shape
    y2, xhat, inv_std = K.layer_norm_fwd(_rows(x.data), gain.data, bias.data, eps)
    out = y2.reshape(shape)

    def backward(g: np.ndarray):
        gx, ggain, gbias = K.layer_norm_bwd(_rows(g), xhat, inv_std, gain.data)
        return gx.reshape(shape), ggain, gbias

    return _record("layer_norm", (x, gain, bias), out, backward)


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    if len(parts) == 0:
        raise InputError("concat_last needs at least one tensor")
    lead = parts[0].data.shape[:-1]
    for p in parts[1:]:
        if p.data.shape[:-1] != lead:
            raise DimensionError("concat_last leading extents differ")
    out = np.concatenate([p.data for p in parts], axis=-1)
    widths = [p.data.shape[-1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g: np.ndarray):
        return tuple(g[..., offsets[i]:offsets[i + 1]] for i in range(len(widths)))

    return _record("concat_last", tuple(parts), out, backward)


def transpose_last2(x: Tensor) -> Tensor:
    if x.data.ndim < 2:
        raise DimensionError("transpose_last2 needs rank >= 2")
    out = x.data.swapaxes(-1, -2)

    def backward(g: np.ndarray):
        return (g.swapaxes(-1, -2),)

    return _record("transpose_last2", (x,), out, backward)


def select_token(x: Tensor, index: int) -> Tensor:
    """Pick one position along the middle axis of a (B, n, d) tensor."""
    if x.data.ndim != 3:
        raise DimensionError("select_token expects a rank-3 tensor")
    n = x.data.shape[1]
    idx = index if index >= 0 else n + index
    if not 0 <= idx < n:
        raise InputError(f"token index {index} out of range for n={n}")
    out = np.ascontiguousarray(x.data[:, idx, :])

    def backward(g: np.ndarray):
        gx = np.zeros_like(x.data)
        gx[:, idx, :] = g
        return (gx,)

    return _record("select_token", (x,), out, backward)


def mean_tokens(x: Tensor) -> Tensor:
    """Mean over the middle axis of a (B, n, d) tensor."""
    if x.data.ndim != 3:
        raise DimensionError("mean_tokens expects a rank-3 tensor")
    n = x.data.shape[1]
    out = x.data.mean(axis=1)

    def backward(g: np.ndarray):
        return (np.repeat(g[:, None, :] / n, n, axis=1),)

    return _record("mean_tokens", (x,), out, backward)


def cross_entropy(logits: Tensor, labels: Tensor) -> Tensor:
    """Mean over rows of -sum(y * log softmax(p)) with one-hot label rows.

    The log runs through the shifted log-sum-exp, so saturated logits are
    safe. Label rows must be exactly one-hot.
    """
    ld, yd = logits.data, labels.data
    if ld.ndim != 2 or yd.shape != ld.shape:
        raise DimensionError(f"cross_entropy shapes differ: {ld.shape} vs {yd.shape}")
    if not (np.isin(yd, (0.0, 1.0)).all() and (yd.sum(axis=1) == 1.0).all()):
        raise InputError("cross_entropy labels must be one-hot rows")
    loss, probs = K.softmax_xent_fwd(np.ascontiguousarray(ld), np.ascontiguousarray(yd))
    out = np.asarray(loss, dtype=ld.dtype)

    def backward(g: np.ndarray):
        return K.softmax_xent_bwd(probs, yd, float(g)), None

    return _record("cross_entropy", (logits, labels), out, backward)


# --- Adam --------------------------------------------------------------------

@dataclass
class AdamState:
    """Moment estimates and step counter for one parameter list."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params: Sequence[Tensor], lr: float, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                   m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray],
              state: AdamState) -> tuple[Sequence[Tensor], AdamState]:
    """One bias-corrected Adam update over aligned (params, grads, state)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("adam_step params/grads/state lengths differ")
    for p, g, m in zip(params, grads, state.m):
        if p.data.shape != g.shape or p.data.shape != m.shape:
            raise DimensionError(
                f"adam_step shape mismatch: param {p.data.shape}, grad {g.shape}")
    state.t += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        K.adam_update(p.data.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                      m.reshape(-1), v.reshape(-1), state.t,
                      state.lr, state.beta1, state.beta2, state.eps)
    return params, state


# --- gradient checking --------------------------------------------------------

def gradient_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                   h: float = 1e-5) -> float:
    """Worst guarded relative error between tape and central-difference grads.

    ``f`` rebuilds the scalar loss from the current parameter values on every
    call. Every parameter must be float64 (central differences in float32 are
    too noisy to judge anything). The relative error of a coordinate is
    ``|a - b| / max(|a|, |b|, 1e-3)``; the floor keeps near-zero gradients
    from turning difference noise into spurious failures.
    """
    if h <= 0:
        raise InputError("gradient_check step h must be > 0")
    for p in params:
        if p.data.dtype.type is not np.float64:
            raise InputError("gradient_check requires float64 parameters")

    zero_grads(params)
    with Tape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    zero_grads(params)

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            fp = f().item()
            flat[i] = saved - h
            fm = f().item()
            flat[i] = saved
            num = (fp - fm) / (2.0 * h)
            err = abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), 1e-3)
            if err > worst:
                worst = err
    return worst
