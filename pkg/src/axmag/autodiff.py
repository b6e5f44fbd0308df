"""Minimal reverse-mode differentiation engine on numpy arrays.

Networks are built by calling the op functions below on :class:`Tensor`
objects; each call records its parents and a backward closure, forming the
tape implicitly as an operation graph. :func:`backward` replays that graph
once in reverse topological order, accumulating gradients into every tensor
created with ``requires_grad=True``. Ops propagate ``requires_grad``, so
inference-mode code (no gradients requested anywhere) records nothing.

Convolutions run as im2col + BLAS matmul; their backward pass is expressed
as convolutions again (dilated/flipped), so the whole training loop stays
inside sgemm. Dtype follows the input arrays: float32 for training,
float64 for gradient checking.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None, name=""):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad}, name={self.name!r})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name="") -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True, name=name)


def _node(data, parents, backward_fn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


def _accumulate(t: Tensor, grad):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += grad


def _unbroadcast(grad, shape):
    # reduce a broadcasted gradient back to `shape`
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Run the tape backwards from a scalar loss.

    Builds the reverse topological order iteratively (graphs are deep
    enough to overflow Python's recursion limit) and calls every node's
    backward closure exactly once.
    """
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")
    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node.backward_fn is not None:
            node.backward_fn(node.grad)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _node(out_data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), bwd)


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        _accumulate(a, g * s)

    return _node(a.data * s, (a,), bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0)

    def bwd(g):
        _accumulate(a, g * (out_data > 0))

    return _node(out_data, (a,), bwd)


def transpose_hw(a) -> Tensor:
    """Swap the two spatial axes of a (B, H, W, C) tensor."""
    a = as_tensor(a)

    def bwd(g):
        _accumulate(a, g.swapaxes(1, 2))

    return _node(a.data.swapaxes(1, 2), (a,), bwd)


def concat_channels(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=-1)
    sizes = [p.data.shape[-1] for p in parts]

    def bwd(g):
        start = 0
        for p, n in zip(parts, sizes):
            _accumulate(p, g[..., start : start + n])
            start += n

    return _node(out_data, tuple(parts), bwd)


def upsample2_nearest(a) -> Tensor:
    a = as_tensor(a)
    out_data = np.repeat(np.repeat(a.data, 2, axis=1), 2, axis=2)

    def bwd(g):
        b, h2, w2, c = g.shape
        _accumulate(a, g.reshape(b, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4)))

    return _node(out_data, (a,), bwd)


def mean_abs(a) -> Tensor:
    """Mean absolute value (L1) over every element; returns a scalar tensor."""
    a = as_tensor(a)
    out_data = np.asarray(np.mean(np.abs(a.data)), dtype=a.data.dtype)

    def bwd(g):
        _accumulate(a, g * np.sign(a.data) / a.data.size)

    return _node(out_data, (a,), bwd)


def add_n(tensors) -> Tensor:
    out = tensors[0]
    for t in tensors[1:]:
        out = add(out, t)
    return out


def _same_pads(k):
    before = (k - 1) // 2
    return before, k - 1 - before


def _im2col(x, kh, kw, stride):
    # x is already padded; windows land on (B, Ho, Wo, C, kh, kw) and are
    # reordered to (kh, kw, C) so the flatten copy walks contiguous
    # channel runs
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    b, ho, wo = win.shape[:3]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, kh * kw * x.shape[3])
    return cols, (b, ho, wo)


def _w_matrix(w):
    # (kh, kw, cin, cout) -> (kh*kw*cin, cout), matching _im2col's order
    return w.reshape(-1, w.shape[3])


def _conv_forward(x, w, stride, pads):
    kh, kw = w.shape[:2]
    (pt, pb2), (pl, pr) = pads
    xp = np.pad(x, ((0, 0), (pt, pb2), (pl, pr), (0, 0)))
    cols, (b, ho, wo) = _im2col(xp, kh, kw, stride)
    out = cols @ _w_matrix(w)
    return out.reshape(b, ho, wo, w.shape[3])


def _dilate(y, stride):
    if stride == 1:
        return y
    b, h, w, c = y.shape
    out = np.zeros((b, (h - 1) * stride + 1, (w - 1) * stride + 1, c), dtype=y.dtype)
    out[:, ::stride, ::stride] = y
    return out


def conv2d(x, w, b=None, stride=1) -> Tensor:
    """2D convolution, NHWC layout, 'same' padding.

    ``w`` has shape (kh, kw, c_in, c_out). Output spatial dims are
    ceil(H/stride) x ceil(W/stride).
    """
    x, w = as_tensor(x), as_tensor(w)
    kh, kw = w.data.shape[:2]
    pads = (_same_pads(kh), _same_pads(kw))
    out_data = _conv_forward(x.data, w.data, stride, pads)
    if b is not None:
        b = as_tensor(b)
        out_data = out_data + b.data
        parents = (x, w, b)
    else:
        parents = (x, w)

    def bwd(g):
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 1, 2)))
        if w.requires_grad:
            (pt, pb2), (pl, pr) = pads
            xp = np.pad(x.data, ((0, 0), (pt, pb2), (pl, pr), (0, 0)))
            cols, (nb, ho, wo) = _im2col(xp, kh, kw, stride)
            gw = cols.T @ g.reshape(nb * ho * wo, -1)
            _accumulate(w, gw.reshape(w.data.shape))
        if x.requires_grad:
            # gradient w.r.t. input: correlate the stride-dilated output
            # gradient with the spatially flipped, channel-swapped kernel
            (pt, pb2), (pl, pr) = pads
            h, wdim = x.data.shape[1:3]
            gd = _dilate(g, stride)
            # strided windows may stop short of the padded input's end;
            # extend so the correlation covers every input position
            dh = (h + pt + pb2) - (gd.shape[1] + kh - 1)
            dw = (wdim + pl + pr) - (gd.shape[2] + kw - 1)
            gp = np.pad(
                gd,
                ((0, 0), (kh - 1, kh - 1 + dh), (kw - 1, kw - 1 + dw), (0, 0)),
            )
            wf = w.data[::-1, ::-1].transpose(0, 1, 3, 2)
            cols, (nb, ho, wo) = _im2col(gp, kh, kw, 1)
            gx_full = (cols @ _w_matrix(wf)).reshape(nb, ho, wo, -1)
            _accumulate(x, gx_full[:, pt : pt + h, pl : pl + wdim])

    return _node(out_data, parents, bwd)
