# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

"""Differentiable primitives on (N,C,H,W) tensors.

Every primitive computes its forward result with numpy and appends a backward
closure to the tape through `tensor.record`.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ShapeError
from .tensor import Tensor, record


def _conv_output_size(size:int, kernel:int, stride:int, padding:int) -> int:
    span = size + 2*padding - kernel
    if span < 0 or span % stride != 0:
        raise ShapeError(f"Convolution output size is not an integer: (size={size} + 2*{padding} - {kernel})/{stride} + 1")
    return span // stride + 1


def _im2col(x:np.ndarray, kh:int, kw:int, stride:int, padding:int, oh:int, ow:int) -> np.ndarray:
    # (N*oh*ow, C*kh*kw) patch matrix from a strided view of the padded input
    n, c, _, _ = x.shape
    if padding > 0:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    s = x.strides
    view = as_strided(x, shape=(n, oh, ow, c, kh, kw),
        strides=(s[0], stride*s[2], stride*s[3], s[1], s[2], s[3]), writeable=False)
    return view.reshape(n*oh*ow, c*kh*kw)


def _col2im(cols:np.ndarray, x_shape, kh:int, kw:int, stride:int, padding:int, oh:int, ow:int) -> np.ndarray:
    n, c, h, w = x_shape
    cols = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2*padding, w + 2*padding), dtype=cols.dtype)
    for i in range(kh):
        i_max = i + stride*oh
        for j in range(kw):
            j_max = j + stride*ow
            img[:, :, i:i_max:stride, j:j_max:stride] += cols[:, :, i, j, :, :]
    if padding > 0:
        img = img[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(img)


def _conv2d_backward(g:np.ndarray, x:np.ndarray, w:np.ndarray, stride:int, padding:int):
    cout, cin, kh, kw = w.shape
    n, _, oh, ow = g.shape
    cols = _im2col(x, kh, kw, stride, padding, oh, ow)
    g2 = g.transpose(0, 2, 3, 1).reshape(n*oh*ow, cout)
    dw = (g2.T @ cols).reshape(w.shape)
    db = g.sum(axis=(0, 2, 3)).reshape(1, cout, 1, 1)
    dcols = g2 @ w.reshape(cout, -1)
    dx = _col2im(dcols, x.shape, kh, kw, stride, padding, oh, ow)
    return dx, dw, db


def conv2d(x:Tensor, weight:Tensor, bias:Tensor, stride:int=1, padding:int=0) -> Tensor:
    """Cross-correlation (no kernel flip); bias has shape (1,Cout,1,1)."""
    n, c, h, w = x.shape
    cout, cin, kh, kw = weight.shape
    if c != cin:
        raise ShapeError(f"conv2d: input has {c} channels but weight {weight.shape} expects {cin}")
    if bias.shape != (1, cout, 1, 1):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match (1,{cout},1,1)")
    oh = _conv_output_size(h, kh, stride, padding)
    ow = _conv_output_size(w, kw, stride, padding)

    cols = _im2col(x.data, kh, kw, stride, padding, oh, ow)
    out = cols @ weight.data.reshape(cout, -1).T
    out = out.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2) + bias.data
    out = np.ascontiguousarray(out)

    xd, wd = x.data, weight.data
    def _backward(g):
        return _conv2d_backward(g, xd, wd, stride, padding)
    return record("conv2d", (x, weight, bias), out, _backward)


def maxpool2d(x:Tensor, kernel:int=2, stride:int=2) -> Tensor:
    if kernel != 2 or stride != 2:
        raise ValueError("maxpool2d only supports kernel=2, stride=2")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2d needs even spatial size, got {h}x{w}")
    windows = x.data.reshape(n, c, h//2, 2, w//2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h//2, w//2, 4)
    # argmax returns the first maximum, i.e. row-major order inside the window
    idx = np.argmax(windows, axis=-1)[..., None]
    out = np.take_along_axis(windows, idx, axis=-1)[..., 0]

    def _backward(g):
        gw = np.zeros((n, c, h//2, w//2, 4), dtype=g.dtype)
        np.put_along_axis(gw, idx, g[..., None], axis=-1)
        dx = gw.reshape(n, c, h//2, w//2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (dx,)
    return record("maxpool2d", (x,), np.ascontiguousarray(out), _backward)


def upsample_nearest2x(x:Tensor) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def _backward(g):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)
    return record("upsample_nearest2x", (x,), out, _backward)


def batchnorm2d(x:Tensor, gamma:Tensor, beta:Tensor, running_mean:Tensor, running_var:Tensor,
        training:bool, momentum:float=0.1, eps:float=1e-5) -> Tensor:
    """Per-channel batch normalization.

    Training mode normalizes with the biased batch variance and updates the running
    statistics in place; eval mode normalizes with the running statistics.
    """
    n, c, h, w = x.shape
    for name, p in (("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)):
        if p.shape != (1, c, 1, 1):
            raise ShapeError(f"batchnorm2d: {name} shape {p.shape} does not match (1,{c},1,1)")
    m = n*h*w

    if training:
        if m < 2:
            raise ShapeError(f"batchnorm2d in training mode needs N*H*W >= 2, got {m}")
        mean = x.data.mean(axis=(0, 2, 3), keepdims=True)
        var = x.data.var(axis=(0, 2, 3), keepdims=True)
        running_mean.data[...] = (1 - momentum)*running_mean.data + momentum*mean
        running_var.data[...] = (1 - momentum)*running_var.data + momentum*var
    else:
        mean = running_mean.data
        var = running_var.data

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = gamma.data*xhat + beta.data
    gd = gamma.data

    def _backward(g):
        dgamma = (g*xhat).sum(axis=(0, 2, 3), keepdims=True)
        dbeta = g.sum(axis=(0, 2, 3), keepdims=True)
        dxhat = g*gd
        if training:
            dx = inv_std/m * (m*dxhat - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                - xhat*(dxhat*xhat).sum(axis=(0, 2, 3), keepdims=True))
        else:
            dx = dxhat*inv_std
        return dx, dgamma, dbeta, None, None
    return record("batchnorm2d", (x, gamma, beta, running_mean, running_var), out.astype(x.dtype, copy=False), _backward)


def relu6(x:Tensor) -> Tensor:
    out = np.clip(x.data, 0, 6)
    mask = (x.data > 0) & (x.data < 6)

    def _backward(g):
        return (g*mask,)
    return record("relu6", (x,), out, _backward)


def sigmoid(x:Tensor) -> Tensor:
    d = x.data
    # split on sign so exp never overflows
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1/(1 + e), e/(1 + e)).astype(d.dtype, copy=False)

    def _backward(g):
        return (g*out*(1 - out),)
    return record("sigmoid", (x,), out, _backward)


def concat_channels(a:Tensor, b:Tensor) -> Tensor:
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"concat_channels: batch/spatial mismatch between {a.shape} and {b.shape}")
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def _backward(g):
        return np.ascontiguousarray(g[:, :ca]), np.ascontiguousarray(g[:, ca:])
    return record("concat_channels", (a, b), out, _backward)


def add(a:Tensor, b:Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")

    def _backward(g):
        return g, g
    return record("add", (a, b), a.data + b.data, _backward)


def scale(x:Tensor, factor:float) -> Tensor:
    out = x.data * x.dtype.type(factor)

    def _backward(g):
        return (g*x.dtype.type(factor),)
    return record("scale", (x,), out, _backward)


def weighted_sum(x:Tensor, weights:np.ndarray=None) -> Tensor:
    """Sum of all elements (optionally weighted elementwise) as a (1,1,1,1) tensor."""
    w = np.ones_like(x.data) if weights is None else np.asarray(weights, dtype=x.dtype)
    if w.shape != x.shape:
        raise ShapeError(f"weighted_sum: weights {w.shape} do not match {x.shape}")
    out = np.asarray((x.data*w).sum(), dtype=x.dtype).reshape(1, 1, 1, 1)

    def _backward(g):
        return (g.reshape(()) * w,)
    return record("weighted_sum", (x,), out, _backward)


def sum_all(x:Tensor) -> Tensor:
    return weighted_sum(x)
