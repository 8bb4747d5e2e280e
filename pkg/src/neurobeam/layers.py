"""Complex-valued network layers on top of the autodiff engine.

Complex tensors are (real, imag) pairs of real tensors; every complex
layer applies the complex product rule through real building blocks, so
the engine differentiates the wiring for free. Feature maps are laid out
[batch x channels x freq x time]; convolutions stride the frequency axis
and are causal along time (past-only padding).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class ComplexTensor:
    """A complex array carried as (real, imag) autodiff tensors."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        if re.shape != im.shape:
            raise ValueError(f"real/imag shapes differ: {re.shape} vs {im.shape}")
        self.re = re
        self.im = im

    @property
    def shape(self):
        return self.re.shape

    @classmethod
    def from_numpy(cls, arr, dtype=np.float64, needs_grad=False):
        arr = np.asarray(arr)
        re = Tensor(np.ascontiguousarray(arr.real, dtype=dtype), needs_grad=needs_grad)
        im = Tensor(np.ascontiguousarray(arr.imag, dtype=dtype), needs_grad=needs_grad)
        return cls(re, im)

    def to_numpy(self):
        return self.re.data.astype(np.float64) + 1j * self.im.data.astype(np.float64)


def complex_magnitude(x, eps=1e-12):
    """|x| as a real tensor; eps keeps the gradient finite at zero."""
    return ad.sqrt(x.re * x.re + x.im * x.im + eps)


# ---------------------------------------------------------------------------
# Real strided 2-d convolution: numpy kernels shared by forward and adjoint
# ---------------------------------------------------------------------------

def _conv_out_size(n, k, stride, pad):
    return (n + pad[0] + pad[1] - k) // stride + 1


def _pad_map(x, pad_f, pad_t):
    return np.pad(x, ((0, 0), (0, 0), pad_f, pad_t))


def conv2d_raw(x, w, stride, pad_f, pad_t):
    """out[b,o,u,v] = sum_{c,i,j} w[o,c,i,j] * xpad[b,c, u*sf+i, v*st+j]."""
    sf, st = stride
    _, _, kf, kt = w.shape
    xp = _pad_map(x, pad_f, pad_t)
    fo = _conv_out_size(x.shape[2], kf, sf, pad_f)
    to = _conv_out_size(x.shape[3], kt, st, pad_t)
    out = np.zeros((x.shape[0], w.shape[0], fo, to), dtype=x.dtype)
    for i in range(kf):
        for j in range(kt):
            xs = xp[:, :, i : i + sf * fo : sf, j : j + st * to : st]
            out += np.tensordot(w[:, :, i, j], xs, axes=([1], [1])).transpose(1, 0, 2, 3)
    return out


def conv2d_input_adjoint(g, w, stride, pad_f, pad_t, in_ft):
    """Adjoint of conv2d_raw with respect to its input (scatter-add)."""
    sf, st = stride
    _, _, kf, kt = w.shape
    fi, ti = in_ft
    fo, to = g.shape[2], g.shape[3]
    xp_grad = np.zeros(
        (g.shape[0], w.shape[1], fi + pad_f[0] + pad_f[1], ti + pad_t[0] + pad_t[1]),
        dtype=g.dtype,
    )
    for i in range(kf):
        for j in range(kt):
            contrib = np.tensordot(w[:, :, i, j], g, axes=([0], [1]))
            xp_grad[:, :, i : i + sf * fo : sf, j : j + st * to : st] += contrib.transpose(
                1, 0, 2, 3
            )
    return xp_grad[:, :, pad_f[0] : pad_f[0] + fi, pad_t[0] : pad_t[0] + ti]


def conv2d_kernel_adjoint(x, g, stride, pad_f, pad_t, kshape):
    """Adjoint of conv2d_raw with respect to its kernel (correlation)."""
    sf, st = stride
    _, _, kf, kt = kshape
    fo, to = g.shape[2], g.shape[3]
    xp = _pad_map(x, pad_f, pad_t)
    gw = np.zeros(kshape, dtype=g.dtype)
    for i in range(kf):
        for j in range(kt):
            xs = xp[:, :, i : i + sf * fo : sf, j : j + st * to : st]
            gw[:, :, i, j] = np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))
    return gw


def conv2d(x, w, stride, pad_f, pad_t):
    """Strided 2-d convolution as an autodiff op."""
    out_data = conv2d_raw(x.data, w.data, stride, pad_f, pad_t)
    in_ft = (x.shape[2], x.shape[3])

    def backward_fn(g):
        if x.needs_grad:
            x.accumulate(conv2d_input_adjoint(g, w.data, stride, pad_f, pad_t, in_ft))
        if w.needs_grad:
            w.accumulate(conv2d_kernel_adjoint(x.data, g, stride, pad_f, pad_t, w.shape))

    return Tensor(out_data, (x, w), backward_fn)


def conv2d_transpose(x, w, stride, pad_f, pad_t, out_ft):
    """Transposed convolution: the exact adjoint of ``conv2d``.

    ``out_ft`` declares the output spatial size, which must map back to
    the input size under the forward-conv arithmetic.
    """
    sf, st = stride
    _, _, kf, kt = w.shape
    expect_f = _conv_out_size(out_ft[0], kf, sf, pad_f)
    expect_t = _conv_out_size(out_ft[1], kt, st, pad_t)
    if (expect_f, expect_t) != (x.shape[2], x.shape[3]):
        raise ValueError(
            f"declared output {out_ft} maps to {(expect_f, expect_t)}, "
            f"but input is {(x.shape[2], x.shape[3])}"
        )
    out_data = conv2d_input_adjoint(x.data, w.data, stride, pad_f, pad_t, out_ft)

    def backward_fn(g):
        if x.needs_grad:
            x.accumulate(conv2d_raw(g, w.data, stride, pad_f, pad_t))
        if w.needs_grad:
            w.accumulate(conv2d_kernel_adjoint(g, x.data, stride, pad_f, pad_t, w.shape))

    return Tensor(out_data, (x, w), backward_fn)


# ---------------------------------------------------------------------------
# Fused LSTM (single op with hand-written backprop-through-time)
# ---------------------------------------------------------------------------

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm(x, wx, wh, b):
    """Unidirectional LSTM over a [T x D] sequence, zero initial state.

    Gate packing along the 4H axis is (input, forget, cell, output).
    Returns the hidden-state sequence [T x H].
    """
    t_len = x.shape[0]
    hidden = wh.shape[1]
    pre = x.data @ wx.data.T + b.data
    gi = np.zeros((t_len, hidden), dtype=x.dtype)
    gf = np.zeros_like(gi)
    gg = np.zeros_like(gi)
    go = np.zeros_like(gi)
    cs = np.zeros_like(gi)
    tcs = np.zeros_like(gi)
    hs = np.zeros_like(gi)
    h_prev = np.zeros(hidden, dtype=x.dtype)
    c_prev = np.zeros(hidden, dtype=x.dtype)
    for t in range(t_len):
        a = pre[t] + wh.data @ h_prev
        gi[t] = _sigmoid(a[:hidden])
        gf[t] = _sigmoid(a[hidden : 2 * hidden])
        gg[t] = np.tanh(a[2 * hidden : 3 * hidden])
        go[t] = _sigmoid(a[3 * hidden :])
        cs[t] = gf[t] * c_prev + gi[t] * gg[t]
        tcs[t] = np.tanh(cs[t])
        hs[t] = go[t] * tcs[t]
        h_prev = hs[t]
        c_prev = cs[t]

    def backward_fn(gh):
        da_all = np.zeros((t_len, 4 * hidden), dtype=x.dtype)
        dh_next = np.zeros(hidden, dtype=x.dtype)
        dc_next = np.zeros(hidden, dtype=x.dtype)
        for t in range(t_len - 1, -1, -1):
            dh = gh[t] + dh_next
            do = dh * tcs[t]
            dc = dh * go[t] * (1.0 - tcs[t] ** 2) + dc_next
            di = dc * gg[t]
            dg = dc * gi[t]
            cp = cs[t - 1] if t > 0 else np.zeros(hidden, dtype=x.dtype)
            df = dc * cp
            dc_next = dc * gf[t]
            da = da_all[t]
            da[:hidden] = di * gi[t] * (1.0 - gi[t])
            da[hidden : 2 * hidden] = df * gf[t] * (1.0 - gf[t])
            da[2 * hidden : 3 * hidden] = dg * (1.0 - gg[t] ** 2)
            da[3 * hidden :] = do * go[t] * (1.0 - go[t])
            dh_next = wh.data.T @ da
        if x.needs_grad:
            x.accumulate(da_all @ wx.data)
        if wx.needs_grad:
            wx.accumulate(da_all.T @ x.data)
        if wh.needs_grad:
            h_prev_seq = np.vstack([np.zeros((1, hidden), dtype=x.dtype), hs[:-1]])
            wh.accumulate(da_all.T @ h_prev_seq)
        if b.needs_grad:
            b.accumulate(da_all.sum(axis=0))

    return Tensor(hs, (x, wx, wh, b), backward_fn)


# ---------------------------------------------------------------------------
# Parameter initialization
# ---------------------------------------------------------------------------

def uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))


def zeros_param(shape, dtype):
    return Tensor(np.zeros(shape, dtype=dtype))


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

class ComplexConv2d:
    """Complex convolution: (Wr + jWi) * (xr + jxi) via four real convs."""

    def __init__(self, in_ch, out_ch, kernel, stride, rng, dtype, causal=True):
        kf, kt = kernel
        self.stride = stride
        self.pad_f = ((kf - 1) // 2, kf // 2)
        self.pad_t = (kt - 1, 0) if causal else (0, kt - 1)
        fan_in = in_ch * kf * kt
        self.w_r = uniform_init(rng, (out_ch, in_ch, kf, kt), fan_in, dtype)
        self.w_i = uniform_init(rng, (out_ch, in_ch, kf, kt), fan_in, dtype)
        self.b_r = zeros_param(out_ch, dtype)
        self.b_i = zeros_param(out_ch, dtype)

    def params(self):
        return {"w_r": self.w_r, "w_i": self.w_i, "b_r": self.b_r, "b_i": self.b_i}

    def __call__(self, x):
        rr = conv2d(x.re, self.w_r, self.stride, self.pad_f, self.pad_t)
        ii = conv2d(x.im, self.w_i, self.stride, self.pad_f, self.pad_t)
        ri = conv2d(x.re, self.w_i, self.stride, self.pad_f, self.pad_t)
        ir = conv2d(x.im, self.w_r, self.stride, self.pad_f, self.pad_t)
        out_ch = self.w_r.shape[0]
        br = ad.reshape(self.b_r, (1, out_ch, 1, 1))
        bi = ad.reshape(self.b_i, (1, out_ch, 1, 1))
        return ComplexTensor(rr - ii + br, ri + ir + bi)


class ComplexConvTranspose2d:
    """Adjoint of ``ComplexConv2d``: transposed spatially, kernel conjugated.

    With matching geometry, <conv(x), y> == <x, deconv(y)> under the real
    inner product on (re, im) pairs. The frequency axis upsamples by the
    stride; time is causal (the adjoint of an anti-causal pad).
    """

    def __init__(self, in_ch, out_ch, kernel, stride, rng, dtype):
        kf, kt = kernel
        self.stride = stride
        self.pad_f = ((kf - 1) // 2, kf // 2)
        self.pad_t = (0, kt - 1)
        fan_in = in_ch * kf * kt
        self.w_r = uniform_init(rng, (in_ch, out_ch, kf, kt), fan_in, dtype)
        self.w_i = uniform_init(rng, (in_ch, out_ch, kf, kt), fan_in, dtype)
        self.b_r = zeros_param(out_ch, dtype)
        self.b_i = zeros_param(out_ch, dtype)

    def params(self):
        return {"w_r": self.w_r, "w_i": self.w_i, "b_r": self.b_r, "b_i": self.b_i}

    def __call__(self, x):
        out_ft = (x.shape[2] * self.stride[0], x.shape[3])
        args = (self.stride, self.pad_f, self.pad_t, out_ft)
        rr = conv2d_transpose(x.re, self.w_r, *args)
        ii = conv2d_transpose(x.im, self.w_i, *args)
        ri = conv2d_transpose(x.re, self.w_i, *args)
        ir = conv2d_transpose(x.im, self.w_r, *args)
        out_ch = self.w_r.shape[1]
        br = ad.reshape(self.b_r, (1, out_ch, 1, 1))
        bi = ad.reshape(self.b_i, (1, out_ch, 1, 1))
        return ComplexTensor(rr + ii + br, ir - ri + bi)


class ComplexBatchNorm:
    """Per-channel standardization applied independently to re and im.

    Training mode normalizes with current-batch statistics over
    (batch, freq, time) and tracks running averages; eval mode applies the
    frozen running statistics, which keeps inference causal.
    """

    def __init__(self, channels, dtype, eps=1e-5, momentum=0.1):
        self.eps = eps
        self.momentum = momentum
        self.gamma_r = Tensor(np.ones(channels, dtype=dtype))
        self.beta_r = zeros_param(channels, dtype)
        self.gamma_i = Tensor(np.ones(channels, dtype=dtype))
        self.beta_i = zeros_param(channels, dtype)
        self.running_mean_r = np.zeros(channels, dtype=dtype)
        self.running_var_r = np.ones(channels, dtype=dtype)
        self.running_mean_i = np.zeros(channels, dtype=dtype)
        self.running_var_i = np.ones(channels, dtype=dtype)

    def params(self):
        return {
            "gamma_r": self.gamma_r, "beta_r": self.beta_r,
            "gamma_i": self.gamma_i, "beta_i": self.beta_i,
        }

    def buffers(self):
        return {
            "running_mean_r": self.running_mean_r, "running_var_r": self.running_var_r,
            "running_mean_i": self.running_mean_i, "running_var_i": self.running_var_i,
        }

    def set_buffers(self, values):
        for name, arr in values.items():
            getattr(self, name)[...] = arr

    def _normalize(self, t, gamma, beta, rmean, rvar, training):
        channels = gamma.shape[0]
        cshape = (1, channels, 1, 1)
        if training:
            mu = ad.reduce_mean(t, axis=(0, 2, 3), keepdims=True)
            centered = t - mu
            var = ad.reduce_mean(centered * centered, axis=(0, 2, 3), keepdims=True)
            m = self.momentum
            rmean *= 1.0 - m
            rmean += m * mu.data.reshape(channels)
            rvar *= 1.0 - m
            rvar += m * var.data.reshape(channels)
        else:
            mu = ad.constant(rmean.reshape(cshape))
            centered = t - mu
            var = ad.constant(rvar.reshape(cshape))
        xh = centered / ad.sqrt(var + self.eps)
        return xh * ad.reshape(gamma, cshape) + ad.reshape(beta, cshape)

    def __call__(self, x, training):
        re = self._normalize(
            x.re, self.gamma_r, self.beta_r, self.running_mean_r, self.running_var_r, training
        )
        im = self._normalize(
            x.im, self.gamma_i, self.beta_i, self.running_mean_i, self.running_var_i, training
        )
        return ComplexTensor(re, im)


class ComplexPReLU:
    """PReLU applied independently to real and imaginary parts."""

    def __init__(self, channels, dtype, axis=1, init=0.25):
        self.axis = axis
        self.slope_r = Tensor(np.full(channels, init, dtype=dtype))
        self.slope_i = Tensor(np.full(channels, init, dtype=dtype))

    def params(self):
        return {"slope_r": self.slope_r, "slope_i": self.slope_i}

    def __call__(self, x):
        return ComplexTensor(
            ad.prelu(x.re, self.slope_r, self.axis),
            ad.prelu(x.im, self.slope_i, self.axis),
        )


class Linear:
    def __init__(self, in_features, out_features, rng, dtype):
        self.w = uniform_init(rng, (out_features, in_features), in_features, dtype)
        self.b = zeros_param(out_features, dtype)

    def params(self):
        return {"w": self.w, "b": self.b}

    def __call__(self, x):
        return ad.matmul(x, ad.transpose(self.w, (1, 0))) + self.b


class ComplexLinear:
    def __init__(self, in_features, out_features, rng, dtype):
        self.w_r = uniform_init(rng, (out_features, in_features), in_features, dtype)
        self.w_i = uniform_init(rng, (out_features, in_features), in_features, dtype)
        self.b_r = zeros_param(out_features, dtype)
        self.b_i = zeros_param(out_features, dtype)

    def params(self):
        return {"w_r": self.w_r, "w_i": self.w_i, "b_r": self.b_r, "b_i": self.b_i}

    def __call__(self, x):
        wrt = ad.transpose(self.w_r, (1, 0))
        wit = ad.transpose(self.w_i, (1, 0))
        re = ad.matmul(x.re, wrt) - ad.matmul(x.im, wit) + self.b_r
        im = ad.matmul(x.re, wit) + ad.matmul(x.im, wrt) + self.b_i
        return ComplexTensor(re, im)


class RealLSTM:
    def __init__(self, input_size, hidden, rng, dtype):
        self.wx = uniform_init(rng, (4 * hidden, input_size), input_size, dtype)
        self.wh = uniform_init(rng, (4 * hidden, hidden), hidden, dtype)
        self.b = zeros_param(4 * hidden, dtype)

    def params(self):
        return {"wx": self.wx, "wh": self.wh, "b": self.b}

    def __call__(self, x):
        return lstm(x, self.wx, self.wh, self.b)


class ComplexLSTM:
    """Two real LSTMs combined by the complex product rule:
    out_re = L_r(x_re) - L_i(x_im), out_im = L_r(x_im) + L_i(x_re).
    """

    def __init__(self, input_size, hidden, rng, dtype):
        self.lstm_r = RealLSTM(input_size, hidden, rng, dtype)
        self.lstm_i = RealLSTM(input_size, hidden, rng, dtype)

    def params(self):
        out = {}
        for key, p in self.lstm_r.params().items():
            out[f"r.{key}"] = p
        for key, p in self.lstm_i.params().items():
            out[f"i.{key}"] = p
        return out

    def __call__(self, x):
        return ComplexTensor(
            self.lstm_r(x.re) - self.lstm_i(x.im),
            self.lstm_r(x.im) + self.lstm_i(x.re),
        )
