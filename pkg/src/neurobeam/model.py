"""The multi-channel encoder/LSTM/decoder network that emits per-channel
beamforming filters, and the auxiliary localization head.

The encoder halves the frequency axis per block; the analysis spectrum of
257 bins is reconciled with that arithmetic by dropping the DC bin on the
way in (256 modeled bins) and copying the first modeled bin's weight into
the DC slot on the way out.

The emitted filter tensor is the conjugated form: applying it is a plain
(non-conjugated) product against the input spectrogram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import (
    ComplexBatchNorm,
    ComplexConvTranspose2d,
    ComplexConv2d,
    ComplexLSTM,
    ComplexLinear,
    ComplexPReLU,
    ComplexTensor,
    Linear,
)

MAGNITUDE_EPS = 1e-12


@dataclass(frozen=True)
class MimoDccrnConfig:
    mics: int = 4
    encoder_channels: tuple = (16, 32, 64, 128, 256, 256)
    kernel: tuple = (5, 2)
    stride: tuple = (2, 1)
    lstm_hidden: int = 256
    freq_bins_model: int = 256
    scale: int = 1

    def __post_init__(self):
        if self.mics < 1:
            raise ValueError(f"need at least one microphone channel, got {self.mics}")
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        depth = len(self.encoder_channels)
        if depth < 1:
            raise ValueError("encoder_channels must be non-empty")
        if self.freq_bins_model % (self.stride[0] ** depth) != 0:
            raise ValueError(
                f"freq_bins_model={self.freq_bins_model} must be divisible by "
                f"stride^depth = {self.stride[0] ** depth}"
            )

    @property
    def depth(self):
        return len(self.encoder_channels)

    @property
    def channels(self):
        return tuple(max(1, c // self.scale) for c in self.encoder_channels)

    @property
    def hidden(self):
        return max(1, self.lstm_hidden // self.scale)

    @property
    def bottleneck_freq(self):
        return self.freq_bins_model // (self.stride[0] ** self.depth)

    def to_dict(self):
        return {
            "mics": self.mics,
            "encoder_channels": list(self.encoder_channels),
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "lstm_hidden": self.lstm_hidden,
            "freq_bins_model": self.freq_bins_model,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            mics=d["mics"],
            encoder_channels=tuple(d["encoder_channels"]),
            kernel=tuple(d["kernel"]),
            stride=tuple(d["stride"]),
            lstm_hidden=d["lstm_hidden"],
            freq_bins_model=d["freq_bins_model"],
            scale=d["scale"],
        )


@dataclass(frozen=True)
class NlmConfig:
    zones: int = 12
    linear_hidden: int = 32

    def __post_init__(self):
        if self.zones < 2:
            raise ValueError(f"need at least 2 zones, got {self.zones}")

    @property
    def conv_channels(self):
        return (2 * self.zones, 2 * self.zones)

    def to_dict(self):
        return {"zones": self.zones, "linear_hidden": self.linear_hidden}

    @classmethod
    def from_dict(cls, d):
        return cls(zones=d["zones"], linear_hidden=d["linear_hidden"])


class _ConvBlock:
    """conv/deconv -> complex BN -> PReLU; the final decoder block is bare."""

    def __init__(self, conv, channels, dtype, with_norm=True):
        self.conv = conv
        self.bn = ComplexBatchNorm(channels, dtype) if with_norm else None
        self.act = ComplexPReLU(channels, dtype) if with_norm else None

    def params(self):
        out = {f"conv.{k}": p for k, p in self.conv.params().items()}
        if self.bn is not None:
            out.update({f"bn.{k}": p for k, p in self.bn.params().items()})
            out.update({f"act.{k}": p for k, p in self.act.params().items()})
        return out

    def buffers(self):
        if self.bn is None:
            return {}
        return {f"bn.{k}": b for k, b in self.bn.buffers().items()}

    def __call__(self, x, training):
        h = self.conv(x)
        if self.bn is not None:
            h = self.bn(h, training)
            h = self.act(h)
        return h


class NlmHead:
    """Zone probabilities from the filter tensor via a learned sound field.

    Two complex conv blocks (2N, 2N channels) read the filters as an
    M-channel complex image; the 2N output channels form N complex pairs
    whose magnitudes are averaged over frequency, and a shared scalar
    MLP (1 -> linear_hidden -> 1, sigmoid) maps each zone/frame score
    into (0, 1).
    """

    def __init__(self, mics, cfg, kernel, stride, rng, dtype):
        self.cfg = cfg
        c1, c2 = cfg.conv_channels
        self.block1 = _ConvBlock(
            ComplexConv2d(mics, c1, kernel, stride, rng, dtype), c1, dtype
        )
        self.block2 = _ConvBlock(
            ComplexConv2d(c1, c2, kernel, stride, rng, dtype), c2, dtype
        )
        self.lin1 = Linear(1, cfg.linear_hidden, rng, dtype)
        self.mlp_slope = Tensor(np.full(cfg.linear_hidden, 0.25, dtype=dtype))
        self.lin2 = Linear(cfg.linear_hidden, 1, rng, dtype)

    def params(self):
        out = {}
        out.update({f"block1.{k}": p for k, p in self.block1.params().items()})
        out.update({f"block2.{k}": p for k, p in self.block2.params().items()})
        out.update({f"lin1.{k}": p for k, p in self.lin1.params().items()})
        out["mlp_slope"] = self.mlp_slope
        out.update({f"lin2.{k}": p for k, p in self.lin2.params().items()})
        return out

    def buffers(self):
        out = {}
        out.update({f"block1.{k}": b for k, b in self.block1.buffers().items()})
        out.update({f"block2.{k}": b for k, b in self.block2.buffers().items()})
        return out

    def __call__(self, w, training):
        """w: ComplexTensor [1 x M x F x T] -> Tensor [T x N] in (0, 1)."""
        h = self.block1(w, training)
        h = self.block2(h, training)
        n_zones = self.cfg.zones
        _, _, f2, t_len = h.shape
        re = ad.reshape(h.re, (n_zones, 2, f2, t_len))
        im = ad.reshape(h.im, (n_zones, 2, f2, t_len))
        power = ad.reduce_sum(re * re + im * im, axis=1)
        mag = ad.sqrt(power + MAGNITUDE_EPS)
        score = ad.reduce_mean(mag, axis=1)  # [N x T]
        flat = ad.reshape(score, (n_zones * t_len, 1))
        hid = ad.prelu(self.lin1(flat), self.mlp_slope, axis=1)
        out = ad.sigmoid(self.lin2(hid))
        return ad.transpose(ad.reshape(out, (n_zones, t_len)), (1, 0))


class MimoDccrn:
    """Encoder / complex-LSTM bottleneck / decoder with skip connections."""

    def __init__(self, config, nlm=None, seed=0, dtype=np.float32):
        self.config = config
        self.nlm_config = nlm
        self.dtype = np.dtype(dtype)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
        chans = config.channels
        kernel, stride = config.kernel, config.stride

        self.encoder = []
        in_ch = config.mics
        for c in chans:
            conv = ComplexConv2d(in_ch, c, kernel, stride, rng, self.dtype)
            self.encoder.append(_ConvBlock(conv, c, self.dtype))
            in_ch = c

        feat = chans[-1] * config.bottleneck_freq
        self.clstm = ComplexLSTM(feat, config.hidden, rng, self.dtype)
        self.restore = ComplexLinear(config.hidden, feat, rng, self.dtype)

        self.decoder = []
        rev = list(chans[::-1])
        outs = rev[1:] + [config.mics]
        for idx, (c_in, c_out) in enumerate(zip(rev, outs)):
            last = idx == len(rev) - 1
            deconv = ComplexConvTranspose2d(2 * c_in, c_out, kernel, stride, rng, self.dtype)
            self.decoder.append(_ConvBlock(deconv, c_out, self.dtype, with_norm=not last))

        self.nlm = (
            NlmHead(config.mics, nlm, kernel, stride, rng, self.dtype)
            if nlm is not None
            else None
        )

    # -- parameter plumbing ------------------------------------------------
    def params(self):
        out = {}
        for i, block in enumerate(self.encoder):
            out.update({f"enc{i}.{k}": p for k, p in block.params().items()})
        out.update({f"lstm.{k}": p for k, p in self.clstm.params().items()})
        out.update({f"restore.{k}": p for k, p in self.restore.params().items()})
        for i, block in enumerate(self.decoder):
            out.update({f"dec{i}.{k}": p for k, p in block.params().items()})
        if self.nlm is not None:
            out.update({f"nlm.{k}": p for k, p in self.nlm.params().items()})
        return out

    def buffers(self):
        out = {}
        for i, block in enumerate(self.encoder):
            out.update({f"enc{i}.{k}": b for k, b in block.buffers().items()})
        for i, block in enumerate(self.decoder):
            out.update({f"dec{i}.{k}": b for k, b in block.buffers().items()})
        if self.nlm is not None:
            out.update({f"nlm.{k}": b for k, b in self.nlm.buffers().items()})
        return out

    def num_parameters(self):
        return sum(int(np.prod(p.shape)) for p in self.params().values())

    # -- forward paths -------------------------------------------------------
    def forward(self, x, training=False):
        """Packed input [1 x M x F' x T] -> filter image [1 x M x F' x T]."""
        if x.shape[0] != 1:
            raise ValueError("the bottleneck flatten assumes batch size 1")
        if x.shape[1] != self.config.mics or x.shape[2] != self.config.freq_bins_model:
            raise ValueError(
                f"input shape {x.shape} does not match config "
                f"(mics={self.config.mics}, freq={self.config.freq_bins_model})"
            )
        skips = []
        h = x
        for block in self.encoder:
            h = block(h, training)
            skips.append(h)

        _, c, f, t = h.shape
        seq = ComplexTensor(
            ad.transpose(ad.reshape(h.re, (c * f, t)), (1, 0)),
            ad.transpose(ad.reshape(h.im, (c * f, t)), (1, 0)),
        )
        seq = self.clstm(seq)
        seq = self.restore(seq)
        h = ComplexTensor(
            ad.reshape(ad.transpose(seq.re, (1, 0)), (1, c, f, t)),
            ad.reshape(ad.transpose(seq.im, (1, 0)), (1, c, f, t)),
        )

        for block, skip in zip(self.decoder, skips[::-1]):
            merged = ComplexTensor(
                ad.concat([h.re, skip.re], axis=1), ad.concat([h.im, skip.im], axis=1)
            )
            h = block(merged, training)
        return h

    def forward_weights(self, spec_data, training=False):
        """Spectrogram array [M x T x F] -> filter tensors [M x F x T].

        The returned pair is the full-band filter (DC slot copied from the
        first modeled bin), connected to the parameter graph.
        """
        x, _ = pack_input(spec_data, self.config.freq_bins_model, self.dtype)
        out = self.forward(x, training)
        m = self.config.mics
        fp = self.config.freq_bins_model
        t_len = out.shape[3]
        re = ad.reshape(out.re, (m, fp, t_len))
        im = ad.reshape(out.im, (m, fp, t_len))
        re_full = ad.concat([ad.narrow(re, 1, 0, 1), re], axis=1)
        im_full = ad.concat([ad.narrow(im, 1, 0, 1), im], axis=1)
        return ComplexTensor(re_full, im_full)

    def infer_weights(self, spec_data):
        """Numpy-only inference: [M x T x F] complex filter weights."""
        w = self.forward_weights(spec_data, training=False)
        return w.to_numpy().transpose(0, 2, 1)

    def localize(self, w, training=False):
        if self.nlm is None:
            raise ValueError("model was built without a neural localization head")
        return self.nlm(w, training)

    # -- persistence ---------------------------------------------------------
    def checkpoint_arrays(self):
        arrays = {f"param.{k}": p.data for k, p in self.params().items()}
        arrays.update({f"buffer.{k}": b for k, b in self.buffers().items()})
        return arrays

    def meta(self):
        out = {"model": self.config.to_dict(), "dtype": self.dtype.name}
        if self.nlm_config is not None:
            out["nlm"] = self.nlm_config.to_dict()
        return out

    def load_arrays(self, arrays):
        from .checkpoint import require_shapes

        params = self.params()
        require_shapes(arrays, {f"param.{k}": p.shape for k, p in params.items()})
        for k, p in params.items():
            p.data = arrays[f"param.{k}"].astype(self.dtype)
        for k, b in self.buffers().items():
            b[...] = arrays[f"buffer.{k}"].astype(self.dtype)

    @classmethod
    def from_meta(cls, meta, seed=0):
        config = MimoDccrnConfig.from_dict(meta["model"])
        nlm = NlmConfig.from_dict(meta["nlm"]) if "nlm" in meta else None
        return cls(config, nlm=nlm, seed=seed, dtype=np.dtype(meta["dtype"]))


def pack_input(spec_data, freq_bins_model, dtype):
    """[M x T x F] complex -> (ComplexTensor [1 x M x F' x T], dc bins [M x T]).

    F' = F - 1: the DC bin is dropped so the stride-2 halving chain stays
    exact, and returned separately so reconstruction can reattach it.
    """
    spec_data = np.asarray(spec_data)
    m, t_len, f = spec_data.shape
    if f != freq_bins_model + 1:
        raise ValueError(f"expected {freq_bins_model + 1} analysis bins, got {f}")
    body = spec_data[:, :, 1:].transpose(0, 2, 1)[np.newaxis]
    return ComplexTensor.from_numpy(body, dtype=dtype), spec_data[:, :, 0].copy()


def unpack_spectrogram(packed, dc):
    """Inverse of ``pack_input`` for spectrogram data."""
    body = packed[0].transpose(0, 2, 1)
    return np.concatenate([dc[:, :, np.newaxis], body], axis=2)
