"""Windowed short-time Fourier analysis/synthesis and WAV file I/O.

Framing is causal: frame t covers samples [t*hop, t*hop + window_length),
no centering or pre-padding. Frame count for a signal of n samples is
T = 1 + floor((n - window_length) / hop) when n >= window_length, else a
single zero-padded frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 16000

# Relative floor below which overlap-add normalization treats a sample as
# uncovered (window edges) and emits zero instead of amplifying noise.
_WOLA_FLOOR = 1e-8


def hann_window(length):
    """Periodic (DFT-even) Hann window w[i] = 0.5 - 0.5*cos(2*pi*i/length).

    The periodic form tiles to a constant at hop = length/4, which the
    overlap-add synthesis relies on; length < 2 is rejected.
    """
    if length < 2:
        raise ValueError(f"window length must be >= 2, got {length}")
    i = np.arange(length, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * i / length)


def num_frames(num_samples, window_length, hop):
    """Frame count of the causal framing: 1 + floor((n - L) / hop), min 1."""
    if num_samples < window_length:
        return 1
    return 1 + (num_samples - window_length) // hop


@dataclass(frozen=True)
class Waveform:
    """Time-domain sample matrix [channels x num_samples] at a sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.ndim != 2:
            raise ValueError(f"samples must be [channels x num_samples], got ndim={samples.ndim}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")

    @property
    def channels(self):
        return self.samples.shape[0]

    @property
    def num_samples(self):
        return self.samples.shape[1]

    @property
    def duration(self):
        return self.num_samples / self.sample_rate

    def channel(self, m):
        return Waveform(self.samples[m : m + 1], self.sample_rate)


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis settings; validated for constant overlap-add.

    The synthesis path divides by the tiled squared window, so the squared
    window must tile to a constant at the given hop (checked to 1e-10
    relative on interior samples).
    """

    window_length: int = 400
    hop: int = 100
    fft_size: int = 512
    window: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.window is None:
            object.__setattr__(self, "window", hann_window(self.window_length))
        window = np.asarray(self.window, dtype=np.float64)
        object.__setattr__(self, "window", window)
        if not (0 < self.hop <= self.window_length <= self.fft_size):
            raise ValueError(
                f"require 0 < hop <= window_length <= fft_size, got "
                f"hop={self.hop}, window_length={self.window_length}, fft_size={self.fft_size}"
            )
        if window.shape != (self.window_length,):
            raise ValueError(f"window length {window.shape} != window_length {self.window_length}")
        dev = self._cola_deviation()
        if dev > 1e-10:
            raise ValueError(
                f"window/hop pair is not constant-overlap-add after synthesis "
                f"normalization (relative deviation {dev:.3e})"
            )

    def _cola_deviation(self):
        """Relative ripple of the tiled squared window on interior samples."""
        frames = 4 * max(2, -(-self.window_length // self.hop))
        total = self.window_length + (frames - 1) * self.hop
        acc = np.zeros(total)
        wsq = self.window**2
        for t in range(frames):
            acc[t * self.hop : t * self.hop + self.window_length] += wsq
        interior = acc[self.window_length : total - self.window_length]
        return (interior.max() - interior.min()) / interior.mean()

    @property
    def num_bins(self):
        return self.fft_size // 2 + 1

    def frequencies(self, sample_rate):
        return np.arange(self.num_bins) * sample_rate / self.fft_size

    def frame_times(self, n_frames, sample_rate):
        """Center time of each analysis frame, in seconds."""
        starts = np.arange(n_frames) * self.hop
        return (starts + 0.5 * self.window_length) / sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT, data shaped [channels x frames x bins]."""

    data: np.ndarray
    config: StftConfig
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        object.__setattr__(self, "data", data)
        if data.ndim != 3:
            raise ValueError(f"spectrogram data must be 3-d, got ndim={data.ndim}")
        if data.shape[2] != self.config.num_bins:
            raise ValueError(
                f"bin count {data.shape[2]} != fft_size/2+1 = {self.config.num_bins}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("spectrogram contains non-finite values")

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def frames(self):
        return self.data.shape[1]

    @property
    def bins(self):
        return self.data.shape[2]


def frame_signal(x, cfg):
    """Gather windowed frames [T x window_length] of a 1-d signal."""
    n = x.shape[0]
    t_frames = num_frames(n, cfg.window_length, cfg.hop)
    frames = np.zeros((t_frames, cfg.window_length), dtype=np.float64)
    for t in range(t_frames):
        chunk = x[t * cfg.hop : t * cfg.hop + cfg.window_length]
        frames[t, : chunk.shape[0]] = chunk
    return frames * cfg.window


def stft(wave, cfg):
    """One-sided STFT of every channel; frames zero-padded to fft_size."""
    if wave.num_samples == 0:
        raise ValueError("cannot analyze an empty waveform")
    chans = []
    for m in range(wave.channels):
        frames = frame_signal(wave.samples[m], cfg)
        chans.append(np.fft.rfft(frames, n=cfg.fft_size, axis=1))
    return Spectrogram(np.stack(chans), cfg, wave.sample_rate)


def wola_normalizer(cfg, n_frames):
    """Per-sample sum of squared synthesis windows for a frame count."""
    total = cfg.window_length + (n_frames - 1) * cfg.hop
    acc = np.zeros(total)
    wsq = cfg.window**2
    for t in range(n_frames):
        acc[t * cfg.hop : t * cfg.hop + cfg.window_length] += wsq
    return acc


def wola_inverse(cfg, n_frames):
    """Reciprocal synthesis normalizer; uncovered edge samples map to 0."""
    norm = wola_normalizer(cfg, n_frames)
    covered = norm > _WOLA_FLOOR * norm.max()
    inv = np.zeros_like(norm)
    inv[covered] = 1.0 / norm[covered]
    return inv


def overlap_add(frames, cfg):
    """Weighted overlap-add of time frames [T x window_length] -> 1-d signal."""
    n_frames = frames.shape[0]
    total = cfg.window_length + (n_frames - 1) * cfg.hop
    out = np.zeros(total)
    for t in range(n_frames):
        out[t * cfg.hop : t * cfg.hop + cfg.window_length] += frames[t] * cfg.window
    return out * wola_inverse(cfg, n_frames)


def istft(spec):
    """Weighted overlap-add synthesis; inverse of ``stft`` on the interior.

    Output length is window_length + (T-1)*hop, i.e. trailing samples the
    analysis dropped are not resynthesized. Samples within one window of
    either edge are only partially covered and are not guaranteed exact.
    """
    cfg = spec.config
    chans = []
    for m in range(spec.channels):
        time_frames = np.fft.irfft(spec.data[m], n=cfg.fft_size, axis=1)
        chans.append(overlap_add(time_frames[:, : cfg.window_length], cfg))
    return Waveform(np.stack(chans), spec.sample_rate)


# ---------------------------------------------------------------------------
# WAV file I/O (PCM 16-bit and IEEE float-32)
# ---------------------------------------------------------------------------

def read_wav(path):
    """Read a mono or multi-channel WAV as floats in [-1, 1)."""
    rate, data = wavfile.read(path)
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format: {data.dtype}")
    if samples.ndim == 1:
        samples = samples[np.newaxis, :]
    else:
        samples = samples.T
    return Waveform(samples, int(rate))


def write_wav(path, wave, fmt="float32"):
    """Write a waveform as float32 (default) or 16-bit PCM."""
    data = wave.samples.T
    if data.shape[1] == 1:
        data = data[:, 0]
    if fmt == "float32":
        wavfile.write(path, wave.sample_rate, data.astype(np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(data, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, wave.sample_rate, np.round(clipped * 32768.0).astype(np.int16))
    else:
        raise ValueError(f"unsupported output format: {fmt}")
