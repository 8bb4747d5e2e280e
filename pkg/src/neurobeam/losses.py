"""Training objectives: scale-invariant SNR on waveforms and binary
cross-entropy on zone maps, plus the differentiable synthesis pieces
(overlap-add inverse STFT, filter-and-sum, steered zone map) that connect
the filter tensor to those objectives.

The printed SI-SNR definition in the source material uses 20*log10 of an
energy ratio, twice the usual convention; ``convention`` selects
"standard" (10*log10 of powers, the default used for reported dB) or
"printed". The two are monotonically equivalent, so training is
unaffected by the choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import ComplexTensor
from .dsp import wola_inverse

SI_SNR_CLAMP_DB = 60.0
BCE_EPS = 1e-7
# Relative denominator floor: keeps the ratio finite (and the loss
# differentiable) at perfect reconstruction while preserving scale
# invariance; it only binds beyond the +/-60 dB clamp.
_RATIO_FLOOR = 1e-12

_LOG_FACTOR = {"standard": 10.0, "printed": 20.0}


def si_snr(estimate, reference, convention="standard"):
    """Scale-invariant SNR in dB, clamped to +/-60.

    Project the estimate onto the reference, compare target and error
    energies. Inputs are 1-d arrays (or 1-channel waveforms) of equal
    length; the reference must not be silent.
    """
    est = estimate.samples[0] if hasattr(estimate, "samples") else np.asarray(estimate)
    ref = reference.samples[0] if hasattr(reference, "samples") else np.asarray(reference)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: estimate {est.shape} vs reference {ref.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy == 0.0:
        raise ValueError("reference signal is silent")
    target = (np.dot(est, ref) / ref_energy) * ref
    target_energy = np.dot(target, target)
    err = est - target
    err_energy = np.dot(err, err) + _RATIO_FLOOR * target_energy
    if target_energy == 0.0:
        return -SI_SNR_CLAMP_DB
    value = _LOG_FACTOR[convention] * np.log10(target_energy / err_energy)
    return float(np.clip(value, -SI_SNR_CLAMP_DB, SI_SNR_CLAMP_DB))


def si_snr_tensor(estimate, reference, convention="standard"):
    """Differentiable SI-SNR (dB) of an estimate tensor vs a fixed reference."""
    ref = ad.constant(np.asarray(reference, dtype=estimate.dtype))
    ref_energy = float(np.dot(ref.data, ref.data))
    if ref_energy == 0.0:
        raise ValueError("reference signal is silent")
    scale = ad.reduce_sum(estimate * ref) * (1.0 / ref_energy)
    target = ad.reshape(scale, (1,)) * ref
    target_energy = ad.reduce_sum(target * target)
    err = estimate - target
    err_energy = ad.reduce_sum(err * err) + target_energy * _RATIO_FLOOR
    ratio = target_energy / err_energy
    db = ad.log(ratio) * (_LOG_FACTOR[convention] / np.log(10.0))
    return ad.clip(db, -SI_SNR_CLAMP_DB, SI_SNR_CLAMP_DB)


def si_snr_loss(estimates, references, convention="standard"):
    """Mean negative SI-SNR over a batch of (tensor, array) pairs."""
    terms = [ad.neg(si_snr_tensor(e, r, convention)) for e, r in zip(estimates, references)]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def bce_loss(truth, predicted):
    """Binary cross-entropy, natural log, averaged over all T*N entries.

    ``predicted`` is clamped into [eps, 1-eps] before the logs.
    """
    z = ad.constant(np.asarray(truth, dtype=predicted.dtype))
    if z.shape != predicted.shape:
        raise ValueError(f"shape mismatch: truth {z.shape} vs predicted {predicted.shape}")
    p = ad.clip(predicted, BCE_EPS, 1.0 - BCE_EPS)
    terms = z * ad.log(p) + (1.0 - z) * ad.log(1.0 - p)
    return ad.neg(ad.reduce_mean(terms))


@dataclass(frozen=True)
class LossBreakdown:
    si_snr_db: float
    loss_sisnr: float
    loss_bce: float
    total: float
    gamma: float = 1.0


def total_loss(bce, sisnr_loss, gamma=1.0):
    """Multi-task objective: loss_bce + gamma * loss_sisnr (exact sum)."""
    return bce + gamma * sisnr_loss


# ---------------------------------------------------------------------------
# Differentiable synthesis: spectrogram tensor -> waveform tensor
# ---------------------------------------------------------------------------

def synthesize_waveform(spec_re, spec_im, cfg):
    """Overlap-add inverse STFT as one autodiff op.

    Inputs are [T x F] tensors of one-sided spectra; the forward pass
    matches ``dsp.istft`` exactly and the backward pass applies the
    analytic adjoint of irfft -> window -> overlap-add -> normalize.
    """
    t_frames, f_bins = spec_re.shape
    if f_bins != cfg.num_bins:
        raise ValueError(f"expected {cfg.num_bins} bins, got {f_bins}")
    length = cfg.window_length + (t_frames - 1) * cfg.hop
    inv_norm = wola_inverse(cfg, t_frames)

    window = cfg.window
    nfft = cfg.fft_size
    spectra = spec_re.data.astype(np.float64) + 1j * spec_im.data.astype(np.float64)
    frames = np.fft.irfft(spectra, n=nfft, axis=1)[:, : cfg.window_length] * window
    out = np.zeros(length)
    for t in range(t_frames):
        out[t * cfg.hop : t * cfg.hop + cfg.window_length] += frames[t]
    out *= inv_norm

    def backward_fn(g):
        gn = g * inv_norm
        gframes = np.zeros((t_frames, nfft))
        for t in range(t_frames):
            gframes[t, : cfg.window_length] = (
                gn[t * cfg.hop : t * cfg.hop + cfg.window_length] * window
            )
        spec_grad = np.fft.rfft(gframes, n=nfft, axis=1) * (2.0 / nfft)
        # DC and Nyquist are purely real and appear once in the full
        # spectrum, so they take half weight and no imaginary gradient.
        spec_grad[:, 0] *= 0.5
        spec_grad[:, -1] *= 0.5
        if spec_re.needs_grad:
            spec_re.accumulate(spec_grad.real.astype(spec_re.dtype))
        if spec_im.needs_grad:
            gi = spec_grad.imag
            gi[:, 0] = 0.0
            gi[:, -1] = 0.0
            spec_im.accumulate(gi.astype(spec_im.dtype))

    out_t = Tensor(
        out.astype(spec_re.dtype), (spec_re, spec_im), backward_fn
    )
    return out_t


def filter_and_sum_tensor(weights, spec_data):
    """Differentiable beamformer output: [M x F x T] filters applied to a
    fixed spectrogram [M x T x F] -> ([T x F], [T x F]) tensor pair."""
    y = np.asarray(spec_data)
    mics, t_len, f_bins = y.shape
    if weights.shape != (mics, f_bins, t_len):
        raise ValueError(f"weights shape {weights.shape} != {(mics, f_bins, t_len)}")
    dtype = weights.re.dtype
    y_re = ad.constant(np.ascontiguousarray(y.real.transpose(0, 2, 1), dtype=dtype))
    y_im = ad.constant(np.ascontiguousarray(y.imag.transpose(0, 2, 1), dtype=dtype))
    out_re = ad.reduce_sum(weights.re * y_re - weights.im * y_im, axis=0)
    out_im = ad.reduce_sum(weights.re * y_im + weights.im * y_re, axis=0)
    return ComplexTensor(ad.transpose(out_re, (1, 0)), ad.transpose(out_im, (1, 0)))


def splm_map_tensor(weights, steering):
    """Differentiable distortionless index: [M x F x T] filters against
    [N x F x M] steering vectors -> [T x N] zone map."""
    n_zones, f_bins, mics = steering.shape
    if weights.shape != (mics, f_bins, weights.shape[2]):
        raise ValueError("weights must be [M x F x T]")
    dtype = weights.re.dtype
    t_len = weights.shape[2]
    a = steering.transpose(2, 1, 0)  # [M x F x N]
    a_re = ad.constant(np.ascontiguousarray(a.real, dtype=dtype))
    a_im = ad.constant(np.ascontiguousarray(a.imag, dtype=dtype))
    parts = []
    for n in range(n_zones):
        an_re = ad.narrow(a_re, 2, n, 1)  # [M x F x 1], broadcasts over time
        an_im = ad.narrow(a_im, 2, n, 1)
        resp_re = ad.reduce_sum(weights.re * an_re - weights.im * an_im, axis=0)
        resp_im = ad.reduce_sum(weights.re * an_im + weights.im * an_re, axis=0)
        mag = ad.sqrt(resp_re * resp_re + resp_im * resp_im + 1e-24)
        parts.append(ad.reduce_mean(mag, axis=0, keepdims=True))  # [1 x T]
    zmap = ad.concat(parts, axis=0)  # [N x T]
    return ad.transpose(zmap, (1, 0))
