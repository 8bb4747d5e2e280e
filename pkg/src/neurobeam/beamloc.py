"""Filter-and-sum enhancement and localization/VAD from the filter tensor.

Filter weights are stored in conjugated form, so both the beamformer
output and the steered response are plain (non-conjugated) products:
enhanced(t,f) = sum_m w[m,t,f] * y[m,t,f], and the distortionless index
of zone n is the frequency-averaged |sum_m w[m,t,f] * a[n,f,m]|.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .arraygeom import ZoneGrid, steering_set
from .dsp import Spectrogram, istft, stft
from .layers import ComplexTensor

DEFAULT_VAD_THRESHOLD = 0.5


def filter_and_sum(weights, spec):
    """Apply per-channel filters and sum across microphones -> 1-channel."""
    if weights.shape != spec.data.shape:
        raise ValueError(f"weights shape {weights.shape} != spectrogram shape {spec.data.shape}")
    out = np.einsum("mtf,mtf->tf", weights, spec.data)
    return Spectrogram(out[np.newaxis], spec.config, spec.sample_rate)


def splm_map(weights, steering, band=None):
    """Distortionless index per zone: [T x N] frequency-averaged |w^H a|.

    ``steering`` is [N x F x M]; ``band`` optionally restricts the average
    to a (lo, hi) bin range (high bins of a small array are spatially
    aliased; the default averages the full band).
    """
    n_zones, f_bins, mics = steering.shape
    if weights.shape[0] != mics or weights.shape[2] != f_bins:
        raise ValueError(
            f"weights [M x T x F] = {weights.shape} incompatible with steering "
            f"[N x F x M] = {steering.shape}"
        )
    sel = slice(*band) if band is not None else slice(None)
    resp = np.einsum("mtf,nfm->tnf", weights[:, :, sel], steering[:, sel, :])
    return np.abs(resp).mean(axis=2)


def localize(zmap):
    """Per-frame 1-based zone via argmax; ties break to the lowest index."""
    return np.argmax(zmap, axis=1) + 1


def vad(zmap, threshold=DEFAULT_VAD_THRESHOLD):
    """Voice activity from the peak zone score.

    Scores are clamped to [0, 1] for the decision (the signal-processing
    map is a magnitude average and can exceed 1); a frame is active only
    when its score strictly exceeds the threshold.
    """
    raw = zmap.max(axis=1)
    scores = np.clip(raw, 0.0, 1.0)
    return scores, scores > threshold


@dataclass(frozen=True)
class LocalizationResult:
    """Per-frame zone decisions, VAD scores/decisions, and the zone map."""

    zone_track: np.ndarray
    vad_track: np.ndarray
    vad_decisions: np.ndarray
    zmap: np.ndarray

    def __post_init__(self):
        if not np.array_equal(self.zone_track, localize(self.zmap)):
            raise ValueError("zone_track must be the argmax of the zone map")


def localization_from_map(zmap, threshold=DEFAULT_VAD_THRESHOLD):
    scores, decisions = vad(zmap, threshold)
    return LocalizationResult(localize(zmap), scores, decisions, zmap)


def enhance_utterance(
    noisy,
    model,
    mode,
    zones,
    geometry,
    stft_cfg,
    vad_threshold=DEFAULT_VAD_THRESHOLD,
    band=None,
):
    """Full enhancement + localization pass over one utterance.

    Returns (enhanced 1-channel waveform, LocalizationResult). The output
    waveform is window_length + (T-1)*hop samples long (framing edge
    loss; see dsp.istft).
    """
    if noisy.channels != model.config.mics:
        raise ValueError(
            f"waveform has {noisy.channels} channels but the model expects "
            f"{model.config.mics}"
        )
    spec = stft(noisy, stft_cfg)
    weights = model.infer_weights(spec.data)
    enhanced = istft(filter_and_sum(weights, spec))
    if mode == "splm":
        steering = steering_set(
            geometry, ZoneGrid(zones), stft_cfg.frequencies(noisy.sample_rate)
        )
        zmap = splm_map(weights, steering, band=band)
    elif mode == "nlm":
        w_img = np.ascontiguousarray(weights.transpose(0, 2, 1))[np.newaxis]
        zmap = model.localize(
            ComplexTensor.from_numpy(w_img, dtype=model.dtype), training=False
        ).data.astype(np.float64)
    else:
        raise ValueError(f"unknown localization mode '{mode}' (expected splm or nlm)")
    return enhanced, localization_from_map(zmap, vad_threshold)


def write_localization_csv(path, result, frame_times):
    """Per-frame CSV: frame_index, time_s, zone, vad, then one zone score each."""
    zmap = result.zmap
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["frame_index", "time_s", "zone", "vad"]
            + [f"z_{n + 1}" for n in range(zmap.shape[1])]
        )
        for t in range(zmap.shape[0]):
            writer.writerow(
                [t, f"{frame_times[t]:.6f}", int(result.zone_track[t]),
                 f"{result.vad_track[t]:.6f}"]
                + [f"{v:.6f}" for v in zmap[t]]
            )
