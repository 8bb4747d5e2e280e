"""Built-in verification suite: gradient checks against central finite
differences, STFT round-trip, steering-vector identities, and metric
identities. The CLI exposes this as ``neurobeam selfcheck``.

``corrupt_op`` perturbs the analytic gradient of one named operation so
the failure path itself is testable.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .arraygeom import ArrayGeometry, ZoneGrid, steering_set, uca_positions, zone_of_angle
from .dsp import StftConfig, Waveform, istft, stft
from .gradcheck import check_gradients
from .layers import conv2d, conv2d_transpose, lstm
from .losses import bce_loss, si_snr_tensor, synthesize_waveform
from .metrics import loc_metrics

GRAD_TOLERANCE = 1e-4


def _complex_conv_build(stride, pad_f, pad_t, transpose=False, out_ft=None):
    def build(xr, xi, wr, wi):
        if transpose:
            rr = conv2d_transpose(xr, wr, stride, pad_f, pad_t, out_ft)
            ii = conv2d_transpose(xi, wi, stride, pad_f, pad_t, out_ft)
            ri = conv2d_transpose(xr, wi, stride, pad_f, pad_t, out_ft)
            ir = conv2d_transpose(xi, wr, stride, pad_f, pad_t, out_ft)
            re, im = rr + ii, ir - ri
        else:
            rr = conv2d(xr, wr, stride, pad_f, pad_t)
            ii = conv2d(xi, wi, stride, pad_f, pad_t)
            ri = conv2d(xr, wi, stride, pad_f, pad_t)
            ir = conv2d(xi, wr, stride, pad_f, pad_t)
            re, im = rr - ii, ri + ir
        return ad.reduce_sum(re * re) + ad.reduce_sum(im * im)

    return build


def _batchnorm_build(eps=1e-5):
    def build(x, gamma, beta):
        mu = ad.reduce_mean(x, axis=(0, 2, 3), keepdims=True)
        centered = x - mu
        var = ad.reduce_mean(centered * centered, axis=(0, 2, 3), keepdims=True)
        xh = centered / ad.sqrt(var + eps)
        c = gamma.shape[0]
        out = xh * ad.reshape(gamma, (1, c, 1, 1)) + ad.reshape(beta, (1, c, 1, 1))
        return ad.reduce_sum(out * out)

    return build


def _lstm_build(xr, xi, wxr, whr, br, wxi, whi, bi):
    out_re = lstm(xr, wxr, whr, br) - lstm(xi, wxi, whi, bi)
    out_im = lstm(xi, wxr, whr, br) + lstm(xr, wxi, whi, bi)
    return ad.reduce_sum(out_re * out_re) + ad.reduce_sum(out_im * out_im)


def gradient_cases(seed=0):
    """Named (build, arrays) pairs covering every differentiable operation."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))

    def r(*shape):
        return rng.standard_normal(shape)

    cases = []

    cases.append((
        "complex_conv2d",
        _complex_conv_build((2, 1), (2, 2), (1, 0)),
        [r(1, 2, 8, 4), r(1, 2, 8, 4), 0.3 * r(3, 2, 5, 2), 0.3 * r(3, 2, 5, 2)],
    ))
    cases.append((
        "complex_deconv2d",
        _complex_conv_build((2, 1), (2, 2), (0, 1), transpose=True, out_ft=(8, 4)),
        [r(1, 3, 4, 4), r(1, 3, 4, 4), 0.3 * r(3, 2, 5, 2), 0.3 * r(3, 2, 5, 2)],
    ))
    cases.append((
        "complex_batchnorm",
        _batchnorm_build(),
        [r(1, 3, 4, 5), 1.0 + 0.1 * r(3), 0.1 * r(3)],
    ))
    cases.append((
        "prelu",
        lambda x, s: ad.reduce_sum(ad.prelu(x, s, 1) * ad.prelu(x, s, 1)),
        [r(2, 3, 4), 0.25 + 0.1 * r(3)],
    ))
    cases.append((
        "complex_lstm",
        _lstm_build,
        [r(3, 4), r(3, 4),
         0.4 * r(12, 4), 0.4 * r(12, 3), 0.1 * r(12),
         0.4 * r(12, 4), 0.4 * r(12, 3), 0.1 * r(12)],
    ))
    cases.append((
        "linear",
        lambda x, w, b: ad.reduce_sum(
            (ad.matmul(x, ad.transpose(w, (1, 0))) + b)
            * (ad.matmul(x, ad.transpose(w, (1, 0))) + b)
        ),
        [r(5, 3), 0.5 * r(4, 3), 0.1 * r(4)],
    ))
    cases.append((
        "sigmoid",
        lambda x: ad.reduce_sum(ad.sigmoid(x) * ad.sigmoid(x)),
        [r(4, 5)],
    ))

    tiny_cfg = StftConfig(window_length=8, hop=2, fft_size=8)
    ref = rng.standard_normal(8 + 3 * 2)

    def sisnr_build(sr, si):
        wave = synthesize_waveform(sr, si, tiny_cfg)
        return ad.neg(si_snr_tensor(wave, ref))

    cases.append((
        "si_snr_loss",
        sisnr_build,
        [r(4, 5), r(4, 5)],
    ))

    z = (rng.uniform(size=(4, 3)) > 0.6).astype(np.float64)

    def bce_build(logits):
        return bce_loss(z, ad.sigmoid(logits))

    cases.append(("bce_loss", bce_build, [r(4, 3)]))

    def total_build(sr, si, logits):
        wave = synthesize_waveform(sr, si, tiny_cfg)
        return bce_loss(z, ad.sigmoid(logits)) + 1.0 * ad.neg(si_snr_tensor(wave, ref))

    cases.append(("total_loss", total_build, [r(4, 5), r(4, 5), r(4, 3)]))
    return cases


# ---------------------------------------------------------------------------
# Individual checks
# ---------------------------------------------------------------------------

def _check_gradients(corrupt_op=None):
    results = []
    for name, build, arrays in gradient_cases():
        err = check_gradients(build, arrays, corrupt=(name == corrupt_op))
        ok = err < GRAD_TOLERANCE
        results.append((f"gradient_{name}", ok, f"rel err {err:.2e}"))
    return results


def _check_stft_roundtrip():
    cfg = StftConfig()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([7])))
    worst = 0.0
    for _ in range(5):
        x = rng.standard_normal(16000)
        y = istft(stft(Waveform(x[np.newaxis, :]), cfg)).samples[0]
        lo, hi = cfg.window_length, y.shape[0] - cfg.window_length
        err = np.abs(y[lo:hi] - x[lo:hi]).max() / np.sqrt(np.mean(x**2))
        worst = max(worst, err)
    return [("stft_roundtrip", worst < 1e-6, f"interior err {worst:.2e}")]


def _check_steering():
    geom = ArrayGeometry(uca_positions(6, 0.05))
    grid = ZoneGrid(12)
    cfg = StftConfig()
    steering = steering_set(geom, grid, cfg.frequencies(16000))
    unit = np.abs(np.abs(steering) - 1.0).max()
    results = [("steering_unit_modulus", unit < 1e-12, f"|a| dev {unit:.2e}")]

    from .beamloc import splm_map

    zone = 4
    a = steering[zone - 1]  # [F x M]
    w = np.conj(a).T[:, np.newaxis, :] / geom.num_mics  # stored form, [M x 1 x F]
    zmap = splm_map(w, steering)
    dev = abs(zmap[0, zone - 1] - 1.0)
    results.append(("distortionless_identity", dev < 1e-9, f"dev {dev:.2e}"))
    return results


def _check_metrics():
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([11])))
    ok = True
    for _ in range(50):
        n = 12
        pred = rng.integers(1, n + 1, size=40)
        truth = rng.integers(1, n + 1, size=40)
        m = loc_metrics(pred, truth, np.ones(40, dtype=bool), n)
        if m.acc + m.aer + m.oer != 1.0:
            ok = False
    results = [("metric_identity", ok, "acc+aer+oer == 1")]

    val = bce_loss(np.ones((1, 1)), ad.constant(np.full((1, 1), 0.5))).item()
    results.append(
        ("bce_closed_form", abs(val - np.log(2.0)) < 1e-12, f"|bce-ln2| {abs(val - np.log(2.0)):.2e}")
    )
    zones = zone_of_angle(np.array([0.0, 180.0]), 12)
    results.append(("zone_boundaries", zones[0] == 1 and zones[1] == 7, f"{zones}"))
    return results


def _check_adjoint():
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([13])))
    from .layers import conv2d_raw, conv2d_input_adjoint

    x = rng.standard_normal((1, 2, 8, 4))
    w = rng.standard_normal((3, 2, 5, 2))
    y = rng.standard_normal((1, 3, 4, 4))
    fwd = conv2d_raw(x, w, (2, 1), (2, 2), (1, 0))
    adj = conv2d_input_adjoint(y, w, (2, 1), (2, 2), (1, 0), (8, 4))
    lhs = float(np.sum(fwd * y))
    rhs = float(np.sum(x * adj))
    dev = abs(lhs - rhs) / max(abs(lhs), 1e-12)
    return [("conv_adjoint_identity", dev < 1e-10, f"dev {dev:.2e}")]


def run_selfcheck(corrupt_op=None):
    """Run all checks; returns a list of (name, passed, detail)."""
    results = []
    results.extend(_check_stft_roundtrip())
    results.extend(_check_steering())
    results.extend(_check_adjoint())
    results.extend(_check_gradients(corrupt_op))
    results.extend(_check_metrics())
    return results
