import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurobeam.dsp import (
    StftConfig,
    Waveform,
    hann_window,
    istft,
    num_frames,
    read_wav,
    stft,
    write_wav,
)


def test_hann_closed_form_length_4():
    assert np.allclose(hann_window(4), [0.0, 0.5, 1.0, 0.5])


def test_hann_closed_form_length_2():
    assert np.allclose(hann_window(2), [0.0, 1.0])


def test_hann_rejects_short_lengths():
    with pytest.raises(ValueError):
        hann_window(1)


def test_hann_cola_by_direct_summation():
    # Tile the plain window at hop=100 and sum; interior must be constant.
    w = hann_window(400)
    frames, hop = 40, 100
    total = 400 + (frames - 1) * hop
    acc = np.zeros(total)
    for t in range(frames):
        acc[t * hop : t * hop + 400] += w
    interior = acc[400 : total - 400]
    assert interior.max() - interior.min() < 1e-12 * interior.mean()


def test_config_rejects_non_cola_hop():
    with pytest.raises(ValueError, match="overlap-add"):
        StftConfig(window_length=400, hop=170, fft_size=512)


def test_config_rejects_bad_ordering():
    with pytest.raises(ValueError):
        StftConfig(window_length=400, hop=500, fft_size=512)
    with pytest.raises(ValueError):
        StftConfig(window_length=600, hop=100, fft_size=512)


def test_frame_count_formula():
    assert num_frames(400, 400, 100) == 1
    assert num_frames(399, 400, 100) == 1  # shorter than one window
    assert num_frames(500, 400, 100) == 2
    assert num_frames(16000, 400, 100) == 157


def test_stft_shape_matches_frame_count(rng):
    cfg = StftConfig()
    for n in (400, 777, 16000):
        wave = Waveform(rng.standard_normal((2, n)))
        spec = stft(wave, cfg)
        assert spec.data.shape == (2, num_frames(n, 400, 100), 257)


def test_stft_of_zeros_is_zero():
    cfg = StftConfig()
    spec = stft(Waveform(np.zeros((1, 2000))), cfg)
    assert np.all(spec.data == 0)


def test_stft_short_input_zero_padded_single_frame():
    cfg = StftConfig()
    spec = stft(Waveform(np.ones((1, 50))), cfg)
    assert spec.data.shape[1] == 1


def test_bin_center_cosine_concentrates_and_matches_direct_dft():
    cfg = StftConfig()
    fs, k = 16000, 40  # bin-center frequency k*fs/fft_size = 1250 Hz
    n = fs
    x = np.cos(2 * np.pi * (k * fs / cfg.fft_size) * np.arange(n) / fs)
    spec = stft(Waveform(x[np.newaxis, :]), cfg)
    mags = np.abs(spec.data[0])
    for t in range(2, spec.data.shape[1] - 2):
        assert np.argmax(mags[t]) == k

    # Independent oracle: direct DFT of one windowed frame.
    t = 5
    frame = np.zeros(cfg.fft_size)
    frame[:400] = x[t * 100 : t * 100 + 400] * cfg.window
    grid = np.arange(cfg.fft_size)
    dft = np.exp(-2j * np.pi * np.outer(grid[:257], grid) / cfg.fft_size) @ frame
    assert np.allclose(spec.data[0, t], dft, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**31 - 1))
def test_stft_linearity(a, b, seed):
    cfg = StftConfig(window_length=64, hop=16, fft_size=64)
    g = np.random.default_rng(seed)
    x, y = g.standard_normal(400), g.standard_normal(400)
    sx = stft(Waveform(x[np.newaxis]), cfg).data
    sy = stft(Waveform(y[np.newaxis]), cfg).data
    sxy = stft(Waveform((a * x + b * y)[np.newaxis]), cfg).data
    assert np.allclose(sxy, a * sx + b * sy, atol=1e-9)


def _roundtrip_interior_error(x, cfg):
    y = istft(stft(Waveform(x[np.newaxis]), cfg)).samples[0]
    lo, hi = cfg.window_length, y.shape[0] - cfg.window_length
    rms = np.sqrt(np.mean(x**2))
    return np.abs(y[lo:hi] - x[lo:hi]).max() / rms


def test_roundtrip_white_noise(rng):
    cfg = StftConfig()
    assert _roundtrip_interior_error(rng.standard_normal(8000), cfg) < 1e-6


def test_roundtrip_tone():
    cfg = StftConfig()
    x = np.sin(2 * np.pi * 1000 * np.arange(8000) / 16000)
    assert _roundtrip_interior_error(x, cfg) < 1e-6


def test_roundtrip_silence():
    cfg = StftConfig()
    out = istft(stft(Waveform(np.zeros((1, 4000))), cfg))
    assert np.all(out.samples == 0)


def test_istft_output_length_contract(rng):
    cfg = StftConfig()
    wave = Waveform(rng.standard_normal((1, 4321)))
    spec = stft(wave, cfg)
    out = istft(spec)
    assert out.num_samples == cfg.window_length + (spec.frames - 1) * cfg.hop


def test_istft_linearity(rng):
    cfg = StftConfig()
    a = stft(Waveform(rng.standard_normal((1, 3000))), cfg)
    b = stft(Waveform(rng.standard_normal((1, 3000))), cfg)
    combined = type(a)(a.data + 2.0 * b.data, cfg)
    lhs = istft(combined).samples
    rhs = istft(a).samples + 2.0 * istft(b).samples
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_parseval_single_frame(rng):
    cfg = StftConfig()
    x = rng.standard_normal(300)  # shorter than one window: single padded frame
    spec = stft(Waveform(x[np.newaxis]), cfg).data[0, 0]
    # Rebuild the two-sided spectrum from the one-sided half.
    two_sided = np.concatenate([spec, np.conj(spec[-2:0:-1])])
    windowed = np.zeros(cfg.fft_size)
    windowed[:300] = x * cfg.window[:300]
    lhs = np.sum(np.abs(two_sided) ** 2)
    rhs = cfg.fft_size * np.sum(windowed**2)
    assert abs(lhs - rhs) < 1e-9 * rhs


def test_wav_roundtrip_float32(tmp_path, rng):
    wave = Waveform(0.3 * rng.standard_normal((3, 1600)))
    path = tmp_path / "x.wav"
    write_wav(path, wave, fmt="float32")
    back = read_wav(path)
    assert back.sample_rate == 16000
    assert back.samples.shape == (3, 1600)
    assert np.allclose(back.samples, wave.samples, atol=1e-7)


def test_wav_roundtrip_pcm16(tmp_path, rng):
    wave = Waveform(rng.uniform(-0.9, 0.9, size=(1, 800)))
    path = tmp_path / "x.wav"
    write_wav(path, wave, fmt="pcm16")
    back = read_wav(path)
    assert np.allclose(back.samples, wave.samples, atol=1.0 / 32768)


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        Waveform(np.zeros((1, 10)), sample_rate=0)
