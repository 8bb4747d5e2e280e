"""Image-source room impulse responses and reverberant mixture synthesis.

Mixtures follow the recipe: clean speech inserted into a longer buffer,
convolved per microphone with a full room impulse response; a directional
interference convolved likewise and scaled to a target SIR; white sensor
noise scaled to a target SNR. The training target is the speech convolved
with only the direct + early part of each impulse response.

All randomness flows through numpy's PCG64 generator seeded from 64-bit
integers; record i of a dataset uses SeedSequence([master_seed, i]), so
parallel and serial generation produce identical outputs.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .dsp import DEFAULT_SAMPLE_RATE, StftConfig, Waveform, num_frames, write_wav

SABINE_CONSTANT = 0.161
DEFAULT_EARLY_MS = 50.0


@dataclass(frozen=True)
class RoomSpec:
    """Rectangular room with a uniform-wall reverberation time."""

    dimensions: tuple
    t60: float
    speed_of_sound: float = 343.0

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        object.__setattr__(self, "dimensions", dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError(f"room dimensions must be 3 positive lengths, got {dims}")
        if self.t60 < 0:
            raise ValueError(f"t60 must be non-negative, got {self.t60}")

    @property
    def volume(self):
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface(self):
        lx, ly, lz = self.dimensions
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def center(self, height=1.5):
        lx, ly, _ = self.dimensions
        return np.array([lx / 2.0, ly / 2.0, height])


def reflection_coefficient(room):
    """Uniform wall reflection coefficient from Sabine's relation.

    T60 = 0.161 V / (alpha S) with alpha = 1 - beta^2; a T60 short enough
    to demand alpha > 1 is clamped to beta = 0 with a warning.
    """
    if room.t60 <= 0:
        raise ValueError("reflection coefficient needs t60 > 0; use beta=0 for anechoic")
    alpha = SABINE_CONSTANT * room.volume / (room.t60 * room.surface)
    if alpha > 1.0:
        warnings.warn(
            f"t60={room.t60}s is unreachable for this room (absorption {alpha:.3f} > 1); "
            "clamping reflection coefficient to 0",
            stacklevel=2,
        )
    return float(np.sqrt(max(0.0, 1.0 - alpha)))


def _check_inside(room, point, name):
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"{name} position must be a 3-vector, got shape {p.shape}")
    if not all(0.0 < p[i] < room.dimensions[i] for i in range(3)):
        raise ValueError(f"{name} position {tuple(p)} is outside room {room.dimensions}")
    return p


def default_max_order(room):
    """Reflection order whose images cover the t60 decay tail."""
    if room.t60 <= 0:
        return 0
    return int(np.ceil(room.speed_of_sound * room.t60 / min(room.dimensions))) + 1


def image_source_rir(room, src, mic, max_order, fs=DEFAULT_SAMPLE_RATE, beta=None):
    """Image-source impulse response with nearest-sample delays.

    Images up to total reflection order ``max_order`` contribute an
    impulse of amplitude beta^order / (4 pi d) at the sample nearest to
    d / c. ``beta`` overrides the Sabine-derived coefficient (used by
    tests sweeping the coefficient directly).
    """
    src = _check_inside(room, src, "source")
    mic = _check_inside(room, mic, "microphone")
    if np.allclose(src, mic):
        raise ValueError("source and microphone positions coincide")
    if beta is None:
        beta = reflection_coefficient(room) if room.t60 > 0 else 0.0
    if beta == 0.0:
        max_order = 0

    dims = np.asarray(room.dimensions)
    c = room.speed_of_sound
    reach = (max_order + 1) // 2

    # Per-axis image coordinates and reflection counts: for integer shift n
    # and parity p, coordinate (1-2p)*src + 2nL with |n - p| + |n| wall hits.
    coords, expos = [], []
    for axis in range(3):
        n = np.arange(-reach, reach + 1)
        cand_coord = []
        cand_expo = []
        for p in (0, 1):
            cand_coord.append((1 - 2 * p) * src[axis] + 2.0 * n * dims[axis])
            cand_expo.append(np.abs(n - p) + np.abs(n))
        coord = np.concatenate(cand_coord)
        expo = np.concatenate(cand_expo)
        keep = expo <= max_order
        coords.append(coord[keep])
        expos.append(expo[keep])

    order = (
        expos[0][:, None, None] + expos[1][None, :, None] + expos[2][None, None, :]
    )
    mask = order <= max_order
    d2 = (
        (coords[0] - mic[0])[:, None, None] ** 2
        + (coords[1] - mic[1])[None, :, None] ** 2
        + (coords[2] - mic[2])[None, None, :] ** 2
    )
    dist = np.sqrt(d2[mask])
    amp = beta ** order[mask].astype(np.float64) / (4.0 * np.pi * dist)
    samples = np.rint(dist / c * fs).astype(np.int64)

    rir = np.zeros(int(samples.max()) + 1)
    np.add.at(rir, samples, amp)
    return rir


def split_direct_early(rir, early_ms, fs=DEFAULT_SAMPLE_RATE):
    """Partition an impulse response at direct arrival + early_ms.

    Returns (early, late) of the same length as ``rir`` with
    early + late == rir exactly. Direct arrival is the first non-zero
    sample (the response is causal by construction).
    """
    if early_ms <= 0:
        raise ValueError(f"early_ms must be positive, got {early_ms}")
    rir = np.asarray(rir, dtype=np.float64)
    nonzero = np.flatnonzero(rir)
    early = rir.copy()
    late = np.zeros_like(rir)
    if nonzero.size == 0:
        return early, late
    cut = nonzero[0] + int(round(early_ms * fs / 1000.0))
    if cut < rir.shape[0]:
        late[cut:] = rir[cut:]
        early[cut:] = 0.0
    return early, late


def mix_at_db(reference, contaminant, target_db, active=None):
    """Scale factor for ``contaminant`` giving the requested power ratio.

    Powers are measured over the reference's active samples (boolean mask
    over time; default all samples). target_db = +inf returns scale 0.
    """
    ref = reference.samples if isinstance(reference, Waveform) else np.atleast_2d(reference)
    con = contaminant.samples if isinstance(contaminant, Waveform) else np.atleast_2d(contaminant)
    if active is None:
        active = np.ones(ref.shape[1], dtype=bool)
    p_ref = float(np.mean(ref[:, active] ** 2))
    if p_ref == 0.0:
        raise ValueError("reference is silent over the active region")
    if np.isposinf(target_db):
        return 0.0
    p_con = float(np.mean(con[:, active] ** 2))
    if p_con == 0.0:
        raise ValueError("contaminant is silent over the active region")
    return float(np.sqrt(p_ref / (p_con * 10.0 ** (target_db / 10.0))))


@dataclass(frozen=True)
class SourcePlacement:
    """A point source inside the room; azimuth is relative to array center."""

    position: np.ndarray
    role: str = "target"

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))

    def azimuth_deg(self, center):
        d = self.position - center
        return float(np.rad2deg(np.arctan2(d[1], d[0])))


def placement_from_azimuth(room, azimuth_deg, distance, role="target", height=1.5,
                           wall_margin=0.1):
    """Place a source ``distance`` meters from the array center at the
    given azimuth, shrinking the distance if needed so the source stays
    ``wall_margin`` inside the room (a fixed interference distance does
    not fit every sampled room)."""
    theta = np.deg2rad(azimuth_deg)
    u = np.array([np.cos(theta), np.sin(theta), 0.0])
    center = room.center(height)
    reach = np.inf
    for axis in range(3):
        if abs(u[axis]) < 1e-12:
            continue
        if u[axis] > 0:
            reach = min(reach, (room.dimensions[axis] - wall_margin - center[axis]) / u[axis])
        else:
            reach = min(reach, (wall_margin - center[axis]) / u[axis])
    if reach <= 0:
        raise ValueError(f"array center leaves no room for a source at azimuth {azimuth_deg}")
    return SourcePlacement(center + min(distance, reach) * u, role)


@dataclass(frozen=True)
class MixtureSpec:
    """Fully resolved parameters of one mixture (no hidden randomness)."""

    duration: float = 6.0
    speech_len: float = 4.0
    speech_offset: float = 0.0
    sir_db: float = 5.0
    sensor_snr_db: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.speech_offset < 0 or self.speech_offset + self.speech_len > self.duration:
            raise ValueError(
                f"speech window [{self.speech_offset}, "
                f"{self.speech_offset + self.speech_len}] must fit in {self.duration}s"
            )
        for name in ("sir_db", "sensor_snr_db"):
            v = getattr(self, name)
            if np.isnan(v) or np.isneginf(v):
                raise ValueError(f"{name} must be finite or +inf, got {v}")


@dataclass(frozen=True)
class MixtureRecord:
    noisy: Waveform
    target: Waveform
    azimuth_track: np.ndarray
    room: RoomSpec
    spec: MixtureSpec
    target_azimuth_deg: float
    interference_azimuth_deg: float | None = None
    parts: dict | None = None


def synthesize_mixture(
    room,
    geometry,
    target_src,
    interference_src,
    clean_speech,
    interference_signal,
    spec,
    stft_cfg=None,
    early_ms=DEFAULT_EARLY_MS,
    keep_parts=False,
):
    """Build one reverberant multi-microphone mixture.

    The array sits at the room center (1.5 m height); ``interference_src``
    and ``interference_signal`` may be None for interference-free
    mixtures. Deterministic given ``spec.seed``.
    """
    stft_cfg = stft_cfg or StftConfig()
    fs = clean_speech.sample_rate
    center = room.center()
    mics = center + geometry.positions
    for m, pos in enumerate(mics):
        _check_inside(room, pos, f"microphone {m}")

    n = int(round(spec.duration * fs))
    off = int(round(spec.speech_offset * fs))
    speech_smp = int(round(spec.speech_len * fs))
    sig = clean_speech.samples[0][:speech_smp]
    buffer = np.zeros(n)
    buffer[off : off + sig.shape[0]] = sig
    active = np.zeros(n, dtype=bool)
    active[off : off + sig.shape[0]] = True

    max_order = default_max_order(room)
    num_mics = geometry.num_mics
    rev_speech = np.zeros((num_mics, n))
    target = np.zeros((num_mics, n))
    for m in range(num_mics):
        rir = image_source_rir(room, target_src.position, mics[m], max_order, fs)
        early, _ = split_direct_early(rir, early_ms, fs)
        rev_speech[m] = fftconvolve(buffer, rir)[:n]
        target[m] = fftconvolve(buffer, early)[:n]

    scaled_intf = np.zeros((num_mics, n))
    if interference_src is not None and interference_signal is not None:
        intf_sig = interference_signal.samples[0]
        reps = -(-n // intf_sig.shape[0])
        intf_buffer = np.tile(intf_sig, reps)[:n]
        rev_intf = np.zeros((num_mics, n))
        for m in range(num_mics):
            rir = image_source_rir(room, interference_src.position, mics[m], max_order, fs)
            rev_intf[m] = fftconvolve(intf_buffer, rir)[:n]
        sir_scale = mix_at_db(rev_speech[0:1], rev_intf[0:1], spec.sir_db, active)
        scaled_intf = sir_scale * rev_intf

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed])))
    noise = rng.standard_normal((num_mics, n))
    snr_scale = mix_at_db(rev_speech[0:1], noise[0:1], spec.sensor_snr_db, active)
    scaled_noise = snr_scale * noise

    noisy = rev_speech + scaled_intf + scaled_noise

    t_frames = num_frames(n, stft_cfg.window_length, stft_cfg.hop)
    track = np.full(t_frames, np.nan)
    az = target_src.azimuth_deg(center)
    for t in range(t_frames):
        lo, hi = t * stft_cfg.hop, t * stft_cfg.hop + stft_cfg.window_length
        if lo < off + sig.shape[0] and hi > off:
            track[t] = az

    parts = None
    if keep_parts:
        parts = {
            "reverberant_speech": rev_speech,
            "scaled_interference": scaled_intf,
            "scaled_noise": scaled_noise,
        }
    intf_az = (
        interference_src.azimuth_deg(center) if interference_src is not None else None
    )
    return MixtureRecord(
        noisy=Waveform(noisy, fs),
        target=Waveform(target, fs),
        azimuth_track=track,
        room=room,
        spec=spec,
        target_azimuth_deg=az,
        interference_azimuth_deg=intf_az,
        parts=parts,
    )


# ---------------------------------------------------------------------------
# Built-in surrogate signals (no external corpora required)
# ---------------------------------------------------------------------------

def speech_surrogate(rng, duration, fs=DEFAULT_SAMPLE_RATE):
    """Amplitude-modulated harmonic complex with a speech-like envelope."""
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    # Smooth random pitch contour around 100-220 Hz.
    knots = 8
    f0_pts = rng.uniform(100.0, 220.0, size=knots)
    f0 = np.interp(np.linspace(0, knots - 1, n), np.arange(knots), f0_pts)
    phase = 2.0 * np.pi * np.cumsum(f0) / fs
    max_harm = max(2, int(4000.0 / f0.max()))
    sig = np.zeros(n)
    for h in range(1, max_harm + 1):
        sig += (1.0 / h) * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    # Syllabic amplitude bursts at 2-5 Hz plus an edge fade.
    rate = rng.uniform(2.0, 5.0)
    env = np.clip(np.sin(2.0 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)), 0.0, None)
    fade = min(n // 20, int(0.05 * fs))
    ramp = np.ones(n)
    ramp[:fade] = np.linspace(0, 1, fade)
    ramp[n - fade :] = np.linspace(1, 0, fade)
    sig *= (0.1 + 0.9 * env) * ramp
    sig *= 0.1 / np.sqrt(np.mean(sig**2))
    return Waveform(sig[np.newaxis, :], fs)


def interference_surrogate(rng, duration, fs=DEFAULT_SAMPLE_RATE):
    """Pink-ish modulated noise standing in for music/engine interference."""
    n = int(round(duration * fs))
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    shaping = 1.0 / np.sqrt(np.maximum(freqs, 30.0))
    sig = np.fft.irfft(spectrum * shaping, n=n)
    t = np.arange(n) / fs
    am = 1.0 + 0.5 * np.sin(2.0 * np.pi * rng.uniform(0.5, 3.0) * t + rng.uniform(0, 2 * np.pi))
    sig *= am
    sig *= 0.1 / np.sqrt(np.mean(sig**2))
    return Waveform(sig[np.newaxis, :], fs)


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetConfig:
    """Sampling ranges for mixture generation.

    ``rooms``, ``t60_ranges`` and ``target_distance_ranges`` are paired by
    index: one scenario index is drawn per record and selects all three.
    """

    master_seed: int = 0
    mics: int = 4
    radius_m: float = 0.05
    positions: tuple | None = None  # explicit mic coordinates; overrides the UCA
    rooms: tuple = ((4.0, 4.0, 3.0), (5.0, 5.0, 3.0), (6.0, 6.0, 3.0))
    t60_ranges: tuple = ((0.16, 0.32), (0.32, 0.48), (0.48, 0.64))
    target_distance_ranges: tuple = ((1.0, 1.5), (1.0, 2.0), (1.0, 2.5))
    interference_distance_m: float = 2.0
    target_azimuth_grid: tuple = (0.0, 180.0, 1.0)
    interference_azimuth_grid: tuple = (180.0, 360.0, 1.0)
    sir_range_db: tuple = (-5.0, 15.0)
    sir_values_db: tuple | None = None
    snr_range_db: tuple = (10.0, 30.0)
    duration_s: float = 6.0
    speech_len_s: float = 4.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    early_ms: float = DEFAULT_EARLY_MS
    speech_dir: str | None = None


def _azimuth_choices(grid):
    lo, hi, step = grid
    return np.arange(lo, hi + step / 2, step)


def _build_record(cfg, index):
    """One dataset record from its derived PRNG stream; draw order is fixed."""
    from .arraygeom import ArrayGeometry, uca_positions
    from .dsp import read_wav

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.master_seed, index])))
    scenario = int(rng.integers(len(cfg.rooms)))
    t60 = float(rng.uniform(*cfg.t60_ranges[scenario]))
    target_az = float(rng.choice(_azimuth_choices(cfg.target_azimuth_grid)))
    intf_az = float(rng.choice(_azimuth_choices(cfg.interference_azimuth_grid)))
    target_dist = float(rng.uniform(*cfg.target_distance_ranges[scenario]))
    if cfg.sir_values_db is not None:
        sir = float(rng.choice(np.asarray(cfg.sir_values_db, dtype=np.float64)))
    else:
        sir = float(rng.uniform(*cfg.sir_range_db))
    snr = float(rng.uniform(*cfg.snr_range_db))
    offset = float(rng.uniform(0.0, cfg.duration_s - cfg.speech_len_s))
    seed = int(rng.integers(2**63))

    room = RoomSpec(cfg.rooms[scenario], t60)
    if cfg.positions is not None:
        geometry = ArrayGeometry(np.asarray(cfg.positions, dtype=np.float64))
    else:
        geometry = ArrayGeometry(uca_positions(cfg.mics, cfg.radius_m))
    target_src = placement_from_azimuth(room, target_az, target_dist, "target")
    intf_src = placement_from_azimuth(room, intf_az, cfg.interference_distance_m, "interference")

    if cfg.speech_dir is not None:
        files = sorted(Path(cfg.speech_dir).glob("*.wav"))
        if not files:
            raise ValueError(f"no WAV files in speech_dir {cfg.speech_dir}")
        speech = read_wav(files[int(rng.integers(len(files)))])
    else:
        speech = speech_surrogate(rng, cfg.speech_len_s, cfg.sample_rate)
    interference = interference_surrogate(rng, cfg.duration_s, cfg.sample_rate)

    spec = MixtureSpec(
        duration=cfg.duration_s,
        speech_len=cfg.speech_len_s,
        speech_offset=offset,
        sir_db=sir,
        sensor_snr_db=snr,
        seed=seed,
    )
    record = synthesize_mixture(
        room, geometry, target_src, intf_src, speech, interference, spec,
        early_ms=cfg.early_ms,
    )
    entry = {
        "id": index,
        "seed": seed,
        "target_azimuth_deg": target_az,
        "interference_azimuth_deg": intf_az,
        "sir_db": sir,
        "snr_db": snr,
        "t60_s": t60,
        "room_dims": list(cfg.rooms[scenario]),
        "duration_s": cfg.duration_s,
        "speech_offset_s": offset,
        "speech_len_s": cfg.speech_len_s,
        "sample_rate": cfg.sample_rate,
        "noisy_path": f"mix_{index:05d}_noisy.wav",
        "target_path": f"mix_{index:05d}_target.wav",
    }
    return record, entry


def generate_dataset(cfg, count, out_dir, threads=1):
    """Write ``count`` mixtures plus a line-delimited JSON manifest.

    Returns the manifest entries. Re-running with the same master seed
    produces byte-identical WAVs and manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    if threads > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = pool.map(_build_record, [cfg] * count, range(count))
            for record, entry in results:
                _write_record(out, record, entry)
                entries.append(entry)
    else:
        for i in range(count):
            record, entry = _build_record(cfg, i)
            _write_record(out, record, entry)
            entries.append(entry)
    with open(out / "manifest.jsonl", "w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    return entries


def _write_record(out, record, entry):
    write_wav(out / entry["noisy_path"], record.noisy, fmt="float32")
    write_wav(out / entry["target_path"], record.target, fmt="float32")


def load_manifest(path):
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def azimuth_track_from_entry(entry, stft_cfg):
    """Rebuild the per-frame azimuth/inactive track from manifest fields."""
    fs = entry["sample_rate"]
    n = int(round(entry["duration_s"] * fs))
    off = int(round(entry["speech_offset_s"] * fs))
    speech_smp = int(round(entry["speech_len_s"] * fs))
    t_frames = num_frames(n, stft_cfg.window_length, stft_cfg.hop)
    track = np.full(t_frames, np.nan)
    for t in range(t_frames):
        lo, hi = t * stft_cfg.hop, t * stft_cfg.hop + stft_cfg.window_length
        if lo < off + speech_smp and hi > off:
            track[t] = entry["target_azimuth_deg"]
    return track
