"""Multi-task training loop (enhancement + localization) and evaluation.

Each step processes one manifest record (cycled in order), builds the
loss graph end-to-end — spectrogram, filter estimation, filter-and-sum,
overlap-add synthesis, SI-SNR, plus binary cross-entropy through the
chosen localization path — and takes one Adam step. Everything is
deterministic given the config seed; checkpoints carry parameters,
batch-norm statistics, and optimizer moments so a resumed run reproduces
the uninterrupted trajectory.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .arraygeom import ZoneGrid, ground_truth_map, steering_set, zone_of_angle
from .beamloc import enhance_utterance
from .checkpoint import load_checkpoint, save_checkpoint
from .dsp import read_wav, stft
from .layers import ComplexTensor
from .losses import (
    LossBreakdown,
    bce_loss,
    filter_and_sum_tensor,
    si_snr,
    si_snr_loss,
    splm_map_tensor,
    synthesize_waveform,
    total_loss,
)
from .metrics import loc_metrics, merge_metrics
from .model import MimoDccrn
from .optim import Adam
from .roomsim import azimuth_track_from_entry, load_manifest

CHECKPOINT_NAME = "checkpoint_last.nbcp"
LOG_NAME = "train_log.jsonl"
SIR_BUCKETS = (-10.0, -5.0, 0.0, 10.0)


class TrainingDiverged(RuntimeError):
    def __init__(self, step, message):
        super().__init__(message)
        self.step = step


def build_model(cfg, seed=None):
    nlm = cfg.nlm_config() if cfg.localization.mode == "nlm" else None
    return MimoDccrn(
        cfg.model_config(), nlm=nlm, seed=cfg.seed if seed is None else seed,
        dtype=np.float32,
    )


def _checkpoint_meta(cfg, step):
    array_meta = {
        "mics": cfg.array.mics,
        "radius_m": cfg.array.radius_m,
        "speed_of_sound": cfg.array.speed_of_sound,
    }
    if cfg.array.positions is not None:
        array_meta["positions"] = [list(p) for p in cfg.array.positions]
    return {
        "schema": 1,
        "train_step": step,
        "stft": {
            "window_length": cfg.stft.window_length,
            "hop": cfg.stft.hop,
            "fft_size": cfg.stft.fft_size,
        },
        "array": array_meta,
        "localization": {
            "zones": cfg.localization.zones,
            "mode": cfg.localization.mode,
            "vad_threshold": cfg.localization.vad_threshold,
        },
    }


def geometry_from_meta(meta):
    """Rebuild the microphone geometry a checkpoint was trained with."""
    from .arraygeom import ArrayGeometry, uca_positions

    array_meta = meta["array"]
    if "positions" in array_meta:
        positions = np.asarray(array_meta["positions"], dtype=np.float64)
    else:
        positions = uca_positions(array_meta["mics"], array_meta["radius_m"])
    return ArrayGeometry(positions, array_meta["speed_of_sound"])


def _save(out_dir, model, adam, cfg, step):
    arrays = model.checkpoint_arrays()
    arrays.update(adam.state_arrays())
    meta = {**model.meta(), **_checkpoint_meta(cfg, step)}
    save_checkpoint(out_dir / CHECKPOINT_NAME, arrays, meta)


def training_step(model, adam, cfg, stft_cfg, entry, base_dir, steering=None):
    """One optimization step on one mixture; returns the loss breakdown."""
    trn = cfg.training
    noisy = read_wav(base_dir / entry["noisy_path"])
    target = read_wav(base_dir / entry["target_path"])
    spec = stft(noisy, stft_cfg)

    weights = model.forward_weights(spec.data, training=True)
    enhanced = filter_and_sum_tensor(weights, spec.data)
    estimate = synthesize_waveform(enhanced.re, enhanced.im, stft_cfg)
    reference = target.samples[trn.reference_mic][: estimate.shape[0]]
    loss_sisnr = si_snr_loss([estimate], [reference], trn.sisnr_convention)

    track = azimuth_track_from_entry(entry, stft_cfg)
    truth = ground_truth_map(track, cfg.localization.zones)
    if cfg.localization.mode == "nlm":
        m, f, t = weights.shape
        w_img = ComplexTensor(
            ad.reshape(weights.re, (1, m, f, t)), ad.reshape(weights.im, (1, m, f, t))
        )
        zhat = model.localize(w_img, training=True)
    else:
        zhat = splm_map_tensor(weights, steering)
    loss_bce = bce_loss(truth, zhat)

    loss = total_loss(loss_bce, loss_sisnr, trn.gamma)
    breakdown = LossBreakdown(
        si_snr_db=-float(loss_sisnr.item()),
        loss_sisnr=float(loss_sisnr.item()),
        loss_bce=float(loss_bce.item()),
        total=float(loss.item()),
        gamma=trn.gamma,
    )
    if not np.isfinite(breakdown.total):
        return breakdown, False
    adam.zero_grad()
    ad.backward(loss)
    adam.step()
    return breakdown, True


def train(cfg, manifest_path, out_dir, resume=None):
    """Run the configured number of steps; returns the per-step log.

    On a non-finite loss the last finite-state checkpoint is kept on disk
    and ``TrainingDiverged`` is raised.
    """
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = load_manifest(manifest_path)
    if not entries:
        raise ValueError(f"dataset manifest {manifest_path} is empty")
    base_dir = manifest_path.parent
    stft_cfg = cfg.stft_config()

    model = build_model(cfg)
    adam = Adam(
        model.params(), lr=cfg.training.lr, beta1=cfg.training.beta1,
        beta2=cfg.training.beta2, eps=cfg.training.eps,
    )
    if resume is not None:
        arrays, meta = load_checkpoint(resume)
        model.load_arrays(arrays)
        adam.load_state_arrays(arrays)
    start = adam.step_count

    steering = None
    if cfg.localization.mode == "splm":
        steering = steering_set(
            cfg.geometry(), ZoneGrid(cfg.localization.zones),
            stft_cfg.frequencies(cfg.dataset.sample_rate),
        )

    log_path = out_dir / LOG_NAME
    log_fh = open(log_path, "a" if resume is not None else "w")
    history = []
    _save(out_dir, model, adam, cfg, start)
    try:
        for step in range(start, cfg.training.steps):
            t0 = time.perf_counter()
            entry = entries[step % len(entries)]
            breakdown, ok = training_step(
                model, adam, cfg, stft_cfg, entry, base_dir, steering
            )
            if cfg.training.debug_nan_at_step == step:
                breakdown = LossBreakdown(
                    breakdown.si_snr_db, breakdown.loss_sisnr, breakdown.loss_bce,
                    float("nan"), breakdown.gamma,
                )
                ok = False
            if not ok:
                # Parameters predate the poisoned update; keep them if finite.
                if all(np.all(np.isfinite(p.data)) for p in model.params().values()):
                    _save(out_dir, model, adam, cfg, step)
                raise TrainingDiverged(
                    step,
                    f"non-finite loss at step {step} "
                    f"(bce={breakdown.loss_bce}, sisnr={breakdown.loss_sisnr}); "
                    f"last finite checkpoint retained at {out_dir / CHECKPOINT_NAME}",
                )
            record = {
                "step": step,
                "loss_bce": breakdown.loss_bce,
                "loss_sisnr": breakdown.loss_sisnr,
                "total": breakdown.total,
                "si_snr_db": breakdown.si_snr_db,
                "wall_ms": (time.perf_counter() - t0) * 1000.0,
            }
            history.append(record)
            if step % cfg.training.log_every == 0 or step == cfg.training.steps - 1:
                log_fh.write(json.dumps(record, sort_keys=True) + "\n")
                log_fh.flush()
            done = step + 1
            if done % cfg.training.checkpoint_every == 0 or done == cfg.training.steps:
                _save(out_dir, model, adam, cfg, done)
    finally:
        log_fh.close()
    return history


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def interior_slice(stft_cfg, length):
    """Scoring region: one analysis window trimmed from each edge."""
    return slice(stft_cfg.window_length, length - stft_cfg.window_length)


def evaluate_records(
    entries, base_dir, model, stft_cfg, geometry, zones, mode,
    convention="standard", vad_threshold=0.5,
):
    """Per-record SI-SNR improvement and localization metrics."""
    rows = []
    for entry in entries:
        noisy = read_wav(Path(base_dir) / entry["noisy_path"])
        target = read_wav(Path(base_dir) / entry["target_path"])
        enhanced, loc = enhance_utterance(
            noisy, model, mode, zones, geometry, stft_cfg, vad_threshold
        )
        n = enhanced.num_samples
        sl = interior_slice(stft_cfg, n)
        ref = target.samples[0][:n][sl]
        est = enhanced.samples[0][sl]
        mic0 = noisy.samples[0][:n][sl]
        si_noisy = si_snr(mic0, ref, convention)
        si_enh = si_snr(est, ref, convention)

        track = azimuth_track_from_entry(entry, stft_cfg)
        active = ~np.isnan(track)
        truth = np.ones(track.shape[0], dtype=np.int64)
        truth[active] = zone_of_angle(track[active], zones)
        metrics = loc_metrics(loc.zone_track, truth, active, zones)
        rows.append(
            {
                "id": entry["id"],
                "sir_db": entry["sir_db"],
                "si_snr_noisy_db": si_noisy,
                "si_snr_enhanced_db": si_enh,
                "si_snri_db": si_enh - si_noisy,
                "metrics": metrics,
            }
        )
    return rows


def _nearest_bucket(sir):
    return min(SIR_BUCKETS, key=lambda b: abs(b - sir))


def summarize(rows):
    """Group rows into the report's SIR buckets; empty buckets are omitted."""
    buckets = {}
    for row in rows:
        buckets.setdefault(_nearest_bucket(row["sir_db"]), []).append(row)
    summary = {}
    for bucket in SIR_BUCKETS:
        if bucket not in buckets:
            continue
        group = buckets[bucket]
        summary[bucket] = _pool(group)
    summary["avg"] = _pool(rows)
    return summary


def _pool(rows):
    pooled = merge_metrics([r["metrics"] for r in rows])
    return {
        "count": len(rows),
        "si_snr_noisy_db": float(np.mean([r["si_snr_noisy_db"] for r in rows])),
        "si_snr_enhanced_db": float(np.mean([r["si_snr_enhanced_db"] for r in rows])),
        "si_snri_db": float(np.mean([r["si_snri_db"] for r in rows])),
        "acc": pooled.acc,
        "aer": pooled.aer,
        "oer": pooled.oer,
    }


def write_report(path, summary, convention="standard"):
    """CSV mirroring the SIR-bucket table layout, one metric per row."""
    cols = [b for b in SIR_BUCKETS if b in summary] + ["avg"]

    def label(col):
        return "avg" if col == "avg" else f"sir_{col:+.0f}db"

    metric_names = [
        "count", "si_snr_noisy_db", "si_snr_enhanced_db", "si_snri_db",
        "acc", "aer", "oer",
    ]
    with open(path, "w") as fh:
        fh.write("metric," + ",".join(label(c) for c in cols) + "\n")
        for name in metric_names:
            vals = []
            for col in cols:
                v = summary[col][name]
                vals.append(str(v) if name == "count" else f"{v:.4f}")
            fh.write(name + "," + ",".join(vals) + "\n")
        fh.write(
            f"# si_snr convention={convention}; values clamped to +/-60 dB; "
            "scored on the interior (one analysis window trimmed per edge)\n"
        )


def evaluate(manifest_path, checkpoint_path, out_csv=None, mode=None):
    """Evaluate a trained checkpoint over a manifest; returns the summary."""
    manifest_path = Path(manifest_path)
    entries = load_manifest(manifest_path)
    if not entries:
        raise ValueError(f"dataset manifest {manifest_path} is empty")
    arrays, meta = load_checkpoint(checkpoint_path)
    model = MimoDccrn.from_meta(meta)
    model.load_arrays(arrays)
    from .dsp import StftConfig

    stft_cfg = StftConfig(**meta["stft"])
    geometry = geometry_from_meta(meta)
    loc_meta = meta["localization"]
    mode = mode or loc_meta["mode"]
    rows = evaluate_records(
        entries, manifest_path.parent, model, stft_cfg, geometry,
        loc_meta["zones"], mode, vad_threshold=loc_meta["vad_threshold"],
    )
    summary = summarize(rows)
    if out_csv is not None:
        write_report(out_csv, summary)
    return summary
