import json

import numpy as np
import pytest

from neurobeam.cli import main
from neurobeam.config import RunConfig, write_config
from neurobeam.dsp import Waveform, write_wav

from conftest import toy_config_dict


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    with open(path, "w") as fh:
        json.dump(toy_config_dict(), fh)
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A 2-step trained checkpoint over a tiny dataset, via the CLI."""
    base = tmp_path_factory.mktemp("cli_train")
    cfg_path = base / "config.json"
    with open(cfg_path, "w") as fh:
        json.dump(toy_config_dict(steps=2), fh)
    assert main(["synth", str(cfg_path), "--count", "1", "--out", str(base / "data")]) == 0
    assert (
        main([
            "train", str(cfg_path),
            "--manifest", str(base / "data" / "manifest.jsonl"),
            "--out", str(base / "run"),
        ])
        == 0
    )
    return {
        "base": base,
        "config": cfg_path,
        "manifest": base / "data" / "manifest.jsonl",
        "checkpoint": base / "run" / "checkpoint_last.nbcp",
        "noisy": base / "data" / "mix_00000_noisy.wav",
    }


def test_version_prints_schemas(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "neurobeam" in out and "config schema" in out and "checkpoint format" in out


def test_synth_count_zero(tmp_path, config_path):
    assert main(["synth", str(config_path), "--count", "0", "--out", str(tmp_path / "d")]) == 0
    assert (tmp_path / "d" / "manifest.jsonl").read_text() == ""


def test_synth_deterministic(tmp_path, config_path):
    for name in ("a", "b"):
        assert (
            main(["synth", str(config_path), "--count", "1", "--out", str(tmp_path / name)])
            == 0
        )
    assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (
        tmp_path / "b" / "manifest.jsonl"
    ).read_bytes()
    assert (tmp_path / "a" / "mix_00000_noisy.wav").read_bytes() == (
        tmp_path / "b" / "mix_00000_noisy.wav"
    ).read_bytes()


def test_invalid_config_key_names_it(tmp_path, capsys):
    path = tmp_path / "bad.json"
    data = toy_config_dict()
    data["training"]["learning_rate_typo"] = 0.1
    with open(path, "w") as fh:
        json.dump(data, fh)
    assert main(["synth", str(path), "--count", "0", "--out", str(tmp_path / "d")]) == 1
    assert "training.learning_rate_typo" in capsys.readouterr().err


def test_invalid_json_rejected(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["synth", str(path), "--count", "0", "--out", str(tmp_path / "d")]) == 1
    assert "JSON" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "nope.json"), "--count", "0", "--out", "x"]) == 1


def test_cli_set_override_rejects_unknown(tmp_path, config_path, capsys):
    rc = main([
        "train", str(config_path), "--manifest", "m", "--out", "o",
        "--set", "training.nonsense=3",
    ])
    assert rc == 1
    assert "training.nonsense" in capsys.readouterr().err


def test_train_and_eval_cli(trained, tmp_path, capsys):
    report = tmp_path / "report.csv"
    rc = main(["eval", str(trained["checkpoint"]), str(trained["manifest"]),
               "--out", str(report)])
    assert rc == 0
    lines = report.read_text().splitlines()
    assert lines[0].startswith("metric,")
    assert "si_snri_db" in lines[4]


def test_enhance_cli_outputs(trained, tmp_path):
    out_wav = tmp_path / "enh.wav"
    rc = main(["enhance", str(trained["checkpoint"]), str(trained["noisy"]),
               "--out", str(out_wav)])
    assert rc == 0
    assert out_wav.exists()
    csv_path = tmp_path / "enh.wav.loc.csv"
    rows = csv_path.read_text().strip().splitlines()
    from neurobeam.dsp import num_frames, read_wav

    noisy = read_wav(trained["noisy"])
    assert len(rows) - 1 == num_frames(noisy.num_samples, 400, 100)


def test_enhance_channel_mismatch_exit_code(trained, tmp_path, capsys):
    bad = tmp_path / "bad.wav"
    write_wav(bad, Waveform(np.zeros((3, 2000))))
    rc = main(["enhance", str(trained["checkpoint"]), str(bad),
               "--out", str(tmp_path / "o.wav")])
    assert rc == 1
    err = capsys.readouterr().err
    assert "3" in err and "4" in err


def test_enhance_silence_vad_inactive(trained, tmp_path):
    silent = tmp_path / "silent.wav"
    write_wav(silent, Waveform(np.zeros((4, 3000))))
    out_wav = tmp_path / "out.wav"
    csv_path = tmp_path / "loc.csv"
    rc = main(["enhance", str(trained["checkpoint"]), str(silent),
               "--out", str(out_wav), "--csv", str(csv_path), "--mode", "splm"])
    assert rc == 0
    rows = csv_path.read_text().strip().splitlines()[1:]
    assert all(float(r.split(",")[3]) <= 0.5 for r in rows)


def test_train_nan_abort_exit_code(trained, tmp_path, capsys):
    cfg_nan = tmp_path / "nan.json"
    with open(cfg_nan, "w") as fh:
        json.dump(toy_config_dict(steps=3, debug_nan_at_step=1), fh)
    out = tmp_path / "run"
    rc = main(["train", str(cfg_nan), "--manifest", str(trained["manifest"]),
               "--out", str(out)])
    assert rc == 2
    assert "non-finite loss" in capsys.readouterr().err
    assert (out / "checkpoint_last.nbcp").exists()  # last finite state retained


def test_synth_unwritable_out_dir_is_user_error(config_path, capsys):
    rc = main(["synth", str(config_path), "--count", "1",
               "--out", "/proc/definitely/not/writable"])
    assert rc == 1


def test_train_resume_cli(trained, tmp_path):
    cfg4 = tmp_path / "c4.json"
    with open(cfg4, "w") as fh:
        json.dump(toy_config_dict(steps=4), fh)
    out = trained["base"] / "resumed"
    import shutil

    shutil.copytree(trained["base"] / "run", out)
    rc = main(["train", str(cfg4), "--manifest", str(trained["manifest"]),
               "--out", str(out), "--resume", str(out / "checkpoint_last.nbcp")])
    assert rc == 0


def test_selfcheck_passes_within_budget(capsys):
    import time

    t0 = time.perf_counter()
    assert main(["selfcheck"]) == 0
    assert time.perf_counter() - t0 < 300.0
    out = capsys.readouterr().out
    assert "checks passed" in out


def test_selfcheck_corrupted_gradient_fails_with_op_name(capsys):
    assert main(["selfcheck", "--corrupt-op", "complex_conv2d"]) == 1
    out = capsys.readouterr().out
    assert "FAIL gradient_complex_conv2d" in out


def test_write_config_roundtrip(tmp_path):
    from neurobeam.config import load_config

    path = tmp_path / "c.json"
    write_config(path, RunConfig())
    cfg = load_config(path)
    assert cfg == RunConfig()
