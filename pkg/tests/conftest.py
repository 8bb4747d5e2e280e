import numpy as np
import pytest

from neurobeam.config import config_from_dict
from neurobeam.roomsim import generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def toy_config_dict(**training_overrides):
    """Desk-scale run config: 1-s mixtures, M=4, scale=4 model."""
    training = {"steps": 2, "checkpoint_every": 100, "log_every": 1}
    training.update(training_overrides)
    return {
        "seed": 42,
        "dataset": {
            "duration_s": 1.0,
            "speech_len_s": 0.6,
            "t60_ranges": [[0.15, 0.25]] * 3,
            "sir_values_db": [0.0],
        },
        "training": training,
    }


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """One 1-s seeded mixture plus its manifest, shared across tests."""
    out = tmp_path_factory.mktemp("toyset")
    cfg = config_from_dict(toy_config_dict())
    entries = generate_dataset(cfg.dataset_config(), 1, out)
    return {"dir": out, "manifest": out / "manifest.jsonl", "entries": entries, "config": cfg}
