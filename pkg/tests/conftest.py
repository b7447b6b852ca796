"""
Shared fixtures: synthetic layered scans, tiny architectures and run configs.
"""

import os
from pathlib import Path

import pytest
import yaml

from src.core.models import ArchitectureConfig, TrainingConfig
from src.data.dataio import load_dataset, preprocess_sample, split_dataset
from src.data.synthetic import write_pair_fixture
from src.nets.segnet import build_model

from .helpers import TINY_FILTERS

# read before the autouse fixture below clears it for every test
DUKE_DIR = os.environ.get("OCTSEG_DATA_DIR")


@pytest.fixture(autouse=True)
def _no_env_data_dir(monkeypatch):
    monkeypatch.delenv("OCTSEG_DATA_DIR", raising=False)


@pytest.fixture
def duke_dir() -> Path:
    if not DUKE_DIR or not Path(DUKE_DIR).exists():
        pytest.skip("Duke OCT data not available (set OCTSEG_DATA_DIR)")
    return Path(DUKE_DIR)


@pytest.fixture
def tiny_arch() -> ArchitectureConfig:
    return ArchitectureConfig(input_shape=(32, 32, 1), encoder_filters=TINY_FILTERS)


@pytest.fixture
def tiny_model(tiny_arch):
    return build_model(tiny_arch)


@pytest.fixture
def pair_dir(tmp_path) -> Path:
    root = tmp_path / "pairs"
    write_pair_fixture(root, count=6, height=40, width=48, seed=3)
    return root


@pytest.fixture
def tiny_split(pair_dir):
    samples = [preprocess_sample(s, (32, 32)) for s in load_dataset(pair_dir, "pairs")]
    return split_dataset(samples, ratio=0.5, seed=0)


@pytest.fixture
def tiny_training(tmp_path) -> TrainingConfig:
    return TrainingConfig(
        epochs=2,
        batch_size=2,
        device="cpu",
        progress=False,
        checkpoint_path=tmp_path / "ckpt" / "best.pt",
        log_path=tmp_path / "logs" / "log.csv",
    )


@pytest.fixture
def run_config_file(tmp_path, pair_dir) -> Path:
    """YAML run file for a 32x32 CPU run on the synthetic pairs."""
    payload = {
        "output_root": str(tmp_path / "run"),
        "seed": 0,
        "data": {"path": str(pair_dir), "format": "pairs", "split_ratio": 0.5, "target_size": [32, 32]},
        "model": {"input_shape": [32, 32, 1], "encoder_filters": TINY_FILTERS},
        "training": {"epochs": 2, "batch_size": 2, "device": "cpu", "progress": False},
        "xai": {"layers": ["conv2d_19", "conv2d_20"]},
    }
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(payload))
    return path
