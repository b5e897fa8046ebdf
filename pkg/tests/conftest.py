import numpy as np
import pytest

from app.augment.lexicon import load_text_resources
from app.config import TrainerConfig
from app.data.synthetic import write_synthetic_dataset


@pytest.fixture
def resources():
    return load_text_resources()


@pytest.fixture
def tiny_config():
    return TrainerConfig(
        image_size=16,
        epochs=1,
        learning_rate=1e-3,
        text_candidate_count=3,
        base_channels=4,
        text_dim=8,
        num_workers=1,
    )


@pytest.fixture
def synthetic(tmp_path):
    """12 train + 4 val synthetic samples at 16x16."""
    return write_synthetic_dataset(tmp_path / "data", 12, 4, image_size=16, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
