"""
Fixture dùng chung cho các test
"""

import numpy as np
import pytest

from app.models import SyntheticTask, build_variant


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config():
    """tiny-test ở 64 px: lưới 16/8/4/2, cửa sổ 2"""
    return build_variant("tiny-test", 64)


@pytest.fixture
def toy_task():
    return SyntheticTask(num_classes=4, image_size=64, seed=0, samples_per_class=4)
