from pathlib import Path
import sys

import numpy as np
import pytest

SRC = Path(__file__).resolve().parent.parent / "src"
sys.path.insert(0, str(SRC))

import vision  # noqa: E402


@pytest.fixture
def textured_frame():
    rng = np.random.default_rng(7)
    pixels = rng.integers(0, 256, size=(180, 320))
    return vision.Frame.from_array(pixels)


@pytest.fixture
def flat_frame():
    return vision.Frame.from_array(np.full((180, 320), 128))
