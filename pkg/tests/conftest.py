import numpy as np
import pytest

from gazescreen.geometry import ScreenGeometry


@pytest.fixture
def geom() -> ScreenGeometry:
    return ScreenGeometry(
        screen_width_px=1920,
        screen_height_px=1080,
        screen_width_cm=52.0,
        screen_height_cm=29.0,
        viewing_distance_cm=60.0,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
