from __future__ import annotations

from importlib import resources

import numpy as np
import pytest

from mscorr.projection import reference_white
from mscorr.spectral import SensitivityKind, SpectralImage, WavelengthAxis, load_sensitivities

AXIS_10NM = WavelengthAxis(380, 10, 41)


def builtin_table(name: str, kind: SensitivityKind, axis: WavelengthAxis = AXIS_10NM):
    with resources.as_file(resources.files("mscorr") / "data" / name) as p:
        return load_sensitivities(p, axis, kind)


@pytest.fixture
def axis():
    return AXIS_10NM


@pytest.fixture(scope="session")
def cmf():
    return builtin_table("cie1931_2deg_10nm.csv", SensitivityKind.CMF_XYZ)


@pytest.fixture(scope="session")
def camera():
    return builtin_table("camera_rgb_10nm.csv", SensitivityKind.CAMERA_RGB)


@pytest.fixture(scope="session")
def flat_white(cmf):
    return reference_white(cmf)


def random_cube(rng, width, height, axis, low=0, high=256):
    s = rng.integers(low, high, size=(height, width, axis.count), dtype=np.uint8)
    return SpectralImage(s, axis)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
