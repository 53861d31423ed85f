"""Shared fixtures: the default structure, a clean aimed rig and its
rendered views. Session-scoped because rendering is the slow part."""

import numpy as np
import pytest

from vcap.geometry import DEFAULT_INTRINSICS
from vcap.noise import NoiseParams, corrupt
from vcap.render import render
from vcap.sampling import default_rig
from vcap.structure import default_structure


@pytest.fixture(scope="session")
def model():
    return default_structure()


@pytest.fixture(scope="session")
def aimed_rig():
    """Four look-at sensors (zero mounting tilt), default bounds."""
    return default_rig(4, seed=0, aimed=True)


@pytest.fixture(scope="session")
def clean_views(model, aimed_rig):
    """Noise-free renders of the aimed rig."""
    return [render(model, s.pose.inverse(), DEFAULT_INTRINSICS) for s in aimed_rig]


@pytest.fixture(scope="session")
def noisy_depths(clean_views):
    """The same views through the default sensor noise model."""
    out = []
    for i, view in enumerate(clean_views):
        params = NoiseParams(seed=100 + i)
        out.append(corrupt(view.depth, view.label, params))
    return out


@pytest.fixture(scope="session")
def intrinsics():
    return DEFAULT_INTRINSICS
