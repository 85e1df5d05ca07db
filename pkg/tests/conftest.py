from __future__ import annotations

import numpy as np
import pytest

from graspsynth.contact import manual_contact_map, region_predicate
from graspsynth.geometry.sampling import sample_surface
from graspsynth.geometry.shapes import cylinder_mesh, icosphere
from graspsynth.hand.model import load_hand
from graspsynth.objects import make_object
from graspsynth.scenarios import build_scenario, builtin_specs


@pytest.fixture(scope="session")
def barrett():
    return load_hand("barrett-like")


@pytest.fixture(scope="session")
def cylinder():
    return make_object(cylinder_mesh(0.02, 0.15), name="cylinder", use_cache=False)


@pytest.fixture(scope="session")
def sphere_obj():
    return make_object(icosphere(0.04, 3), name="sphere", use_cache=False)


@pytest.fixture(scope="session")
def band_map(cylinder):
    samples = sample_surface(cylinder.mesh, 1500, 0)
    band = region_predicate({"type": "slab", "axis": 2, "lo": 0.03, "hi": 0.12})
    return manual_contact_map(cylinder.mesh, samples, [(band, 1)])


@pytest.fixture(scope="session")
def cylinder_scenario(barrett):
    return build_scenario(builtin_specs()[0], barrett, n_points=1500, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
