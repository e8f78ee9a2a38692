import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from meshstyle.asset_io import RunConfig  # noqa: E402
from meshstyle.synthetic import make_creature, random_proportions  # noqa: E402


def fast_config(**changes):
    """Small budgets so pipeline tests stay quick."""
    base = dict(sample_count=1024, ellipsoid_surface_samples=256, geo_iters=60, refine_iters=1,
                views=2, image_resolution=64, joint_steps=4, pyramid_levels=3)
    base.update(changes)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def creature_pair():
    src, sl = make_creature(5, rings=8, segments=10, texture_seed=1, texture_size=64)
    tgt, tl = make_creature(5, rings=8, segments=10, proportions=random_proportions(5, 7),
                            texture_seed=2, texture_size=64)
    return src, sl, tgt, tl
