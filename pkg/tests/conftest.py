from __future__ import annotations

import numpy as np
import pytest

from trievolve.genome import GenomeConfig, Scene, Triangle, decode


def random_scene(rng: np.random.Generator, n: int, learnable_alpha: bool = True) -> Scene:
    """Random valid scene with components strictly inside (0, 1)."""
    config = GenomeConfig(n)
    values = rng.standard_normal(config.dimension)
    scene = decode(values, config)
    if not learnable_alpha:
        scene = Scene(tuple(
            Triangle(t.v1, t.v2, t.v3, t.color, 0.5) for t in scene.triangles
        ))
    return scene


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
