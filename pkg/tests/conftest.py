"""Shared fixtures: small scenes and datasets reused across test modules."""

import numpy as np
import pytest

from misi.forward import synthesize_measurements
from misi.operators import build_operator_set
from misi.scene import Phantom, Shape, build_fresnel_like_scene


@pytest.fixture(scope="session")
def tiny_scene():
    """8x8 grid, 2 Tx, 4 Rx each, one frequency."""
    return build_fresnel_like_scene(
        n_tx=2, blind_deg=0.0, rx_step_deg=120.0, radius=3.0, doi_half=0.5,
        n_grid=8, freqs=[0.3e9])


@pytest.fixture(scope="session")
def tiny_phantom():
    return Phantom(shapes=(Shape("disk", (0.1, -0.05), 2.0, radius=0.2),))


@pytest.fixture(scope="session")
def tiny_mset(tiny_scene, tiny_phantom):
    return synthesize_measurements(tiny_scene, tiny_phantom, 16)


@pytest.fixture(scope="session")
def tiny_ops(tiny_scene):
    return build_operator_set(tiny_scene, pad_factor=2)


def random_sources(scene, seed=0):
    """Random complex contrast sources shaped like the active SourceSet."""
    rng = np.random.default_rng(seed)
    shape = (scene.n_tx, scene.n_grid ** 2)
    return {f: rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            for f in range(scene.n_freq)}


def random_chi(scene, seed=1, lossy=True):
    rng = np.random.default_rng(seed)
    n = scene.n_grid ** 2
    chi = {}
    for f in range(scene.n_freq):
        re = rng.uniform(0.0, 2.0, n)
        im = rng.uniform(0.0, 1.0, n) if lossy else np.zeros(n)
        chi[f] = re - 1j * im
    return chi
