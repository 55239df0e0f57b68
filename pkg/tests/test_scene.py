"""Geometry, phantom rasterization, and contrast mapping tests."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from misi.constants import EPS0
from misi.scene import (Phantom, Scene, Shape, austria_phantom,
                        build_fresnel_like_scene, contrast_of,
                        rasterize_phantom)


def test_simulation_array_counts():
    scene = build_fresnel_like_scene(12, 30, 3, 3.0, 0.5, 64,
                                     [0.3e9, 0.4e9, 0.5e9])
    assert scene.n_tx == 12
    assert scene.n_rx == 101
    assert scene.n_freq == 3


def test_single_tx_full_circle_counts():
    # 0-degree blind sector, 90-degree step: 0..360 with the endpoint
    # counted once by the floor formula.
    scene = build_fresnel_like_scene(1, 0, 90, 3.0, 0.5, 8, [0.3e9])
    assert scene.n_tx == 1
    assert scene.n_rx == 5


def test_measured_array_counts():
    scene = build_fresnel_like_scene(18, 60, 5, 1.67, 0.1, 64,
                                     [3e9, 4e9, 5e9])
    assert scene.n_tx == 18
    assert scene.n_rx == 49


def test_receivers_avoid_blind_sector():
    scene = build_fresnel_like_scene(6, 30, 5, 3.0, 0.5, 16, [0.3e9])
    for p in range(scene.n_tx):
        tx = scene.tx_positions[p]
        tx_ang = math.degrees(math.atan2(tx[1], tx[0]))
        for q in range(scene.n_rx):
            rx = scene.rx_positions[p, q]
            rx_ang = math.degrees(math.atan2(rx[1], rx[0]))
            sep = abs((rx_ang - tx_ang + 180.0) % 360.0 - 180.0)
            assert sep >= 30.0 - 1e-9


def test_antenna_inside_doi_rejected():
    with pytest.raises(ValueError):
        build_fresnel_like_scene(4, 0, 90, 0.5, 0.5, 8, [0.3e9])


def test_scene_validation():
    with pytest.raises(ValueError):
        build_fresnel_like_scene(4, 0, 90, 3.0, 0.5, 8, [0.4e9, 0.3e9])
    with pytest.raises(ValueError):
        build_fresnel_like_scene(4, 0, 90, 3.0, 0.5, 8, [-0.3e9])
    with pytest.raises(ValueError):
        build_fresnel_like_scene(0, 0, 90, 3.0, 0.5, 8, [0.3e9])


def test_cell_size_uniform():
    scene = build_fresnel_like_scene(2, 0, 90, 3.0, 0.5, 10, [0.3e9])
    assert scene.cell_size() == pytest.approx(0.1)
    centers = scene.pixel_centers()
    assert centers.shape == (100, 2)
    # Row-major: x varies fastest.
    assert centers[1, 0] - centers[0, 0] == pytest.approx(0.1)
    assert centers[1, 1] == pytest.approx(centers[0, 1])


def test_rasterize_austria():
    scene = build_fresnel_like_scene(12, 30, 3, 3.0, 0.5, 64, [0.3e9])
    eps, sig = rasterize_phantom(austria_phantom(eps_r=6.0), scene)
    centers = scene.pixel_centers().reshape(64, 64, 2)
    dist = np.hypot(centers[..., 0] - 0.3, centers[..., 1] - 0.15)
    iy, ix = np.unravel_index(np.argmin(dist), dist.shape)
    assert eps[iy, ix] == 6.0
    dist0 = np.hypot(centers[..., 0] - 0.0, centers[..., 1] - 0.45)
    iy, ix = np.unravel_index(np.argmin(dist0), dist0.shape)
    assert eps[iy, ix] == 1.0
    assert np.all(sig == 0.0)


def test_rasterize_empty_phantom(tiny_scene):
    eps, sig = rasterize_phantom(Phantom(), tiny_scene)
    assert np.all(eps == 1.0)
    assert np.all(sig == 0.0)


def test_rasterize_full_coverage(tiny_scene):
    ph = Phantom(shapes=(Shape("disk", (0.0, 0.0), 3.5, radius=5.0),))
    eps, _ = rasterize_phantom(ph, tiny_scene)
    assert np.all(eps == 3.5)


def test_rasterize_later_shape_overwrites(tiny_scene):
    ph = Phantom(shapes=(Shape("disk", (0.0, 0.0), 2.0, radius=0.3),
                         Shape("disk", (0.0, 0.0), 4.0, radius=0.1)))
    eps, _ = rasterize_phantom(ph, tiny_scene)
    assert eps.max() == 4.0
    assert 2.0 in eps


def test_rasterize_resolution_consistency():
    """Coarse and fine rasterizations agree wherever the fine children of a
    coarse pixel all share one value."""
    scene = build_fresnel_like_scene(2, 0, 90, 3.0, 0.5, 16, [0.3e9])
    ph = Phantom(shapes=(Shape("disk", (0.1, 0.0), 3.0, radius=0.22),))
    coarse, _ = rasterize_phantom(ph, scene)
    fine, _ = rasterize_phantom(ph, scene, n_grid_override=32)
    children = fine.reshape(16, 2, 16, 2).transpose(0, 2, 1, 3)
    uniform = children.min(axis=(2, 3)) == children.max(axis=(2, 3))
    assert np.any(uniform)
    assert np.array_equal(coarse[uniform], children[..., 0, 0][uniform])


def test_shape_validation():
    with pytest.raises(ValueError):
        Shape("triangle", (0, 0), 2.0, radius=0.1)
    with pytest.raises(ValueError):
        Shape("disk", (0, 0), 0.5, radius=0.1)
    with pytest.raises(ValueError):
        Shape("annulus", (0, 0), 2.0, r_inner=0.3, r_outer=0.2)
    with pytest.raises(ValueError):
        Shape("disk", (0, 0), 2.0, sigma=-0.1, radius=0.1)


def test_contrast_lossless():
    chi = contrast_of(np.full((4, 4), 6.0), np.zeros((4, 4)), 0.3e9)
    assert np.allclose(chi, 5.0 + 0.0j)


def test_contrast_lossy_oracle():
    # Independent scalar oracle for the imaginary part.
    chi = contrast_of(np.array([[9.0]]), np.array([[0.03]]), 0.3e9)
    imag_oracle = 0.03 / (2.0 * math.pi * 0.3e9 * EPS0)
    assert chi[0, 0].real == pytest.approx(8.0)
    assert -chi[0, 0].imag == pytest.approx(imag_oracle, rel=1e-12)
    assert -chi[0, 0].imag == pytest.approx(1.7975, abs=2e-4)


def test_contrast_background_zero():
    chi = contrast_of(np.ones((3, 3)), np.zeros((3, 3)), 1e9)
    assert np.all(chi == 0.0)


@given(st.floats(min_value=1e8, max_value=1e10),
       st.floats(min_value=2.0, max_value=10.0))
def test_contrast_frequency_scaling(f, mult):
    """Real part frequency-independent; imaginary part scales as 1/f."""
    eps = np.array([[4.0]])
    sig = np.array([[0.2]])
    a = contrast_of(eps, sig, f)[0, 0]
    b = contrast_of(eps, sig, mult * f)[0, 0]
    assert a.real == b.real
    assert a.imag == pytest.approx(mult * b.imag, rel=1e-9)


def test_contrast_validation():
    with pytest.raises(ValueError):
        contrast_of(np.full((2, 2), 0.5), np.zeros((2, 2)), 1e9)
    with pytest.raises(ValueError):
        contrast_of(np.ones((2, 2)), np.full((2, 2), -1.0), 1e9)
    with pytest.raises(ValueError):
        contrast_of(np.ones((2, 2)), np.zeros((2, 2)), 0.0)
