"""Loss terms, annealing schedule, and analytical gradient tests."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_chi, random_sources
from misi.forward import MeasurementSet, solve_total_field, \
    synthesize_measurements
from misi.losses import (beta_schedule, clip_gradient_magnitude, eval_losses,
                         grad_J, grad_chi)
from misi.operators import apply_domain, apply_surface, build_operator_set, \
    incident_field
from misi.scene import Phantom, Shape, build_fresnel_like_scene, contrast_of, \
    rasterize_phantom


def test_beta_schedule_values():
    assert beta_schedule(1, 1e-12, 1.0) == pytest.approx(1.0)
    assert beta_schedule(2, 1e-12, 1.0) == pytest.approx(0.5)
    assert beta_schedule(1, 1000, 1000) == pytest.approx(math.exp(-10.0))
    assert beta_schedule(3, 500, 1000) == pytest.approx(0.25 * math.exp(-5.0))


def test_beta_schedule_validation():
    with pytest.raises(ValueError):
        beta_schedule(0, 1, 10)
    with pytest.raises(ValueError):
        beta_schedule(1, 11, 10)


@given(st.integers(min_value=1, max_value=5),
       st.integers(min_value=1, max_value=999))
def test_beta_schedule_monotone(s, k):
    """Decays within a stage and halves across stages."""
    assert beta_schedule(s, k + 1, 1000) < beta_schedule(s, k, 1000)
    assert beta_schedule(s + 1, k, 1000) == \
        pytest.approx(0.5 * beta_schedule(s, k, 1000))


def test_losses_at_zero(tiny_mset, tiny_ops, tiny_scene):
    n = tiny_scene.n_grid ** 2
    J = {0: np.zeros((tiny_scene.n_tx, n), dtype=complex)}
    chi = {0: np.zeros(n, dtype=complex)}
    bd = eval_losses(J, chi, tiny_mset, 0.7, tiny_ops)
    assert bd.l_data[0] == pytest.approx(1.0)
    assert bd.l_state[0] == pytest.approx(0.0, abs=1e-15)
    assert bd.l_cross[0] == pytest.approx(1.0)
    assert bd.total == pytest.approx(1.0 + 0.7 * 1.0)


def test_losses_forward_consistency():
    """Sources from a matched-grid forward solve drive all residuals to ~0."""
    scene = build_fresnel_like_scene(2, 0, 120, 3.0, 0.5, 16, [0.3e9])
    ph = Phantom(shapes=(Shape("disk", (0.0, 0.1), 2.0, radius=0.2),))
    mset = synthesize_measurements(scene, ph, 16, tol=1e-10,
                                   allow_inverse_crime=True)
    ops = build_operator_set(scene, pad_factor=2)
    eps, sig = rasterize_phantom(ph, scene)
    chi_g = contrast_of(eps, sig, 0.3e9).ravel()
    e_tot = solve_total_field(ops.domain[0], chi_g, mset.e_inc[0], tol=1e-10)
    J = {0: chi_g[None, :] * e_tot}
    bd = eval_losses(J, {0: chi_g}, mset, 1.0, ops)
    assert bd.l_data[0] <= 1e-8
    assert bd.l_state[0] <= 1e-8
    assert bd.l_cross[0] <= 1e-8


def test_losses_scale_invariance(tiny_mset, tiny_scene, tiny_ops):
    J = random_sources(tiny_scene, seed=3)
    chi = random_chi(tiny_scene, seed=4)
    bd = eval_losses(J, chi, tiny_mset, 0.0, tiny_ops)
    c = 2.5
    scaled = MeasurementSet(scene=tiny_scene, data=c * tiny_mset.data,
                            e_inc=tiny_mset.e_inc)
    Jc = {f: c * J[f] for f in J}
    bd_c = eval_losses(Jc, chi, scaled, 0.0, tiny_ops)
    assert bd_c.l_data[0] == pytest.approx(bd.l_data[0], rel=1e-12)


def test_losses_zero_norm_rejected(tiny_scene, tiny_ops, tiny_mset):
    n = tiny_scene.n_grid ** 2
    zero = MeasurementSet(scene=tiny_scene,
                          data=np.zeros_like(tiny_mset.data),
                          e_inc=tiny_mset.e_inc)
    J = random_sources(tiny_scene)
    chi = random_chi(tiny_scene)
    with pytest.raises(ValueError):
        eval_losses(J, chi, zero, 0.0, tiny_ops)


def _fd_slope(Lfun, J, v, eps=1e-5):
    Jp = {f: J[f] + eps * v[f] for f in J}
    Jm = {f: J[f] - eps * v[f] for f in J}
    return (Lfun(Jp) - Lfun(Jm)) / (2.0 * eps)


def test_grad_J_finite_difference(tiny_mset, tiny_scene, tiny_ops):
    J = random_sources(tiny_scene, seed=5)
    chi = random_chi(tiny_scene, seed=6)
    beta = 0.8
    g = grad_J(J, chi, tiny_mset, beta, tiny_ops)
    rng = np.random.default_rng(7)
    v = {f: (rng.standard_normal(J[f].shape)
             + 1j * rng.standard_normal(J[f].shape)) for f in J}
    v = {f: v[f] / math.sqrt(sum(np.vdot(v[q], v[q]).real for q in v))
         for f in v}
    slope = _fd_slope(
        lambda Jx: eval_losses(Jx, chi, tiny_mset, beta, tiny_ops).total, J, v)
    analytic = sum(np.vdot(g[f], v[f]) for f in g).real
    assert abs(slope - analytic) / abs(slope) <= 1e-6


def test_grad_J_beta_zero_additivity(tiny_mset, tiny_scene, tiny_ops):
    """With beta = 0 the gradient ignores the cross term entirely."""
    J = random_sources(tiny_scene, seed=8)
    chi = random_chi(tiny_scene, seed=9)
    g0 = grad_J(J, chi, tiny_mset, 0.0, tiny_ops)
    g1 = grad_J(J, chi, tiny_mset, 0.5, tiny_ops)
    gc = {f: (g1[f] - g0[f]) / 0.5 for f in g0}
    g2 = grad_J(J, chi, tiny_mset, 1.0, tiny_ops)
    for f in g0:
        assert np.allclose(g2[f], g0[f] + gc[f], rtol=1e-10, atol=1e-12)


def test_grad_J_data_term_stationary(tiny_mset, tiny_scene, tiny_ops):
    """At the least-squares minimizer of the data term, the data-term part
    of the gradient vanishes (dense normal-equation oracle)."""
    mat = tiny_ops.surface[0].matrix
    n_pix = mat.shape[2]
    J = np.empty((tiny_scene.n_tx, n_pix), dtype=complex)
    for p in range(tiny_scene.n_tx):
        J[p], *_ = np.linalg.lstsq(mat[p], tiny_mset.data[0, p], rcond=None)
    Jd = {0: J}
    chi = {0: np.zeros(n_pix, dtype=complex)}
    g = grad_J(Jd, chi, tiny_mset, 0.0, tiny_ops)
    # Subtract the known state-term gradient at chi = 0 (r = -J, A^H r = J).
    ne2 = float(np.vdot(tiny_mset.e_inc[0], tiny_mset.e_inc[0]).real)
    g_data = g[0] - (2.0 / ne2) * J
    scale = np.linalg.norm(grad_J({0: np.zeros_like(J)}, chi, tiny_mset, 0.0,
                                  tiny_ops)[0])
    assert np.linalg.norm(g_data) / scale <= 1e-8


def test_loss_quadratic_along_direction(tiny_mset, tiny_scene, tiny_ops):
    """Total loss restricted to a line is an exact quadratic in alpha."""
    J = random_sources(tiny_scene, seed=12)
    chi = random_chi(tiny_scene, seed=13)
    rng = np.random.default_rng(14)
    v = {f: (rng.standard_normal(J[f].shape)
             + 1j * rng.standard_normal(J[f].shape)) for f in J}
    beta = 0.3
    alphas = np.linspace(-0.5, 0.5, 5)
    vals = [eval_losses({f: J[f] + a * v[f] for f in J}, chi, tiny_mset,
                        beta, tiny_ops).total for a in alphas]
    coeffs = np.polyfit(alphas, vals, 2)
    fit = np.polyval(coeffs, alphas)
    assert np.max(np.abs(fit - vals)) / np.max(np.abs(vals)) <= 1e-9


def test_clip_magnitude():
    g = np.array([200.0, 3.0 + 4.0j, 0.0, -150.0j])
    out = clip_gradient_magnitude(g, 100.0)
    assert out[0] == pytest.approx(100.0)
    assert out[1] == 3.0 + 4.0j
    assert out[2] == 0.0
    assert out[3] == pytest.approx(-100.0j)
    # Phase preserved on the clipped entries.
    assert np.angle(out[3]) == pytest.approx(np.angle(g[3]))


def test_clip_identity_below_threshold():
    rng = np.random.default_rng(0)
    g = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    out = clip_gradient_magnitude(g, 1e6)
    assert np.array_equal(out, g)


def test_clip_dict_form():
    g = {0: np.array([300.0]), 1: np.array([1.0j])}
    out = clip_gradient_magnitude(g, 100.0)
    assert out[0][0] == pytest.approx(100.0)
    assert out[1][0] == 1.0j


def test_clip_validation():
    with pytest.raises(ValueError):
        clip_gradient_magnitude(np.ones(3), 0.0)


def _e_tot(J, mset, ops):
    return {f: mset.e_inc[f] + apply_domain(ops.domain[f], J[f]) for f in J}


def test_grad_chi_finite_difference(tiny_mset, tiny_scene, tiny_ops):
    """Central differences on the real parameter maps."""
    J = random_sources(tiny_scene, seed=15)
    rng = np.random.default_rng(16)
    n = tiny_scene.n_grid ** 2
    deps = rng.uniform(0.1, 2.0, n)
    sig = rng.uniform(0.0, 0.5, n)
    beta = 0.6
    e_tot = _e_tot(J, tiny_mset, tiny_ops)
    omega = 2.0 * math.pi * tiny_scene.frequencies[0]
    from misi.constants import EPS0

    def loss(d, s):
        chi = {0: d - 1j * s / (omega * EPS0)}
        return eval_losses(J, chi, tiny_mset, beta, tiny_ops).total

    chi0 = {0: deps - 1j * sig / (omega * EPS0)}
    _, d_deps, d_sigma = grad_chi(J, chi0, tiny_mset, beta, tiny_ops, e_tot)
    eps_fd = 1e-5
    for idx in (0, 17, n - 1):
        e1 = deps.copy(); e1[idx] += eps_fd
        e2 = deps.copy(); e2[idx] -= eps_fd
        fd = (loss(e1, sig) - loss(e2, sig)) / (2 * eps_fd)
        assert abs(fd - d_deps[idx]) / max(abs(fd), 1e-12) <= 1e-5
        s_step = eps_fd * omega * EPS0  # keep the chi perturbation O(eps)
        s1 = sig.copy(); s1[idx] += s_step
        s2 = sig.copy(); s2[idx] -= s_step
        fd_s = (loss(deps, s1) - loss(deps, s2)) / (2 * s_step)
        assert abs(fd_s - d_sigma[idx]) / max(abs(fd_s), 1e-12) <= 1e-5


def test_grad_chi_sigma_vanishes_for_real_gradient(tiny_mset, tiny_scene,
                                                   tiny_ops):
    """sigma gradient is the (scaled) negative imaginary part of g_chi."""
    J = random_sources(tiny_scene, seed=17)
    chi = random_chi(tiny_scene, seed=18)
    e_tot = _e_tot(J, tiny_mset, tiny_ops)
    g_chi, _, d_sigma = grad_chi(J, chi, tiny_mset, 0.0, tiny_ops, e_tot)
    omega = 2.0 * math.pi * tiny_scene.frequencies[0]
    from misi.constants import EPS0
    assert np.allclose(d_sigma, -g_chi[0].imag / (omega * EPS0))
    real_only = np.abs(g_chi[0].imag) < 1e-30
    assert np.all(d_sigma[real_only] == 0.0)


def test_grad_chi_zero_residual(tiny_scene, tiny_ops):
    """A frequency with r = 0 and rho = 0 contributes nothing."""
    scene = build_fresnel_like_scene(2, 0, 120, 3.0, 0.5, 16, [0.3e9])
    ph = Phantom(shapes=(Shape("disk", (0.0, 0.1), 2.0, radius=0.2),))
    mset = synthesize_measurements(scene, ph, 16, tol=1e-12,
                                   allow_inverse_crime=True)
    ops = build_operator_set(scene, pad_factor=2)
    eps, sig = rasterize_phantom(ph, scene)
    chi_g = contrast_of(eps, sig, 0.3e9).ravel()
    e_tot = solve_total_field(ops.domain[0], chi_g, mset.e_inc[0], tol=1e-12)
    J = {0: chi_g[None, :] * e_tot}
    _, d_deps, d_sigma = grad_chi(J, {0: chi_g}, mset, 1.0, ops,
                                  {0: e_tot})
    base = np.linalg.norm(np.abs(e_tot) ** 2)
    assert np.linalg.norm(d_deps) / base <= 1e-8
