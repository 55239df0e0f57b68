"""Residual losses, staged annealing weight, and analytical complex gradients.

Contrast sources are carried as a dict mapping frequency index ->
(n_tx, n_pixels) complex array. Gradients follow the directional-derivative
convention d/da L(J + a v)|_0 = Re<g, v> with <a, b> = sum conj(a) b.
"""

import math
from dataclasses import dataclass

import numpy as np

from .constants import EPS0
from .operators import (apply_domain, apply_domain_adjoint, apply_surface,
                        apply_surface_adjoint)


@dataclass(frozen=True)
class LossBreakdown:
    """Per-frequency loss components plus the beta-weighted total."""

    l_data: dict
    l_state: dict
    l_cross: dict
    beta: float
    total: float


def beta_schedule(s, k, k_total, decay_rate=10.0):
    """Cross-term annealing weight 0.5^(s-1) exp(-decay_rate k / K_s)."""
    if s < 1:
        raise ValueError("stage index must be >= 1")
    if not 0 <= k <= k_total:
        raise ValueError("epoch index must lie in [0, K_s]")
    return 0.5 ** (s - 1) * math.exp(-decay_rate * k / k_total)


def sources_inner(a, b):
    """Complex inner product over a pair of source dicts, summed over frequencies."""
    return sum(np.vdot(a[f], b[f]) for f in sorted(a))


def sources_norm2(a):
    return sum(float(np.vdot(a[f], a[f]).real) for f in sorted(a))


def _freq_terms(f, J_f, chi_f, mset, ops):
    """Shared intermediates for the three residuals at one frequency index."""
    y = mset.data[f]
    e_inc = mset.e_inc[f]
    ny2 = float(np.vdot(y, y).real)
    ne2 = float(np.vdot(e_inc, e_inc).real)
    if ny2 == 0.0 or ne2 == 0.0:
        raise ValueError(f"zero-norm normalization at frequency index {f}")
    e_tot = e_inc + apply_domain(ops.domain[f], J_f)
    d = apply_surface(ops.surface[f], J_f) - y
    r = chi_f[None, :] * e_tot - J_f
    rho = apply_surface(ops.surface[f], chi_f[None, :] * e_tot) - y
    return y, ny2, ne2, e_tot, d, r, rho


def eval_losses(J, chi, mset, beta, ops):
    """Evaluate data/state/cross residual losses for the active frequencies."""
    l_data, l_state, l_cross = {}, {}, {}
    total = 0.0
    for f in sorted(J):
        _, ny2, ne2, _, d, r, rho = _freq_terms(f, J[f], chi[f], mset, ops)
        l_data[f] = float(np.vdot(d, d).real) / ny2
        l_state[f] = float(np.vdot(r, r).real) / ne2
        l_cross[f] = float(np.vdot(rho, rho).real) / ny2
        total += l_data[f] + l_state[f] + beta * l_cross[f]
    return LossBreakdown(l_data=l_data, l_state=l_state, l_cross=l_cross,
                         beta=beta, total=total)


def grad_J(J, chi, mset, beta, ops):
    """Closed-form complex gradient of the total loss w.r.t. the sources."""
    grads = {}
    for f in sorted(J):
        _, ny2, ne2, _, d, r, rho = _freq_terms(f, J[f], chi[f], mset, ops)
        chi_c = np.conj(chi[f])[None, :]
        g = (2.0 / ny2) * apply_surface_adjoint(ops.surface[f], d)
        g += (2.0 / ne2) * (apply_domain_adjoint(ops.domain[f], chi_c * r) - r)
        if beta != 0.0:
            s_adj = apply_surface_adjoint(ops.surface[f], rho)
            g += beta * (2.0 / ny2) * apply_domain_adjoint(
                ops.domain[f], chi_c * s_adj)
        grads[f] = g
    return grads


def clip_gradient_magnitude(g, threshold):
    """Elementwise magnitude clip preserving phase; accepts array or dict."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if isinstance(g, dict):
        return {f: clip_gradient_magnitude(g[f], threshold) for f in g}
    mag = np.abs(g)
    scale = np.where(mag > threshold, threshold / np.maximum(mag, 1e-300), 1.0)
    return g * scale


def grad_chi(J, chi, mset, beta, ops, e_tot):
    """Gradient w.r.t. the contrast maps with the sources (and e_tot) frozen.

    Returns (per-frequency complex gradient dict, dL/d_delta_eps, dL/d_sigma)
    with the real gradients chained through chi = delta_eps - j sigma/(w eps0).
    The data term does not depend on chi and contributes nothing.
    """
    g_chi = {}
    n_pix = next(iter(e_tot.values())).shape[1]
    d_deps = np.zeros(n_pix)
    d_sigma = np.zeros(n_pix)
    for f in sorted(J):
        y = mset.data[f]
        e_inc = mset.e_inc[f]
        ny2 = float(np.vdot(y, y).real)
        ne2 = float(np.vdot(e_inc, e_inc).real)
        if ny2 == 0.0 or ne2 == 0.0:
            raise ValueError(f"zero-norm normalization at frequency index {f}")
        et = e_tot[f]
        r = chi[f][None, :] * et - J[f]
        g = (2.0 / ne2) * np.sum(np.conj(et) * r, axis=0)
        if beta != 0.0:
            rho = apply_surface(ops.surface[f], chi[f][None, :] * et) - y
            s_adj = apply_surface_adjoint(ops.surface[f], rho)
            g += beta * (2.0 / ny2) * np.sum(np.conj(et) * s_adj, axis=0)
        g_chi[f] = g
        omega = 2.0 * math.pi * mset.scene.frequencies[f]
        d_deps += g.real
        d_sigma += -g.imag / (omega * EPS0)
    return g_chi, d_deps, d_sigma
