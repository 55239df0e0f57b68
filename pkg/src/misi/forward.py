"""Synthetic data generation: state-equation solver, Mie oracle, noise model."""

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, bicgstab
from scipy.special import h2vp, hankel2, jv, jvp

from .constants import EPS0, wavenumber
from .operators import (apply_domain, build_domain_operator, incident_field,
                        surface_matrix)
from .scene import contrast_of, rasterize_phantom


class SolverError(RuntimeError):
    """Iterative solve did not reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class MeasurementSet:
    """Scattered receiver data plus incident fields at inversion resolution.

    data: (n_freq, n_tx, n_rx) complex; e_inc: (n_freq, n_tx, n_grid^2)
    complex on the inversion grid; snr_applied is None for clean data.
    """

    scene: object
    data: np.ndarray
    e_inc: np.ndarray
    snr_applied: float = None

    def __post_init__(self):
        s = self.scene
        if self.data.shape != (s.n_freq, s.n_tx, s.n_rx):
            raise ValueError("data shape inconsistent with scene")
        if self.e_inc.shape != (s.n_freq, s.n_tx, s.n_grid ** 2):
            raise ValueError("incident-field shape inconsistent with scene")


def solve_total_field(op_d, chi, e_inc, tol=1e-6, max_iter=1000):
    """Solve (I - G_D diag(chi)) E = E_inc per transmitter with BiCGSTAB."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    chi = np.asarray(chi, dtype=complex).ravel()
    e_inc = np.atleast_2d(np.asarray(e_inc, dtype=complex))
    n = chi.size

    def matvec(x):
        return x - apply_domain(op_d, chi * x)

    lin_op = LinearOperator((n, n), matvec=matvec, dtype=complex)
    e_tot = np.empty_like(e_inc)
    for p in range(e_inc.shape[0]):
        rhs = e_inc[p]
        sol, info = bicgstab(lin_op, rhs, x0=rhs.copy(), rtol=tol, atol=0.0,
                             maxiter=max_iter)
        res = np.linalg.norm(matvec(sol) - rhs) / np.linalg.norm(rhs)
        if info != 0 or res > tol:
            raise SolverError(
                f"total-field solve for tx {p} stalled at residual {res:.3e}",
                residual=res)
        e_tot[p] = sol
    return e_tot


def synthesize_measurements(scene, phantom, forward_n_grid, tol=1e-6,
                            max_iter=2000, pad_factor=2,
                            allow_inverse_crime=False):
    """Generate a MeasurementSet for a phantom on a finer forward grid.

    The forward grid must be strictly finer than the inversion grid unless
    allow_inverse_crime is set; the incident fields stored for inversion are
    evaluated on the scene's own grid.
    """
    if forward_n_grid <= scene.n_grid and not allow_inverse_crime:
        raise ValueError("forward_n_grid must exceed scene.n_grid "
                         "(pass allow_inverse_crime=True to override)")
    eps_map, sigma_map = rasterize_phantom(phantom, scene, forward_n_grid)
    centers = scene.pixel_centers(forward_n_grid)
    delta = scene.cell_size(forward_n_grid)

    data = np.empty((scene.n_freq, scene.n_tx, scene.n_rx), dtype=complex)
    e_inc_coarse = np.empty((scene.n_freq, scene.n_tx, scene.n_grid ** 2),
                            dtype=complex)
    for i, f in enumerate(scene.frequencies):
        chi = contrast_of(eps_map, sigma_map, f).ravel()
        if np.any(chi != 0):
            op = build_domain_operator(scene, f, pad_factor=pad_factor,
                                       n_grid=forward_n_grid)
            e_inc = incident_field(scene, f, n_grid=forward_n_grid)
            e_tot = solve_total_field(op, chi, e_inc, tol=tol,
                                      max_iter=max_iter)
            sources = chi[None, :] * e_tot
            for p in range(scene.n_tx):
                rows = surface_matrix(scene.rx_positions[p], centers, delta, f)
                data[i, p] = rows @ sources[p]
        else:
            data[i] = 0.0
        e_inc_coarse[i] = incident_field(scene, f)
    return MeasurementSet(scene=scene, data=data, e_inc=e_inc_coarse)


def _mie_coefficients(order, k0, k1, radius):
    """Exterior/interior series coefficients (a_n, c_n) for orders 0..order."""
    n = np.arange(order + 1)
    x0 = k0 * radius
    x1 = k1 * radius
    j0 = jv(n, x0)
    dj0 = jvp(n, x0)
    j1_ = jv(n, x1)
    dj1 = jvp(n, x1)
    h0 = hankel2(n, x0)
    dh0 = h2vp(n, x0)
    denom = k0 * j1_ * dh0 - k1 * dj1 * h0
    a = (k1 * j0 * dj1 - k0 * j1_ * dj0) / denom
    c = -2j / (math.pi * radius * denom)
    return a, c


def mie_cylinder(eps_r, radius, f, points, tx, sigma=0.0, tail_tol=1e-12,
                 max_order=400):
    """Analytic line-source scattering by a homogeneous circular cylinder.

    Returns the complex field at each point: scattered field outside the
    cylinder, total field inside. The cylinder is centered at the origin; the
    line source sits at tx (outside). The series is truncated at
    ceil(k0 radius) + 10 and extended until the tail term drops below
    tail_tol relative to the running sum.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tx = np.asarray(tx, dtype=float)
    k0 = wavenumber(f)
    omega = 2.0 * math.pi * f
    eps_c = eps_r - 1j * sigma / (omega * EPS0)
    k1 = k0 * cmath.sqrt(eps_c)
    rho_s = math.hypot(tx[0], tx[1])
    if rho_s <= radius:
        raise ValueError("line source must lie outside the cylinder")
    phi_s = math.atan2(tx[1], tx[0])
    rho = np.hypot(points[:, 0], points[:, 1])
    dphi = np.arctan2(points[:, 1], points[:, 0]) - phi_s
    inside = rho < radius

    if eps_c == 1.0:
        return np.zeros(points.shape[0], dtype=complex)

    order = int(math.ceil(abs(k0) * radius)) + 10
    field = np.zeros(points.shape[0], dtype=complex)
    while True:
        a, c = _mie_coefficients(order, k0, k1, radius)
        field[:] = 0.0
        tail = 0.0
        for n in range(order + 1):
            weight = (1.0 if n == 0 else 2.0) * hankel2(n, k0 * rho_s) \
                * np.cos(n * dphi)
            term = np.where(inside,
                            c[n] * jv(n, k1 * rho),
                            a[n] * hankel2(n, k0 * rho)) * weight
            field += term
            tail = np.max(np.abs(term))
        scale = np.max(np.abs(field))
        if scale > 0 and tail <= tail_tol * scale:
            break
        if order >= max_order:
            raise SolverError("cylindrical-harmonic series did not converge")
        order += 10
    return (-0.25j) * field


def add_noise(mset, snr, seed):
    """Inject complex Gaussian noise at a fixed per-(tx, freq) SNR in dB.

    Each receiver vector y of length N receives
    sqrt(||y||^2 / (N 10^(snr/10))) * (n_re + j n_im) / sqrt(2) with standard
    normal components; zero-norm vectors are left unchanged. Deterministic
    per seed, noise drawn independently per (tx, freq) in index order.
    """
    if not math.isfinite(snr):
        raise ValueError("snr must be finite")
    rng = np.random.default_rng(seed)
    noisy = mset.data.copy()
    n = mset.scene.n_rx
    for i in range(mset.scene.n_freq):
        for p in range(mset.scene.n_tx):
            y = mset.data[i, p]
            n_re = rng.standard_normal(n)
            n_im = rng.standard_normal(n)
            power = np.linalg.norm(y) ** 2
            scale = math.sqrt(power / (n * 10.0 ** (snr / 10.0)))
            noisy[i, p] = y + scale * (n_re + 1j * n_im) / math.sqrt(2.0)
    return MeasurementSet(scene=mset.scene, data=noisy, e_inc=mset.e_inc,
                          snr_applied=float(snr))
