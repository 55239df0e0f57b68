"""Discretized Green's operators for the 2D TM scattering problem.

Domain operator (DOI -> DOI) uses Richmond's equal-area-circle cell
integration with a circulant embedding so that application is a zero-padded
FFT convolution. Surface operator (DOI -> receivers) is stored dense per
transmitter. Time convention exp(+j w t), hence second-kind Hankel functions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import hankel2, j1

from .constants import wavenumber


def _kernel_offdiag(kb, cell_radius, rho):
    """Richmond cell-averaged Green's entry for source-observer distance rho > 0."""
    return (-0.5j) * math.pi * kb * cell_radius * j1(kb * cell_radius) \
        * hankel2(0, kb * rho)


def _kernel_self(kb, cell_radius):
    """Self term of the Richmond discretization (observer inside its own cell)."""
    return (-0.5j) * (math.pi * kb * cell_radius * hankel2(1, kb * cell_radius)
                      - 2.0j)


@dataclass(frozen=True)
class DomainOperator:
    """FFT-ready DOI -> DOI Green's operator at one frequency."""

    freq: float
    n_grid: int
    pad_factor: int
    cell_area: float
    kernel_fft: np.ndarray  # (P, P) spectrum of the circulant-embedded kernel

    @property
    def n_pixels(self):
        return self.n_grid * self.n_grid


@dataclass(frozen=True)
class SurfaceOperator:
    """Dense DOI -> receiver operator, one (n_rx, n_pixels) matrix per Tx."""

    freq: float
    matrix: np.ndarray  # (n_tx, n_rx, n_pixels)

    @property
    def n_pixels(self):
        return self.matrix.shape[2]


def build_domain_operator(scene, f, pad_factor=4, n_grid=None):
    """Precompute the padded kernel spectrum for the domain Green's operator."""
    if pad_factor not in (2, 4):
        raise ValueError("pad_factor must be 2 or 4")
    kb = wavenumber(f)
    n = n_grid or scene.n_grid
    delta = scene.cell_size(n)
    a = delta / math.sqrt(math.pi)
    pad = pad_factor * n

    # Circulant embedding: index i on the padded axis encodes pixel offset
    # i (i <= pad/2) or i - pad; offsets beyond +-(n-1) never occur and stay 0.
    idx = np.arange(pad)
    off = np.where(idx <= pad // 2, idx, idx - pad)
    valid = np.abs(off) <= n - 1
    oy, ox = np.meshgrid(off, off, indexing="ij")
    vy, vx = np.meshgrid(valid, valid, indexing="ij")
    mask = vy & vx
    kernel = np.zeros((pad, pad), dtype=complex)
    rho = delta * np.hypot(oy[mask], ox[mask])
    vals = np.empty(rho.shape, dtype=complex)
    nonself = rho > 0
    vals[nonself] = _kernel_offdiag(kb, a, rho[nonself])
    vals[~nonself] = _kernel_self(kb, a)
    kernel[mask] = vals

    return DomainOperator(freq=f, n_grid=n, pad_factor=pad_factor,
                          cell_area=delta * delta,
                          kernel_fft=np.fft.fft2(kernel))


def apply_domain(op, sources):
    """Apply G_D to a (n_tx, n_pixels) batch of contrast sources."""
    sources = np.asarray(sources, dtype=complex)
    squeeze = sources.ndim == 1
    if squeeze:
        sources = sources[None, :]
    n = op.n_grid
    if sources.shape[1] != n * n:
        raise ValueError(f"expected {n * n} pixels, got {sources.shape[1]}")
    pad = op.pad_factor * n
    buf = np.zeros((sources.shape[0], pad, pad), dtype=complex)
    buf[:, :n, :n] = sources.reshape(-1, n, n)
    out = np.fft.ifft2(np.fft.fft2(buf) * op.kernel_fft)[:, :n, :n]
    out = out.reshape(-1, n * n)
    return out[0] if squeeze else out


def apply_domain_adjoint(op, fields):
    """Adjoint of apply_domain under <a, b> = sum conj(a) b.

    The kernel matrix is symmetric (entries depend on |r_m - r_n| only), so
    G^H x = conj(G conj(x)).
    """
    return np.conj(apply_domain(op, np.conj(np.asarray(fields, dtype=complex))))


def surface_matrix(rx_points, centers, delta, f):
    """Dense receiver matrix rows for one Tx: entry (q, n) couples pixel n to rx q."""
    kb = wavenumber(f)
    a = delta / math.sqrt(math.pi)
    d = np.hypot(rx_points[:, None, 0] - centers[None, :, 0],
                 rx_points[:, None, 1] - centers[None, :, 1])
    return _kernel_offdiag(kb, a, d)


def build_surface_operator(scene, f, n_grid=None):
    n = n_grid or scene.n_grid
    centers = scene.pixel_centers(n)
    delta = scene.cell_size(n)
    mats = np.stack([surface_matrix(scene.rx_positions[p], centers, delta, f)
                     for p in range(scene.n_tx)])
    return SurfaceOperator(freq=f, matrix=mats)


def apply_surface(op, sources):
    """Map (n_tx, n_pixels) contrast sources to (n_tx, n_rx) receiver readings."""
    sources = np.asarray(sources, dtype=complex)
    if sources.shape != (op.matrix.shape[0], op.matrix.shape[2]):
        raise ValueError("source batch shape does not match surface operator")
    return np.einsum("tqn,tn->tq", op.matrix, sources)


def apply_surface_adjoint(op, readings):
    """Adjoint map (n_tx, n_rx) -> (n_tx, n_pixels): conjugate-transpose matvec."""
    readings = np.asarray(readings, dtype=complex)
    if readings.shape != op.matrix.shape[:2]:
        raise ValueError("reading batch shape does not match surface operator")
    return np.einsum("tqn,tq->tn", np.conj(op.matrix), readings)


def dense_domain_matrix(scene, f, n_grid=None):
    """Full (n_pixels, n_pixels) kernel matrix; oracle for the FFT path."""
    n = n_grid or scene.n_grid
    centers = scene.pixel_centers(n)
    delta = scene.cell_size(n)
    kb = wavenumber(f)
    a = delta / math.sqrt(math.pi)
    d = np.hypot(centers[:, None, 0] - centers[None, :, 0],
                 centers[:, None, 1] - centers[None, :, 1])
    mat = np.empty(d.shape, dtype=complex)
    off = d > 0
    mat[off] = _kernel_offdiag(kb, a, d[off])
    mat[~off] = _kernel_self(kb, a)
    return mat


def incident_field(scene, f, n_grid=None):
    """Unit line-source incident field batch, shape (n_tx, n_pixels)."""
    kb = wavenumber(f)
    centers = scene.pixel_centers(n_grid)
    d = np.hypot(scene.tx_positions[:, None, 0] - centers[None, :, 0],
                 scene.tx_positions[:, None, 1] - centers[None, :, 1])
    return (-0.25j) * hankel2(0, kb * d)


@dataclass(frozen=True)
class OperatorSet:
    """Domain and surface operators for every scene frequency, index-aligned."""

    domain: tuple
    surface: tuple


def build_operator_set(scene, pad_factor=4):
    return OperatorSet(
        domain=tuple(build_domain_operator(scene, f, pad_factor=pad_factor)
                     for f in scene.frequencies),
        surface=tuple(build_surface_operator(scene, f)
                      for f in scene.frequencies))
