"""Experiment geometry: domain of interest, antenna rings, phantoms.

Everything here is immutable after construction; a Scene fully describes the
measurement setup (DOI, grids, Tx/Rx layout, frequency list) and a Phantom
describes the ground-truth material distribution used for data synthesis.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import EPS0


@dataclass(frozen=True)
class Scene:
    """Immutable description of one measurement experiment.

    The DOI is the square [doi_min, doi_max]^2 discretized into n_grid x n_grid
    pixels. tx_positions is (n_tx, 2) in meters; rx_positions is
    (n_tx, n_rx, 2), one receiver ring per transmitter. Frequencies are in Hz,
    strictly increasing.
    """

    doi_min: float
    doi_max: float
    n_grid: int
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    frequencies: tuple
    obs_radius: float

    def __post_init__(self):
        if self.n_grid < 2:
            raise ValueError("n_grid must be >= 2")
        if not self.doi_max > self.doi_min:
            raise ValueError("doi_max must exceed doi_min")
        freqs = tuple(float(f) for f in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        if any(f <= 0 for f in freqs):
            raise ValueError("all frequencies must be positive")
        if any(b >= a for a, b in zip(freqs[1:], freqs)):
            raise ValueError("frequencies must be strictly increasing")
        tx = np.asarray(self.tx_positions, dtype=float)
        rx = np.asarray(self.rx_positions, dtype=float)
        if tx.ndim != 2 or tx.shape[1] != 2:
            raise ValueError("tx_positions must have shape (n_tx, 2)")
        if rx.ndim != 3 or rx.shape[0] != tx.shape[0] or rx.shape[2] != 2:
            raise ValueError("rx_positions must have shape (n_tx, n_rx, 2)")
        tx.setflags(write=False)
        rx.setflags(write=False)
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)
        half = (self.doi_max - self.doi_min) / 2.0
        center = (self.doi_max + self.doi_min) / 2.0
        for pts in (tx, rx.reshape(-1, 2)):
            inside = np.max(np.abs(pts - center), axis=1) <= half
            if np.any(inside):
                raise ValueError("all antennas must lie strictly outside the DOI")

    @property
    def n_tx(self):
        return self.tx_positions.shape[0]

    @property
    def n_rx(self):
        return self.rx_positions.shape[1]

    @property
    def n_freq(self):
        return len(self.frequencies)

    def cell_size(self, n_grid=None):
        n = n_grid or self.n_grid
        return (self.doi_max - self.doi_min) / n

    def pixel_centers(self, n_grid=None):
        """Pixel-center coordinates, shape (n^2, 2), row-major (y outer, x inner)."""
        n = n_grid or self.n_grid
        delta = self.cell_size(n)
        axis = self.doi_min + (np.arange(n) + 0.5) * delta
        xg, yg = np.meshgrid(axis, axis, indexing="xy")
        return np.column_stack([xg.ravel(), yg.ravel()])

    def normalized_coords(self, n_grid=None):
        """Pixel centers mapped onto [-1, 1]^2 for the neural representation."""
        half = (self.doi_max - self.doi_min) / 2.0
        center = (self.doi_max + self.doi_min) / 2.0
        return (self.pixel_centers(n_grid) - center) / half


@dataclass(frozen=True)
class Shape:
    kind: str  # "disk" or "annulus"
    center: tuple
    eps_r: float
    sigma: float = 0.0
    radius: float = 0.0          # disk
    r_inner: float = 0.0         # annulus
    r_outer: float = 0.0         # annulus

    def __post_init__(self):
        if self.kind not in ("disk", "annulus"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.eps_r < 1.0:
            raise ValueError("eps_r must be >= 1")
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.kind == "disk" and self.radius <= 0.0:
            raise ValueError("disk radius must be positive")
        if self.kind == "annulus" and not 0.0 <= self.r_inner < self.r_outer:
            raise ValueError("annulus requires 0 <= r_inner < r_outer")

    def contains(self, points):
        d = np.hypot(points[:, 0] - self.center[0], points[:, 1] - self.center[1])
        if self.kind == "disk":
            return d <= self.radius
        return (d >= self.r_inner) & (d <= self.r_outer)


@dataclass(frozen=True)
class Phantom:
    """Piecewise-constant target: shapes over an eps_r=1, sigma=0 background."""

    shapes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))


def austria_phantom(eps_r=6.0, sigma=0.0, ring_eps_r=None, ring_sigma=None):
    """Two disks (r=0.1 m at (0.3, +-0.15)) plus a ring (0.15/0.3 m at (-0.1, 0)).

    Disk and ring material can be set independently for lossy variants.
    """
    if ring_eps_r is None:
        ring_eps_r = eps_r
    if ring_sigma is None:
        ring_sigma = sigma
    return Phantom(shapes=(
        Shape("disk", (0.3, 0.15), eps_r, sigma, radius=0.1),
        Shape("disk", (0.3, -0.15), eps_r, sigma, radius=0.1),
        Shape("annulus", (-0.1, 0.0), ring_eps_r, ring_sigma,
              r_inner=0.15, r_outer=0.3),
    ))


def build_fresnel_like_scene(n_tx, blind_deg, rx_step_deg, radius, doi_half,
                             n_grid, freqs):
    """Circular Tx ring with per-Tx receiver arcs excluding a blind sector.

    blind_deg is the exclusion half-width: no receiver within blind_deg
    degrees on either side of the active transmitter. Receivers are sampled
    every rx_step_deg from tx_angle + blind_deg to tx_angle + 360 -
    blind_deg, both endpoints included, giving
    floor((360 - 2 blind_deg) / rx_step_deg) + 1 receivers per Tx.
    """
    if n_tx < 1:
        raise ValueError("n_tx must be >= 1")
    if rx_step_deg <= 0:
        raise ValueError("rx_step_deg must be positive")
    if not 0 <= blind_deg < 180:
        raise ValueError("blind_deg must lie in [0, 180)")
    if radius <= doi_half * math.sqrt(2.0):
        raise ValueError("antenna radius must exceed doi_half * sqrt(2)")

    n_rx = int(math.floor((360.0 - 2.0 * blind_deg) / rx_step_deg)) + 1
    tx_deg = 360.0 * np.arange(n_tx) / n_tx
    tx_rad = np.deg2rad(tx_deg)
    tx_positions = radius * np.column_stack([np.cos(tx_rad), np.sin(tx_rad)])

    rel_deg = blind_deg + rx_step_deg * np.arange(n_rx)
    rx_positions = np.empty((n_tx, n_rx, 2))
    for p in range(n_tx):
        ang = np.deg2rad(tx_deg[p] + rel_deg)
        rx_positions[p, :, 0] = radius * np.cos(ang)
        rx_positions[p, :, 1] = radius * np.sin(ang)

    return Scene(doi_min=-doi_half, doi_max=doi_half, n_grid=n_grid,
                 tx_positions=tx_positions, rx_positions=rx_positions,
                 frequencies=tuple(freqs), obs_radius=radius)


def rasterize_phantom(phantom, scene, n_grid_override=None):
    """Pixel-center rasterization; later shapes overwrite earlier ones.

    Returns (eps_map, sigma_map) as (n, n) real grids.
    """
    n = n_grid_override or scene.n_grid
    centers = scene.pixel_centers(n)
    eps = np.ones(n * n)
    sig = np.zeros(n * n)
    for shape in phantom.shapes:
        mask = shape.contains(centers)
        eps[mask] = shape.eps_r
        sig[mask] = shape.sigma
    return eps.reshape(n, n), sig.reshape(n, n)


def contrast_of(eps_map, sigma_map, f):
    """Complex contrast chi = (eps_r - 1) - j sigma / (omega eps0)."""
    eps_map = np.asarray(eps_map, dtype=float)
    sigma_map = np.asarray(sigma_map, dtype=float)
    if np.any(eps_map < 1.0):
        raise ValueError("eps_map must be >= 1 everywhere")
    if np.any(sigma_map < 0.0):
        raise ValueError("sigma_map must be >= 0 everywhere")
    if f <= 0:
        raise ValueError("frequency must be positive")
    omega = 2.0 * math.pi * f
    return (eps_map - 1.0) - 1j * sigma_map / (omega * EPS0)
