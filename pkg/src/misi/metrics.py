"""Reconstruction fidelity metrics and Monte-Carlo aggregation."""

import math
from dataclasses import dataclass

import numpy as np

# Finite stand-in for +inf PSNR in numeric log files.
PSNR_INF_SENTINEL = 1e9


@dataclass(frozen=True)
class TruthProfile:
    """Ground-truth maps at inversion resolution with their peak values."""

    eps_true: np.ndarray
    sigma_true: np.ndarray

    @property
    def peak_eps(self):
        return float(np.max(self.eps_true))

    @property
    def peak_sigma(self):
        return float(np.max(self.sigma_true))


def psnr(recon, truth, peakval):
    """10 log10(peak^2 / MSE); +inf when the reconstruction is exact."""
    recon = np.asarray(recon, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if recon.shape != truth.shape:
        raise ValueError("grid shapes must match")
    if peakval <= 0:
        raise ValueError("peakval must be positive")
    mse = float(np.mean((recon - truth) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peakval ** 2 / mse)


@dataclass(frozen=True)
class RunStatistics:
    epochs: np.ndarray          # epochs at which PSNR was sampled
    mean_psnr_eps: np.ndarray
    std_psnr_eps: np.ndarray
    final_psnr_eps: np.ndarray  # one value per run
    five_number: tuple          # (min, q1, median, q3, max) of final PSNR
    median_run_index: int       # run whose final PSNR is closest to the median


def summarize_runs(runs):
    """Aggregate per-epoch PSNR bands and final-PSNR statistics over runs.

    All runs must share the same epoch axis. Infinite PSNR values are mapped
    to the finite sentinel so the statistics stay numeric.
    """
    if not runs:
        raise ValueError("need at least one run")
    epochs = np.asarray(runs[0].psnr_epochs)
    for run in runs[1:]:
        if not np.array_equal(np.asarray(run.psnr_epochs), epochs):
            raise ValueError("runs have mismatched epoch axes")
    curves = np.array([[min(v, PSNR_INF_SENTINEL) for v in run.psnr_eps_curve]
                       for run in runs])
    finals = curves[:, -1]
    q = np.percentile(finals, [0, 25, 50, 75, 100])
    median = q[2]
    median_idx = int(np.argmin(np.abs(finals - median)))
    return RunStatistics(epochs=epochs,
                         mean_psnr_eps=curves.mean(axis=0),
                         std_psnr_eps=curves.std(axis=0),
                         final_psnr_eps=finals,
                         five_number=tuple(q),
                         median_run_index=median_idx)
