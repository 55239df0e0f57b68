"""File formats: the MISI1 binary dataset container, JSON configuration
files, the measured-data table converter, and result exports (CSV, PGM)."""

import json
import math
import struct

import numpy as np

from .forward import MeasurementSet
from .metrics import PSNR_INF_SENTINEL
from .network import NetConfig
from .operators import incident_field
from .scene import Phantom, Scene, Shape, build_fresnel_like_scene

MAGIC = b"MISI1"
_HEADER = struct.Struct("<IIII dddd")


class FormatError(ValueError):
    """Malformed container or configuration file."""


# ---------------------------------------------------------------------------
# MISI1 container
# ---------------------------------------------------------------------------

def _le_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _complex_bytes(arr):
    inter = np.empty(arr.size * 2)
    inter[0::2] = arr.ravel().real
    inter[1::2] = arr.ravel().imag
    return _le_bytes(inter)


def write_container(path, mset):
    """Serialize a MeasurementSet; round-trips bitwise."""
    s = mset.scene
    snr = math.nan if mset.snr_applied is None else float(mset.snr_applied)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(s.n_freq, s.n_tx, s.n_rx, s.n_grid,
                              s.doi_min, s.doi_max, s.obs_radius, snr))
        fh.write(_le_bytes(np.asarray(s.frequencies)))
        fh.write(_le_bytes(s.tx_positions))
        fh.write(_le_bytes(s.rx_positions))
        fh.write(_complex_bytes(mset.data))
        fh.write(_complex_bytes(mset.e_inc))


def read_container(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        n_freq, n_tx, n_rx, n_grid, doi_min, doi_max, obs_radius, snr = \
            _HEADER.unpack(head)

        def read_f64(count, what):
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise FormatError(f"{path}: truncated {what}")
            return np.frombuffer(raw, dtype="<f8").astype(float)

        freqs = read_f64(n_freq, "frequency table")
        tx = read_f64(n_tx * 2, "tx positions").reshape(n_tx, 2)
        rx = read_f64(n_tx * n_rx * 2, "rx positions").reshape(n_tx, n_rx, 2)

        def read_c128(count, what):
            flat = read_f64(count * 2, what)
            return flat[0::2] + 1j * flat[1::2]

        data = read_c128(n_freq * n_tx * n_rx, "scattered payload") \
            .reshape(n_freq, n_tx, n_rx)
        e_inc = read_c128(n_freq * n_tx * n_grid * n_grid, "incident payload") \
            .reshape(n_freq, n_tx, n_grid * n_grid)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after payload")
    scene = Scene(doi_min=doi_min, doi_max=doi_max, n_grid=n_grid,
                  tx_positions=tx, rx_positions=rx,
                  frequencies=tuple(freqs), obs_radius=obs_radius)
    return MeasurementSet(scene=scene, data=data, e_inc=e_inc,
                          snr_applied=None if math.isnan(snr) else snr)


# ---------------------------------------------------------------------------
# JSON configuration files
# ---------------------------------------------------------------------------

def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _check_keys(mapping, allowed, context):
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise FormatError(f"{context}: unknown keys {sorted(unknown)}")


_SCENE_KEYS = ("n_tx", "blind_deg", "rx_step_deg", "radius", "doi_half",
               "n_grid", "freqs")
_DISK_KEYS = ("kind", "center", "radius", "eps_r", "sigma")
_ANNULUS_KEYS = ("kind", "center", "r_inner", "r_outer", "eps_r", "sigma")


def _parse_shape(entry, context):
    kind = entry.get("kind")
    if kind == "disk":
        _check_keys(entry, _DISK_KEYS, context)
        return Shape("disk", tuple(entry["center"]), float(entry["eps_r"]),
                     float(entry.get("sigma", 0.0)),
                     radius=float(entry["radius"]))
    if kind == "annulus":
        _check_keys(entry, _ANNULUS_KEYS, context)
        return Shape("annulus", tuple(entry["center"]), float(entry["eps_r"]),
                     float(entry.get("sigma", 0.0)),
                     r_inner=float(entry["r_inner"]),
                     r_outer=float(entry["r_outer"]))
    raise FormatError(f"{context}: shape kind must be 'disk' or 'annulus'")


def parse_phantom(cfg, context="phantom"):
    _check_keys(cfg, ("shapes",), context)
    shapes = [_parse_shape(e, f"{context}.shapes[{i}]")
              for i, e in enumerate(cfg.get("shapes", []))]
    return Phantom(shapes=tuple(shapes))


def load_experiment_config(path):
    """Scene + phantom description used by data synthesis and truth profiles."""
    cfg = _load_json(path)
    _check_keys(cfg, ("scene", "phantom"), path)
    if "scene" not in cfg:
        raise FormatError(f"{path}: missing 'scene' section")
    sc = cfg["scene"]
    _check_keys(sc, _SCENE_KEYS, f"{path}:scene")
    missing = [k for k in _SCENE_KEYS if k not in sc]
    if missing:
        raise FormatError(f"{path}:scene: missing keys {missing}")
    scene = build_fresnel_like_scene(
        n_tx=int(sc["n_tx"]), blind_deg=float(sc["blind_deg"]),
        rx_step_deg=float(sc["rx_step_deg"]), radius=float(sc["radius"]),
        doi_half=float(sc["doi_half"]), n_grid=int(sc["n_grid"]),
        freqs=[float(f) for f in sc["freqs"]])
    phantom = parse_phantom(cfg.get("phantom", {"shapes": []}),
                            f"{path}:phantom")
    return scene, phantom


def load_phantom_config(path):
    cfg = _load_json(path)
    if "phantom" in cfg:
        _check_keys(cfg, ("scene", "phantom"), path)
        return parse_phantom(cfg["phantom"], f"{path}:phantom")
    return parse_phantom(cfg, path)


_NET_KEYS = ("n_features", "hidden_width", "hidden_depth", "sigma_ff",
             "eps_max", "sigma_max", "lr", "beta1", "beta2", "eps_adam")


def load_net_config(path):
    cfg = _load_json(path)
    _check_keys(cfg, _NET_KEYS, path)
    return NetConfig(**cfg)


# ---------------------------------------------------------------------------
# Measured-data table conversion
# ---------------------------------------------------------------------------

_GEOM_KEYS = ("n_tx", "tx_radius", "rx_radius", "doi_half", "n_grid", "freqs",
              "tx_start_deg")


def load_geometry_config(path):
    cfg = _load_json(path)
    _check_keys(cfg, _GEOM_KEYS, path)
    missing = [k for k in ("n_tx", "tx_radius", "doi_half", "n_grid", "freqs")
               if k not in cfg]
    if missing:
        raise FormatError(f"{path}: missing keys {missing}")
    cfg.setdefault("rx_radius", cfg["tx_radius"])
    cfg.setdefault("tx_start_deg", 0.0)
    return cfg


def convert_measured(table_path, geom, stride):
    """Build a MeasurementSet from a plain-text measured-field table.

    Table columns: freq_hz tx_index rx_angle_deg re im ('#' comments allowed).
    Receiver angles are downsampled by keeping every stride-th angle per Tx;
    incident fields are synthesized from the unit line-source model.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    freqs = [float(f) for f in geom["freqs"]]
    n_tx = int(geom["n_tx"])
    rows = {}
    duplicates = []
    with open(table_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 5:
                raise FormatError(
                    f"{table_path}:{lineno}: expected 5 columns, got {len(parts)}")
            f_hz, tx_idx, angle, re, im = (float(parts[0]), int(parts[1]),
                                           float(parts[2]), float(parts[3]),
                                           float(parts[4]))
            key = (f_hz, tx_idx, angle)
            if key in rows:
                duplicates.append(lineno)
            rows[key] = complex(re, im)
    if duplicates:
        raise FormatError(f"{table_path}: duplicate rows at lines {duplicates}")

    angles_by_tx = {}
    for (f_hz, tx_idx, angle) in rows:
        if f_hz not in freqs:
            raise FormatError(
                f"{table_path}: frequency {f_hz} not in geometry config")
        if not 0 <= tx_idx < n_tx:
            raise FormatError(f"{table_path}: tx index {tx_idx} out of range")
        angles_by_tx.setdefault(tx_idx, set()).add(angle)

    gaps = []
    for tx_idx in range(n_tx):
        for angle in sorted(angles_by_tx.get(tx_idx, ())):
            for f_hz in freqs:
                if (f_hz, tx_idx, angle) not in rows:
                    gaps.append((f_hz, tx_idx, angle))
    if gaps or len(angles_by_tx) != n_tx:
        missing_tx = sorted(set(range(n_tx)) - set(angles_by_tx))
        raise FormatError(
            f"{table_path}: missing entries; absent tx {missing_tx}, "
            f"gaps {gaps[:20]}")

    kept = {tx_idx: sorted(angles_by_tx[tx_idx])[::stride]
            for tx_idx in range(n_tx)}
    counts = {len(v) for v in kept.values()}
    if len(counts) != 1:
        raise FormatError(
            f"{table_path}: unequal receiver counts per tx after downsampling")
    n_rx = counts.pop()

    tx_deg = float(geom["tx_start_deg"]) + 360.0 * np.arange(n_tx) / n_tx
    tx_rad = np.deg2rad(tx_deg)
    tx_positions = float(geom["tx_radius"]) * np.column_stack(
        [np.cos(tx_rad), np.sin(tx_rad)])
    rx_positions = np.empty((n_tx, n_rx, 2))
    data = np.empty((len(freqs), n_tx, n_rx), dtype=complex)
    rr = float(geom["rx_radius"])
    for tx_idx in range(n_tx):
        ang = np.deg2rad(np.asarray(kept[tx_idx]))
        rx_positions[tx_idx, :, 0] = rr * np.cos(ang)
        rx_positions[tx_idx, :, 1] = rr * np.sin(ang)
        for i, f_hz in enumerate(freqs):
            data[i, tx_idx] = [rows[(f_hz, tx_idx, a)] for a in kept[tx_idx]]

    scene = Scene(doi_min=-float(geom["doi_half"]),
                  doi_max=float(geom["doi_half"]),
                  n_grid=int(geom["n_grid"]), tx_positions=tx_positions,
                  rx_positions=rx_positions, frequencies=tuple(freqs),
                  obs_radius=float(geom["tx_radius"]))
    e_inc = np.stack([incident_field(scene, f) for f in freqs])
    return MeasurementSet(scene=scene, data=data, e_inc=e_inc)


# ---------------------------------------------------------------------------
# Result exports
# ---------------------------------------------------------------------------

def write_grid_csv(path, grid):
    np.savetxt(path, np.asarray(grid), delimiter=",", fmt="%.17g")


def write_pgm(path, grid):
    """8-bit grayscale export mapping [min, max] to [0, 255]; the mapped
    range is recorded in a sidecar text file for quantitative readback."""
    grid = np.asarray(grid, dtype=float)
    lo, hi = float(grid.min()), float(grid.max())
    span = hi - lo if hi > lo else 1.0
    pixels = np.round((grid - lo) / span * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode())
        fh.write(pixels.tobytes())
    with open(str(path) + ".range.txt", "w") as fh:
        fh.write(f"min {lo:.17g}\nmax {hi:.17g}\n")


def _csv_num(value):
    if math.isinf(value):
        return f"{PSNR_INF_SENTINEL:.17g}"
    return f"{value:.17g}"


def write_epoch_log(path, run, n_freq):
    """Per-epoch CSV: epoch, stage, beta, losses per frequency, alpha, gamma,
    PSNR columns (blank-free; unsampled entries stay NaN)."""
    cols = ["epoch", "stage", "beta"]
    for name in ("l_data", "l_state", "l_cross"):
        cols += [f"{name}_f{f}" for f in range(n_freq)]
    cols += ["alpha", "gamma", "psnr_eps", "psnr_sigma"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(run.epoch.size):
            row = [str(int(run.epoch[i])), str(int(run.stage[i])),
                   _csv_num(run.beta[i])]
            for arr in (run.l_data, run.l_state, run.l_cross):
                row += [_csv_num(arr[i, f]) for f in range(n_freq)]
            row += [_csv_num(run.alpha[i]), _csv_num(run.gamma[i]),
                    _csv_num(run.psnr_eps[i]), _csv_num(run.psnr_sigma[i])]
            fh.write(",".join(row) + "\n")


def write_psnr_curve(path, stats):
    with open(path, "w") as fh:
        fh.write("epoch,mean_psnr_eps,std_psnr_eps\n")
        for e, m, s in zip(stats.epochs, stats.mean_psnr_eps,
                           stats.std_psnr_eps):
            fh.write(f"{int(e)},{_csv_num(m)},{_csv_num(s)}\n")


def write_final_psnr(path, stats, seeds):
    with open(path, "w") as fh:
        fh.write("seed,final_psnr_eps\n")
        for seed, value in zip(seeds, stats.final_psnr_eps):
            fh.write(f"{seed},{_csv_num(value)}\n")
        lo, q1, med, q3, hi = stats.five_number
        fh.write(f"# min={_csv_num(lo)} q1={_csv_num(q1)} "
                 f"median={_csv_num(med)} q3={_csv_num(q3)} "
                 f"max={_csv_num(hi)}\n")
