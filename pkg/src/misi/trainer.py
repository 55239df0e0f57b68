"""Alternating optimization driver: staged frequency activation, analytical
conjugate-gradient source updates, and neural contrast updates.

Three modes are supported: "alt_cc" (alternating engine with the
cross-correlated term), "alt" (same engine with the cross term disabled), and
"simul_cc" (sources and network parameters jointly updated by Adam, no
analytical line search). Strategies: "hop" activates frequencies cumulatively
low-to-high over stages; "simul" runs a single stage with every frequency.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import EPS0
from .losses import (beta_schedule, clip_gradient_magnitude, eval_losses,
                     grad_J, grad_chi, sources_inner, sources_norm2)
from .metrics import psnr
from .network import NetConfig, adam_step, backward_maps, forward_maps, \
    init_network
from .operators import apply_domain, apply_surface, apply_surface_adjoint, \
    build_operator_set

MODES = ("alt_cc", "alt", "simul_cc")
STRATEGIES = ("hop", "simul")


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "alt_cc"
    strategy: str = "hop"
    epochs: int = 1000
    seed: int = 0
    stage_split: tuple = None        # percentages per stage; None = default
    net_cfg: NetConfig = field(default_factory=NetConfig)
    n_inner: int = 2                 # network updates per source update
    source_clip: float = 100.0       # elementwise magnitude clip on g_J
    net_clip: float = 1.0            # global-norm clip on network gradients
    simul_source_clip: float = 1.0   # global-norm clip on g_J in simul_cc
    beta_decay: float = 10.0
    force_beta_zero: bool = False
    psnr_every: int = 10
    pad_factor: int = 4

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class CgState:
    """Conjugate-gradient history; reset whenever the active set changes."""

    g_prev: dict = None
    v_prev: dict = None
    first: bool = True


@dataclass(frozen=True)
class TrainRun:
    cfg: TrainConfig
    epoch: np.ndarray
    stage: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    l_data: np.ndarray    # (epochs, n_freq), NaN where inactive
    l_state: np.ndarray
    l_cross: np.ndarray
    psnr_eps: np.ndarray  # per epoch, NaN when not sampled
    psnr_sigma: np.ndarray
    psnr_epochs: np.ndarray      # epochs at which PSNR was sampled
    psnr_eps_curve: np.ndarray
    psnr_sigma_curve: np.ndarray
    final_eps: np.ndarray        # (n, n) relative permittivity
    final_sigma: np.ndarray      # (n, n) conductivity
    net: object


def build_stage_plan(n_freq, epochs, stage_split=None, strategy="hop"):
    """Stages as (active frequency indices, epoch count) with cumulative
    activation for hopping; percentages default to (20, 20, 60) for three
    frequencies and an even split otherwise."""
    if strategy == "simul" or n_freq == 1:
        return [(tuple(range(n_freq)), epochs)]
    if stage_split is None:
        stage_split = (20.0, 20.0, 60.0) if n_freq == 3 \
            else (100.0 / n_freq,) * n_freq
    if len(stage_split) != n_freq:
        raise ValueError("stage_split length must equal the frequency count")
    if abs(sum(stage_split) - 100.0) > 1e-9:
        raise ValueError("stage_split percentages must sum to 100")
    counts = [int(math.floor(p / 100.0 * epochs)) for p in stage_split]
    counts[-1] += epochs - sum(counts)
    if any(c < 1 for c in counts):
        raise ValueError("every stage needs at least one epoch")
    return [(tuple(range(s + 1)), counts[s]) for s in range(n_freq)]


def init_sources(mset, ops, freq_indices):
    """Back-projection start J0 = c G_S^H y with the optimal 1D step per
    (frequency, Tx); zero data gives zero sources."""
    sources = {}
    for f in freq_indices:
        y = mset.data[f]
        adj = apply_surface_adjoint(ops.surface[f], y)
        fwd = apply_surface(ops.surface[f], adj)
        num = np.sum(np.abs(adj) ** 2, axis=1)
        den = np.sum(np.abs(fwd) ** 2, axis=1)
        c = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        sources[f] = c[:, None] * adj
    return sources


def step_denominator(v, chi, mset, beta, ops):
    """Quadratic coefficient of the total loss along the direction v."""
    denom = 0.0
    for f in sorted(v):
        y = mset.data[f]
        e_inc = mset.e_inc[f]
        ny2 = float(np.vdot(y, y).real)
        ne2 = float(np.vdot(e_inc, e_inc).real)
        gd_v = apply_domain(ops.domain[f], v[f])
        sv = apply_surface(ops.surface[f], v[f])
        av = chi[f][None, :] * gd_v - v[f]
        denom += float(np.vdot(sv, sv).real) / ny2
        denom += float(np.vdot(av, av).real) / ne2
        if beta != 0.0:
            s_av = apply_surface(ops.surface[f], chi[f][None, :] * gd_v)
            denom += beta * float(np.vdot(s_av, s_av).real) / ny2
    return denom


def prcg_step(J, cg, chi, mset, beta, ops, clip_threshold=100.0):
    """One Polak-Ribiere conjugate-gradient update of the contrast sources
    with the analytical exact-line-search step.

    Returns (J', cg', alpha, gamma, loss_before, loss_after). A vanishing
    quadratic coefficient signals a stationary direction; the update is then
    skipped (alpha = 0).
    """
    loss_before = eval_losses(J, chi, mset, beta, ops).total
    g_raw = grad_J(J, chi, mset, beta, ops)
    g = clip_gradient_magnitude(g_raw, clip_threshold)

    if cg.first or cg.g_prev is None:
        gamma = 0.0
    else:
        diff = {f: g[f] - cg.g_prev[f] for f in g}
        gamma = max(0.0, sources_inner(g, diff).real / sources_norm2(cg.g_prev))

    if gamma > 0.0:
        v = {f: -g[f] + gamma * cg.v_prev[f] for f in g}
        if sources_inner(g, v).real >= 0.0:
            v = {f: -g[f] for f in g}
    else:
        v = {f: -g[f] for f in g}

    denom = step_denominator(v, chi, mset, beta, ops)
    if denom < 1e-30:
        alpha = 0.0
        j_new = {f: J[f].copy() for f in J}
        loss_after = loss_before
    else:
        alpha = -sources_inner(g, v).real / (2.0 * denom)
        j_new = {f: J[f] + alpha * v[f] for f in J}
        # The loss is exactly quadratic along v; the linear coefficient uses
        # the unclipped gradient.
        slope = sources_inner(g_raw, v).real
        loss_after = loss_before + alpha * slope + alpha * alpha * denom
    return j_new, CgState(g_prev=g, v_prev=v, first=False), alpha, gamma, \
        loss_before, loss_after


def _chi_from_maps(maps, frequencies, active):
    chi = {}
    for f in active:
        omega = 2.0 * math.pi * frequencies[f]
        chi[f] = maps.delta_eps - 1j * maps.sigma / (omega * EPS0)
    return chi


def _total_fields(J, mset, ops):
    return {f: mset.e_inc[f] + apply_domain(ops.domain[f], J[f]) for f in J}


def nn_phase(net, J, mset, beta, ops, coords, frequencies, n_inner=2,
             net_clip=1.0, e_tot=None, start=None):
    """Phase 2: n_inner Adam updates of the network against the state and
    cross residuals with the sources frozen.

    start may carry a (maps, cache) pair from a forward pass at the current
    parameter state to avoid recomputing it. Returns (net, maps, cache) with
    the forward outputs refreshed after the last update.
    """
    if e_tot is None:
        e_tot = _total_fields(J, mset, ops)
    maps, cache = start if start is not None else forward_maps(net, coords)
    for _ in range(n_inner):
        chi = _chi_from_maps(maps, frequencies, sorted(J))
        _, d_deps, d_sigma = grad_chi(J, chi, mset, beta, ops, e_tot)
        grads = backward_maps(net, cache, d_deps, d_sigma)
        adam_step(net, grads, max_norm=net_clip)
        maps, cache = forward_maps(net, coords)
    return net, maps, cache


class _ComplexAdam:
    """Adam moments for the directly-updated sources in simul_cc mode."""

    def __init__(self, beta1, beta2, eps):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m, self.v = {}, {}
        self.t = 0

    def ensure(self, sources):
        for f in sources:
            if f not in self.m:
                self.m[f] = np.zeros(sources[f].shape, dtype=complex)
                self.v[f] = np.zeros(sources[f].shape, dtype=float)

    def step(self, sources, grads, lr, max_norm):
        self.ensure(sources)
        gnorm = math.sqrt(sources_norm2(grads))
        scale = max_norm / gnorm if gnorm > max_norm else 1.0
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        out = {}
        for f in sources:
            g = grads[f] * scale
            self.m[f] = self.beta1 * self.m[f] + (1.0 - self.beta1) * g
            self.v[f] = self.beta2 * self.v[f] \
                + (1.0 - self.beta2) * np.abs(g) ** 2
            out[f] = sources[f] - lr * (self.m[f] / bias1) \
                / (np.sqrt(self.v[f] / bias2) + self.eps)
        return out


def run(mset, scene, cfg, truth=None):
    """Execute one full training run and return its logs and final maps."""
    for f in range(scene.n_freq):
        if np.all(mset.data[f] == 0):
            raise ValueError(f"no measurement data at frequency index {f}")
    ops = build_operator_set(scene, pad_factor=cfg.pad_factor)
    net = init_network(cfg.seed, cfg.net_cfg)
    coords = scene.normalized_coords()
    plan = build_stage_plan(scene.n_freq, cfg.epochs, cfg.stage_split,
                            cfg.strategy)
    n_freq = scene.n_freq
    n_epochs = sum(k for _, k in plan)

    log = {name: np.full(n_epochs, np.nan) for name in
           ("stage", "beta", "alpha", "gamma", "psnr_eps", "psnr_sigma")}
    l_log = {name: np.full((n_epochs, n_freq), np.nan) for name in
             ("l_data", "l_state", "l_cross")}

    J = {}
    cg = CgState()
    maps, cache = forward_maps(net, coords)
    j_adam = _ComplexAdam(cfg.net_cfg.beta1, cfg.net_cfg.beta2,
                          cfg.net_cfg.eps_adam)
    epoch = 0
    for s, (active, k_stage) in enumerate(plan, start=1):
        new = [f for f in active if f not in J]
        if new:
            J.update(init_sources(mset, ops, new))
            cg = CgState()  # shapes changed: discard CG history
        for k in range(1, k_stage + 1):
            disable_cross = cfg.mode == "alt" or cfg.force_beta_zero
            beta = 0.0 if disable_cross else \
                beta_schedule(s, k, k_stage, cfg.beta_decay)

            chi = _chi_from_maps(maps, scene.frequencies, active)
            if cfg.mode in ("alt_cc", "alt"):
                J, cg, alpha, gamma, _, _ = prcg_step(
                    J, cg, chi, mset, beta, ops, cfg.source_clip)
                e_tot = _total_fields(J, mset, ops)
                net, maps, cache = nn_phase(
                    net, J, mset, beta, ops, coords, scene.frequencies,
                    n_inner=cfg.n_inner, net_clip=cfg.net_clip,
                    e_tot=e_tot, start=(maps, cache))
            else:
                g_j = grad_J(J, chi, mset, beta, ops)
                e_tot = _total_fields(J, mset, ops)
                _, d_deps, d_sigma = grad_chi(J, chi, mset, beta, ops, e_tot)
                grads = backward_maps(net, cache, d_deps, d_sigma)
                J = j_adam.step(J, g_j, cfg.net_cfg.lr, cfg.simul_source_clip)
                adam_step(net, grads, max_norm=cfg.net_clip)
                maps, cache = forward_maps(net, coords)
                alpha, gamma = np.nan, np.nan

            chi = _chi_from_maps(maps, scene.frequencies, active)
            bd = eval_losses(J, chi, mset, beta, ops)
            log["stage"][epoch] = s
            log["beta"][epoch] = beta
            log["alpha"][epoch] = alpha
            log["gamma"][epoch] = gamma
            for f in active:
                l_log["l_data"][epoch, f] = bd.l_data[f]
                l_log["l_state"][epoch, f] = bd.l_state[f]
                l_log["l_cross"][epoch, f] = bd.l_cross[f]
            if truth is not None and (
                    (epoch + 1) % cfg.psnr_every == 0 or epoch == n_epochs - 1):
                n = scene.n_grid
                log["psnr_eps"][epoch] = psnr(
                    (maps.delta_eps + 1.0).reshape(n, n), truth.eps_true,
                    truth.peak_eps)
                if truth.peak_sigma > 0:
                    log["psnr_sigma"][epoch] = psnr(
                        maps.sigma.reshape(n, n), truth.sigma_true,
                        truth.peak_sigma)
            epoch += 1

    n = scene.n_grid
    sampled = np.flatnonzero(~np.isnan(log["psnr_eps"]))
    return TrainRun(
        cfg=cfg,
        epoch=np.arange(1, n_epochs + 1),
        stage=log["stage"], beta=log["beta"], alpha=log["alpha"],
        gamma=log["gamma"],
        l_data=l_log["l_data"], l_state=l_log["l_state"],
        l_cross=l_log["l_cross"],
        psnr_eps=log["psnr_eps"], psnr_sigma=log["psnr_sigma"],
        psnr_epochs=sampled + 1,
        psnr_eps_curve=log["psnr_eps"][sampled],
        psnr_sigma_curve=log["psnr_sigma"][sampled],
        final_eps=(maps.delta_eps + 1.0).reshape(n, n),
        final_sigma=maps.sigma.reshape(n, n),
        net=net)


@dataclass(frozen=True)
class MonteCarloResult:
    runs: list
    seeds: list
    failures: list               # (seed, message) for excluded runs
    stats: object                # RunStatistics or None without truth
    median_seed: int


def monte_carlo(mset, scene, cfg, n_runs, base_seed, truth=None):
    """Repeat a run over consecutive seeds and aggregate final-PSNR statistics."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    from .metrics import summarize_runs
    runs, seeds, failures = [], [], []
    for i in range(n_runs):
        seed = base_seed + i
        try:
            runs.append(run(mset, scene, replace(cfg, seed=seed), truth=truth))
            seeds.append(seed)
        except (ValueError, FloatingPointError, RuntimeError) as exc:
            failures.append((seed, str(exc)))
    if not runs:
        raise RuntimeError("all Monte Carlo runs failed")
    stats = summarize_runs(runs) if truth is not None else None
    median_seed = seeds[stats.median_run_index] if stats else seeds[0]
    return MonteCarloResult(runs=runs, seeds=seeds, failures=failures,
                            stats=stats, median_seed=median_seed)
