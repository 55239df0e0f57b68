"""Quantitative 2D TM microwave inverse scattering: synthetic data
generation, alternating contrast-source / neural-representation inversion,
and evaluation tooling."""

from .constants import C0, EPS0, MU0, wavenumber
from .forward import MeasurementSet, SolverError, add_noise, mie_cylinder, \
    solve_total_field, synthesize_measurements
from .losses import LossBreakdown, beta_schedule, clip_gradient_magnitude, \
    eval_losses, grad_J, grad_chi
from .metrics import TruthProfile, psnr, summarize_runs
from .network import MaterialMaps, NetConfig, NetworkState, adam_step, \
    backward_maps, forward_maps, init_network, load_checkpoint, \
    save_checkpoint
from .operators import DomainOperator, OperatorSet, SurfaceOperator, \
    apply_domain, apply_domain_adjoint, apply_surface, \
    apply_surface_adjoint, build_domain_operator, build_operator_set, \
    build_surface_operator, incident_field
from .scene import Phantom, Scene, Shape, austria_phantom, \
    build_fresnel_like_scene, contrast_of, rasterize_phantom
from .trainer import CgState, MonteCarloResult, TrainConfig, TrainRun, \
    build_stage_plan, init_sources, monte_carlo, nn_phase, prcg_step, run

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
