"""Epidemic control on networks by redirecting flows."""
from .analysis import ProtocolSample, ResultRecord, SamplingConfig, compare_policies, km_final_size, sample_protocol
from .control import LossKind, OptimizerConfig, Schedule, loss_gradient, loss_value, optimize, smooth_max
from .diffusion import build_diffusion, build_policy, stationary_distribution, stationary_jacobian
from .graph import Graph, GraphSpec, generate, is_strongly_connected, sample_outrates
from .simulate import SimConfig, final_size, simulate, step
from .spectral import EpiParams, large_domain, next_gen_matrix, r0_and_gradient, spectral_radius_perron

__version__ = "0.1.0"
