"""Differentially private online-to-batch conversion for stochastic convex optimization."""

from .accounting import PrivacyBudget, budget_over_grid, rdp_to_dp, theoretical_gap_bound
from .conversion import Variant, VariantConfig, build_learner, run
from .geometry import Ball, NoiseDistribution, NoiseKind, gaussian, make_rng, sample_noise
from .problems import Dataset, make_logistic, make_quadratic
from .tree_noise import NoiseTree, index_set, node_interval, sigma_schedule

__version__ = "0.1.0"
