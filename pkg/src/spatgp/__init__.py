"""spatgp: Bayesian geostatistics with full, low-rank, and nearest-neighbor GPs."""

from .covariance import (CovarianceParams, cross_cov, effective_range, kernel,
                         marginal_cov, pairwise_distances, phi_for_effective_range)
from .datasets import Dataset, read_dataset_csv, write_dataset_csv
from .errors import (ChainError, ConfigError, DuplicateLocation, InsufficientDraws,
                     InvalidParams, LengthMismatch, NotPositiveDefinite, SpatGPError,
                     TargetInReference, UnsupportedFamily, ZeroDiagonal)
from .fullgp import FullGPBackend, dense_loglik, krige
from .linalg import cholesky, logdet_from_chol, sample_mvn, trsolve
from .lowrank import (KnotSet, LowRankBackend, LowRankSpec, build_B, grid_knots,
                      lowrank_log_target, noise_diag, pp_basis, predict_y, recover_z,
                      residual_var, subset_knots, woodbury_inverse, woodbury_logdet)
from .mcmc import (ChainConfig, InverseGamma, PosteriorSamples, PriorSpec, Uniform,
                   adapt_scale, log_transform_target, run_chain, rw_step, summarize)
from .metrics import interval_coverage, kl_gaussians, rmspe
from .nngp import (NeighborGraph, NNGPLatentBackend, NNGPResponseBackend, SparseFactors,
                   build_graph, build_neighbor_sets, build_sparse_factors,
                   dump_neighbor_graph, gibbs_w_latent, nngp_loglik, nngp_predict,
                   order_locations)
from .simulate import SimDesign, SimResult, paper_design, simulate

__version__ = "0.1.0"
