"""Differentially private federated learning with adaptive local iterations."""

from .accountant import (DEFAULT_ALPHAS, InfeasibleBudgetError, PrivacySpec, RdpCurve,
                         calibrate_iterations, compose, rdp_sgm_order, rdp_to_dp,
                         total_epsilon)
from .config import ExperimentConfig
from .data import (ClientDataset, Dataset, PartitionSpec, client_weights, generate_synthetic,
                   load_csv, partition)
from .dpsgd import DpsgdHyper, RngStream, clip, local_train, noisy_batch_sum, poisson_sample
from .experiment import ExperimentResult, metrics_csv, run_experiment
from .federation import aggregate, collect_mu_reports
from .kernels import BACKEND
from .model import LabeledSample, ModelSpec, full_batch_gradient, loss, per_sample_gradient
from .scheduler import (AdaptiveScheduler, DiagnosticBoundParams, FixedScheduler, MuReport,
                        SchedulerContext, bound_G, bound_h, effective_Bhat, effective_T,
                        estimate_mu, next_tau, tau_star_real)

__version__ = "0.1.0"
