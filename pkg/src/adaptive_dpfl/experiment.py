"""End-to-end experiment assembly from an :class:`ExperimentConfig`."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .accountant import PrivacySpec, calibrate_iterations
from .config import ExperimentConfig
from .data import (PartitionSpec, generate_synthetic, load_csv, partition,
                   train_test_split)
from .dpsgd import DpsgdHyper
from .federation import Federation, FederationState, PrivacyLedger, RoundMetrics, make_clients
from .model import ModelSpec, init_params
from .scheduler import AdaptiveScheduler, FixedScheduler, effective_Bhat


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    r_c: int
    state: FederationState

    @property
    def history(self) -> list[RoundMetrics]:
        return self.state.history

    @property
    def final_model(self) -> np.ndarray:
        return self.state.global_model


def build_federation(config: ExperimentConfig, keep_models: bool = False):
    """Returns (federation, initial model, R_c)."""
    config.validate()
    data_seed, init_seed, train_seed = config.seeds()
    if config.data_csv:
        source = load_csv(config.data_csv)
    else:
        source = generate_synthetic(config.num_classes, config.num_features,
                                    config.samples_per_class, config.class_separation, data_seed)
    train, test = train_test_split(source, config.test_fraction, data_seed)
    shards = partition(train, PartitionSpec(config.partition, config.beta,
                                            config.num_clients, data_seed))
    spec = ModelSpec(config.model, train.width, train.num_classes,
                     config.hidden_width if config.model == "mlp-1-hidden" else 0)
    hyper = DpsgdHyper(config.learning_rate, config.clip_bound,
                       config.noise_multiplier, config.sampling_rate)
    if config.r_c is not None:
        r_c = config.r_c
    else:
        r_c = calibrate_iterations(PrivacySpec(config.epsilon, config.delta,
                                               config.sampling_rate, config.noise_multiplier))
    kind, tau = config.scheduler_kind()
    if kind == "fixed":
        scheduler = FixedScheduler(tau)
    else:
        scheduler = AdaptiveScheduler(
            gamma=config.gamma, clip_bound=config.clip_bound, sigma=config.noise_multiplier,
            model_dim=spec.dim, b_hat=effective_Bhat(config.sampling_rate, [len(s) for s in shards]),
            r_s=config.r_s, r_c=r_c, tau_cap=config.tau_cap,
        )
    federation = Federation(
        spec=spec, clients=make_clients(shards, train_seed), hyper=hyper, scheduler=scheduler,
        ledger=PrivacyLedger(config.sampling_rate, config.noise_multiplier, config.delta),
        test_set=test if len(test) else None, workers=config.workers, keep_models=keep_models,
    )
    return federation, init_params(spec, init_seed), r_c


def run_experiment(config: ExperimentConfig, keep_models: bool = False) -> ExperimentResult:
    federation, w0, r_c = build_federation(config, keep_models)
    state = federation.run(w0, config.r_s, r_c)
    return ExperimentResult(config, r_c, state)


def metrics_csv(history: list[RoundMetrics]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RoundMetrics.FIELDS)
    for row in history:
        writer.writerow(row.as_row())
    return buf.getvalue()
