"""Simulated federated training: FedProx local objectives, mean aggregation.

Communication is in-process: parameter vectors are serialized to bytes,
"transferred", deserialized and aggregated, and that path is what the
per-round wall clock measures. Client RNG streams derive from
(seed, client id, round), so serial and threaded execution produce
identical results.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datasets import LabeledDataset
from .graphs import GranularGraph
from .metrics import accuracy
from .nn import (GCNModel, MLPModel, ParamVector, params_from_bytes,
                 params_to_bytes)

Sample = tuple[object, int]  # (GranularGraph or Image, label)


class TrainingDivergedError(RuntimeError):
    """Local training hit a non-finite loss."""


@dataclass(frozen=True)
class FederationConfig:
    num_clients: int = 5
    rounds: int = 20
    local_epochs: int = 8
    batch_size: int = 16
    lr: float = 1.5
    mu: float = 0.01
    seed: int = 0
    model: str = "gcn"
    hidden: int = 96
    weighted_aggregate: bool = False  # N_k/N weights instead of the plain 1/K mean
    threads: int = 1

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0.0:
            raise ValueError("lr must be > 0")
        if self.mu < 0.0:
            raise ValueError("mu must be >= 0")
        if self.model not in ("gcn", "mlp"):
            raise ValueError("model must be 'gcn' or 'mlp'")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class ClientState:
    client_id: int
    samples: list[Sample]
    params: ParamVector | None = None

    @property
    def sample_count(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class RoundLog:
    round_index: int
    wall_clock_seconds: float
    params_transferred: int  # uploads + downloads, in parameter counts
    global_accuracy: float


def graph_samples(graphs: Sequence[GranularGraph]) -> list[Sample]:
    return [(g, g.label) for g in graphs]


def image_samples(dataset: LabeledDataset) -> list[Sample]:
    return [(img, int(y)) for img, y in zip(dataset.images, dataset.labels)]


def make_model(kind: str, hidden: int, num_classes: int,
               input_dim: int | None = None):
    if kind == "gcn":
        return GCNModel(hidden, num_classes)
    if kind == "mlp":
        if input_dim is None:
            raise ValueError("the pixel model needs an input dimension")
        return MLPModel(input_dim, hidden, num_classes)
    raise ValueError(f"unknown model kind {kind!r}")


def init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])


def client_rng(seed: int, client_id: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, client_id, round_index])


def partition(samples: Sequence[Sample], num_clients: int, seed: int
              ) -> list[list[Sample]]:
    """IID shuffle-then-split into shards whose sizes differ by at most one."""
    if num_clients > len(samples):
        raise ValueError(
            f"cannot split {len(samples)} samples across {num_clients} clients")
    order = np.random.default_rng(seed).permutation(len(samples))
    return [[samples[int(i)] for i in chunk]
            for chunk in np.array_split(order, num_clients)]


def local_train(model, samples: Sequence[Sample], global_params: ParamVector,
                config: FederationConfig, rng: np.random.Generator
                ) -> ParamVector:
    """Mini-batch SGD on the proximal objective F_k(w) + mu/2 |w - w_t|^2.

    The per-step gradient is the batch-mean loss gradient plus
    mu * (w - w_t); with mu = 0 this is plain SGD on the local loss.
    """
    if not samples:
        raise ValueError("client shard is empty")
    w = global_params.copy()
    anchor = global_params.values
    for _ in range(config.local_epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            grad_sum = np.zeros_like(w.values)
            for j in batch:
                x, label = samples[int(j)]
                loss, grad = model.loss_and_grad(w, x, label)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite local loss {loss!r} on sample {int(j)}")
                grad_sum += grad.values
            step = grad_sum / len(batch) + config.mu * (w.values - anchor)
            w.values = w.values - config.lr * step
    return w


def aggregate(client_params: Sequence[ParamVector],
              weights: Sequence[float] | None = None) -> ParamVector:
    """Elementwise mean of client parameter vectors (optionally weighted)."""
    if not client_params:
        raise ValueError("nothing to aggregate")
    layout = client_params[0].layout
    for p in client_params:
        if p.layout != layout:
            raise ValueError("client parameter layouts differ")
    stacked = np.stack([p.values for p in client_params])
    if weights is None:
        values = stacked.mean(axis=0)
    else:
        wts = np.asarray(weights, dtype=np.float64)
        values = (stacked * wts[:, None]).sum(axis=0) / wts.sum()
    return ParamVector(layout, values)


def _exchange_and_aggregate(local_params: list[ParamVector],
                            weights: Sequence[float] | None
                            ) -> tuple[ParamVector, float]:
    """Simulate upload, aggregation and broadcast; returns (params, seconds)."""
    start = time.perf_counter()
    uploaded = [params_from_bytes(params_to_bytes(p)) for p in local_params]
    new_global = aggregate(uploaded, weights)
    blob = params_to_bytes(new_global)
    for _ in local_params:
        params_from_bytes(blob)  # per-client download
    return new_global, time.perf_counter() - start


def run_federation(model, client_shards: Sequence[Sequence[Sample]],
                   test_samples: Sequence[Sample], config: FederationConfig
                   ) -> tuple[ParamVector, list[RoundLog]]:
    """Run the full round loop; see RoundLog for what is measured."""
    if len(client_shards) != config.num_clients:
        raise ValueError("shard count does not match num_clients")
    clients = [ClientState(cid, list(shard))
               for cid, shard in enumerate(client_shards)]
    for client in clients:
        if not client.samples:
            raise ValueError(f"client {client.client_id} has no samples")
    global_params = model.init_params(init_rng(config.seed))
    weights = None
    if config.weighted_aggregate:
        weights = [client.sample_count for client in clients]

    logs: list[RoundLog] = []
    for round_index in range(config.rounds):
        def train_one(client: ClientState) -> ParamVector:
            rng = client_rng(config.seed, client.client_id, round_index)
            return local_train(model, client.samples, global_params, config, rng)

        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                local_params = list(pool.map(train_one, clients))
        else:
            local_params = [train_one(client) for client in clients]
        for client, params in zip(clients, local_params):
            client.params = params

        global_params, seconds = _exchange_and_aggregate(local_params, weights)
        transferred = 2 * config.num_clients * len(global_params)
        acc = accuracy(model, global_params, test_samples)
        logs.append(RoundLog(round_index, seconds, transferred, acc))
    return global_params, logs


def centralized_train(model, samples: Sequence[Sample], config: FederationConfig
                      ) -> ParamVector:
    """Sequential SGD reference: the round loop without clients or aggregation.

    Uses the same RNG stream discipline as client 0 of a federated run, so
    a K=1, mu=0 federation reproduces it bit for bit.
    """
    plain = FederationConfig(
        num_clients=1, rounds=config.rounds, local_epochs=config.local_epochs,
        batch_size=config.batch_size, lr=config.lr, mu=0.0, seed=config.seed,
        model=config.model, hidden=config.hidden)
    w = model.init_params(init_rng(plain.seed))
    for round_index in range(plain.rounds):
        rng = client_rng(plain.seed, 0, round_index)
        w = local_train(model, samples, w, plain, rng)
    return w
