"""Federated training with TopBinary-coded updates and compressed secure aggregation.

Each round every client runs E local SGD steps from its copy of the model,
codes ``update + error`` with TopBinary, and the clients jointly compute the
SepAgg aggregate through the secure protocols. All clients then apply the
same ``alpha * D / C^2``. ``compress=False`` gives plain FedAvg on the same
shards for paired comparisons.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aggregation import UnionStrategy, compressed_secure_agg
from .coder import ErrorAccumulator, ec_step
from .data import Dataset
from .field import FixedPointParams
from .models import ToyModel
from .rng import make_rng, spawn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    clients: int = 5
    servers: int = 2
    local_steps: int = 10
    rounds: int = 100
    rho: float = 0.1
    lr: float = 0.05
    batch_size: int = 32
    momentum: float = 0.0
    strategy: UnionStrategy = UnionStrategy.partial()
    compress: bool = True
    frac_bits: int = 16
    total_bits: int = 32
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if min(self.clients, self.local_steps, self.batch_size, self.threads) < 1:
            raise ValueError("clients, local_steps, batch_size and threads must be positive")
        if self.rounds < 0 or self.lr < 0 or not 0 <= self.momentum < 1:
            raise ValueError("rounds >= 0, lr >= 0 and 0 <= momentum < 1 required")
        if self.compress and self.servers < 2:
            raise ValueError("secure aggregation needs at least two servers")

    @property
    def fixed_point(self) -> FixedPointParams:
        return FixedPointParams(self.total_bits, self.frac_bits)


def local_train(theta: np.ndarray, shard: Dataset, steps: int, model: ToyModel, lr: float,
                batch_size: int, rng, momentum: float = 0.0) -> np.ndarray:
    """Run ``steps`` mini-batch SGD steps and return the parameter delta."""
    if steps < 1:
        raise ValueError("need at least one local step")
    start = np.asarray(theta, dtype=np.float64)
    w = start.copy()
    velocity = np.zeros_like(w)
    n = len(shard)
    for step in range(steps):
        if batch_size >= n:
            X, y = shard.X, shard.y
        else:
            idx = rng.choice(n, size=batch_size, replace=False)
            X, y = shard.X[idx], shard.y[idx]
        loss, grad = model.loss_and_grad(w, X, y)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(
                f"non-finite loss {loss} at local step {step} (lr={lr}, |w|={np.linalg.norm(w):.3g})")
        velocity = momentum * velocity + grad
        w -= lr * velocity
    return w - start


@dataclass
class ClientState:
    theta: np.ndarray
    acc: ErrorAccumulator
    shard: Dataset
    rng: object


@dataclass
class FLState:
    clients: list
    round: int = 0
    history: list = field(default_factory=list)
    rng: object = None

    @property
    def theta(self) -> np.ndarray:
        return self.clients[0].theta


def init_state(model: ToyModel, shards: list, cfg: TrainConfig) -> FLState:
    root = make_rng(cfg.seed)
    init_rng, agg_rng, *client_rngs = spawn(root, 2 + len(shards))
    theta0 = model.init(init_rng)
    clients = [ClientState(theta0.copy(), ErrorAccumulator.zeros(model.n_params), s, r)
               for s, r in zip(shards, client_rngs)]
    return FLState(clients=clients, rng=agg_rng)


def _local_updates(state: FLState, model: ToyModel, cfg: TrainConfig) -> list:
    def work(c: ClientState):
        return local_train(c.theta, c.shard, cfg.local_steps, model, cfg.lr, cfg.batch_size,
                           c.rng, cfg.momentum)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(work, state.clients))
    return [work(c) for c in state.clients]


def local_updates(state: FLState, model: ToyModel, cfg: TrainConfig) -> list:
    """Every client's raw local update from its current model (advances client rngs)."""
    return _local_updates(state, model, cfg)


def federated_round(state: FLState, model: ToyModel, cfg: TrainConfig, updates=None) -> int:
    """Advance every client by one round in place; returns the bits exchanged.

    ``updates`` replaces local training with precomputed per-client updates.
    """
    if updates is None:
        updates = _local_updates(state, model, cfg)
    elif len(updates) != len(state.clients):
        raise ValueError(f"{len(updates)} updates for {len(state.clients)} clients")
    if not cfg.compress:
        mean = np.mean(updates, axis=0)
        for c in state.clients:
            c.theta = c.theta + mean
        state.round += 1
        return 2 * len(state.clients) * 32 * model.n_params

    codes = []
    for c, u in zip(state.clients, updates):
        code, c.acc = ec_step(u, c.acc, cfg.rho)
        codes.append(code)
    (round_rng,) = spawn(state.rng, 1)
    result, transcript = compressed_secure_agg(codes, cfg.servers, cfg.strategy, cfg.fixed_point,
                                               round_rng, round=state.round, threads=cfg.threads)
    for c in state.clients:
        c.theta = c.theta + result.U
    state.round += 1
    return transcript.total_bits


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    train_loss: float
    test_acc: float
    bits: int

    def csv(self) -> str:
        return f"{self.round},{self.train_loss:.6f},{self.test_acc:.6f},{self.bits}"


METRICS_HEADER = "round,train_loss,test_acc,bits_this_round"


def run_training(model: ToyModel, shards: list, test: Dataset, cfg: TrainConfig) -> FLState:
    state = init_state(model, shards, cfg)
    train_X = np.concatenate([s.X for s in shards])
    train_y = np.concatenate([s.y for s in shards])
    for _ in range(cfg.rounds):
        bits = federated_round(state, model, cfg)
        m = RoundMetrics(state.round, model.loss(state.theta, train_X, train_y),
                         model.accuracy(state.theta, test.X, test.y), bits)
        state.history.append(m)
        log.debug("round %d loss %.4f acc %.4f bits %d", m.round, m.train_loss, m.test_acc, m.bits)
    return state


def metrics_csv(history: list) -> str:
    return METRICS_HEADER + "\n" + "".join(m.csv() + "\n" for m in history)
