"""Additive-mask secure sum of vectors in Z_m between C clients and S servers.

Each client splits its vector into S additive shares and sends share j to
server j. Every server adds what it received and broadcasts the result to all
clients, who add the S broadcasts to obtain the sum. Any S-1 servers together
see only uniformly random shares.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .field import FieldVector, bits_per_element, make_shares, pack_bits, sum_mod
from .rng import RandomSource, spawn
from .transport import (Message, PartyId, ProtocolAbort, ProtocolError, RoundTranscript,
                        client, run_protocol, server)


@dataclass(frozen=True)
class SecureSumConfig:
    clients: int
    servers: int
    n: int
    modulus: int

    def __post_init__(self):
        if self.clients < 1:
            raise ValueError("need at least one client")
        if self.servers < 2:
            raise ValueError("need at least two servers")
        if self.n < 0:
            raise ValueError("vector length must be nonnegative")
        bits_per_element(self.modulus)

    @property
    def message_bits(self) -> int:
        return self.n * bits_per_element(self.modulus)

    @property
    def total_bits(self) -> int:
        return 2 * self.servers * self.clients * self.message_bits

    def check(self, x: FieldVector) -> None:
        if x.modulus != self.modulus or x.n != self.n:
            raise ValueError(
                f"vector (n={x.n}, m={x.modulus}) does not match config (n={self.n}, m={self.modulus})")


def client_share_phase(i: int, x: FieldVector, cfg: SecureSumConfig, rng: RandomSource,
                       protocol: str = "sum", round: int = 0) -> list[Message]:
    cfg.check(x)
    bundle = make_shares(x, cfg.servers, rng, owner=client(i))
    return [Message.carrying(client(i), server(j + 1), share, protocol, round)
            for j, share in enumerate(bundle.shares)]


def server_aggregate(j: int, received: Sequence[FieldVector], cfg: SecureSumConfig,
                     protocol: str = "sum", round: int = 0) -> list[Message]:
    """Sum the C received shares and address one copy of the result to each client."""
    if len(received) != cfg.clients:
        raise ProtocolAbort(f"server{j} holds {len(received)} shares, expected {cfg.clients}")
    for r in received:
        cfg.check(r)
    total = sum_mod(received)
    payload = pack_bits(total)
    return [Message(server(j), client(i), protocol, round, total.n, total.modulus, payload)
            for i in range(1, cfg.clients + 1)]


def client_reconstruct(broadcasts: Sequence[FieldVector], cfg: SecureSumConfig) -> FieldVector:
    if len(broadcasts) != cfg.servers:
        raise ProtocolAbort(f"got {len(broadcasts)} result shares, expected {cfg.servers}")
    for b in broadcasts:
        cfg.check(b)
    return sum_mod(broadcasts)


class SumClient:
    def __init__(self, i: int, x: FieldVector, cfg: SecureSumConfig, rng: RandomSource,
                 protocol: str = "sum", round: int = 0):
        cfg.check(x)
        self.pid = client(i)
        self.x = x
        self.cfg = cfg
        self.rng = rng
        self.protocol = protocol
        self.round = round
        self.result: FieldVector | None = None

    def step(self, phase: int, inbox: list[Message]) -> list[Message]:
        if phase == 0:
            return client_share_phase(self.pid.index, self.x, self.cfg, self.rng,
                                      self.protocol, self.round)
        senders = sorted(m.sender for m in inbox)
        if senders != [server(j) for j in range(1, self.cfg.servers + 1)]:
            raise ProtocolAbort(f"{self.pid} expected one broadcast per server, got {senders}")
        ordered = sorted(inbox, key=lambda m: m.sender)
        self.result = client_reconstruct([m.unpack() for m in ordered], self.cfg)
        return []


class SumServer:
    def __init__(self, j: int, cfg: SecureSumConfig, protocol: str = "sum", round: int = 0):
        self.pid = server(j)
        self.cfg = cfg
        self.protocol = protocol
        self.round = round

    def step(self, phase: int, inbox: list[Message]) -> list[Message]:
        senders = sorted(m.sender for m in inbox)
        if senders != [client(i) for i in range(1, self.cfg.clients + 1)]:
            raise ProtocolAbort(f"{self.pid} expected one share per client, got {senders}")
        ordered = sorted(inbox, key=lambda m: m.sender)
        return server_aggregate(self.pid.index, [m.unpack() for m in ordered], self.cfg,
                                self.protocol, self.round)


def schedule(cfg: SecureSumConfig) -> list[list[PartyId]]:
    clients = [client(i) for i in range(1, cfg.clients + 1)]
    servers = [server(j) for j in range(1, cfg.servers + 1)]
    return [clients, servers, clients]


def run_secure_sum(inputs: Sequence[FieldVector], cfg: SecureSumConfig, rng: RandomSource,
                   *, protocol: str = "sum", round: int = 0,
                   threads: int = 1) -> tuple[FieldVector, RoundTranscript]:
    if len(inputs) != cfg.clients:
        raise ValueError(f"{len(inputs)} inputs for {cfg.clients} clients")
    rngs = spawn(rng, cfg.clients)
    clients_ = [SumClient(i + 1, x, cfg, r, protocol, round)
                for i, (x, r) in enumerate(zip(inputs, rngs))]
    servers_ = [SumServer(j, cfg, protocol, round) for j in range(1, cfg.servers + 1)]
    transcript = run_protocol(clients_ + servers_, schedule(cfg), threads=threads)
    result = clients_[0].result
    for c in clients_[1:]:
        if c.result != result:
            raise ProtocolError(f"{c.pid} reconstructed a different sum")
    return result, transcript

