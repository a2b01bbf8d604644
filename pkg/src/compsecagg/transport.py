"""In-process message fabric: phase-barrier delivery, transcripts and bit ledgers."""

from __future__ import annotations

import json
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

from .field import FieldVector, bits_per_element, pack_bits, unpack_bits


class ProtocolError(RuntimeError):
    pass


class UndeliverableMessage(ProtocolError):
    pass


class PhaseViolation(ProtocolError):
    pass


class ProtocolAbort(ProtocolError):
    """A party saw a missing or malformed message and stopped the run."""


@dataclass(frozen=True, order=True)
class PartyId:
    role: str
    index: int  # 1-based, as in the protocol descriptions

    def __post_init__(self):
        if self.role not in ("client", "server"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.index < 1:
            raise ValueError("party indices are 1-based")

    def __str__(self) -> str:
        return f"{self.role}{self.index}"

    @classmethod
    def parse(cls, text: str) -> "PartyId":
        for role in ("client", "server"):
            if text.startswith(role):
                return cls(role, int(text[len(role):]))
        raise ValueError(f"cannot parse party id {text!r}")


def client(i: int) -> PartyId:
    return PartyId("client", i)


def server(j: int) -> PartyId:
    return PartyId("server", j)


@dataclass(frozen=True)
class Message:
    """Envelope plus bit-packed payload. Only ``bits`` is charged to the ledger."""

    sender: PartyId
    receiver: PartyId
    protocol: str
    round: int
    n: int
    modulus: int
    payload: bytes

    @classmethod
    def carrying(cls, sender, receiver, vec: FieldVector, protocol: str, round: int = 0) -> "Message":
        return cls(sender, receiver, protocol, round, vec.n, vec.modulus, pack_bits(vec))

    @property
    def bits(self) -> int:
        return self.n * bits_per_element(self.modulus)

    def unpack(self) -> FieldVector:
        return unpack_bits(self.payload, self.n, self.modulus)

    def record(self) -> dict:
        return {
            "round": self.round,
            "protocol": self.protocol,
            "sender": str(self.sender),
            "receiver": str(self.receiver),
            "n": self.n,
            "modulus": self.modulus,
            "bits": self.bits,
            "payload": self.payload.hex(),
        }


@dataclass
class CostLedger:
    links: dict = field(default_factory=lambda: defaultdict(int))
    total_bits: int = 0

    def charge(self, sender: PartyId, receiver: PartyId, bits: int) -> None:
        if bits < 0:
            raise ValueError("negative charge")
        self.links[(sender, receiver)] += bits
        self.total_bits += bits

    def rows(self) -> list[tuple[str, str, int]]:
        return [(str(s), str(r), b) for (s, r), b in sorted(self.links.items())]

    def to_csv(self) -> str:
        lines = ["sender,receiver,bits"]
        lines += [f"{s},{r},{b}" for s, r, b in self.rows()]
        lines.append(f"total,,{self.total_bits}")
        return "\n".join(lines) + "\n"


class RoundTranscript:
    """Append-only, ordered record of every message of a run."""

    def __init__(self, messages: Iterable[Message] = ()):
        self._messages: list[Message] = []
        for m in messages:
            self.append(m)

    def append(self, msg: Message) -> None:
        self._messages.append(msg)

    def extend(self, other: "RoundTranscript") -> None:
        for m in other:
            self.append(m)

    def __iter__(self):
        return iter(self._messages)

    def __len__(self) -> int:
        return len(self._messages)

    def __getitem__(self, i):
        return self._messages[i]

    @property
    def total_bits(self) -> int:
        return sum(m.bits for m in self._messages)

    def bits_by_protocol(self) -> dict[str, int]:
        out: dict[str, int] = defaultdict(int)
        for m in self._messages:
            out[m.protocol] += m.bits
        return dict(out)

    def filter(self, protocol: str) -> "RoundTranscript":
        return RoundTranscript(m for m in self._messages if m.protocol == protocol)

    def ledger(self, envelope_bits: int = 0) -> CostLedger:
        """Per-link totals; ``envelope_bits`` adds a fixed per-message overhead."""
        led = CostLedger()
        for m in self._messages:
            led.charge(m.sender, m.receiver, m.bits + envelope_bits)
        return led

    def to_jsonl(self) -> str:
        return "".join(json.dumps(m.record(), sort_keys=True) + "\n" for m in self._messages)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "RoundTranscript":
        msgs = []
        for line in text.splitlines():
            if not line.strip():
                continue
            r = json.loads(line)
            msgs.append(Message(PartyId.parse(r["sender"]), PartyId.parse(r["receiver"]),
                                r["protocol"], r["round"], r["n"], r["modulus"],
                                bytes.fromhex(r["payload"])))
        return cls(msgs)


class Party(Protocol):
    pid: PartyId

    def step(self, phase: int, inbox: list[Message]) -> list[Message]: ...


def run_protocol(parties: Sequence[Party], schedule: Sequence[Sequence[PartyId]],
                 *, threads: int = 1) -> RoundTranscript:
    """Drive ``parties`` through ``schedule`` with a barrier between phases.

    In phase p every listed party is stepped with the messages delivered to it
    since it last ran. Messages emitted in phase p are delivered only once all
    parties of phase p have finished. Ordering of the transcript is by phase,
    then schedule position, then emission order, whatever ``threads`` is.
    """
    by_id: dict[PartyId, Party] = {}
    for p in parties:
        if p.pid in by_id:
            raise ValueError(f"duplicate party {p.pid}")
        by_id[p.pid] = p
    for phase in schedule:
        for pid in phase:
            if pid not in by_id:
                raise UndeliverableMessage(f"scheduled party {pid} does not exist")

    inbox: dict[PartyId, list[Message]] = {pid: [] for pid in by_id}
    transcript = RoundTranscript()
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for p, phase in enumerate(schedule):
            batches = {pid: inbox[pid] for pid in phase}
            for pid in phase:
                inbox[pid] = []
            work = [(by_id[pid], p, batches[pid]) for pid in phase]
            if pool is None:
                outputs = [party.step(ph, box) for party, ph, box in work]
            else:
                outputs = list(pool.map(lambda w: w[0].step(w[1], w[2]), work))
            later = {pid for ph in schedule[p + 1:] for pid in ph}
            for pid, out in zip(phase, outputs):
                for msg in out or ():
                    if msg.sender != pid:
                        raise ProtocolError(f"{pid} emitted a message claiming sender {msg.sender}")
                    if msg.receiver not in by_id:
                        raise UndeliverableMessage(f"no party {msg.receiver}")
                    if msg.receiver not in later:
                        raise PhaseViolation(
                            f"{msg.receiver} is not scheduled after phase {p}; message would be lost")
                    transcript.append(msg)
                    inbox[msg.receiver].append(msg)
    finally:
        if pool is not None:
            pool.shutdown()
    return transcript


def adversary_view(transcript: Iterable[Message], corrupted: Iterable[PartyId]) -> list[Message]:
    """Messages sent or received by any corrupted party."""
    bad = set(corrupted)
    return [m for m in transcript if m.sender in bad or m.receiver in bad]


def link_bits(transcript: Iterable[Message]) -> Mapping[tuple[str, PartyId, PartyId], int]:
    out: dict = defaultdict(int)
    for m in transcript:
        out[(m.protocol, m.sender, m.receiver)] += m.bits
    return dict(out)
