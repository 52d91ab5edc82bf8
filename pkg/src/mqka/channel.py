"""Ring channels: a lossless quantum channel and an ideal authenticated classical one.

Photons never carry amplitudes themselves.  Each photon is a handle into a
:class:`QuantumRegistry` register plus a qubit index, so the two circulating
qubits of a cluster state act on the one shared 4-qubit register.  Protocol
code can only touch hidden state through the registry's gate and measurement
methods.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import povm
from .cluster import ClusterParams
from .qcore import Basis, Gate, RandomSource, StateVector, apply_gate, measure_qubit


class Role(enum.Enum):
    DECOY = "decoy"
    PAYLOAD = "payload"


@dataclass(frozen=True)
class Photon:
    register: int
    qubit: int = 0
    role: Role = Role.PAYLOAD


@dataclass
class PhotonSequence:
    photons: list[Photon]
    origin: int
    label: str = "S"
    round_tag: int = 0

    def __len__(self) -> int:
        return len(self.photons)

    def replace(self, photons: list[Photon]) -> "PhotonSequence":
        return PhotonSequence(photons, self.origin, self.label, self.round_tag)


class QuantumRegistry:
    """Owner of every hidden state in one simulated run."""

    def __init__(self):
        self._registers: dict[int, StateVector] = {}

    def __len__(self) -> int:
        return len(self._registers)

    def allocate(self, state: StateVector) -> int:
        handle = len(self._registers)
        self._registers[handle] = state
        return handle

    def photon(self, label: str, role: Role = Role.PAYLOAD) -> Photon:
        """Fresh single photon prepared in ``0``, ``1``, ``+`` or ``-``."""
        return Photon(self.allocate(StateVector.from_label(label)), 0, role)

    def apply(self, photon: Photon, gate: Gate) -> None:
        reg = self._registers[photon.register]
        self._registers[photon.register] = apply_gate(reg, gate, photon.qubit)

    def measure(self, photon: Photon, basis: Basis, rng: RandomSource) -> int:
        outcome, post = measure_qubit(self._registers[photon.register], photon.qubit, basis, rng)
        self._registers[photon.register] = post
        return outcome

    def discriminate(
        self, register: int, params: ClusterParams, rng: RandomSource
    ) -> povm.DiscriminationOutcome:
        """USD measurement of a whole 4-qubit register by the party holding all of it."""
        return povm.discriminate(self._registers[register], params, rng, strict=False)

    def prepare(self, register: int, state: StateVector) -> None:
        """Overwrite a register with a state its holder prepares from classical knowledge."""
        if state.qubit_count != self._registers[register].qubit_count:
            raise ValueError("prepared state has the wrong qubit count")
        self._registers[register] = state

    def ground_truth(self, register: int) -> StateVector:
        """Hidden state, for audits and metrics only; protocol logic must not call this."""
        return self._registers[register]


# (channel, sender, receiver, sequence) -> delivered sequence
AdversaryHook = Callable[["Channel", int, int, PhotonSequence], PhotonSequence]


class MsgKind(enum.Enum):
    ACK = "Ack"
    DECOY_POSITIONS = "DecoyPositions"
    DECOY_BASES = "DecoyBases"
    DECOY_RESULTS = "DecoyResults"
    H_POSITIONS = "HPositions"
    INVALID_POSITIONS = "InvalidPositions"


@dataclass(frozen=True)
class ClassicalMessage:
    sender: int
    receiver: Optional[int]  # None: public broadcast
    kind: MsgKind
    payload: tuple = ()


@dataclass
class Channel:
    """Quantum and classical delivery on a ring of ``participants`` parties (0-based ids)."""

    participants: int
    registry: QuantumRegistry
    hook: Optional[AdversaryHook] = None
    transcript: list[dict] = field(default_factory=list)
    inboxes: dict[int, list[ClassicalMessage]] = field(default_factory=dict)

    def successor(self, party: int) -> int:
        return (party + 1) % self.participants

    def _check_party(self, party: int) -> None:
        if not 0 <= party < self.participants:
            raise ValueError(f"party {party} outside ring of {self.participants}")

    def send_quantum(self, sender: int, receiver: int, seq: PhotonSequence, **meta) -> PhotonSequence:
        self._check_party(sender)
        self._check_party(receiver)
        if sender == receiver:
            raise ValueError("quantum send to self")
        delivered = self.hook(self, sender, receiver, seq) if self.hook else seq
        self.transcript.append(
            {
                "type": "quantum",
                "from": sender,
                "to": receiver,
                "origin": seq.origin,
                "label": seq.label,
                "length": len(seq),
                **meta,
            }
        )
        return delivered

    def send_classical(self, msg: ClassicalMessage) -> None:
        self._check_party(msg.sender)
        receivers: Iterable[int]
        if msg.receiver is None:
            receivers = range(self.participants)
        else:
            self._check_party(msg.receiver)
            receivers = (msg.receiver,)
        for r in receivers:
            self.inboxes.setdefault(r, []).append(msg)
        self.transcript.append(
            {
                "type": "classical",
                "from": msg.sender,
                "to": msg.receiver,
                "kind": msg.kind.value,
                "payload": _jsonable(msg.payload),
            }
        )

    def received(self, party: int, kind: MsgKind | None = None) -> list[ClassicalMessage]:
        msgs = self.inboxes.get(party, [])
        return [m for m in msgs if kind is None or m.kind is kind]


def _jsonable(obj):
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    if hasattr(obj, "item"):
        return obj.item()
    return obj
