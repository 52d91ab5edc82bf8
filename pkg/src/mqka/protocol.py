"""Ring orchestration of the two key agreement protocols.

``run_original`` circulates qubits 2 and 4 of each party's cluster states and
decodes with the USD POVM; ``run_improved`` circulates single photons shielded
by random Hadamards.  All N circulations advance one hop per round, in
lockstep, which is how the parallel protocol would interleave on a real ring.
Party ids are 0-based throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from . import povm
from .channel import (
    Channel,
    ClassicalMessage,
    MsgKind,
    Photon,
    PhotonSequence,
    QuantumRegistry,
    Role,
)
from .cluster import (
    UNIFORM,
    ClusterParams,
    build_transition_table,
    encode_nibble,
    make_cluster_state,
    nibble_to_oppair,
    nibbles_from_bits,
)
from .qcore import (
    GATES,
    H,
    ISY,
    TOL,
    Basis,
    RandomSource,
    StateVector,
    apply_gate,
    fidelity_up_to_phase,
    label_bits,
)

if TYPE_CHECKING:
    from .adversary import Adversary

log = logging.getLogger(__name__)

DECOY_LABELS = ("0", "1", "+", "-")
ORIGINAL = "original"
IMPROVED = "improved"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending setting."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class InvariantViolation(RuntimeError):
    pass


@dataclass
class ProtocolConfig:
    participants: int = 4
    clusters: int = 8
    photons: int = 32
    decoys_per_hop: int = 16
    error_threshold: float = 0.0
    params: ClusterParams = UNIFORM
    seed: int = 0
    h_shield: bool = True
    audit: bool = False
    keys: Optional[Sequence[Sequence[int]]] = None

    def key_length(self, protocol: str) -> int:
        return 4 * self.clusters if protocol == ORIGINAL else self.photons

    def validate(self, protocol: str) -> None:
        if protocol not in (ORIGINAL, IMPROVED):
            raise ConfigError("protocol", f"unknown protocol {protocol!r}")
        if self.participants < 3:
            raise ConfigError("participants", f"need at least 3 participants, got {self.participants}")
        if protocol == ORIGINAL and self.clusters < 1:
            raise ConfigError("clusters", f"need at least one cluster state, got {self.clusters}")
        if protocol == IMPROVED and self.photons < 1:
            raise ConfigError("photons", f"need at least one photon, got {self.photons}")
        if self.decoys_per_hop < 0:
            raise ConfigError("decoys", f"decoy count must be >= 0, got {self.decoys_per_hop}")
        if not 0.0 <= self.error_threshold < 1.0:
            raise ConfigError("threshold", f"error threshold must be in [0, 1), got {self.error_threshold}")
        if protocol == ORIGINAL:
            try:
                povm.build_usd_povm(self.params, 1)
            except povm.LinearlyDependentError as exc:
                raise ConfigError("params", str(exc)) from exc
        if self.keys is not None:
            if len(self.keys) != self.participants:
                raise ConfigError("keys", f"expected {self.participants} private keys, got {len(self.keys)}")
            want = self.key_length(protocol)
            for i, key in enumerate(self.keys):
                if len(key) != want or any(b not in (0, 1) for b in key):
                    raise ConfigError("keys", f"key {i} must be {want} bits")


@dataclass(frozen=True)
class DecoyEntry:
    """Sender-private record of the decoys padded into one sequence."""

    positions: tuple[int, ...]
    states: tuple[str, ...]

    @property
    def bases(self) -> tuple[Basis, ...]:
        return tuple(b for b, _ in label_bits(self.states))

    @property
    def expected(self) -> tuple[int, ...]:
        return tuple(v for _, v in label_bits(self.states))


def insert_decoys(
    seq: PhotonSequence, count: int, rng: RandomSource, registry: QuantumRegistry
) -> tuple[PhotonSequence, DecoyEntry]:
    if count < 0:
        raise ValueError("decoy count must be non-negative")
    total = len(seq) + count
    positions = rng.positions(total, count)
    states = tuple(DECOY_LABELS[rng.integer(4)] for _ in range(count))
    decoys = iter(states)
    payload = iter(seq.photons)
    slots = set(positions)
    photons = [
        registry.photon(next(decoys), Role.DECOY) if i in slots else next(payload) for i in range(total)
    ]
    return seq.replace(photons), DecoyEntry(positions, states)


def check_decoys(entry: DecoyEntry, results: Sequence[int]) -> float:
    """Fraction of announced decoy results that differ from the prepared states."""
    if len(results) != len(entry.positions):
        raise ValueError("one result per decoy expected")
    if not results:
        return 0.0
    return _mismatches(entry, results) / len(results)


def _mismatches(entry: DecoyEntry, results: Sequence[int]) -> int:
    return sum(int(r != e) for r, e in zip(results, entry.expected))


def strip_decoys(seq: PhotonSequence, positions: Sequence[int]) -> PhotonSequence:
    drop = set(positions)
    return seq.replace([p for i, p in enumerate(seq.photons) if i not in drop])


@dataclass(frozen=True)
class DetectionEvent:
    owner: int
    sender: int
    receiver: int
    round: int
    decoys: int
    errors: int
    offring: bool = False

    @property
    def error_rate(self) -> float:
        return self.errors / self.decoys if self.decoys else 0.0

    @property
    def detected(self) -> bool:
        return self.errors > 0

    def as_dict(self) -> dict:
        return {
            "owner": self.owner,
            "sender": self.sender,
            "receiver": self.receiver,
            "round": self.round,
            "decoys": self.decoys,
            "errors": self.errors,
            "error_rate": self.error_rate,
            "offring": self.offring,
        }


class ProtocolAbort(Exception):
    def __init__(self, event: DetectionEvent):
        super().__init__(f"decoy check failed on hop {event.sender}->{event.receiver}")
        self.event = event


@dataclass
class ParticipantState:
    id: int
    private_key: np.ndarray
    registers: list[int] = field(default_factory=list)  # own cluster registers
    retained: list[list[Photon]] = field(default_factory=list)  # S1, S3
    prepared: list[str] = field(default_factory=list)  # own single-photon labels
    decoy_ledger: list[tuple[int, int, list[DecoyEntry]]] = field(default_factory=list)
    h_choices: dict[int, np.ndarray] = field(default_factory=dict)
    phase: str = "idle"


@dataclass
class RunOutcome:
    protocol: str
    participants: int
    private_keys: list[np.ndarray]
    final_keys: list[Optional[np.ndarray]]
    kept_mask: np.ndarray
    discarded_positions: list[int]
    aborted: bool
    abort_event: Optional[DetectionEvent]
    detection_events: list[DetectionEvent]
    adversary: str = "none"
    adversary_metrics: dict = field(default_factory=dict)
    transcript: list[dict] = field(default_factory=list)

    @property
    def expected_key(self) -> np.ndarray:
        return reduce(np.bitwise_xor, self.private_keys)[self.kept_mask]

    @property
    def agreement(self) -> bool:
        if self.aborted:
            return False
        first = self.final_keys[0]
        return all(np.array_equal(k, first) for k in self.final_keys)

    @property
    def correct(self) -> bool:
        return self.agreement and np.array_equal(self.final_keys[0], self.expected_key)

    @property
    def detected(self) -> bool:
        return any(e.detected for e in self.detection_events)


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


class Ring:
    """One protocol run: parties, channels and the hidden quantum state."""

    def __init__(
        self,
        config: ProtocolConfig,
        protocol: str,
        adversary: "Adversary | None" = None,
        rng: RandomSource | None = None,
    ):
        from .adversary import Adversary

        config.validate(protocol)
        self.config = config
        self.protocol = protocol
        self.n_parties = config.participants
        self.rng = rng if rng is not None else RandomSource(config.seed)
        self.registry = QuantumRegistry()
        self.key_length = config.key_length(protocol)
        self.adversary = adversary if adversary is not None else Adversary()
        self.adversary.bind(self)
        self.channel = Channel(self.n_parties, self.registry, hook=self.adversary.channel_hook)
        if config.keys is not None:
            keys = [np.asarray(k, dtype=np.uint8) for k in config.keys]
        else:
            keys = [self.rng.bits(self.key_length) for _ in range(self.n_parties)]
        self.parties = [ParticipantState(i, k) for i, k in enumerate(keys)]
        self.detections: list[DetectionEvent] = []
        self.round = 0
        # simulator bookkeeping of what each encoder applied; used by audits only
        self._encoded: dict[int, list[np.ndarray]] = {i: [] for i in range(self.n_parties)}

    # -- hop machinery -------------------------------------------------

    def transfer(
        self, owner: int, sender: int, receiver: int, payload: list[PhotonSequence], *, offring: bool = False
    ) -> list[PhotonSequence]:
        """Pad with decoys, send, run the decoy check and strip the decoys.

        Raises :class:`ProtocolAbort` when the error rate exceeds the threshold.
        """
        ch = self.channel
        padded, entries = [], []
        for seq, k in zip(payload, _split(self.config.decoys_per_hop, len(payload))):
            p, e = insert_decoys(seq, k, self.rng, self.registry)
            padded.append(p)
            entries.append(e)
        self.parties[sender].decoy_ledger.append((owner, receiver, entries))
        delivered = [ch.send_quantum(sender, receiver, s, round=self.round, offring=offring) for s in padded]

        ch.send_classical(ClassicalMessage(receiver, sender, MsgKind.ACK, (owner,)))
        ch.send_classical(
            ClassicalMessage(sender, None, MsgKind.DECOY_POSITIONS, tuple(e.positions for e in entries))
        )
        ch.send_classical(
            ClassicalMessage(sender, None, MsgKind.DECOY_BASES, tuple(tuple(b.value for b in e.bases) for e in entries))
        )
        results = [
            tuple(self.registry.measure(seq.photons[pos], basis, self.rng) for pos, basis in zip(e.positions, e.bases))
            for seq, e in zip(delivered, entries)
        ]
        ch.send_classical(ClassicalMessage(receiver, None, MsgKind.DECOY_RESULTS, tuple(results)))

        decoys = sum(len(e.positions) for e in entries)
        errors = sum(_mismatches(e, r) for e, r in zip(entries, results))
        event = DetectionEvent(owner, sender, receiver, self.round, decoys, errors, offring)
        self.detections.append(event)
        if decoys and event.error_rate > self.config.error_threshold:
            raise ProtocolAbort(event)
        return [strip_decoys(seq, e.positions) for seq, e in zip(delivered, entries)]

    # -- preparation and encoding ---------------------------------------

    def _prepare(self, owner: int) -> list[PhotonSequence]:
        party = self.parties[owner]
        if self.protocol == ORIGINAL:
            psi1 = make_cluster_state(self.config.params, 1)
            s1, s2, s3, s4 = [], [], [], []
            for _ in range(self.config.clusters):
                handle = self.registry.allocate(psi1)
                party.registers.append(handle)
                for q, seq in enumerate((s1, s2, s3, s4)):
                    seq.append(Photon(handle, q))
            party.retained = [s1, s3]
            return [PhotonSequence(s2, owner, "S2"), PhotonSequence(s4, owner, "S4")]
        party.prepared = [DECOY_LABELS[self.rng.integer(4)] for _ in range(self.config.photons)]
        photons = [self.registry.photon(label) for label in party.prepared]
        return [PhotonSequence(photons, owner, "S")]

    def encode(self, encoder: int, owner: int, payload: list[PhotonSequence]) -> None:
        party = self.parties[encoder]
        value = np.asarray(self.adversary.encoding_value(self, encoder, owner, party.private_key), dtype=np.uint8)
        self._encoded[owner].append(value)
        if self.protocol == ORIGINAL:
            s2, s4 = payload
            if len(s2) != self.config.clusters or len(s4) != self.config.clusters:
                raise InvariantViolation("payload length changed in transit")
            for p, nibble in enumerate(nibbles_from_bits(value)):
                op2, op4 = nibble_to_oppair(nibble)
                self.registry.apply(s2.photons[p], GATES[op2])
                self.registry.apply(s4.photons[p], GATES[op4])
            return
        (seq,) = payload
        if len(seq) != self.config.photons:
            raise InvariantViolation("payload length changed in transit")
        for photon, bit in zip(seq.photons, value):
            if bit:
                self.registry.apply(photon, ISY)
        if self.config.h_shield:
            choices = self.rng.bits(len(seq)).astype(bool)
        else:
            choices = np.zeros(len(seq), dtype=bool)
        for photon, h in zip(seq.photons, choices):
            if h:
                self.registry.apply(photon, H)
        party.h_choices[owner] = choices

    # -- final measurement ----------------------------------------------

    def _audit_original(self, owner: int) -> None:
        totals = [0] * self.config.clusters
        for value in self._encoded[owner]:
            for p, nb in enumerate(nibbles_from_bits(value)):
                totals[p] ^= nb
        psi1 = make_cluster_state(self.config.params, 1)
        for p, handle in enumerate(self.parties[owner].registers):
            expected = encode_nibble(psi1, totals[p])
            fid = fidelity_up_to_phase(expected, self.registry.ground_truth(handle))
            if abs(fid - 1.0) > TOL:
                raise InvariantViolation(f"owner {owner} cluster {p}: fidelity {fid:.12g} with expected state")

    def _audit_improved(self, owner: int, seq: PhotonSequence) -> None:
        flips = reduce(np.bitwise_xor, self._encoded[owner])
        for photon, label, flip in zip(seq.photons, self.parties[owner].prepared, flips):
            expected = StateVector.from_label(label)
            if flip:
                expected = apply_gate(expected, ISY, 0)
            fid = fidelity_up_to_phase(expected, self.registry.ground_truth(photon.register))
            if abs(fid - 1.0) > TOL:
                raise InvariantViolation(f"owner {owner}: photon fidelity {fid:.12g} after H correction")

    def _finish_original(self, bundles) -> tuple[list, np.ndarray, list[int]]:
        params = self.config.params
        table = build_transition_table(params)
        measured: dict[int, np.ndarray] = {}
        invalid: dict[int, set[int]] = {}
        for owner in range(self.n_parties):
            party = self.parties[owner]
            party.phase = "measuring"
            if self.adversary.takes_over_output(owner):
                invalid[owner] = set(self.adversary.invalid_positions(self, owner))
                continue
            if self.config.audit and not self.adversary.disturbs(owner):
                self._audit_original(owner)
            nibbles, bad = [], set()
            for p, handle in enumerate(party.registers):
                out = self.registry.discriminate(handle, params, self.rng)
                if out.conclusive:
                    nibbles.append(table.decode(1, out.state_id))
                else:
                    nibbles.append(0)
                    bad.add(p)
            measured[owner] = np.array(
                [(nb >> s) & 1 for nb in nibbles for s in (3, 2, 1, 0)], dtype=np.uint8
            )
            invalid[owner] = bad
        for owner in range(self.n_parties):
            self.channel.send_classical(
                ClassicalMessage(owner, None, MsgKind.INVALID_POSITIONS, tuple(sorted(invalid[owner])))
            )
        discarded = sorted(set().union(*invalid.values()))
        kept = np.ones(self.key_length, dtype=bool)
        for p in discarded:
            kept[4 * p : 4 * p + 4] = False
        finals = []
        for owner in range(self.n_parties):
            if owner in measured:
                finals.append((self.parties[owner].private_key ^ measured[owner])[kept])
            else:
                finals.append(self.adversary.final_key(self, owner, kept))
        return finals, kept, discarded

    def _finish_improved(self, bundles) -> tuple[list, np.ndarray, list[int]]:
        # every encoder announces its H positions before anyone measures
        for owner in range(self.n_parties):
            for step in range(1, self.n_parties):
                encoder = (owner + step) % self.n_parties
                choices = self.parties[encoder].h_choices[owner]
                self.channel.send_classical(
                    ClassicalMessage(
                        encoder, None, MsgKind.H_POSITIONS, (owner, tuple(int(i) for i in np.flatnonzero(choices)))
                    )
                )
        kept = np.ones(self.key_length, dtype=bool)
        finals = []
        for owner in range(self.n_parties):
            party = self.parties[owner]
            party.phase = "measuring"
            if self.adversary.takes_over_output(owner):
                finals.append(self.adversary.final_key(self, owner, kept))
                continue
            (seq,) = bundles[owner]
            counts = np.zeros(len(seq), dtype=int)
            for msg in self.channel.received(owner, MsgKind.H_POSITIONS):
                target, positions = msg.payload
                if target == owner:
                    counts[list(positions)] += 1
            for photon, c in zip(seq.photons, counts):
                if c % 2:
                    self.registry.apply(photon, H)
            if self.config.audit and not self.adversary.disturbs(owner):
                self._audit_improved(owner, seq)
            bits = np.zeros(len(seq), dtype=np.uint8)
            for j, (photon, (basis, expect)) in enumerate(zip(seq.photons, label_bits(party.prepared))):
                bits[j] = self.registry.measure(photon, basis, self.rng) ^ expect
            finals.append(party.private_key ^ bits)
        return finals, kept, []

    # -- driver -----------------------------------------------------------

    def run(self) -> RunOutcome:
        n = self.n_parties
        finals: list[Optional[np.ndarray]] = [None] * n
        kept = np.ones(self.key_length, dtype=bool)
        discarded: list[int] = []
        abort_event = None
        try:
            bundles = {owner: self._prepare(owner) for owner in range(n)}
            for r in range(1, n + 1):
                self.round = r
                for owner in range(n):
                    sender, receiver = (owner + r - 1) % n, (owner + r) % n
                    self.parties[receiver].phase = f"round-{r}"
                    payload = self.transfer(owner, sender, receiver, bundles[owner])
                    if receiver != owner:
                        payload = self.adversary.on_payload(self, owner, receiver, payload)
                        self.encode(receiver, owner, payload)
                    bundles[owner] = payload
            if self.protocol == ORIGINAL:
                finals, kept, discarded = self._finish_original(bundles)
            else:
                finals, kept, discarded = self._finish_improved(bundles)
            for party in self.parties:
                party.phase = "done"
        except ProtocolAbort as exc:
            abort_event = exc.event
            log.debug("run aborted: %s", exc)
            for party in self.parties:
                party.phase = "aborted"
        outcome = RunOutcome(
            protocol=self.protocol,
            participants=n,
            private_keys=[p.private_key for p in self.parties],
            final_keys=finals,
            kept_mask=kept,
            discarded_positions=discarded,
            aborted=abort_event is not None,
            abort_event=abort_event,
            detection_events=list(self.detections),
            adversary=self.adversary.name,
            transcript=self.channel.transcript,
        )
        outcome.adversary_metrics = self.adversary.metrics(self, outcome)
        return outcome


def run_original(
    config: ProtocolConfig, adversary: "Adversary | None" = None, rng: RandomSource | None = None
) -> RunOutcome:
    return Ring(config, ORIGINAL, adversary, rng).run()


def run_improved(
    config: ProtocolConfig, adversary: "Adversary | None" = None, rng: RandomSource | None = None
) -> RunOutcome:
    return Ring(config, IMPROVED, adversary, rng).run()


def decoy_hop_trial(
    decoys: int,
    rng: RandomSource,
    hook=None,
) -> DetectionEvent:
    """A single decoy-protected hop carrying no payload, for detection statistics."""
    registry = QuantumRegistry()
    channel = Channel(2, registry, hook=hook)
    padded, entry = insert_decoys(PhotonSequence([], 0), decoys, rng, registry)
    delivered = channel.send_quantum(0, 1, padded)
    results = [registry.measure(delivered.photons[pos], b, rng) for pos, b in zip(entry.positions, entry.bases)]
    return DetectionEvent(0, 0, 1, 1, decoys, _mismatches(entry, results))
