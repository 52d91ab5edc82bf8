"""Adversaries: the colluding-insider attack and an intercept-resend eavesdropper.

An :class:`Adversary` is consulted by :class:`~mqka.protocol.Ring` at four
points: on every quantum send (``channel_hook``), when a party it controls
receives a payload, when such a party encodes, and when the final keys are
produced.  Attack logic only sees what its parties legitimately hold;
ground-truth keys are read in :meth:`Adversary.metrics` alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import TYPE_CHECKING, Optional

import numpy as np

from .channel import Channel, PhotonSequence
from .cluster import bits_from_nibbles, decode_nibble, make_cluster_state
from .qcore import Basis, RandomSource, label_bits

if TYPE_CHECKING:
    from .protocol import Ring, RunOutcome


class AttackError(RuntimeError):
    """The attack could not be carried out as planned."""


class Adversary:
    """The absent adversary; every method is the honest behaviour."""

    name = "none"
    colluders: frozenset[int] = frozenset()
    channel_hook = None

    def bind(self, ring: "Ring") -> None:
        # own stream so the honest parties' draws are unchanged by the adversary
        self.rng = ring.rng.spawn()

    def disturbs(self, owner: int) -> bool:
        return False

    def on_payload(self, ring: "Ring", owner: int, holder: int, payload: list[PhotonSequence]):
        return payload

    def encoding_value(self, ring: "Ring", encoder: int, owner: int, key: np.ndarray) -> np.ndarray:
        return key

    def takes_over_output(self, owner: int) -> bool:
        return False

    def invalid_positions(self, ring: "Ring", owner: int) -> set[int]:
        return set()

    def final_key(self, ring: "Ring", owner: int, kept: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def metrics(self, ring: "Ring", outcome: "RunOutcome") -> dict:
        return {}


class InterceptResendEve(Adversary):
    """Outside eavesdropper measuring transiting photons in a random basis."""

    name = "intercept-resend"

    def __init__(self, fraction: float = 1.0, rng: RandomSource | None = None):
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"fraction must be in [0, 1], got {fraction}")
        self.fraction = fraction
        self.intercepted = 0
        # replaced by a stream derived from the ring when bound to a run
        self.rng = rng if rng is not None else RandomSource(0)

    def disturbs(self, owner: int) -> bool:
        return self.fraction > 0

    def channel_hook(self, channel: Channel, sender: int, receiver: int, seq: PhotonSequence) -> PhotonSequence:
        for photon in seq.photons:
            if self.rng.random() < self.fraction:
                basis = Basis.Z if self.rng.bit() == 0 else Basis.X
                channel.registry.measure(photon, basis, self.rng)
                self.intercepted += 1
        return seq

    def metrics(self, ring: "Ring", outcome: "RunOutcome") -> dict:
        return {"intercepted_photons": self.intercepted, "fraction": self.fraction}


def antipodal_colluders(participants: int, anchor: int = 0) -> tuple[int, ...]:
    """Colluder set: an antipodal pair for even rings, the odd-ring triple otherwise."""
    n = participants
    if n < 3:
        raise ValueError("need at least 3 participants")
    if n % 2 == 0:
        members = (anchor, n // 2 + anchor)
    else:
        members = (anchor, (n - 1) // 2 + anchor, (n + 1) // 2 + anchor)
    return tuple(sorted({m % n for m in members}))


@dataclass(frozen=True)
class CollusionPlan:
    participants: int
    colluders: tuple[int, ...]
    target_key: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "colluders", tuple(sorted(set(self.colluders))))
        valid = {antipodal_colluders(self.participants, a) for a in range(self.participants)}
        if self.colluders not in valid:
            raise ValueError(
                f"colluders {list(self.colluders)} do not form the antipodal pattern for N={self.participants}"
            )

    @classmethod
    def antipodal(cls, participants: int, anchor: int = 0, target_key=None) -> "CollusionPlan":
        key = None if target_key is None else np.asarray(target_key, dtype=np.uint8)
        return cls(participants, antipodal_colluders(participants, anchor), key)


class CollusionAttack(Adversary):
    """Colluders reroute each other's sequences to learn keys, then fix the final key.

    Every colluder-owned sequence is handed back to its owner by the next
    colluder along the ring, after the honest parties in between have encoded.
    The owner measures it, learning the XOR of that segment's keys, and puts it
    back into circulation.  Once all segments are known the colluders hold the
    XOR of every honest key, and the last colluder to encode on an honest
    owner's sequence encodes the correction that turns the owner's result into
    the target key.
    """

    name = "collusion"

    def __init__(self, plan: CollusionPlan):
        self.plan = plan
        self.colluders = frozenset(plan.colluders)
        n = plan.participants
        ordered = sorted(self.colluders)
        self._segment: dict[int, tuple[int, list[int]]] = {}
        for k, c in enumerate(ordered):
            nxt = ordered[(k + 1) % len(ordered)]
            honest = [(c + s) % n for s in range(1, (nxt - c) % n or n)]
            self._segment[c] = (nxt, honest)
        self._injector: dict[int, int] = {}
        for owner in range(n):
            if owner in self.colluders:
                continue
            path = [(owner + s) % n for s in range(1, n)]
            self._injector[owner] = [p for p in path if p in self.colluders][-1]
        self._guess: dict[int, np.ndarray] = {}
        self._known: dict[int, np.ndarray] = {}
        self.target: Optional[np.ndarray] = None

    def bind(self, ring: "Ring") -> None:
        super().bind(ring)
        if ring.n_parties != self.plan.participants:
            raise AttackError(f"plan is for {self.plan.participants} parties, ring has {ring.n_parties}")
        if self.plan.target_key is None:
            self.target = self.rng.bits(ring.key_length)
        else:
            self.target = np.asarray(self.plan.target_key, dtype=np.uint8)
            if self.target.size != ring.key_length:
                raise AttackError(f"target key has {self.target.size} bits, final key has {ring.key_length}")
        for c, (_, honest) in self._segment.items():
            if not honest:
                # empty segment: its XOR is known to be zero
                self._guess[c] = np.zeros(ring.key_length, dtype=np.uint8)
                self._known[c] = np.ones(ring.key_length, dtype=bool)

    def disturbs(self, owner: int) -> bool:
        return owner in self.colluders

    def takes_over_output(self, owner: int) -> bool:
        return owner in self.colluders

    def on_payload(self, ring, owner, holder, payload):
        if owner not in self.colluders or owner in self._guess:
            return payload
        if holder != self._segment[owner][0]:
            return payload
        payload = ring.transfer(owner, holder, owner, payload, offring=True)
        if ring.protocol == "original":
            self._read_clusters(ring, owner)
        else:
            self._read_photons(ring, owner, payload)
        return ring.transfer(owner, owner, holder, payload, offring=True)

    def _read_clusters(self, ring: "Ring", owner: int) -> None:
        params = ring.config.params
        nibbles, known = [], []
        for handle in ring.parties[owner].registers:
            out = ring.registry.discriminate(handle, params, self.rng)
            if out.conclusive:
                nibbles.append(decode_nibble(1, out.state_id, params))
                known.append(True)
                # the owner now knows the state and re-prepares it before re-injection
                ring.registry.prepare(handle, make_cluster_state(params, out.state_id))
            else:
                nibbles.append(0)
                known.append(False)
                ring.registry.prepare(handle, make_cluster_state(params, 1))
        self._guess[owner] = bits_from_nibbles(nibbles)
        self._known[owner] = np.repeat(np.array(known, dtype=bool), 4)

    def _read_photons(self, ring: "Ring", owner: int, payload) -> None:
        (seq,) = payload
        prepared = label_bits(ring.parties[owner].prepared)
        guess = np.array(
            [ring.registry.measure(ph, basis, self.rng) ^ expect for ph, (basis, expect) in zip(seq.photons, prepared)],
            dtype=np.uint8,
        )
        self._guess[owner] = guess
        self._known[owner] = np.ones(guess.size, dtype=bool)

    def encoding_value(self, ring, encoder, owner, key):
        if encoder not in self.colluders or self._injector.get(owner) != encoder:
            return key
        missing = [c for c in self._segment if c not in self._guess]
        if missing:
            raise AttackError(f"injection for owner {owner} before segments {missing} were read")
        honest_xor = reduce(np.bitwise_xor, self._guess.values())
        others = [ring.parties[c].private_key for c in self.colluders if c != encoder]
        return reduce(np.bitwise_xor, others, self.target ^ honest_xor)

    def invalid_positions(self, ring, owner):
        known = self._known.get(owner)
        if known is None:
            return set()
        return {int(p) for p in np.flatnonzero(~known.reshape(-1, 4).all(axis=1))}

    def final_key(self, ring, owner, kept):
        return self.target[kept]

    def metrics(self, ring, outcome):
        keys = outcome.private_keys
        correct = total = 0
        for c, (_, honest) in self._segment.items():
            if not honest or c not in self._guess:
                continue
            truth = reduce(np.bitwise_xor, (keys[h] for h in honest))
            known = self._known[c]
            correct += int(np.sum(self._guess[c][known] == truth[known]))
            total += int(known.sum())
        honest_parties = [p for p in range(outcome.participants) if p not in self.colluders]
        success = not outcome.aborted and all(
            np.array_equal(outcome.final_keys[p], self.target[outcome.kept_mask]) for p in honest_parties
        )
        return {
            "colluders": sorted(self.colluders),
            "target_key": "".join(str(int(b)) for b in self.target),
            "extracted_bits": total,
            "extraction_accuracy": correct / total if total else None,
            "manipulation_success": bool(success),
            "detected": outcome.detected,
        }


def collusion_attack_original(plan: CollusionPlan) -> CollusionAttack:
    return CollusionAttack(plan)


def collusion_attack_improved(plan: CollusionPlan) -> CollusionAttack:
    return CollusionAttack(plan)


def intercept_resend_eve(fraction: float, rng: RandomSource | None = None) -> InterceptResendEve:
    return InterceptResendEve(fraction, rng)
