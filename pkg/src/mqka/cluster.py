"""The sixteen non-maximally entangled cluster states and the nibble encoding rule.

State ids run 1..16 and qubits are labelled 1..4 in this module's public
names (``op2``/``op4``), matching the usual ket notation; internally the
encoding acts on 0-based qubit indices 1 and 3.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .qcore import GATES, TOL, StateVector, apply_gate, fidelity_up_to_phase, inner_product

STATE_IDS = range(1, 17)
NIBBLES = range(16)

# (support kets, signs on the a, b, c, d terms), transcribed ket by ket.
_KETS: dict[int, tuple[tuple[str, str, str, str], str]] = {
    1: (("0000", "0011", "1100", "1111"), "+++-"),
    2: (("0000", "0011", "1100", "1111"), "+-++"),
    3: (("0000", "0011", "1100", "1111"), "++-+"),
    4: (("0000", "0011", "1100", "1111"), "+---"),
    5: (("0001", "0010", "1101", "1110"), "++-+"),
    6: (("0001", "0010", "1101", "1110"), "+---"),
    7: (("0001", "0010", "1101", "1110"), "+++-"),
    8: (("0001", "0010", "1101", "1110"), "+-++"),
    9: (("0100", "0111", "1000", "1011"), "+-++"),
    10: (("0100", "0111", "1000", "1011"), "+++-"),
    11: (("0100", "0111", "1000", "1011"), "+---"),
    12: (("0100", "0111", "1000", "1011"), "++-+"),
    13: (("0101", "0110", "1001", "1010"), "+---"),
    14: (("0101", "0110", "1001", "1010"), "++-+"),
    15: (("0101", "0110", "1001", "1010"), "+-++"),
    16: (("0101", "0110", "1001", "1010"), "+++-"),
}

# key nibble -> (op on qubit 2, op on qubit 4)
ENCODING_RULE: dict[int, tuple[str, str]] = {
    0b0000: ("I", "I"),
    0b0001: ("I", "SZ"),
    0b0010: ("SZ", "I"),
    0b0011: ("SZ", "SZ"),
    0b0100: ("SZ", "SX"),
    0b0101: ("SZ", "ISY"),
    0b0110: ("I", "SX"),
    0b0111: ("I", "ISY"),
    0b1000: ("SX", "SZ"),
    0b1001: ("SX", "I"),
    0b1010: ("ISY", "SZ"),
    0b1011: ("ISY", "I"),
    0b1100: ("ISY", "ISY"),
    0b1101: ("ISY", "SX"),
    0b1110: ("SX", "ISY"),
    0b1111: ("SX", "SX"),
}

# symplectic (x, z) bits of each encoding Pauli
PAULI_BITS: dict[str, tuple[int, int]] = {"I": (0, 0), "SZ": (0, 1), "SX": (1, 0), "ISY": (1, 1)}


@dataclass(frozen=True)
class ClusterParams:
    """Real amplitudes (a, b, c, d) shared by all sixteen states."""

    a: float = 0.5
    b: float = 0.5
    c: float = 0.5
    d: float = 0.5

    def __post_init__(self):
        coeffs = self.as_tuple()
        if not all(np.isfinite(coeffs)):
            raise ValueError("cluster coefficients must be finite")
        for name, value in zip("abcd", coeffs):
            if value < 0:
                raise ValueError(f"cluster coefficient {name} must be non-negative, got {value}")
        total = sum(v * v for v in coeffs)
        if abs(total - 1.0) > TOL:
            raise ValueError(f"a^2+b^2+c^2+d^2 must be 1, got {total:.12g}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)

    @classmethod
    def normalized(cls, a: float, b: float, c: float, d: float) -> "ClusterParams":
        norm = float(np.sqrt(a * a + b * b + c * c + d * d))
        if norm == 0:
            raise ValueError("at least one cluster coefficient must be nonzero")
        return cls(a / norm, b / norm, c / norm, d / norm)


UNIFORM = ClusterParams()
# 0.6^2 + 0.5^2 + 0.4^2 = 0.77, so d = sqrt(0.23) ~ 0.4796
SKEWED = ClusterParams.normalized(0.6, 0.5, 0.4, float(np.sqrt(0.23)))
PRESETS = {"uniform": UNIFORM, "skewed": SKEWED}


def _check_id(state_id: int) -> None:
    if state_id not in STATE_IDS:
        raise ValueError(f"cluster state id must be in 1..16, got {state_id}")


def _check_nibble(nibble: int) -> None:
    if nibble not in NIBBLES:
        raise ValueError(f"key nibble must be in 0..15, got {nibble}")


def support(state_id: int) -> tuple[int, int, int, int]:
    """Computational-basis indices carrying the a, b, c, d terms."""
    _check_id(state_id)
    return tuple(int(k, 2) for k in _KETS[state_id][0])


def make_cluster_state(params: ClusterParams, state_id: int) -> StateVector:
    _check_id(state_id)
    kets, signs = _KETS[state_id]
    amps = np.zeros(16, dtype=complex)
    for ket, sign, coeff in zip(kets, signs, params.as_tuple()):
        amps[int(ket, 2)] = coeff if sign == "+" else -coeff
    return StateVector(amps)


class OpPair(NamedTuple):
    op2: str
    op4: str


def nibble_to_oppair(nibble: int) -> OpPair:
    _check_nibble(nibble)
    return OpPair(*ENCODING_RULE[nibble])


def nibble_symplectic(nibble: int) -> tuple[int, int, int, int]:
    """(x2, z2, x4, z4) of the nibble's operator pair."""
    op2, op4 = nibble_to_oppair(nibble)
    return PAULI_BITS[op2] + PAULI_BITS[op4]


def encode_nibble(state: StateVector, nibble: int) -> StateVector:
    if state.qubit_count != 4:
        raise ValueError(f"encoding needs a 4-qubit state, got {state.qubit_count} qubits")
    op2, op4 = nibble_to_oppair(nibble)
    state = apply_gate(state, GATES[op2], 1)
    return apply_gate(state, GATES[op4], 3)


class Transition(NamedTuple):
    source: int
    nibble: int
    target: int
    phase: complex


class TransitionTable:
    """All 256 (state, nibble) -> (state, phase) transitions for one parameter set."""

    def __init__(self, params: ClusterParams, transitions: dict[tuple[int, int], Transition]):
        self.params = params
        self._by_key = transitions
        self._decode = {(t.source, t.target): t.nibble for t in transitions.values()}

    def __len__(self) -> int:
        return len(self._by_key)

    def __iter__(self):
        return iter(sorted(self._by_key.values()))

    def lookup(self, source: int, nibble: int) -> Transition:
        return self._by_key[(source, nibble)]

    def decode(self, initial: int, final: int) -> int:
        _check_id(initial)
        _check_id(final)
        return self._decode[(initial, final)]


@lru_cache(maxsize=None)
def build_transition_table(params: ClusterParams = UNIFORM) -> TransitionTable:
    """Derive the transition table by applying every operator pair to every state.

    Raises ``ValueError`` when the parameters make two states coincide, since
    the target would then be ambiguous.
    """
    kets = {i: make_cluster_state(params, i) for i in STATE_IDS}
    transitions: dict[tuple[int, int], Transition] = {}
    for source in STATE_IDS:
        for nibble in NIBBLES:
            moved = encode_nibble(kets[source], nibble)
            matches = [j for j in STATE_IDS if abs(fidelity_up_to_phase(kets[j], moved) - 1.0) < TOL]
            if len(matches) != 1:
                raise ValueError(
                    f"state {source} under nibble {nibble:04b} matches {matches}; "
                    "parameters do not separate the cluster states"
                )
            target = matches[0]
            transitions[(source, nibble)] = Transition(source, nibble, target, inner_product(kets[target], moved))
    for source in STATE_IDS:
        targets = {transitions[(source, n)].target for n in NIBBLES}
        if targets != set(STATE_IDS):
            raise ValueError(f"nibble map from state {source} is not a bijection")
    return TransitionTable(params, transitions)


def decode_nibble(initial: int, final: int, params: ClusterParams = UNIFORM) -> int:
    """The nibble that carries ``initial`` to ``final``.

    A run of nibbles encoded in sequence decodes to their XOR.
    """
    return build_transition_table(params).decode(initial, final)


def nibbles_from_bits(bits: np.ndarray) -> list[int]:
    """Split a bit array (length divisible by 4) into nibbles, MSB first."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 4:
        raise ValueError("bit length must be a multiple of 4")
    return [int(b[0]) << 3 | int(b[1]) << 2 | int(b[2]) << 1 | int(b[3]) for b in bits.reshape(-1, 4)]


def bits_from_nibbles(nibbles) -> np.ndarray:
    return np.array([(n >> s) & 1 for n in nibbles for s in (3, 2, 1, 0)], dtype=np.uint8)
