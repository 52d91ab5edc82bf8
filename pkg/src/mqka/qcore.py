"""Minimal state-vector simulator.

Qubits are indexed from 0 internally, with qubit 0 the leftmost symbol of a
ket (so particle labels 1..4 map to indices 0..3).  All
randomness is drawn from an explicit :class:`RandomSource`.
"""

from __future__ import annotations

import enum
from typing import NamedTuple, Sequence

import numpy as np

TOL = 1e-9

_SQRT1_2 = 1.0 / np.sqrt(2.0)


class RandomSource:
    """Seeded random stream; identical seeds give identical draw sequences."""

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF)
        self._gen = np.random.Generator(np.random.PCG64(self._seq))

    @property
    def seed(self) -> int:
        return int(self._seq.entropy)

    @classmethod
    def for_trial(cls, seed: int, trial: int) -> "RandomSource":
        """Independent stream for trial ``trial`` of a run seeded with ``seed``."""
        return cls(np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=(int(trial),)))

    def spawn(self) -> "RandomSource":
        return RandomSource(self._seq.spawn(1)[0])

    def random(self) -> float:
        return float(self._gen.random())

    def bit(self) -> int:
        return int(self._gen.integers(0, 2))

    def bits(self, n: int) -> np.ndarray:
        return self._gen.integers(0, 2, size=n, dtype=np.uint8)

    def integer(self, high: int) -> int:
        """Uniform integer in ``[0, high)``."""
        return int(self._gen.integers(0, high))

    def positions(self, total: int, k: int) -> tuple[int, ...]:
        """Sorted uniform sample of ``k`` distinct indices from ``range(total)``."""
        if k == 0:
            return ()
        return tuple(sorted(int(i) for i in self._gen.choice(total, size=k, replace=False)))


class Basis(enum.Enum):
    Z = "Z"
    X = "X"


class Gate(NamedTuple):
    name: str
    matrix: np.ndarray


def _frozen(rows) -> np.ndarray:
    m = np.array(rows, dtype=complex)
    m.setflags(write=False)
    return m


I = Gate("I", _frozen([[1, 0], [0, 1]]))
SZ = Gate("SZ", _frozen([[1, 0], [0, -1]]))
SX = Gate("SX", _frozen([[0, 1], [1, 0]]))
# i*sigma_y = |0><1| - |1><0|
ISY = Gate("ISY", _frozen([[0, 1], [-1, 0]]))
H = Gate("H", _frozen([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]]))

GATES: dict[str, Gate] = {g.name: g for g in (I, SZ, SX, ISY, H)}


class StateVector:
    """Unit-norm amplitude vector over ``qubit_count`` qubits."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes, *, normalize: bool = False, _checked: bool = True):
        amps = np.array(amplitudes, dtype=complex).ravel()
        if _checked:
            size = amps.size
            if size < 2 or size & (size - 1):
                raise ValueError(f"amplitude count must be a power of two >= 2, got {size}")
            if not np.all(np.isfinite(amps)):
                raise ValueError("amplitudes must be finite")
            norm = np.linalg.norm(amps)
            if normalize:
                if norm < TOL:
                    raise ValueError("cannot normalize the zero vector")
                amps = amps / norm
            elif abs(norm * norm - 1.0) > TOL:
                raise ValueError(f"state is not normalized (squared norm {norm * norm:.12g})")
        self.amplitudes = amps

    @classmethod
    def _raw(cls, amps: np.ndarray) -> "StateVector":
        return cls(amps, _checked=False)

    @classmethod
    def from_label(cls, label: str) -> "StateVector":
        """Product state from a string over ``0 1 + -``, e.g. ``"0+1"``."""
        single = {
            "0": (1.0, 0.0),
            "1": (0.0, 1.0),
            "+": (_SQRT1_2, _SQRT1_2),
            "-": (_SQRT1_2, -_SQRT1_2),
        }
        if not label or any(ch not in single for ch in label):
            raise ValueError(f"bad state label {label!r}")
        amps = np.array(single[label[0]], dtype=complex)
        for ch in label[1:]:
            amps = np.kron(amps, np.array(single[ch], dtype=complex))
        return cls._raw(amps)

    @property
    def qubit_count(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __mul__(self, scalar: complex) -> "StateVector":
        if abs(abs(scalar) - 1.0) > TOL:
            raise ValueError("only unit-modulus scalars keep the state normalized")
        return StateVector._raw(self.amplitudes * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "StateVector":
        return StateVector._raw(-self.amplitudes)

    def allclose(self, other: "StateVector", tol: float = TOL) -> bool:
        return self.amplitudes.shape == other.amplitudes.shape and bool(
            np.allclose(self.amplitudes, other.amplitudes, atol=tol, rtol=0)
        )

    def __repr__(self) -> str:
        n = self.qubit_count
        terms = [
            f"({amp.real:+.4g}{amp.imag:+.4g}j)|{idx:0{n}b}>"
            for idx, amp in enumerate(self.amplitudes)
            if abs(amp) > TOL
        ]
        return "StateVector(" + " ".join(terms) + ")"


def _check_index(state: StateVector, qubit: int) -> None:
    if not 0 <= qubit < state.qubit_count:
        raise IndexError(f"qubit {qubit} out of range for {state.qubit_count}-qubit state")


def _split_axes(state: StateVector, qubit: int) -> np.ndarray:
    """View amplitudes as (left, target qubit, right)."""
    n = state.qubit_count
    return state.amplitudes.reshape(1 << qubit, 2, 1 << (n - 1 - qubit))


def apply_matrix(state: StateVector, matrix: np.ndarray, qubit: int) -> StateVector:
    _check_index(state, qubit)
    psi = np.matmul(matrix, _split_axes(state, qubit))
    return StateVector._raw(psi.reshape(-1))


def apply_gate(state: StateVector, gate: Gate, qubit: int) -> StateVector:
    return apply_matrix(state, gate.matrix, qubit)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    return StateVector._raw(np.kron(a.amplitudes, b.amplitudes))


def _check_dims(a: StateVector, b: StateVector) -> None:
    if a.amplitudes.size != b.amplitudes.size:
        raise ValueError(f"dimension mismatch: {a.qubit_count} vs {b.qubit_count} qubits")


def inner_product(a: StateVector, b: StateVector) -> complex:
    """``<a|b>``, conjugate-linear in ``a``."""
    _check_dims(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity_up_to_phase(a: StateVector, b: StateVector) -> float:
    return abs(inner_product(a, b)) ** 2


# rows are the outcome-0 and outcome-1 eigenvectors
_BASIS_VECTORS = {
    Basis.Z: np.array([[1, 0], [0, 1]], dtype=complex),
    Basis.X: np.array([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]], dtype=complex),
}


def _components(state: StateVector, qubit: int, basis: Basis) -> np.ndarray:
    """(left, outcome, right) array of <b_k| applied to the target qubit."""
    _check_index(state, qubit)
    return np.matmul(_BASIS_VECTORS[basis].conj(), _split_axes(state, qubit))


def measure_qubit(
    state: StateVector, qubit: int, basis: Basis, rng: RandomSource
) -> tuple[int, StateVector]:
    """Projective measurement of one qubit.

    Outcome 0 means ``|0>`` (Z basis) or ``|+>`` (X basis).  Returns the
    outcome and the normalized post-measurement state.
    """
    comp = _components(state, qubit, basis)
    p1 = min(max(float(np.vdot(comp[:, 1, :], comp[:, 1, :]).real), 0.0), 1.0)
    outcome = 1 if rng.random() < p1 else 0
    rest = comp[:, outcome, :]
    rest = rest / np.sqrt(np.vdot(rest, rest).real)
    post = _BASIS_VECTORS[basis][outcome][None, :, None] * rest[:, None, :]
    return outcome, StateVector._raw(post.reshape(-1))


def born_probabilities(state: StateVector, qubit: int, basis: Basis) -> tuple[float, float]:
    """Outcome probabilities of :func:`measure_qubit` without sampling."""
    comp = _components(state, qubit, basis)
    p1 = float(np.vdot(comp[:, 1, :], comp[:, 1, :]).real)
    return 1.0 - p1, p1


def is_unitary(matrix: np.ndarray, tol: float = TOL) -> bool:
    m = np.asarray(matrix)
    return bool(np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=tol, rtol=0))


def random_state(qubits: int, rng: RandomSource) -> StateVector:
    """Random normalized state with uniformly drawn components; for property tests."""
    dim = 1 << qubits
    re = np.array([rng.random() for _ in range(dim)]) - 0.5
    im = np.array([rng.random() for _ in range(dim)]) - 0.5
    return StateVector(re + 1j * im, normalize=True)


def label_bits(labels: Sequence[str]) -> list[tuple[Basis, int]]:
    """Map single-photon labels ``0 1 + -`` to (basis, eigen-outcome)."""
    table = {"0": (Basis.Z, 0), "1": (Basis.Z, 1), "+": (Basis.X, 0), "-": (Basis.X, 1)}
    return [table[label] for label in labels]
