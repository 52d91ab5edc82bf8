"""Unambiguous discrimination of the sixteen cluster states.

Measurement happens in two stages.  A projective parity measurement of
(q1 xor q2, q3 xor q4) picks one of four families, each spanned by four
computational-basis kets.  Inside the family the four states are linearly
independent but, for unequal amplitudes, not orthogonal, so a reciprocal-basis
USD POVM is used: it never misidentifies a state and pays for that with an
inconclusive outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .cluster import ClusterParams, make_cluster_state, support
from .qcore import TOL, RandomSource, StateVector

# parity signature (q1^q2, q3^q4) -> family id
FAMILY_BY_PARITY = {(0, 0): 1, (0, 1): 2, (1, 0): 3, (1, 1): 4}


class LinearlyDependentError(ValueError):
    """The family states are not linearly independent for these parameters."""


def family_members(family: int) -> tuple[int, int, int, int]:
    if family not in (1, 2, 3, 4):
        raise ValueError(f"family must be in 1..4, got {family}")
    first = 4 * (family - 1) + 1
    return tuple(range(first, first + 4))


def family_indices(family: int) -> tuple[int, ...]:
    """Computational-basis indices spanning the family subspace (sorted)."""
    return tuple(sorted(support(family_members(family)[0])))


def family_of_index(index: int) -> int:
    q = [(index >> s) & 1 for s in (3, 2, 1, 0)]
    return FAMILY_BY_PARITY[(q[0] ^ q[1], q[2] ^ q[3])]


_FAMILY_OF_INDEX = np.array([family_of_index(i) for i in range(16)])


def family_of_state(state_id: int) -> int:
    return family_of_index(support(state_id)[0])


def family_weights(state: StateVector) -> np.ndarray:
    """Probability of each family outcome (index 0 is family 1)."""
    probs = np.abs(state.amplitudes) ** 2
    return np.array([probs[_FAMILY_OF_INDEX == f].sum() for f in (1, 2, 3, 4)])


def identify_family(
    state: StateVector, rng: RandomSource, *, strict: bool = True
) -> tuple[int, StateVector]:
    """Projective parity measurement selecting the family subspace.

    With ``strict`` (the default) a state spread over several families is
    rejected, since no honest protocol state has that form.  The protocol
    runner passes ``strict=False`` so states disturbed by an eavesdropper are
    measured physically instead.
    """
    if state.qubit_count != 4:
        raise ValueError(f"family measurement needs 4 qubits, got {state.qubit_count}")
    weights = family_weights(state)
    if strict and weights.max() < 1.0 - TOL:
        raise ValueError(f"state has support across families (weights {np.round(weights, 6)})")
    u = rng.random()
    family = int(np.searchsorted(np.cumsum(weights), u, side="right")) + 1
    family = min(family, 4)
    while weights[family - 1] <= 0:  # guard against u landing past a zero-weight tail
        family -= 1
    keep = _FAMILY_OF_INDEX == family
    post = np.where(keep, state.amplitudes, 0)
    return family, StateVector(post, normalize=True)


@dataclass(frozen=True)
class UsdPovm:
    family: int
    params: ClusterParams
    conclusive: dict[int, np.ndarray]
    inconclusive: np.ndarray
    scale: float
    projector: np.ndarray = field(repr=False)

    def elements(self) -> list[np.ndarray]:
        return [*self.conclusive.values(), self.inconclusive]

    def probabilities(self, state: StateVector) -> dict[Optional[int], float]:
        """Outcome probabilities <psi|E|psi>; key ``None`` is the inconclusive outcome."""
        psi = state.amplitudes
        out: dict[Optional[int], float] = {
            sid: float(np.real(np.vdot(psi, e @ psi))) for sid, e in self.conclusive.items()
        }
        out[None] = float(np.real(np.vdot(psi, self.inconclusive @ psi)))
        return out

    def completeness_residual(self) -> float:
        """Operator norm of (family projector - sum of elements)."""
        return float(np.linalg.norm(self.projector - sum(self.elements()), ord=2))

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh(e).min()) for e in self.elements())

    def conclusive_probability(self, state_id: int) -> float:
        return self.probabilities(make_cluster_state(self.params, state_id))[state_id]


def clamp_psd(matrix: np.ndarray, tol: float = TOL) -> np.ndarray:
    """Zero eigenvalues in (-tol, 0); larger negative ones are left to fail PSD checks."""
    herm = (matrix + matrix.conj().T) / 2
    vals, vecs = np.linalg.eigh(herm)
    vals = np.where((vals < 0) & (vals > -tol), 0.0, vals)
    return (vecs * vals) @ vecs.conj().T


def is_psd(matrix: np.ndarray, tol: float = TOL) -> bool:
    herm = (matrix + matrix.conj().T) / 2
    return bool(np.linalg.eigvalsh(herm).min() >= -tol)


@lru_cache(maxsize=None)
def build_usd_povm(params: ClusterParams, family: int) -> UsdPovm:
    """Reciprocal-basis USD POVM for one family.

    Each conclusive element is proportional to the projector onto the dual
    vector of one family state; a single scale, the largest keeping the
    inconclusive remainder positive semidefinite, is shared by all four.
    """
    for name, value in zip("abcd", params.as_tuple()):
        if value <= TOL:
            raise LinearlyDependentError(
                f"coefficient {name}={value:g} is not positive; family states are linearly dependent"
            )
    members = family_members(family)
    idx = list(family_indices(family))
    # columns: family states restricted to the family subspace
    states = np.column_stack([make_cluster_state(params, sid).amplitudes[idx] for sid in members])
    if abs(np.linalg.det(states)) <= TOL:
        raise LinearlyDependentError(f"family {family} states are linearly dependent")
    duals = np.linalg.inv(states).conj().T  # <dual_i|state_j> = delta_ij
    units = duals / np.linalg.norm(duals, axis=0)
    frame = units @ units.conj().T
    scale = 1.0 / float(np.linalg.eigvalsh(frame).max())

    projector = np.zeros((16, 16), dtype=complex)
    projector[idx, idx] = 1.0
    conclusive = {}
    for k, sid in enumerate(members):
        elem = np.zeros((16, 16), dtype=complex)
        elem[np.ix_(idx, idx)] = scale * np.outer(units[:, k], units[:, k].conj())
        conclusive[sid] = elem
    remainder = clamp_psd(projector - sum(conclusive.values()))
    return UsdPovm(family, params, conclusive, remainder, scale, projector)


@dataclass(frozen=True)
class DiscriminationOutcome:
    state_id: Optional[int]

    @property
    def conclusive(self) -> bool:
        return self.state_id is not None

    def __str__(self) -> str:
        return f"Conclusive({self.state_id})" if self.conclusive else "Inconclusive"


INCONCLUSIVE = DiscriminationOutcome(None)


def povm_measure(state: StateVector, povm: UsdPovm, rng: RandomSource) -> DiscriminationOutcome:
    probs = povm.probabilities(state)
    keys = list(probs)
    weights = np.clip(np.array([probs[k] for k in keys]), 0.0, None)
    total = weights.sum()
    u = rng.random() * total
    pick = min(int(np.searchsorted(np.cumsum(weights), u, side="right")), len(keys) - 1)
    return DiscriminationOutcome(keys[pick])


def discriminate(
    state: StateVector, params: ClusterParams, rng: RandomSource, *, strict: bool = True
) -> DiscriminationOutcome:
    family, projected = identify_family(state, rng, strict=strict)
    return povm_measure(projected, build_usd_povm(params, family), rng)


def conclusive_probability(params: ClusterParams) -> float:
    """Closed form for this construction: 4 * min(a^2, b^2, c^2, d^2)."""
    return 4.0 * min(v * v for v in params.as_tuple())
