"""One- and two-photon polarization states in the Jones formalism.

States are plain numpy arrays: a Jones vector is shape ``(2,)`` over
``(H, V)``, a two-photon state is shape ``(4,)`` over ``(HH, HV, VH, VV)``
and density matrices are ``(4, 4)``. Global phase is never tracked, so
state comparisons go through :func:`same_state`.
"""

from __future__ import annotations

import enum
import warnings
from typing import NamedTuple

import numpy as np

JonesVector = np.ndarray
JonesMatrix = np.ndarray
TwoPhotonState = np.ndarray
DensityMatrix = np.ndarray

UNITARY_ATOL = 1e-8
NORM_ATOL = 1e-12

SQRT1_2 = 1.0 / np.sqrt(2.0)

H = np.array([1.0, 0.0], dtype=complex)
V = np.array([0.0, 1.0], dtype=complex)
D = np.array([SQRT1_2, SQRT1_2], dtype=complex)  # |+>
A = np.array([SQRT1_2, -SQRT1_2], dtype=complex)  # |->
R = np.array([SQRT1_2, 1j * SQRT1_2], dtype=complex)  # +1 eigenstate of sigma_y
L = np.array([SQRT1_2, -1j * SQRT1_2], dtype=complex)

I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class BellKind(enum.Enum):
    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"


class Slot(enum.IntEnum):
    A = 0
    B = 1


class MeasurementBasis(NamedTuple):
    """Two orthonormal Jones vectors; outcome k projects onto ``bk``."""

    b0: JonesVector
    b1: JonesVector

    @classmethod
    def checked(cls, b0, b1) -> "MeasurementBasis":
        b0 = normalize(np.asarray(b0, dtype=complex))
        b1 = normalize(np.asarray(b1, dtype=complex))
        if abs(np.vdot(b0, b1)) > NORM_ATOL:
            raise ValueError("measurement basis vectors are not orthogonal")
        return cls(b0, b1)


Z_BASIS = MeasurementBasis(H, V)
X_BASIS = MeasurementBasis(D, A)
Y_BASIS = MeasurementBasis(R, L)
PAULI_BASES = {"Z": Z_BASIS, "X": X_BASIS, "Y": Y_BASIS}


def normalize(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def jones_vector(amp_h: complex, amp_v: complex) -> JonesVector:
    return normalize(np.array([amp_h, amp_v], dtype=complex))


def is_unitary(m: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    m = np.asarray(m)
    return np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=atol, rtol=0.0)


def same_state(a: np.ndarray, b: np.ndarray, atol: float = 1e-10) -> bool:
    """True if two pure states agree up to a global phase."""
    return abs(abs(np.vdot(normalize(a), normalize(b))) - 1.0) <= atol


_BELL = {
    BellKind.PHI_PLUS: (1, 0, 0, 1),
    BellKind.PHI_MINUS: (1, 0, 0, -1),
    BellKind.PSI_PLUS: (0, 1, 1, 0),
    BellKind.PSI_MINUS: (0, 1, -1, 0),
}


def bell_state(kind: BellKind | str) -> TwoPhotonState:
    return np.array(_BELL[BellKind(kind)], dtype=complex) * SQRT1_2


def product_state(a: JonesVector, b: JonesVector) -> TwoPhotonState:
    return np.kron(a, b)


def lift_local(j: JonesMatrix, slot: Slot | int) -> np.ndarray:
    """Lift a single-photon operator to the two-photon space (J x I or I x J)."""
    j = np.asarray(j, dtype=complex)
    if not is_unitary(j):
        raise ValueError("Jones operator is not unitary")
    if Slot(slot) is Slot.A:
        return np.kron(j, I2)
    return np.kron(I2, j)


def apply_local(state: TwoPhotonState, j: JonesMatrix, slot: Slot | int) -> TwoPhotonState:
    # reshape route avoids building the 4x4; numerically identical to lift_local(j) @ state
    m = np.asarray(state, dtype=complex).reshape(2, 2)
    j = np.asarray(j, dtype=complex)
    if Slot(slot) is Slot.A:
        out = j @ m
    else:
        out = m @ j.T
    return out.reshape(4)


def conditional_states(state: TwoPhotonState, basis: MeasurementBasis, slot: Slot | int):
    """Unnormalized partner vectors for outcomes 0 and 1 of measuring ``slot``."""
    m = np.asarray(state, dtype=complex).reshape(2, 2)
    if Slot(slot) is Slot.B:
        m = m.T
    return basis.b0.conj() @ m, basis.b1.conj() @ m


def outcome_probabilities(state: TwoPhotonState, basis: MeasurementBasis, slot: Slot | int):
    v0, v1 = conditional_states(state, basis, slot)
    p0 = float(np.vdot(v0, v0).real)
    p1 = float(np.vdot(v1, v1).real)
    total = p0 + p1
    return p0 / total, p1 / total


def measure(state: TwoPhotonState, basis: MeasurementBasis, slot: Slot | int,
            rng: np.random.Generator) -> tuple[int, JonesVector]:
    """Projectively measure one photon of a pair.

    Returns the outcome and the renormalized state of the partner photon.
    A zero-probability branch is never selected.
    """
    v0, v1 = conditional_states(state, basis, slot)
    p0 = float(np.vdot(v0, v0).real)
    p1 = float(np.vdot(v1, v1).real)
    if p1 <= 0.0:
        outcome = 0
    elif p0 <= 0.0:
        outcome = 1
    else:
        outcome = 0 if rng.random() < p0 / (p0 + p1) else 1
    partner = v0 if outcome == 0 else v1
    return outcome, normalize(partner)


def measure_single(psi: JonesVector, basis: MeasurementBasis, rng: np.random.Generator) -> int:
    p0 = abs(np.vdot(basis.b0, psi)) ** 2
    p1 = abs(np.vdot(basis.b1, psi)) ** 2
    if p1 <= 0.0:
        return 0
    if p0 <= 0.0:
        return 1
    return 0 if rng.random() < p0 / (p0 + p1) else 1


def reduced_state(state: TwoPhotonState, slot: Slot | int) -> np.ndarray:
    """2x2 reduced density matrix of the photon in ``slot``."""
    m = np.asarray(state, dtype=complex).reshape(2, 2)
    if Slot(slot) is Slot.B:
        m = m.T
    return m @ m.conj().T


def density(state: TwoPhotonState) -> DensityMatrix:
    return np.outer(state, np.conj(state))


def fidelity(rho: DensityMatrix, psi: TwoPhotonState) -> float:
    """Overlap <psi|rho|psi> of a density matrix with a pure target state."""
    value = np.vdot(psi, np.asarray(rho) @ psi)
    if abs(value.imag) > 1e-8:
        warnings.warn(f"fidelity has imaginary residue {value.imag:.3g}", RuntimeWarning)
    f = float(value.real)
    clipped = min(max(f, 0.0), 1.0)
    if abs(clipped - f) > 1e-6:
        warnings.warn(f"fidelity {f:.6g} clamped to [0, 1]", RuntimeWarning)
    return clipped


def random_unitary(rng: np.random.Generator, dim: int = 2) -> np.ndarray:
    """Haar-random unitary via QR of a complex Gaussian matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_pure_state(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return normalize(z)


def basis_from_angles(theta: float, phi: float) -> MeasurementBasis:
    """Orthonormal basis whose first vector sits at Poincare angles (theta, phi)."""
    b0 = np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], dtype=complex)
    b1 = np.array([-np.exp(-1j * phi) * np.sin(theta / 2), np.cos(theta / 2)], dtype=complex)
    return MeasurementBasis(b0, b1)
