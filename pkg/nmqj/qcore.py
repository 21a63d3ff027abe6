"""Dense complex linear algebra for two-level and two-spin systems.

States are 1-d complex arrays, operators and density matrices are square complex
arrays. Basis convention: |up> = (1, 0), sigma_z |up> = +|up>, and two-spin
products are ordered |uu>, |ud>, |du>, |dd> with spin 1 as the slow index.
"""

from collections.abc import Callable
from enum import StrEnum
from enum import auto

import numpy as np
from numpy.typing import NDArray

StateVector = NDArray[np.complex128]
Operator = NDArray[np.complex128]
DensityMatrix = NDArray[np.complex128]

NORM_FLOOR = 1e-14
HERMITIAN_TOL = 1e-10
NEGATIVE_CLAMP_TOL = 1e-6


class NumericalGuardError(ArithmeticError):
    """Base for every numerical guard that aborts a run."""


class ZeroNormError(NumericalGuardError):
    pass


class DimMismatchError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


class TooNegativeError(NumericalGuardError):
    pass


class Scheme(StrEnum):
    EULER1 = auto()
    RK4 = auto()


def _matrix(entries: list[list[complex]]) -> Operator:
    return np.array(entries, dtype=np.complex128)


IDENTITY_2 = np.eye(2, dtype=np.complex128)
SIGMA_X = _matrix([[0, 1], [1, 0]])
SIGMA_Y = _matrix([[0, -1j], [1j, 0]])
SIGMA_Z = _matrix([[1, 0], [0, -1]])
SIGMA_PLUS = (SIGMA_X + 1j * SIGMA_Y) / 2
SIGMA_MINUS = (SIGMA_X - 1j * SIGMA_Y) / 2

UP = np.array([1, 0], dtype=np.complex128)
DOWN = np.array([0, 1], dtype=np.complex128)


def state(*amplitudes: complex) -> StateVector:
    """Builds a normalized state from raw amplitudes."""
    return normalize(np.array(amplitudes, dtype=np.complex128))


def normalize(psi: StateVector) -> StateVector:
    norm = float(np.linalg.norm(psi))
    if norm < NORM_FLOOR:
        raise ZeroNormError(f"Cannot normalize a vector of norm {norm:.3e}")

    return psi / norm


def dagger(m: Operator) -> Operator:
    return m.conj().T


def projector(psi: StateVector) -> DensityMatrix:
    return np.outer(psi, psi.conj())


def tensor(a: Operator, b: Operator) -> Operator:
    """Kronecker product with `a` as the slower-varying (left) factor."""
    if a.ndim != 2 or a.shape[0] != a.shape[1] or b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise DimMismatchError("tensor expects two square operators")

    return np.kron(a, b)


def _check_dims(op: Operator, psi: StateVector):
    if op.shape != (psi.shape[-1], psi.shape[-1]):
        raise DimMismatchError(
            f"Operator of shape {op.shape} cannot act on a state of dim {psi.shape[-1]}"
        )


def step_matrix(
    generator: Callable[[float], Operator],
    t: float,
    dt: float,
    scheme: Scheme = Scheme.EULER1,
) -> Operator:
    """One-step linear map for d|psi>/dt = -i H_eff(t) |psi>.

    `generator(t)` returns H_eff at time t. Euler uses the value at `t`, RK4 uses
    the usual substage times t, t + dt/2 and t + dt. The result is the matrix that
    the scheme applies to any state, so a batch of states shares one product.
    """
    h0 = generator(t)
    identity = np.eye(h0.shape[0], dtype=np.complex128)
    if scheme == Scheme.EULER1:
        return identity - 1j * dt * h0

    a1 = -1j * h0
    a2 = -1j * generator(t + dt / 2)
    a3 = -1j * generator(t + dt)
    k1 = a1
    k2 = a2 @ (identity + dt / 2 * k1)
    k3 = a2 @ (identity + dt / 2 * k2)
    k4 = a3 @ (identity + dt * k3)
    return identity + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_step(
    psi: StateVector,
    h_eff: Operator,
    dt: float,
    scheme: Scheme = Scheme.EULER1,
) -> StateVector:
    """Advances a state by one step under a constant H_eff and renormalizes."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_dims(h_eff, psi)

    return normalize(step_matrix(lambda _: h_eff, 0.0, dt, scheme) @ psi)


def normalize_rows(states: NDArray[np.complex128]) -> NDArray[np.complex128]:
    if states.shape[0] == 0:
        return states

    norms = np.linalg.norm(states, axis=1)
    if norms.min() < NORM_FLOOR:
        raise ZeroNormError(f"A propagated state has norm {norms.min():.3e}")

    return states / norms[:, None]


def evolve_batch(states: NDArray[np.complex128], m: Operator) -> NDArray[np.complex128]:
    """Applies a step matrix to every row of `states` and renormalizes the rows."""
    return normalize_rows(states @ m.T)


def expectation(op: Operator, psi: StateVector) -> complex:
    _check_dims(op, psi)
    return complex(np.vdot(psi, op @ psi))


def batch_expectation(op: Operator, states: NDArray[np.complex128]) -> NDArray[np.float64]:
    """Real parts of <psi|op|psi> for every row; `op` is expected Hermitian."""
    if states.shape[0] == 0:
        return np.zeros(0)
    _check_dims(op, states)

    return np.einsum("ni,ij,nj->n", states.conj(), op, states).real


def is_hermitian(m: Operator, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(m - dagger(m)), initial=0.0) <= tol)


def hermitian_eigs(m: Operator) -> list[tuple[float, StateVector]]:
    """Eigenpairs of a Hermitian matrix, eigenvalues sorted descending."""
    if not is_hermitian(m):
        raise NotHermitianError("Matrix is not Hermitian within tolerance")

    values, vectors = np.linalg.eigh((m + dagger(m)) / 2)
    return [(float(values[i]), vectors[:, i]) for i in reversed(range(len(values)))]


def psd_sqrt(m: Operator) -> Operator:
    """Hermitian square root of a positive semi-definite matrix."""
    if not is_hermitian(m):
        raise NotHermitianError("Matrix is not Hermitian within tolerance")

    values, vectors = np.linalg.eigh((m + dagger(m)) / 2)
    if values.min() < -NEGATIVE_CLAMP_TOL:
        raise TooNegativeError(f"Minimum eigenvalue {values.min():.3e} is too negative")

    roots = np.sqrt(np.clip(values, 0.0, None))
    return (vectors * roots) @ dagger(vectors)
