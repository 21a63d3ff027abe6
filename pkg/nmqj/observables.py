"""Physical quantities read off density matrices."""

from dataclasses import dataclass

import numpy as np

from nmqj.qcore import SIGMA_X
from nmqj.qcore import SIGMA_Y
from nmqj.qcore import SIGMA_Z
from nmqj.qcore import DensityMatrix
from nmqj.qcore import DimMismatchError
from nmqj.qcore import TooNegativeError
from nmqj.qcore import dagger
from nmqj.qcore import is_hermitian
from nmqj.qcore import psd_sqrt
from nmqj.qcore import tensor

TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8

SPIN_FLIP = tensor(SIGMA_Y, SIGMA_Y)


class NotDensityMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @property
    def length(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class EntanglementValue:
    concurrence: float
    eigenvalues: tuple[float, float, float, float]


def check_density(rho: DensityMatrix, dim: int | None = None):
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise NotDensityMatrixError("Density matrix must be square")
    if dim is not None and rho.shape[0] != dim:
        raise DimMismatchError(f"Expected a {dim}x{dim} density matrix, got {rho.shape}")
    if not is_hermitian(rho):
        raise NotDensityMatrixError("Density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1) > TRACE_TOL:
        raise NotDensityMatrixError(f"Density matrix has trace {np.trace(rho).real}")
    if np.linalg.eigvalsh(rho).min() < -POSITIVITY_TOL:
        raise NotDensityMatrixError("Density matrix is not positive semi-definite")


def _same_dims(a: DensityMatrix, b: DensityMatrix):
    if a.shape != b.shape:
        raise DimMismatchError(f"Cannot compare states of shapes {a.shape} and {b.shape}")


def bloch_vector(rho: DensityMatrix) -> BlochVector:
    if rho.shape != (2, 2):
        raise DimMismatchError(f"Bloch vector needs a single spin, got {rho.shape}")

    return BlochVector(
        x=float(np.trace(rho @ SIGMA_X).real),
        y=float(np.trace(rho @ SIGMA_Y).real),
        z=float(np.trace(rho @ SIGMA_Z).real),
    )


def concurrence(rho: DensityMatrix) -> EntanglementValue:
    """Wootters concurrence of a two-spin state.

    The spin-flip spectrum is taken from sqrt(rho) R sqrt(rho), with
    R = (sy x sy) rho* (sy x sy), which is Hermitian and shares its eigenvalues
    with rho R.
    """
    check_density(rho, dim=4)

    root = psd_sqrt(rho)
    flipped = SPIN_FLIP @ rho.conj() @ SPIN_FLIP
    product = root @ flipped @ root
    values = np.sort(np.clip(np.linalg.eigvalsh((product + dagger(product)) / 2), 0.0, None))[::-1]
    roots = np.sqrt(values)

    return EntanglementValue(
        concurrence=float(max(0.0, roots[0] - roots[1] - roots[2] - roots[3])),
        eigenvalues=(float(values[0]), float(values[1]), float(values[2]), float(values[3])),
    )


def fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Uhlmann fidelity tr sqrt(sqrt(a) b sqrt(a))."""
    _same_dims(a, b)

    root = psd_sqrt(a)
    inner = root @ b @ root
    values = np.linalg.eigvalsh((inner + dagger(inner)) / 2)
    if values.min() < -POSITIVITY_TOL * 100:
        raise TooNegativeError(f"Fidelity kernel has eigenvalue {values.min():.3e}")

    return float(min(1.0, np.sqrt(np.clip(values, 0.0, None)).sum()))


def bures_metric(a: DensityMatrix, b: DensityMatrix) -> float:
    return float(np.sqrt(max(0.0, 2 * (1 - fidelity(a, b)))))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    _same_dims(a, b)

    difference = a - b
    return float(0.5 * np.abs(np.linalg.eigvalsh((difference + dagger(difference)) / 2)).sum())


def observable_columns(rho: DensityMatrix) -> dict[str, float]:
    """Per-model observable columns of a time-series record."""
    if rho.shape == (2, 2):
        bloch = bloch_vector(rho)
        return {"sx": bloch.x, "sy": bloch.y, "sz": bloch.z}

    return {"concurrence": concurrence(rho).concurrence}
