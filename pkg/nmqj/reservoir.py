"""Lorentzian reservoir: decay rate, spectral density and coupling profiles.

Times are in units of 1/Gamma and rates in units of Gamma, with Gamma = 1 unless a
record says otherwise.
"""

import logging
from dataclasses import dataclass
from dataclasses import replace
from enum import StrEnum
from enum import auto

import numpy as np
from numpy.typing import ArrayLike
from numpy.typing import NDArray
from scipy.optimize import bisect
from scipy.special import expit

logger = logging.getLogger(__name__)

CROSSING_XTOL = 1e-9
DEFAULT_SCAN_HORIZON = 10.0
DEFAULT_SCAN_DT = 1e-3


class ReservoirError(ValueError):
    pass


class CouplingKind(StrEnum):
    CONSTANT = auto()
    SIGMOID_SWITCHOFF = auto()


@dataclass(frozen=True)
class LorentzianParams:
    eta: float = 10.0
    q0: float = 6.0
    gamma: float = 1.0
    omega: float = 0.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ReservoirError(f"eta must be positive, got {self.eta}")
        if self.gamma <= 0:
            raise ReservoirError(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class CouplingProfile:
    kind: CouplingKind = CouplingKind.CONSTANT
    lambda0: float = 0.5
    beta: float = 100.0
    t_switch: float | None = None

    def __post_init__(self):
        if self.lambda0 < 0:
            raise ReservoirError(f"lambda0 must be non-negative, got {self.lambda0}")
        if self.kind == CouplingKind.SIGMOID_SWITCHOFF and self.beta <= 0:
            raise ReservoirError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class SignRegions:
    """Times at which the decay rate changes sign."""

    boundaries: tuple[float, ...] = ()

    @property
    def t_p(self) -> float | None:
        """End of the first positive region."""
        return self.boundaries[0] if self.boundaries else None

    @property
    def t_n(self) -> float | None:
        """End of the first negative region."""
        return self.boundaries[1] if len(self.boundaries) > 1 else None

    def positive_grid_points(self, dt: float) -> int:
        """Number of grid points t_w = w*dt, w >= 1, inside the first positive region."""
        if self.t_p is None:
            raise ReservoirError("Decay rate never changes sign")

        return int(np.floor(self.t_p / dt))


def decay_rate(t: ArrayLike, p: LorentzianParams) -> NDArray[np.float64] | float:
    """Time-local decay rate of a two-level system in a Lorentzian reservoir."""
    t = np.asarray(t, dtype=np.float64)
    x = p.q0 * p.gamma * t
    value = (
        p.eta**2
        * (1 + np.exp(-p.gamma * t) * (p.q0 * np.sin(x) - np.cos(x)))
        / (2 * (1 + p.q0**2))
    )
    return float(value) if value.ndim == 0 else value


def markovian_rate(p: LorentzianParams) -> float:
    """Long-time limit of the decay rate."""
    return p.eta**2 / (2 * (1 + p.q0**2))


def spectral_density(nu: ArrayLike, p: LorentzianParams) -> NDArray[np.float64] | float:
    nu = np.asarray(nu, dtype=np.float64)
    value = p.eta**2 / (2 * np.pi) * p.gamma**2 / ((nu - p.omega) ** 2 + p.gamma**2)
    return float(value) if value.ndim == 0 else value


def find_sign_regions(p: LorentzianParams, t_max: float, dt: float) -> SignRegions:
    """Scans the grid for sign changes of the decay rate and bisects each one."""
    if dt <= 0 or t_max <= 0:
        raise ReservoirError("t_max and dt must be positive")

    # t = 0 is an exact zero of the rate and never counts as a crossing
    times = np.arange(1, int(np.floor(t_max / dt + 1e-9)) + 1) * dt
    signs = np.sign(decay_rate(times, p))
    changes = np.nonzero(signs[:-1] * signs[1:] < 0)[0]

    boundaries = tuple(
        float(
            bisect(
                lambda t: decay_rate(t, p),
                times[i],
                times[i + 1],
                xtol=CROSSING_XTOL,
            )
        )
        for i in changes
    )
    logger.debug("Sign changes of the decay rate for %s: %s", p, boundaries)

    return SignRegions(boundaries)


def coupling(t: ArrayLike, c: CouplingProfile) -> NDArray[np.float64] | float:
    """Spin-spin coupling strength at time t."""
    t = np.asarray(t, dtype=np.float64)
    if c.kind == CouplingKind.CONSTANT:
        value = np.full_like(t, c.lambda0)
    else:
        if c.t_switch is None:
            raise ReservoirError("Switch-off profile needs a resolved t_switch")
        # lambda0 - lambda0 / (1 + exp(-2 beta (t - t_s))) without overflow
        value = c.lambda0 * expit(-2 * c.beta * (t - c.t_switch))

    return float(value) if value.ndim == 0 else value


def resolve_switch_time(
    c: CouplingProfile,
    p: LorentzianParams,
    t_max: float = DEFAULT_SCAN_HORIZON,
    dt: float = DEFAULT_SCAN_DT,
) -> CouplingProfile:
    """Fills an unset switch time with the end of the first positive region."""
    if c.kind != CouplingKind.SIGMOID_SWITCHOFF or c.t_switch is not None:
        return c

    t_p = find_sign_regions(p, t_max, dt).t_p
    if t_p is None:
        raise ReservoirError("Cannot place the switch-off: decay rate stays positive")

    return replace(c, t_switch=t_p)
