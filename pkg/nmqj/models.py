"""The driven single spin (model I) and the coupled spin pair (model II)."""

from collections.abc import Callable
from dataclasses import dataclass
from dataclasses import field
from enum import StrEnum
from enum import auto

import numpy as np

from nmqj.qcore import IDENTITY_2
from nmqj.qcore import SIGMA_MINUS
from nmqj.qcore import SIGMA_X
from nmqj.qcore import Operator
from nmqj.qcore import StateVector
from nmqj.qcore import dagger
from nmqj.qcore import normalize
from nmqj.qcore import tensor
from nmqj.reservoir import CouplingProfile
from nmqj.reservoir import LorentzianParams
from nmqj.reservoir import coupling
from nmqj.reservoir import decay_rate
from nmqj.reservoir import resolve_switch_time


class KindMismatchError(ValueError):
    pass


class ModelLabel(StrEnum):
    MODEL_I = auto()
    MODEL_II = auto()


class InitialKind(StrEnum):
    BLOCH = auto()
    XI = auto()


@dataclass(frozen=True)
class InitialStateSpec:
    kind: InitialKind = InitialKind.BLOCH
    theta: float = 0.0
    phi: float = 0.0
    xi: float = 0.0


@dataclass(frozen=True, eq=False)
class ModelSpec:
    dim: int
    hamiltonian: Callable[[float], Operator]
    jump_op: Operator
    reservoir: LorentzianParams
    label: ModelLabel
    # Overrides the reservoir rate, e.g. a constant or vanishing rate
    decay: Callable[[float], float] | None = None
    jump_weight: Operator = field(init=False, repr=False)

    def __post_init__(self):
        if self.jump_op.shape != (self.dim, self.dim):
            raise KindMismatchError(f"Jump operator does not act on dim {self.dim}")
        object.__setattr__(self, "jump_weight", dagger(self.jump_op) @ self.jump_op)

    def rate(self, t: float) -> float:
        if self.decay is not None:
            return self.decay(t)

        return float(decay_rate(t, self.reservoir))

    def effective(self, t: float, delta: float | None = None) -> Operator:
        """H_eff at time t, with the decay rate sampled at t unless given."""
        return effective_hamiltonian(self, t, self.rate(t) if delta is None else delta)


def build_model_i(omega: float, res: LorentzianParams) -> ModelSpec:
    """Single spin driven along x with spin-flip decay."""
    h = omega * SIGMA_X

    return ModelSpec(
        dim=2,
        hamiltonian=lambda _: h,
        jump_op=SIGMA_MINUS.copy(),
        reservoir=res,
        label=ModelLabel.MODEL_I,
    )


def build_model_ii(cp: CouplingProfile, res: LorentzianParams) -> ModelSpec:
    """Two spins coupled by lambda(t) sx*sx; only spin 1 decays."""
    cp = resolve_switch_time(cp, res)
    xx = tensor(SIGMA_X, SIGMA_X)

    return ModelSpec(
        dim=4,
        hamiltonian=lambda t: coupling(t, cp) * xx,
        jump_op=tensor(SIGMA_MINUS, IDENTITY_2),
        reservoir=res,
        label=ModelLabel.MODEL_II,
    )


def effective_hamiltonian(spec: ModelSpec, t: float, delta: float) -> Operator:
    """H_s(t) - i delta/2 C^dag C; `delta` keeps its sign in the negative region."""
    return spec.hamiltonian(t) - 0.5j * delta * spec.jump_weight


def initial_state(spec: ModelSpec, init: InitialStateSpec) -> StateVector:
    if init.kind == InitialKind.BLOCH:
        if spec.dim != 2:
            raise KindMismatchError("Bloch angles describe a single spin only")
        return normalize(
            np.array(
                [np.cos(init.theta / 2), np.exp(1j * init.phi) * np.sin(init.theta / 2)],
                dtype=np.complex128,
            )
        )

    if spec.dim != 4:
        raise KindMismatchError("The xi family lives in the two-spin odd subspace")

    return normalize(
        np.array([0, np.cos(init.xi), np.sin(init.xi), 0], dtype=np.complex128)
    )
