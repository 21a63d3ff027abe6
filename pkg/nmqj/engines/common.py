import logging
import math
from abc import ABC
from abc import abstractmethod
from dataclasses import dataclass
from dataclasses import field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from nmqj.config import EngineKind
from nmqj.config import Sampling
from nmqj.config import SimConfig
from nmqj.models import ModelSpec
from nmqj.observables import observable_columns
from nmqj.qcore import DensityMatrix
from nmqj.qcore import NumericalGuardError
from nmqj.qcore import Operator
from nmqj.qcore import Scheme
from nmqj.qcore import batch_expectation
from nmqj.qcore import step_matrix

logger = logging.getLogger(__name__)

# Absorbs rounding in t_end / dt so that t_end = 1.0, dt = 1e-3 gives 1000 steps
GRID_EPSILON = 1e-9


class StepTooLargeError(NumericalGuardError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be non-negative, got {self.n_steps}")

    @classmethod
    def spanning(cls, dt: float, t_end: float) -> "TimeGrid":
        """Smallest grid whose last point reaches t_end."""
        return cls(dt, max(0, math.ceil(t_end / dt - GRID_EPSILON)))

    @classmethod
    def from_config(cls, config: SimConfig) -> "TimeGrid":
        return cls.spanning(config.dt, config.resolved_t_end())

    def time(self, w: int) -> float:
        return w * self.dt

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class MemoryWindow:
    """Reverse transfers only reach trajectories whose last jump is younger than tau."""

    tau: float = math.inf

    def admits(self, jump_times: NDArray[np.float64], t: float) -> NDArray[np.bool_]:
        return jump_times >= t - self.tau


def finite_memory_mode(tau: float | None) -> MemoryWindow:
    if tau is None:
        return MemoryWindow()
    if not tau > 0:
        raise ValueError(f"Memory time must be positive, got {tau}")

    return MemoryWindow(tau)


class TrajectoryTable:
    """Columnar, growable storage of trajectory drift states.

    Rows carry the current state, a weight (existence probability or occupation
    fraction), the row index of the mother trajectory (-1 for the root), the grid
    index of the last jump and the jump count. Mothers are always stored before
    their children.
    """

    def __init__(self, dim: int, capacity: int = 16):
        self.dim: int = dim
        self.size: int = 0
        self._states = np.zeros((capacity, dim), dtype=np.complex128)
        self._weight = np.zeros(capacity)
        self._parent = np.zeros(capacity, dtype=np.int64)
        self._born = np.zeros(capacity, dtype=np.int64)
        self._level = np.zeros(capacity, dtype=np.int64)

    @property
    def states(self) -> NDArray[np.complex128]:
        return self._states[: self.size]

    @property
    def weight(self) -> NDArray[np.float64]:
        return self._weight[: self.size]

    @property
    def parent(self) -> NDArray[np.int64]:
        return self._parent[: self.size]

    @property
    def born(self) -> NDArray[np.int64]:
        return self._born[: self.size]

    @property
    def level(self) -> NDArray[np.int64]:
        return self._level[: self.size]

    def _reserve(self, extra: int):
        needed = self.size + extra
        capacity = self._weight.shape[0]
        if needed <= capacity:
            return

        while capacity < needed:
            capacity *= 2
        for name in ("_states", "_weight", "_parent", "_born", "_level"):
            old = getattr(self, name)
            grown = np.zeros((capacity, *old.shape[1:]), dtype=old.dtype)
            grown[: self.size] = old[: self.size]
            setattr(self, name, grown)

    def append(
        self,
        states: NDArray[np.complex128],
        weight: NDArray[np.float64] | float,
        parent: NDArray[np.int64] | int,
        born: int,
        level: NDArray[np.int64] | int,
    ) -> slice:
        """Adds rows and returns the slice they occupy."""
        count = states.shape[0]
        self._reserve(count)
        rows = slice(self.size, self.size + count)
        self._states[rows] = states
        self._weight[rows] = weight
        self._parent[rows] = parent
        self._born[rows] = born
        self._level[rows] = level
        self.size += count

        return rows

    def compact(self, keep: NDArray[np.bool_]) -> NDArray[np.int64]:
        """Drops rows where `keep` is False; returns old row -> new row (-1 if dropped).

        Mother indices are left untouched, callers remap them.
        """
        kept = np.nonzero(keep)[0]
        remap = np.full(self.size, -1, dtype=np.int64)
        remap[kept] = np.arange(kept.size)

        count = kept.size
        for name in ("_states", "_weight", "_parent", "_born", "_level"):
            column = getattr(self, name)
            column[:count] = column[kept]
        self.size = count

        return remap

    def density(self) -> DensityMatrix:
        """Sum of weight * |psi><psi| over all rows."""
        states = self.states
        return np.einsum("n,ni,nj->ij", self.weight, states, states.conj())


@dataclass
class TimeSeriesRecord:
    t: float
    engine: EngineKind
    delta: float
    rho: DensityMatrix
    k_sums: tuple[float, ...] = ()
    observables: dict[str, float] = field(default_factory=dict)
    nodes: int = 0

    def columns(self) -> dict[str, float]:
        """Flat column view: t, delta, K sums, observables then rho entries."""
        row: dict[str, float] = {"t": self.t, "delta": self.delta}
        row.update({f"K{n}": k for n, k in enumerate(self.k_sums)})
        row.update(self.observables)

        dim = self.rho.shape[0]
        for i in range(dim):
            for j in range(dim):
                row[f"rho_re_{i}{j}"] = float(self.rho[i, j].real)
                row[f"rho_im_{i}{j}"] = float(self.rho[i, j].imag)

        return row


@dataclass
class RunResult:
    records: list[TimeSeriesRecord]
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def final(self) -> TimeSeriesRecord:
        return self.records[-1]

    @property
    def wall_time(self) -> float:
        return float(self.metadata.get("wall_time", 0.0))

    def series(self, column: str) -> NDArray[np.float64]:
        return np.array([r.columns()[column] for r in self.records])

    def k_series(self, level: int) -> NDArray[np.float64]:
        return np.array([r.k_sums[level] for r in self.records])

    def times(self) -> NDArray[np.float64]:
        return np.array([r.t for r in self.records])


def sample_time(t: float, dt: float, sampling: Sampling) -> float:
    return t if sampling == Sampling.LEFT else t + dt / 2


def jump_probabilities(
    spec: ModelSpec, states: NDArray[np.complex128], delta: float, dt: float
) -> NDArray[np.float64]:
    """Signed probabilities delta * dt * <C^dag C> for every row."""
    p = delta * dt * batch_expectation(spec.jump_weight, states)
    if p.size and np.abs(p).max() >= 1:
        raise StepTooLargeError(
            f"Jump probability {np.abs(p).max():.3f} >= 1, decrease dt ({dt})"
        )

    return p


def trajectory_step_matrix(
    spec: ModelSpec, t: float, dt: float, scheme: Scheme, sampling: Sampling
) -> Operator:
    """Drift map over [t, t + dt] shared by every stored trajectory."""
    if scheme == Scheme.EULER1:
        t_s = sample_time(t, dt, sampling)
        return step_matrix(lambda _: spec.effective(t_s), t_s, dt, scheme)

    return step_matrix(spec.effective, t, dt, scheme)


class Engine(ABC):
    engine_kind: EngineKind

    def __init__(self, config: SimConfig, spec: ModelSpec | None = None):
        self.config: SimConfig = config
        self.spec: ModelSpec = spec or config.model_spec()
        self.grid: TimeGrid = TimeGrid.from_config(config)

    def __str__(self):
        return f"{self.engine_kind} engine for {self.spec.label}"

    @abstractmethod
    def run(self) -> RunResult:
        """Integrates over the whole grid and returns the recorded series."""
        ...

    def should_record(self, w: int) -> bool:
        return w % self.config.output_stride == 0 or w == self.grid.n_steps

    def record(
        self,
        w: int,
        rho: DensityMatrix,
        k_sums: tuple[float, ...] = (),
        nodes: int = 0,
    ) -> TimeSeriesRecord:
        t = self.grid.time(w)
        return TimeSeriesRecord(
            t=t,
            engine=self.engine_kind,
            delta=self.spec.rate(t),
            rho=rho,
            k_sums=k_sums,
            observables=observable_columns(rho),
            nodes=nodes,
        )

    def base_metadata(self) -> dict[str, Any]:
        regions = self.config.sign_regions
        return {
            "engine": str(self.engine_kind),
            "config": self.config.to_flat(),
            "t_P": regions.t_p,
            "t_N": regions.t_n,
            "dt": self.grid.dt,
            "n_steps": self.grid.n_steps,
        }
