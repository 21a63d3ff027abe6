"""Monte Carlo unraveling with normal and reversed jumps.

Realizations are pointers into a registry of trajectory drift states, so all
realizations that share a jump history share one stored state. A reversed jump
moves a realization back to its mother trajectory.
"""

import logging
import time
from collections.abc import Iterator
from dataclasses import dataclass
from typing import override

import numpy as np
from numpy.typing import NDArray

from nmqj.config import EngineKind
from nmqj.config import Sampling
from nmqj.config import SimConfig
from nmqj.engines.common import Engine
from nmqj.engines.common import MemoryWindow
from nmqj.engines.common import RunResult
from nmqj.engines.common import TrajectoryTable
from nmqj.engines.common import finite_memory_mode
from nmqj.engines.common import jump_probabilities
from nmqj.engines.common import sample_time
from nmqj.engines.common import trajectory_step_matrix
from nmqj.models import ModelSpec
from nmqj.qcore import DensityMatrix
from nmqj.qcore import Scheme
from nmqj.qcore import StateVector
from nmqj.qcore import evolve_batch
from nmqj.qcore import normalize_rows

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Realization:
    trajectory_id: tuple[int, ...]
    state: StateVector
    rng_stream: int


class EnsembleState:
    def __init__(
        self,
        psi0: StateVector,
        n_r: int,
        seed: int,
        memory: MemoryWindow | None = None,
    ):
        if n_r < 1:
            raise ValueError(f"Need at least one realization, got {n_r}")

        self.n_total: int = n_r
        self.seed: int = seed
        self.memory: MemoryWindow = memory or MemoryWindow()
        self.registry: TrajectoryTable = TrajectoryTable(psi0.shape[0])
        self.registry.append(psi0[None, :], 1.0, -1, 0, 0)
        # Registry row occupied by each realization
        self.assignment: NDArray[np.int64] = np.zeros(n_r, dtype=np.int64)
        self.counts: NDArray[np.int64] = np.array([n_r], dtype=np.int64)
        self.current_step: int = 0
        self.peak_registry: int = 1

    def uniforms(self, w: int) -> NDArray[np.float64]:
        """Draws for step w; element i belongs to realization i."""
        bit_generator = np.random.Philox(np.random.SeedSequence([self.seed, w]))
        generator = np.random.Generator(bit_generator)
        return generator.random(self.n_total)

    def recount(self):
        """Step barrier: occupation counts and weights from the assignment."""
        registry = self.registry
        self.counts = np.bincount(self.assignment, minlength=registry.size)
        registry.weight[:] = self.counts / self.n_total

    def prune(self):
        """Drops empty trajectories that no occupied trajectory descends from."""
        registry = self.registry
        keep = self.counts > 0
        keep[0] = True
        for level in range(int(registry.level.max()), 0, -1):
            rows = keep & (registry.level == level)
            keep[registry.parent[rows]] = True
        if keep.all():
            return

        remap = self.registry.compact(keep)
        registry.parent[:] = np.where(registry.parent >= 0, remap[registry.parent], -1)
        self.assignment = remap[self.assignment]
        self.counts = self.counts[keep]

    def settle(self):
        self.current_step += 1
        self.recount()
        self.prune()
        self.peak_registry = max(self.peak_registry, self.registry.size)

    def level_sums(self, levels: int) -> tuple[float, ...]:
        occupied = np.bincount(self.registry.level, self.counts, minlength=levels)
        return tuple(float(x) for x in occupied[:levels] / self.n_total)

    def density(self) -> DensityMatrix:
        return self.registry.density()

    def realizations(self) -> Iterator[Realization]:
        registry = self.registry
        histories: list[tuple[int, ...]] = []
        for parent, born in zip(registry.parent, registry.born):
            histories.append(() if parent < 0 else histories[parent] + (int(born),))

        for i, row in enumerate(self.assignment):
            yield Realization(histories[row], registry.states[row].copy(), i)


def _drift(
    ens: EnsembleState,
    spec: ModelSpec,
    t: float,
    dt: float,
    scheme: Scheme,
    sampling: Sampling,
):
    m = trajectory_step_matrix(spec, t, dt, scheme, sampling)
    registry = ens.registry
    registry.states[:] = evolve_batch(registry.states, m)


def mc_positive_step(
    ens: EnsembleState,
    t: float,
    spec: ModelSpec,
    dt: float,
    scheme: Scheme = Scheme.EULER1,
    sampling: Sampling = Sampling.LEFT,
) -> EnsembleState:
    """Each realization jumps with probability p of its trajectory."""
    registry = ens.registry
    delta = spec.rate(sample_time(t, dt, sampling))
    born = ens.current_step + 1

    p = jump_probabilities(spec, registry.states, delta, dt)
    jumped = ens.uniforms(born) < p[ens.assignment]
    sources = np.unique(ens.assignment[jumped])
    collapsed = normalize_rows(registry.states[sources] @ spec.jump_op.T)

    _drift(ens, spec, t, dt, scheme, sampling)
    if sources.size:
        # Realizations leaving one trajectory at the same step share one child
        rows = registry.append(collapsed, 0.0, sources, born, registry.level[sources] + 1)
        child_of = np.full(rows.start, -1, dtype=np.int64)
        child_of[sources] = np.arange(rows.start, rows.stop)
        ens.assignment[jumped] = child_of[ens.assignment[jumped]]

    ens.settle()
    return ens


def mc_negative_step(
    ens: EnsembleState,
    t: float,
    spec: ModelSpec,
    dt: float,
    scheme: Scheme = Scheme.EULER1,
    sampling: Sampling = Sampling.LEFT,
) -> EnsembleState:
    """Each realization on a jumped trajectory may return to the mother trajectory.

    The reversal probability uses the step-start counts,
    q = N_mother / N_class * |p_mother|, so all decisions are made before any
    realization moves.
    """
    registry = ens.registry
    delta = spec.rate(sample_time(t, dt, sampling))
    p = jump_probabilities(spec, registry.states, delta, dt)

    counts = ens.counts.astype(np.float64)
    candidates = (registry.parent >= 0) & ens.memory.admits(registry.born * dt, t)
    rows = np.nonzero(candidates)[0]
    mothers = registry.parent[rows]
    class_counts = np.bincount(mothers, counts[rows], minlength=registry.size)[mothers]

    q = np.zeros(registry.size)
    q[rows] = np.divide(
        counts[mothers] * -p[mothers],
        class_counts,
        out=np.zeros(rows.size),
        where=class_counts > 0,
    )
    np.clip(q, 0.0, 1.0, out=q)

    reversed_ = ens.uniforms(ens.current_step + 1) < q[ens.assignment]
    ens.assignment[reversed_] = registry.parent[ens.assignment[reversed_]]

    _drift(ens, spec, t, dt, scheme, sampling)
    ens.settle()
    return ens


class EnsembleEngine(Engine):
    engine_kind = EngineKind.MC

    def __init__(
        self,
        config: SimConfig,
        spec: ModelSpec | None = None,
        n_r: int | None = None,
        seed: int | None = None,
    ):
        super().__init__(config, spec)
        self.n_r: int = config.n_r if n_r is None else n_r
        self.seed: int = config.seed if seed is None else seed

    @override
    def run(self) -> RunResult:
        config = self.config
        levels = config.truncation + 1
        ens = EnsembleState(
            config.initial_state(self.spec),
            self.n_r,
            self.seed,
            finite_memory_mode(config.memory_tau),
        )

        records = [self.record(0, ens.density(), ens.level_sums(levels), 1)]
        start = time.perf_counter()
        for w in range(1, self.grid.n_steps + 1):
            t = self.grid.time(w - 1)
            step = (
                mc_positive_step
                if self.spec.rate(sample_time(t, config.dt, config.sampling)) >= 0
                else mc_negative_step
            )
            _ = step(ens, t, self.spec, config.dt, config.scheme, config.sampling)

            if self.should_record(w):
                records.append(
                    self.record(w, ens.density(), ens.level_sums(levels), ens.registry.size)
                )
        wall_time = time.perf_counter() - start
        logger.info(
            "%s with %d realizations finished in %.3fs", self, self.n_r, wall_time
        )

        metadata = self.base_metadata()
        metadata.update(
            {
                "wall_time": wall_time,
                "n_r": self.n_r,
                "seed": self.seed,
                "final_trajectories": ens.registry.size,
                "peak_trajectories": ens.peak_registry,
                "storage_estimate": self.spec.dim * self.n_r,
            }
        )

        return RunResult(records, metadata)


def run_ensemble(
    config: SimConfig, n_r: int, seed: int, spec: ModelSpec | None = None
) -> RunResult:
    return EnsembleEngine(config, spec, n_r=n_r, seed=seed).run()
