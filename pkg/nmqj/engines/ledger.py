"""Deterministic existence-probability ledger.

Every trajectory H_n^alpha is stored once, together with its existence probability
k. In the positive-rate region every trajectory below the truncation level spawns
one child per step carrying k * p, while in the negative-rate region each
trajectory class hands probability back to its mother. No random numbers are
drawn.
"""

import logging
import time
from collections.abc import Iterator
from dataclasses import dataclass
from typing import override

import numpy as np
from numpy.typing import NDArray

from nmqj.config import ClassScope
from nmqj.config import EngineKind
from nmqj.config import Sampling
from nmqj.config import SimConfig
from nmqj.engines.common import Engine
from nmqj.engines.common import MemoryWindow
from nmqj.engines.common import RunResult
from nmqj.engines.common import TimeGrid
from nmqj.engines.common import TrajectoryTable
from nmqj.engines.common import finite_memory_mode
from nmqj.engines.common import jump_probabilities
from nmqj.engines.common import sample_time
from nmqj.engines.common import trajectory_step_matrix
from nmqj.models import ModelSpec
from nmqj.qcore import DensityMatrix
from nmqj.qcore import NumericalGuardError
from nmqj.qcore import Scheme
from nmqj.qcore import StateVector
from nmqj.qcore import evolve_batch
from nmqj.qcore import normalize_rows

logger = logging.getLogger(__name__)

PRUNE_THRESHOLD = 1e-15
FREEZE_TOL = 1e-12


class TruncationOverflowError(NumericalGuardError):
    pass


@dataclass(frozen=True, eq=False)
class TrajectoryNode:
    alpha: tuple[int, ...]
    state: StateVector
    k: float

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def parent(self) -> tuple[int, ...] | None:
        return self.alpha[:-1] if self.alpha else None


class Ledger:
    """Trajectories grouped by jump count, one table per level 0..n*."""

    def __init__(
        self,
        psi0: StateVector,
        truncation: int,
        dt: float,
        scheme: Scheme = Scheme.EULER1,
        sampling: Sampling = Sampling.LEFT,
        class_scope: ClassScope = ClassScope.CLASS,
        memory: MemoryWindow | None = None,
    ):
        if truncation < 1:
            raise ValueError(f"Truncation must be at least 1, got {truncation}")

        self.truncation: int = truncation
        self.dt: float = dt
        self.scheme: Scheme = scheme
        self.sampling: Sampling = sampling
        self.class_scope: ClassScope = class_scope
        self.memory: MemoryWindow = memory or MemoryWindow()

        dim = psi0.shape[0]
        self.levels: list[TrajectoryTable] = [
            TrajectoryTable(dim) for _ in range(truncation + 1)
        ]
        self.levels[0].append(psi0[None, :], 1.0, -1, 0, 0)

        self.current_step: int = 0
        # Probability forfeited past the truncation level or by pruning
        self.leak: float = 0.0
        self.leak_total: float = 0.0
        self.frozen: bool = False
        self.freeze_time: float | None = None
        self.peak_nodes: int = 1

    @classmethod
    def from_config(cls, config: SimConfig, psi0: StateVector) -> "Ledger":
        return cls(
            psi0,
            config.truncation,
            config.dt,
            scheme=config.scheme,
            sampling=config.sampling,
            class_scope=config.class_scope,
            memory=finite_memory_mode(config.memory_tau),
        )

    @property
    def time(self) -> float:
        return self.current_step * self.dt

    @property
    def node_count(self) -> int:
        return sum(level.size for level in self.levels)

    def level_sums(self) -> tuple[float, ...]:
        return tuple(float(level.weight.sum()) for level in self.levels)

    def total(self) -> float:
        return float(sum(self.level_sums()))

    def forfeit(self, probability: float):
        self.leak += probability
        self.leak_total += probability

    def nodes(self) -> Iterator[TrajectoryNode]:
        """Walks every stored trajectory, level by level."""
        alphas: list[tuple[int, ...]] = [()]
        for n, level in enumerate(self.levels):
            if n > 0:
                alphas = [
                    alphas[parent] + (int(born),)
                    for parent, born in zip(level.parent, level.born)
                ]
            for alpha, psi, k in zip(alphas, level.states, level.weight):
                yield TrajectoryNode(alpha, psi.copy(), float(k))

    def prune(self):
        """Drops dead trajectories that are not the mother of a kept one."""
        dropped = 0.0
        removed = 0
        for n in range(self.truncation, 0, -1):
            level = self.levels[n]
            keep = level.weight >= PRUNE_THRESHOLD
            children = self.levels[n + 1] if n < self.truncation else None
            if children is not None and children.size:
                keep |= np.bincount(children.parent, minlength=level.size) > 0
            if keep.all():
                continue

            dropped += float(level.weight[~keep].sum())
            removed += int((~keep).sum())
            remap = level.compact(keep)
            if children is not None and children.size:
                children.parent[:] = remap[children.parent]

        if removed:
            self.forfeit(dropped)
            logger.debug("Pruned %d trajectories at step %d", removed, self.current_step)

    def freeze(self):
        """Returns every realization to the no-jump trajectory."""
        self.levels[0].weight[:] = 1.0
        for level in self.levels[1:]:
            level.weight[:] = 0.0
        self.leak = 0.0
        self.frozen = True
        self.freeze_time = self.time
        logger.debug("Ledger frozen on the no-jump trajectory at t=%.6f", self.time)

    def drift(self, spec: ModelSpec, t: float):
        """Advances every stored state over [t, t + dt]."""
        m = trajectory_step_matrix(spec, t, self.dt, self.scheme, self.sampling)
        for level in self.levels:
            level.states[:] = evolve_batch(level.states, m)

        self.current_step += 1

    def settle(self):
        self.prune()
        self.peak_nodes = max(self.peak_nodes, self.node_count)


def jump_probability(node: TrajectoryNode, t: float, spec: ModelSpec, dt: float) -> float:
    return float(jump_probabilities(spec, node.state[None, :], spec.rate(t), dt)[0])


def positive_step(ledger: Ledger, t: float, spec: ModelSpec) -> Ledger:
    """Branches every trajectory below n* and decays its existence probability."""
    delta = spec.rate(sample_time(t, ledger.dt, ledger.sampling))
    born = ledger.current_step + 1

    spawned: list[tuple[int, NDArray[np.complex128], NDArray[np.float64], NDArray[np.int64]]] = []
    for n, level in enumerate(ledger.levels):
        if level.size == 0:
            continue

        p = jump_probabilities(spec, level.states, delta, ledger.dt)
        gained = level.weight * p
        if n < ledger.truncation:
            live = gained >= PRUNE_THRESHOLD
            ledger.forfeit(float(gained[~live].sum()))
            mothers = np.nonzero(live)[0]
            if mothers.size:
                collapsed = normalize_rows(level.states[mothers] @ spec.jump_op.T)
                spawned.append((n + 1, collapsed, gained[mothers], mothers))
        else:
            ledger.forfeit(float(gained.sum()))

        level.weight[:] = level.weight * (1 - p)

    # Children are booked at the new grid point and skip this step's drift
    ledger.drift(spec, t)
    for n, states, k, mothers in spawned:
        ledger.levels[n].append(states, k, mothers, born, n)

    ledger.frozen = False
    ledger.settle()
    return ledger


def _class_transfers(
    ledger: Ledger,
    n: int,
    k_old: list[NDArray[np.float64]],
    p: list[NDArray[np.float64]],
    t: float,
) -> NDArray[np.float64]:
    """Probability each level-n trajectory returns to its mother this step.

    A class hands back k_P |p_P| split in proportion to the members' k, capped at
    what the class holds.
    """
    level = ledger.levels[n]
    mothers = level.parent
    demand = k_old[n - 1][mothers] * -p[n - 1][mothers]

    in_window = ledger.memory.admits(level.born * ledger.dt, t)
    holdings = np.where(in_window, k_old[n], 0.0)
    if ledger.class_scope == ClassScope.CLASS:
        pool = np.bincount(mothers, holdings, minlength=ledger.levels[n - 1].size)[mothers]
    else:
        pool = np.full(level.size, holdings.sum())

    # min(demand, pool) / pool keeps the quotient in [0, 1] even for denormal pools
    share = np.divide(
        np.minimum(demand, pool), pool, out=np.zeros(level.size), where=pool > 0
    )
    return holdings * share


def negative_step(ledger: Ledger, t: float, spec: ModelSpec) -> Ledger:
    """Transfers probability from each trajectory class back to its mother."""
    if ledger.frozen:
        ledger.drift(spec, t)
        ledger.settle()
        return ledger

    delta = spec.rate(sample_time(t, ledger.dt, ledger.sampling))
    # Every level reads the step-start snapshot
    k_old = [level.weight.copy() for level in ledger.levels]
    p = [jump_probabilities(spec, level.states, delta, ledger.dt) for level in ledger.levels]

    k_new = [k.copy() for k in k_old]
    for n in range(1, ledger.truncation + 1):
        level = ledger.levels[n]
        if level.size == 0:
            continue
        loss = _class_transfers(ledger, n, k_old, p, t)
        k_new[n] -= loss
        k_new[n - 1] += np.bincount(level.parent, loss, minlength=ledger.levels[n - 1].size)

    for level, k in zip(ledger.levels, k_new):
        level.weight[:] = k

    ledger.drift(spec, t)
    one_jump = ledger.levels[1].weight
    if k_new[0][0] >= 1 - FREEZE_TOL or (one_jump.size and not np.any(one_jump > 0)):
        ledger.freeze()
    ledger.settle()

    return ledger


def reconstruct_density(ledger: Ledger) -> DensityMatrix:
    """Existence-weighted mixture of all stored trajectories, trace normalized."""
    rho = sum(level.density() for level in ledger.levels)
    total = ledger.total()
    if total > 0:
        rho = rho / total

    return rho


def no_jump_existence(
    spec: ModelSpec,
    psi0: StateVector,
    grid: TimeGrid,
    scheme: Scheme = Scheme.EULER1,
    sampling: Sampling = Sampling.LEFT,
) -> NDArray[np.float64]:
    """Running product of (1 - p0) along the no-jump trajectory, one value per grid point."""
    states = psi0[None, :].copy()
    k0 = np.ones(grid.n_steps + 1)
    for w in range(1, grid.n_steps + 1):
        t = grid.time(w - 1)
        delta = spec.rate(sample_time(t, grid.dt, sampling))
        p0 = jump_probabilities(spec, states, delta, grid.dt)[0]
        k0[w] = k0[w - 1] * (1 - p0)
        states = evolve_batch(states, trajectory_step_matrix(spec, t, grid.dt, scheme, sampling))

    return k0


class LedgerEngine(Engine):
    engine_kind = EngineKind.LEDGER

    @override
    def run(self) -> RunResult:
        config = self.config
        psi0 = config.initial_state(self.spec)
        ledger = Ledger.from_config(config, psi0)
        overflow_warned = False

        records = [self.record(0, reconstruct_density(ledger), ledger.level_sums(), 1)]
        start = time.perf_counter()
        for w in range(1, self.grid.n_steps + 1):
            t = self.grid.time(w - 1)
            if self.spec.rate(sample_time(t, ledger.dt, ledger.sampling)) >= 0:
                positive_step(ledger, t, self.spec)
            else:
                negative_step(ledger, t, self.spec)

            top = ledger.level_sums()[-1]
            if top > config.overflow_threshold:
                raise TruncationOverflowError(
                    f"Trajectories with {ledger.truncation} jumps hold {top:.3e} at "
                    f"t={ledger.time:.4f}, raise ledger.truncation"
                )
            if not overflow_warned and top > config.overflow_threshold / 2:
                logger.warning(
                    "Trajectories with %d jumps hold %.3e at t=%.4f",
                    ledger.truncation,
                    top,
                    ledger.time,
                )
                overflow_warned = True

            if self.should_record(w):
                records.append(
                    self.record(
                        w, reconstruct_density(ledger), ledger.level_sums(), ledger.node_count
                    )
                )
        wall_time = time.perf_counter() - start
        logger.info("%s finished %d steps in %.3fs", self, self.grid.n_steps, wall_time)

        metadata = self.base_metadata()
        regions = config.sign_regions
        metadata.update(
            {
                "wall_time": wall_time,
                "truncation_leak": ledger.leak,
                "truncation_leak_total": ledger.leak_total,
                "freeze_time": ledger.freeze_time,
                "final_nodes": ledger.node_count,
                "peak_nodes": ledger.peak_nodes,
                "storage_estimate": (
                    self.spec.dim * regions.positive_grid_points(config.dt)
                    if regions.t_p is not None
                    else None
                ),
                "k0_product": float(
                    no_jump_existence(
                        self.spec, psi0, self.grid, config.scheme, config.sampling
                    )[-1]
                ),
            }
        )

        return RunResult(records, metadata)


def run_ledger(config: SimConfig, spec: ModelSpec | None = None) -> RunResult:
    return LedgerEngine(config, spec).run()
