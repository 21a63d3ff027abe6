"""Reference integration of the time-local master equation."""

import logging
import time
from dataclasses import dataclass
from typing import override

import numpy as np

from nmqj.config import EngineKind
from nmqj.engines.common import Engine
from nmqj.engines.common import RunResult
from nmqj.engines.common import TimeGrid
from nmqj.models import ModelSpec
from nmqj.qcore import DensityMatrix
from nmqj.qcore import NumericalGuardError
from nmqj.qcore import dagger
from nmqj.qcore import projector
from nmqj.reservoir import LorentzianParams

logger = logging.getLogger(__name__)

# Single-step dips below this are a broken step size, not integration noise
POSITIVITY_FLOOR = -1e-3
POSITIVITY_NOISE = -1e-12


class PositivityBreachError(NumericalGuardError):
    pass


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    spec: ModelSpec

    @property
    def reservoir(self) -> LorentzianParams:
        return self.spec.reservoir

    def __call__(self, rho: DensityMatrix, t: float) -> DensityMatrix:
        return lindblad_rhs(rho, t, self)


def lindblad_rhs(rho: DensityMatrix, t: float, gen: LindbladGenerator) -> DensityMatrix:
    """-i[H(t), rho] + delta(t) (C rho C^dag - {C^dag C, rho} / 2)."""
    spec = gen.spec
    h = spec.hamiltonian(t)
    c = spec.jump_op
    weight = spec.jump_weight

    coherent = -1j * (h @ rho - rho @ h)
    dissipator = c @ rho @ dagger(c) - 0.5 * (weight @ rho + rho @ weight)
    return coherent + spec.rate(t) * dissipator


def project_psd(rho: DensityMatrix) -> DensityMatrix:
    """Clips negative eigenvalues to zero and restores unit trace."""
    values, vectors = np.linalg.eigh(rho)
    clipped = (vectors * np.clip(values, 0.0, None)) @ dagger(vectors)
    clipped = (clipped + dagger(clipped)) / 2
    return clipped / np.trace(clipped).real


def rk4_run(
    gen: LindbladGenerator, rho0: DensityMatrix, grid: TimeGrid
) -> list[DensityMatrix]:
    """Classical RK4 on the fixed grid; returns rho at every grid point."""
    dt = grid.dt
    rho = rho0.astype(np.complex128)
    series = [rho]
    noise_logged = False
    for w in range(1, grid.n_steps + 1):
        t = grid.time(w - 1)
        k1 = gen(rho, t)
        k2 = gen(rho + dt / 2 * k1, t + dt / 2)
        k3 = gen(rho + dt / 2 * k2, t + dt / 2)
        k4 = gen(rho + dt * k3, t + dt)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

        rho = (rho + dagger(rho)) / 2
        rho = rho / np.trace(rho).real

        lowest = float(np.linalg.eigvalsh(rho).min())
        if lowest < POSITIVITY_FLOOR:
            raise PositivityBreachError(
                f"Density matrix eigenvalue {lowest:.3e} at t={grid.time(w):.4f}"
            )
        if lowest < 0:
            if lowest < POSITIVITY_NOISE and not noise_logged:
                logger.warning(
                    "Projecting rho back to the positive cone, eigenvalue %.3e at t=%.4f",
                    lowest,
                    grid.time(w),
                )
                noise_logged = True
            rho = project_psd(rho)

        series.append(rho)

    return series


class ExactEngine(Engine):
    engine_kind = EngineKind.EXACT

    @override
    def run(self) -> RunResult:
        rho0 = projector(self.config.initial_state(self.spec))

        start = time.perf_counter()
        series = rk4_run(LindbladGenerator(self.spec), rho0, self.grid)
        wall_time = time.perf_counter() - start
        logger.info("%s finished %d steps in %.3fs", self, self.grid.n_steps, wall_time)

        records = [
            self.record(w, rho)
            for w, rho in enumerate(series)
            if w == 0 or self.should_record(w)
        ]
        metadata = self.base_metadata()
        metadata["wall_time"] = wall_time

        return RunResult(records, metadata)
