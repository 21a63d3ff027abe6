import math
import unittest

import numpy as np
from scipy.stats import unitary_group

from nmqj.observables import NotDensityMatrixError
from nmqj.observables import bloch_vector
from nmqj.observables import bures_metric
from nmqj.observables import check_density
from nmqj.observables import concurrence
from nmqj.observables import fidelity
from nmqj.observables import observable_columns
from nmqj.observables import trace_distance
from nmqj.qcore import DOWN
from nmqj.qcore import SIGMA_X
from nmqj.qcore import SIGMA_Y
from nmqj.qcore import SIGMA_Z
from nmqj.qcore import UP
from nmqj.qcore import DimMismatchError
from nmqj.qcore import projector
from nmqj.qcore import state
from nmqj.qcore import tensor

BELL = state(0, 1, 1, 0)
MIXED_2 = np.eye(2, dtype=np.complex128) / 2
MIXED_4 = np.eye(4, dtype=np.complex128) / 4


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_pure(rng: np.random.Generator, dim: int) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def spin_from_bloch(r: np.ndarray) -> np.ndarray:
    return (np.eye(2) + r[0] * SIGMA_X + r[1] * SIGMA_Y + r[2] * SIGMA_Z) / 2


class TestBlochVector(unittest.TestCase):
    def test_pure_states(self):
        cases = [
            (UP, (0.0, 0.0, 1.0)),
            (DOWN, (0.0, 0.0, -1.0)),
            (state(1, 1), (1.0, 0.0, 0.0)),
            (state(1, 1j), (0.0, 1.0, 0.0)),
        ]
        for psi, expected in cases:
            with self.subTest(expected=expected):
                bloch = bloch_vector(projector(psi))
                np.testing.assert_allclose(bloch.as_array(), expected, atol=1e-15)
                self.assertAlmostEqual(bloch.length, 1.0)

    def test_mixed_state(self):
        self.assertEqual(bloch_vector(MIXED_2).length, 0.0)

    def test_wrong_dimension(self):
        with self.assertRaises(DimMismatchError):
            _ = bloch_vector(MIXED_4)


class TestConcurrence(unittest.TestCase):
    def test_bell_state(self):
        self.assertAlmostEqual(concurrence(projector(BELL)).concurrence, 1.0, places=6)

    def test_separable_states(self):
        cases = {
            "product": projector(np.kron(UP, state(1, 1))),
            "maximally mixed": MIXED_4,
        }
        for name, rho in cases.items():
            with self.subTest(name):
                self.assertAlmostEqual(concurrence(rho).concurrence, 0.0, places=6)

    def test_odd_family(self):
        for xi in (0.1, 0.4, math.pi / 4):
            with self.subTest(xi=xi):
                psi = state(0, math.cos(xi), math.sin(xi), 0)
                self.assertAlmostEqual(
                    concurrence(projector(psi)).concurrence, abs(math.sin(2 * xi)), places=6
                )

    def test_werner_states(self):
        # p |Bell><Bell| + (1 - p) I/4 has concurrence max(0, (3p - 1) / 2)
        for p, expected in ((0.5, 0.25), (1 / 3, 0.0), (0.2, 0.0), (0.9, 0.85)):
            with self.subTest(p=p):
                rho = p * projector(BELL) + (1 - p) * MIXED_4
                self.assertAlmostEqual(concurrence(rho).concurrence, expected, places=12)

    def test_local_unitaries_leave_concurrence_unchanged(self):
        rng = np.random.default_rng(17)
        for trial in range(10):
            rho = 0.8 * projector(BELL) + 0.2 * random_density(rng, 4)
            local = tensor(
                unitary_group.rvs(2, random_state=rng), unitary_group.rvs(2, random_state=rng)
            )
            rotated = local @ rho @ local.conj().T
            with self.subTest(trial=trial):
                before = concurrence(rho).concurrence
                self.assertGreater(before, 0.0)
                self.assertAlmostEqual(concurrence(rotated).concurrence, before, places=9)

    def test_eigenvalues_are_sorted(self):
        values = concurrence(projector(BELL)).eigenvalues
        self.assertEqual(list(values), sorted(values, reverse=True))

    def test_rejects_non_density(self):
        cases = {
            "trace two": 2 * MIXED_4,
            "not hermitian": MIXED_4 + np.diag([0, 0, 0, 0.1j]),
            "negative": np.diag([1.2, -0.2, 0, 0]).astype(np.complex128),
        }
        for name, rho in cases.items():
            with self.subTest(name), self.assertRaises(NotDensityMatrixError):
                _ = concurrence(rho)

    def test_rejects_single_spin(self):
        with self.assertRaises(DimMismatchError):
            _ = concurrence(MIXED_2)


class TestDistances(unittest.TestCase):
    def test_identical_states(self):
        rho = projector(state(0.6, 0.8j))

        self.assertAlmostEqual(fidelity(rho, rho), 1.0, places=7)
        self.assertAlmostEqual(bures_metric(rho, rho), 0.0, places=3)
        self.assertAlmostEqual(trace_distance(rho, rho), 0.0)

    def test_orthogonal_states(self):
        up, down = projector(UP), projector(DOWN)

        self.assertAlmostEqual(fidelity(up, down), 0.0)
        self.assertAlmostEqual(bures_metric(up, down), math.sqrt(2))
        self.assertAlmostEqual(trace_distance(up, down), 1.0)

    def test_pure_against_mixed(self):
        up = projector(UP)

        self.assertAlmostEqual(fidelity(up, MIXED_2), math.sqrt(0.5))
        self.assertAlmostEqual(trace_distance(up, MIXED_2), 0.5)

    def test_pure_state_fidelity_is_overlap(self):
        self.assertAlmostEqual(
            fidelity(projector(UP), projector(state(1, 1))), math.sqrt(0.5), places=6
        )
        rng = np.random.default_rng(5)
        for dim in (2, 4):
            for trial in range(5):
                psi, phi = random_pure(rng, dim), random_pure(rng, dim)
                with self.subTest(dim=dim, trial=trial):
                    self.assertAlmostEqual(
                        fidelity(projector(psi), projector(phi)),
                        abs(np.vdot(psi, phi)),
                        places=6,
                    )

    def test_bures_is_a_metric(self):
        rng = np.random.default_rng(23)
        for dim in (2, 4):
            for trial in range(10):
                a, b, c = (random_density(rng, dim) for _ in range(3))
                with self.subTest(dim=dim, trial=trial):
                    self.assertAlmostEqual(bures_metric(a, b), bures_metric(b, a), places=9)
                    self.assertLessEqual(
                        bures_metric(a, c), bures_metric(a, b) + bures_metric(b, c) + 1e-12
                    )

    def test_qubit_trace_distance_is_half_bloch_distance(self):
        self.assertAlmostEqual(
            trace_distance(spin_from_bloch(np.array([0.0, 0.0, 1.0])), MIXED_2), 0.5
        )
        rng = np.random.default_rng(31)
        for trial in range(20):
            r1, r2 = (
                r * rng.uniform() / np.linalg.norm(r) for r in rng.normal(size=(2, 3))
            )
            with self.subTest(trial=trial):
                self.assertAlmostEqual(
                    trace_distance(spin_from_bloch(r1), spin_from_bloch(r2)),
                    np.linalg.norm(r1 - r2) / 2,
                    places=12,
                )

    def test_shape_mismatch(self):
        with self.assertRaises(DimMismatchError):
            _ = fidelity(MIXED_2, MIXED_4)
        with self.assertRaises(DimMismatchError):
            _ = trace_distance(MIXED_2, MIXED_4)


class TestColumns(unittest.TestCase):
    def test_single_spin(self):
        self.assertEqual(
            observable_columns(projector(UP)), {"sx": 0.0, "sy": 0.0, "sz": 1.0}
        )

    def test_two_spins(self):
        columns = observable_columns(projector(BELL))
        self.assertEqual(list(columns), ["concurrence"])

    def test_check_density_accepts_states(self):
        check_density(projector(state(1, 2j)), dim=2)
        check_density(MIXED_4)


if __name__ == "__main__":
    unittest.main()
