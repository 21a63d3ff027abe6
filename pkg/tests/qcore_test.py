import unittest

import numpy as np
from scipy.linalg import expm

from nmqj.qcore import DOWN
from nmqj.qcore import IDENTITY_2
from nmqj.qcore import SIGMA_MINUS
from nmqj.qcore import SIGMA_X
from nmqj.qcore import SIGMA_Z
from nmqj.qcore import UP
from nmqj.qcore import DimMismatchError
from nmqj.qcore import NotHermitianError
from nmqj.qcore import Scheme
from nmqj.qcore import TooNegativeError
from nmqj.qcore import ZeroNormError
from nmqj.qcore import batch_expectation
from nmqj.qcore import evolve_batch
from nmqj.qcore import evolve_step
from nmqj.qcore import expectation
from nmqj.qcore import hermitian_eigs
from nmqj.qcore import normalize
from nmqj.qcore import psd_sqrt
from nmqj.qcore import state
from nmqj.qcore import step_matrix
from nmqj.qcore import tensor


class TestStates(unittest.TestCase):
    def test_state_is_normalized(self):
        psi = state(3, 4j)
        self.assertAlmostEqual(float(np.linalg.norm(psi)), 1.0, places=12)

    def test_zero_vector(self):
        with self.assertRaises(ZeroNormError):
            _ = normalize(np.zeros(2, dtype=np.complex128))

    def test_lowering_operator(self):
        np.testing.assert_array_equal(SIGMA_MINUS @ UP, DOWN)
        np.testing.assert_array_equal(SIGMA_MINUS @ DOWN, np.zeros(2))


class TestTensor(unittest.TestCase):
    def test_spin_one_is_slow_index(self):
        lowered = tensor(SIGMA_MINUS, IDENTITY_2)
        up_down = np.array([0, 1, 0, 0], dtype=np.complex128)
        down_down = np.array([0, 0, 0, 1], dtype=np.complex128)

        np.testing.assert_array_equal(lowered @ up_down, down_down)

    def test_shape(self):
        self.assertEqual(tensor(SIGMA_X, SIGMA_Z).shape, (4, 4))

    def test_rejects_non_square(self):
        with self.assertRaises(DimMismatchError):
            _ = tensor(np.ones((2, 3)), IDENTITY_2)


class TestEvolution(unittest.TestCase):
    def test_zero_hamiltonian_keeps_state(self):
        psi = state(1, 1)
        for scheme in Scheme:
            with self.subTest(scheme=scheme):
                np.testing.assert_allclose(
                    evolve_step(psi, np.zeros((2, 2), dtype=np.complex128), 1e-3, scheme),
                    psi,
                )

    def test_rk4_matches_propagator(self):
        h = 0.5 * SIGMA_X - 0.3j * (SIGMA_Z + IDENTITY_2)
        dt = 1e-3
        exact = normalize(expm(-1j * h * dt) @ UP)

        np.testing.assert_allclose(evolve_step(UP, h, dt, Scheme.RK4), exact, atol=1e-13)

    def test_euler_matrix(self):
        h = 0.5 * SIGMA_X
        np.testing.assert_allclose(
            step_matrix(lambda _: h, 0.0, 0.01), np.eye(2) - 0.01j * h, atol=1e-15
        )

    def test_batch_rows_are_normalized(self):
        states = np.array([UP, state(1, 1j), DOWN])
        advanced = evolve_batch(states, step_matrix(lambda _: -1j * SIGMA_Z, 0.0, 0.1))

        np.testing.assert_allclose(np.linalg.norm(advanced, axis=1), np.ones(3))

    def test_invalid_step(self):
        with self.assertRaises(ValueError):
            _ = evolve_step(UP, SIGMA_X, 0.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimMismatchError):
            _ = evolve_step(UP, tensor(SIGMA_X, SIGMA_X), 1e-3)


class TestSpectra(unittest.TestCase):
    def test_expectation(self):
        self.assertAlmostEqual(expectation(SIGMA_Z, UP), 1.0)
        self.assertAlmostEqual(expectation(SIGMA_X, state(1, 1)), 1.0)

    def test_batch_expectation(self):
        states = np.array([UP, DOWN, state(1, 1)])
        np.testing.assert_allclose(batch_expectation(SIGMA_Z, states), [1.0, -1.0, 0.0], atol=1e-15)

    def test_eigs_sorted_descending(self):
        pairs = hermitian_eigs(SIGMA_X)

        self.assertAlmostEqual(pairs[0][0], 1.0)
        self.assertAlmostEqual(pairs[1][0], -1.0)
        np.testing.assert_allclose(SIGMA_X @ pairs[0][1], pairs[0][1], atol=1e-12)

    def test_eigs_reconstruct_the_matrix(self):
        rng = np.random.default_rng(41)
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        cases = {
            "degenerate sx sx": tensor(SIGMA_X, SIGMA_X),
            "random": (g + g.conj().T) / 2,
            "diagonal": np.diag([3.0, -1.0, 2.0]).astype(np.complex128),
        }
        for name, m in cases.items():
            with self.subTest(name):
                pairs = hermitian_eigs(m)
                values = np.array([value for value, _ in pairs])
                vectors = np.column_stack([vector for _, vector in pairs])

                np.testing.assert_allclose(
                    (vectors * values) @ vectors.conj().T, m, atol=1e-12
                )
                np.testing.assert_allclose(
                    vectors.conj().T @ vectors, np.eye(m.shape[0]), atol=1e-12
                )
                self.assertTrue(np.all(np.diff(values) <= 0))

        values = [value for value, _ in hermitian_eigs(tensor(SIGMA_X, SIGMA_X))]
        np.testing.assert_allclose(values, [1.0, 1.0, -1.0, -1.0], atol=1e-12)

    def test_eigs_reject_non_hermitian(self):
        with self.assertRaises(NotHermitianError):
            _ = hermitian_eigs(SIGMA_MINUS)

    def test_psd_sqrt(self):
        m = np.diag([0.25, 1.0]).astype(np.complex128)
        np.testing.assert_allclose(psd_sqrt(m), np.diag([0.5, 1.0]), atol=1e-15)

        mixed = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]])
        root = psd_sqrt(mixed)
        np.testing.assert_allclose(root @ root, mixed, atol=1e-12)

    def test_psd_sqrt_squares_back(self):
        rng = np.random.default_rng(43)
        for dim in (2, 4):
            for trial in range(5):
                g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
                m = g @ g.conj().T
                with self.subTest(dim=dim, trial=trial):
                    root = psd_sqrt(m)
                    np.testing.assert_allclose(root, root.conj().T, atol=1e-12)
                    np.testing.assert_allclose(root @ root, m, atol=1e-10)
                    self.assertGreaterEqual(np.linalg.eigvalsh(root).min(), -1e-12)

    def test_psd_sqrt_clamps_noise(self):
        m = np.diag([1.0, -1e-9]).astype(np.complex128)
        np.testing.assert_allclose(psd_sqrt(m), np.diag([1.0, 0.0]), atol=1e-15)

    def test_psd_sqrt_rejects_negative(self):
        with self.assertRaises(TooNegativeError):
            _ = psd_sqrt(np.diag([1.0, -0.1]).astype(np.complex128))


if __name__ == "__main__":
    unittest.main()
