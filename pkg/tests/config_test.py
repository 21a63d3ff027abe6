import math
import tempfile
import unittest
from pathlib import Path

from nmqj.config import ClassScope
from nmqj.config import ConfigParseError
from nmqj.config import ConfigValidationError
from nmqj.config import EngineKind
from nmqj.config import Sampling
from nmqj.config import SimConfig
from nmqj.config import load_config
from nmqj.config import parse_config
from nmqj.config import parse_override
from nmqj.models import InitialKind
from nmqj.models import ModelLabel
from nmqj.qcore import Scheme
from nmqj.reservoir import CouplingKind


class TestDefaults(unittest.TestCase):
    def test_empty_document(self):
        config = parse_config("")

        self.assertEqual(config, SimConfig())
        self.assertEqual(config.model, ModelLabel.MODEL_I)
        self.assertEqual(config.engine, EngineKind.LEDGER)
        self.assertEqual(config.initial.kind, InitialKind.BLOCH)
        self.assertEqual(config.scheme, Scheme.EULER1)
        self.assertEqual(config.sampling, Sampling.LEFT)
        self.assertEqual(config.class_scope, ClassScope.CLASS)
        self.assertEqual(config.truncation, 2)
        self.assertEqual(config.n_r, 10000)
        self.assertIsNone(config.memory_tau)
        self.assertTrue(config.sidecar)

    def test_symbolic_end_times(self):
        config = SimConfig()
        self.assertTrue(0.99 <= config.resolved_t_end() <= 1.0)

        early = SimConfig(t_end="t_P")
        self.assertTrue(0.600 <= early.resolved_t_end() <= 0.605)

        self.assertEqual(SimConfig(t_end=2.5).resolved_t_end(), 2.5)

    def test_model_ii_defaults_to_xi(self):
        config = parse_config("model: model_ii\n")

        self.assertEqual(config.initial.kind, InitialKind.XI)
        self.assertEqual(config.model_spec().dim, 4)
        self.assertEqual(config.initial_state().shape, (4,))


class TestParsing(unittest.TestCase):
    def test_nested_and_dotted_agree(self):
        nested = parse_config(
            """
reservoir:
  eta: 8
  q0: 5
time:
  dt: 5.0e-3
  t_end: 0.5
model_ii:
  coupling: sigmoid_switchoff
"""
        )
        dotted = parse_config(
            "reservoir.eta: 8\nreservoir.q0: 5\ntime.dt: 5.0e-3\ntime.t_end: 0.5\n"
            "model_ii.coupling: sigmoid_switchoff\n"
        )

        self.assertEqual(nested, dotted)
        self.assertEqual(nested.reservoir.eta, 8.0)
        self.assertEqual(nested.dt, 5e-3)
        self.assertEqual(nested.coupling.kind, CouplingKind.SIGMOID_SWITCHOFF)

    def test_overrides_win(self):
        config = parse_config("mc.n_r: 100\n", {"mc.n_r": 200, "engine": "mc"})

        self.assertEqual(config.n_r, 200)
        self.assertEqual(config.engine, EngineKind.MC)

    def test_exponent_without_dot(self):
        self.assertEqual(parse_config("time.dt: 1e-4\n").dt, 1e-4)

    def test_parse_errors(self):
        cases = {
            "unknown key": "ledger.depth: 3\n",
            "bad number": "reservoir.eta: lots\n",
            "bad enum": "engine: quantum\n",
            "fractional integer": "ledger.truncation: 2.5\n",
            "bool as number": "time.dt: true\n",
            "not a mapping": "- 1\n- 2\n",
            "broken yaml": "time: [dt\n",
        }
        for name, text in cases.items():
            with self.subTest(name), self.assertRaises(ConfigParseError):
                _ = parse_config(text)

    def test_validation_errors(self):
        cases = {
            "negative dt": "time.dt: -1\n",
            "zero t_end": "time.t_end: 0\n",
            "no truncation": "ledger.truncation: 0\n",
            "overflow above one": "ledger.overflow_threshold: 2\n",
            "empty ensemble": "engine: mc\nmc.n_r: 0\n",
            "zero memory": "memory.tau: 0\n",
            "xi out of range": "model: model_ii\ninitial.xi: 2\n",
            "bloch for model ii": "model: model_ii\ninitial.kind: bloch\n",
            "negative eta": "reservoir.eta: -1\n",
        }
        for name, text in cases.items():
            with self.subTest(name), self.assertRaises(ConfigValidationError):
                _ = parse_config(text)

    def test_violations_are_collected(self):
        with self.assertRaises(ConfigValidationError) as ctx:
            _ = parse_config("time.dt: -1\nledger.truncation: 0\n")

        self.assertEqual(len(ctx.exception.violations), 2)

    def test_unreachable_symbolic_end(self):
        config = parse_config("reservoir.q0: 0\n")
        with self.assertRaises(ConfigValidationError):
            _ = config.resolved_t_end()


class TestOverrides(unittest.TestCase):
    def test_parse_override(self):
        cases = {
            "time.dt=0.005": ("time.dt", 0.005),
            "mc.seed=7": ("mc.seed", 7),
            "bench.n_r_values=[10, 20]": ("bench.n_r_values", [10, 20]),
            "output.sidecar=false": ("output.sidecar", False),
            "time.t_end=t_P": ("time.t_end", "t_P"),
        }
        for assignment, expected in cases.items():
            with self.subTest(assignment):
                self.assertEqual(parse_override(assignment), expected)

    def test_parse_override_errors(self):
        for assignment in ("time.dt", "=3"):
            with self.subTest(assignment), self.assertRaises(ConfigParseError):
                _ = parse_override(assignment)

    def test_with_overrides(self):
        config = SimConfig()

        self.assertEqual(config.with_overrides({}), config)
        self.assertEqual(config.with_overrides({"mc.seed": 3}).seed, 3)
        self.assertEqual(config.seed, 0)

    def test_flat_view_is_plain(self):
        flat = SimConfig(output_path=Path("out/run.csv")).to_flat()

        self.assertEqual(flat["engine"], "ledger")
        self.assertEqual(flat["output.path"], "out/run.csv")
        self.assertIsInstance(flat["time.scheme"], str)


class TestLoad(unittest.TestCase):
    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            _ = load_config(Path("does/not/exist.yaml"))

    def test_load_with_overrides(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "exp.yaml"
            _ = path.write_text("initial:\n  theta: 3.14159\nmemory:\n  tau: 0.1\n")

            config = load_config(path, {"initial.phi": 1})

        self.assertAlmostEqual(config.initial.theta, 3.14159)
        self.assertEqual(config.initial.phi, 1.0)
        self.assertEqual(config.memory_tau, 0.1)
        self.assertFalse(math.isinf(config.resolved_t_end()))


if __name__ == "__main__":
    unittest.main()
