from nmqj.config import EngineKind
from nmqj.config import SimConfig
from nmqj.engines.common import Engine
from nmqj.engines.common import RunResult
from nmqj.engines.ensemble import EnsembleEngine
from nmqj.engines.exact import ExactEngine
from nmqj.engines.ledger import LedgerEngine
from nmqj.models import ModelSpec

ENGINE_KIND_TO_CLS: dict[EngineKind, type[Engine]] = {
    EngineKind.LEDGER: LedgerEngine,
    EngineKind.MC: EnsembleEngine,
    EngineKind.EXACT: ExactEngine,
}


def engine_factory(config: SimConfig, spec: ModelSpec | None = None) -> Engine:
    return ENGINE_KIND_TO_CLS[config.engine](config, spec)


def run_config(config: SimConfig, spec: ModelSpec | None = None) -> RunResult:
    return engine_factory(config, spec).run()
