from .config import ScenarioConfig, load_config, parse_config
from .metrics import MetricsReport, emit_metrics
from .scenario import run_scenario
from .traffic import TrafficSpec, generate_traffic

__all__ = [
    "MetricsReport",
    "ScenarioConfig",
    "TrafficSpec",
    "emit_metrics",
    "generate_traffic",
    "load_config",
    "parse_config",
    "run_scenario",
]
