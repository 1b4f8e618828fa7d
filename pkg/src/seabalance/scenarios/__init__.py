"""Bundled experiments, configuration, sweeps, output files and the CLI."""

from .config import ConfigError, ScenarioConfig, bundled_scenarios, load_config, parse_config
from .runner import RunMetrics, build, compute_metrics, run_scenario, run_sweep

__all__ = ["ConfigError", "ScenarioConfig", "bundled_scenarios", "load_config", "parse_config", "RunMetrics", "build",
           "compute_metrics", "run_scenario", "run_sweep"]
