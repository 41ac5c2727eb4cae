"""Configuration, scenario registry, runners, reports and the CLI."""
from .config import Scenario, load_config, parse_config
from .report import Report
from .runner import check_file, explore_scenario, replay_trace, run_scenario
from .scenarios import REGISTRY, build

__all__ = ["Scenario", "load_config", "parse_config", "Report", "run_scenario",
           "explore_scenario", "replay_trace", "check_file", "REGISTRY", "build"]
