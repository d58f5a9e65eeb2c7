"""Simulated deployments, benchmarks, scenarios and the command line."""

from .bench import BenchRecord, bench_lifecycle, bench_publish, bench_sensor, bench_topics
from .scenario import Report, ScenarioError, run_scenario
from .world import GATEWAY_HOST, World, default_device_config

__all__ = [
    "BenchRecord", "GATEWAY_HOST", "Report", "ScenarioError", "World",
    "bench_lifecycle", "bench_publish", "bench_sensor", "bench_topics",
    "default_device_config", "run_scenario",
]
