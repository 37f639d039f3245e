from .eventlog import DeviceLog, EventLog, FrameRecord
from .runner import run, run_device, run_log
from .scenario import (
    ConfigError,
    DeviceConfig,
    Environment,
    PolicyConfig,
    Scenario,
    load_default_scenario,
    load_scenario,
    scenario_from_text,
)

__all__ = [
    "DeviceLog", "EventLog", "FrameRecord", "run", "run_device", "run_log", "ConfigError", "DeviceConfig",
    "Environment", "PolicyConfig", "Scenario", "load_default_scenario", "load_scenario", "scenario_from_text",
]
