"""Energy-aware predictive/reactive job-shop scheduling with cooperating agents."""

from .jobshop import (
    Instance, InstanceError, InfeasibleSchedule, Operation, Placement, Schedule,
    check_feasible, generate_instance, load_instance, dump_instance, gantt_export, gantt_parse,
)
from .pso import PsoParams, PsoResult, objective, pso_run
from .energy import (
    EnergyAlarm, FilterState, PvSource, RescheduleOrder, SensorSample, WindSourceConfig,
    air_density, detect, filter_alarm, wind_power,
)
from .resched import RescheduleResult, Technique, reschedule, technique1, technique2
from .scenario import Scenario, ScenarioError, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Instance", "InstanceError", "InfeasibleSchedule", "Operation", "Placement", "Schedule",
    "check_feasible", "generate_instance", "load_instance", "dump_instance", "gantt_export", "gantt_parse",
    "PsoParams", "PsoResult", "objective", "pso_run",
    "EnergyAlarm", "FilterState", "PvSource", "RescheduleOrder", "SensorSample", "WindSourceConfig",
    "air_density", "detect", "filter_alarm", "wind_power",
    "RescheduleResult", "Technique", "reschedule", "technique1", "technique2",
    "Scenario", "ScenarioError", "load_scenario",
]
