from .metrics import MetricsReport, wilson_interval
from .scenario import Scenario, run_scenario, run_sweep
