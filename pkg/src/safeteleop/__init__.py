"""Safety-filtered teleoperation with learned backup-controller switching."""

from ._core import backend_name as kernel_backend
from .dynamics import Input, InputBounds, State
from .policies import Obstacle, PolicyParams
from .safety_filter import FilterConfig, FilterOutput, filter_command
from .world import Scenario, default_scenario, run_episode

__version__ = "0.1.0"

__all__ = [
    "Input",
    "InputBounds",
    "State",
    "Obstacle",
    "PolicyParams",
    "FilterConfig",
    "FilterOutput",
    "filter_command",
    "Scenario",
    "default_scenario",
    "run_episode",
    "kernel_backend",
    "__version__",
]
