"""Config-driven experiment runner and CLI."""

from .config import ConfigError, RunConfig, parse_config
from .presets import PRESETS, load_preset
from .runner import RunResult, run_experiment
from .svg import AxesSpec, Series, emit_svg, render_svg

__all__ = ["ConfigError", "RunConfig", "parse_config", "PRESETS", "load_preset", "RunResult",
           "run_experiment", "AxesSpec", "Series", "emit_svg", "render_svg"]
