"""
Configuration module - Simulation configs, presets and environment settings
"""

from .settings import (
    ArqConfig,
    ChannelConfig,
    DatasetSpec,
    RuntimeSettings,
    SimulationConfig,
    get_settings,
    parse_config,
)
from .presets import PRESETS, ExperimentPreset, get_preset, validate_presets

__all__ = [
    "ArqConfig",
    "ChannelConfig",
    "DatasetSpec",
    "RuntimeSettings",
    "SimulationConfig",
    "get_settings",
    "parse_config",
    "PRESETS",
    "ExperimentPreset",
    "get_preset",
    "validate_presets",
]
