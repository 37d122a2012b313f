"""Molecule-mixture communication autoencoders (Python bindings)."""

from ._molmix import (
    ConfigError,
    EvaluationError,
    MissingArtifactError,
    Model,
    SensorArray,
    TrainingError,
    UsageError,
    csk_alphabet,
    default_nu_levels,
    generate_sensors,
    gmosk_alphabet,
    gradcheck,
    load_model,
    mda_alphabet,
    preset_config,
    scenario_names,
    train,
    wilson_half_width,
)

__all__ = [
    "ConfigError",
    "EvaluationError",
    "MissingArtifactError",
    "Model",
    "SensorArray",
    "TrainingError",
    "UsageError",
    "csk_alphabet",
    "default_nu_levels",
    "generate_sensors",
    "gmosk_alphabet",
    "gradcheck",
    "load_model",
    "mda_alphabet",
    "preset_config",
    "scenario_names",
    "train",
    "wilson_half_width",
]
