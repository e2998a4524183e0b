from ._core import (
    ChecksumError,
    ConfigError,
    ConfusionCounts,
    DataError,
    FormatError,
    Model,
    ModelConfig,
    ShapeError,
    confusion,
    gradcheck,
    metrics,
    param_count,
    run_cli,
    synth_dataset,
)

__all__ = [
    "ChecksumError",
    "ConfigError",
    "ConfusionCounts",
    "DataError",
    "FormatError",
    "Model",
    "ModelConfig",
    "ShapeError",
    "confusion",
    "gradcheck",
    "metrics",
    "param_count",
    "run_cli",
    "synth_dataset",
]
