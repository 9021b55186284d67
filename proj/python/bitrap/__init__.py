"""Goal-conditioned bi-directional trajectory prediction (C++ core)."""

from ._bitrap import (
    AgentTrack,
    ConfigError,
    DataError,
    Error,
    Model,
    NumericalError,
    ParseError,
    Scene,
    ShapeError,
    Window,
    ade,
    config_keys,
    fde,
    kde_nll,
    load_bev,
    load_fpv,
    save_bev,
    synth,
    train,
    windows,
)

load_model = Model.load

__all__ = [
    "AgentTrack",
    "ConfigError",
    "DataError",
    "Error",
    "Model",
    "NumericalError",
    "ParseError",
    "Scene",
    "ShapeError",
    "Window",
    "ade",
    "config_keys",
    "fde",
    "kde_nll",
    "load_bev",
    "load_fpv",
    "load_model",
    "save_bev",
    "synth",
    "train",
    "windows",
]
