# SPDX-License-Identifier: Apache-2.0
"""Python front end for the simfd link simulator."""

import json

from . import _simfd
from ._simfd import (
    CheckpointError,
    ConfigError,
    ShapeError,
    diffraction_coefficient,
    hard_decision,
    path_loss_db,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ShapeError",
    "config",
    "config_digest",
    "baseline_conventional",
    "layer_widths",
    "propagation",
    "spatial_correlation",
    "realize_channel",
    "diffraction_coefficient",
    "path_loss_db",
    "gradcheck",
    "train_base",
    "history",
    "monte_carlo_eval",
    "hard_decision",
]


def _text(cfg):
    if isinstance(cfg, dict):
        return json.dumps(cfg)
    return cfg


def config(name_or_path="full"):
    return json.loads(_simfd.load_config(name_or_path))


def config_digest(cfg):
    return _simfd.config_digest(_text(cfg))


def baseline_conventional(cfg):
    return json.loads(_simfd.baseline_conventional(_text(cfg)))


def layer_widths(cfg):
    return _simfd.layer_widths(_text(cfg))


def propagation(cfg, terminal, side):
    return _simfd.propagation(_text(cfg), terminal, side)


def spatial_correlation(cfg, terminal, side):
    return _simfd.spatial_correlation(_text(cfg), terminal, side)


def realize_channel(cfg, seed):
    return _simfd.realize_channel(_text(cfg), seed)


def gradcheck(cfg="mini", seed=1, batch=16):
    return _simfd.gradcheck(_text(cfg), seed, batch)


def train_base(cfg, epochs=None):
    """Returns the serialized checkpoint as bytes."""
    return _simfd.train_base(_text(cfg), epochs)


def history(checkpoint):
    return _simfd.checkpoint_history(checkpoint)


def monte_carlo_eval(checkpoint, cfg, threads=1, finetune=True):
    return _simfd.monte_carlo_eval(checkpoint, _text(cfg), threads, finetune)
