"""Python front end for the eatta library."""

import json

from ._core import (
    ConfigError,
    Error,
    IoError,
    Model,
    NumericError,
    OracleError,
    canonical_config,
    debias_weights,
    ema,
    preset_names,
    preset_text,
)
from . import _core

__all__ = [
    "ConfigError", "Error", "IoError", "Model", "NumericError", "OracleError",
    "ablate", "canonical_config", "debias_weights", "ema", "gradcheck",
    "preset_names", "preset_text", "run", "toy",
]


def _text(config=None, preset=None):
    if (config is None) == (preset is None):
        raise ValueError("give exactly one of config or preset")
    return preset_text(preset) if preset is not None else config


def run(config=None, *, preset=None, seed=None):
    """Run one adaptation episode and return the report as a dict."""
    return json.loads(_core.run_json(_text(config, preset), seed))


def ablate(config=None, *, preset=None):
    """Run the config's grid and return the summary table as a dict."""
    return json.loads(_core.ablate_json(_text(config, preset)))


def toy(config=None, *, preset="toy-appendix"):
    return json.loads(_core.toy_json(config if config is not None else preset_text(preset)))


def gradcheck(trials=200, seed=0, corrupt_gradient=False):
    return json.loads(_core.gradcheck_json(trials, seed, corrupt_gradient))
