"""Two-photon interference simulator for Mach-Zehnder and polarisation Michelson interferometers."""

import json as _json

from ._twinfringe import (
    Evaluator as _Evaluator,
    InputError,
    NumericalError,
    expected_counts,
    scenario_description,
    scenario_names,
)
from . import _twinfringe as _core

__all__ = [
    "Evaluator",
    "InputError",
    "NumericalError",
    "default_config",
    "expected_counts",
    "fit",
    "run_scenario",
    "scenario_description",
    "scenario_names",
]


def default_config(name):
    """Fully populated default configuration of a scenario."""
    return _json.loads(_core.default_config_json(name))


def run_scenario(name, overrides=None, threads=0):
    """Runs a scenario with `overrides` merged into its defaults."""
    result = _core.run_scenario_json(name, _json.dumps(overrides or {}), threads)
    result["config"] = _json.loads(result["config"])
    return result


def Evaluator(config):
    """Coincidence evaluator for a resolved configuration dict."""
    return _Evaluator(_json.dumps(config))


def fit(model, x, y, poisson=False):
    """Fits 'sinusoid', 'sinc' or 'gaussian' and returns params, stderrs and residuals."""
    return _json.loads(_core.fit_json(model, x, y, poisson))
