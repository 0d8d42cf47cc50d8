# SPDX-License-Identifier: Apache-2.0
"""Groupwise image scheduling and power control for drone uplinks.

Solver functions return plain dictionaries with the keys ``solver``,
``objective``, ``feasible``, ``wall_time_s``, ``selection`` and ``powers_w``.
"""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    DataError,
    DomainError,
    GwHgnn,
    IoError,
    LagsError,
    NumericalError,
    ProblemInstance,
    check_constraints,
    generate_instance,
    gs_loss,
    min_power_for_selection,
    objective,
    ssim,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DomainError",
    "GwHgnn",
    "IoError",
    "LagsError",
    "NumericalError",
    "ProblemInstance",
    "brute_force_oracle",
    "channel_blind",
    "check_constraints",
    "drone_granularity",
    "generate_instance",
    "gs_loss",
    "gw1_sumrate",
    "gw2_greedy",
    "min_power_for_selection",
    "objective",
    "ssim",
    "threshold_and_repair",
    "train",
]


def brute_force_oracle(instance, jobs=1):
    return _json.loads(_core.brute_force_oracle(instance, jobs))


def drone_granularity(instance):
    return _json.loads(_core.drone_granularity(instance))


def gw1_sumrate(instance):
    return _json.loads(_core.gw1_sumrate(instance))


def gw2_greedy(instance, budget=5):
    return _json.loads(_core.gw2_greedy(instance, budget))


def channel_blind(instance):
    return _json.loads(_core.channel_blind(instance))


def threshold_and_repair(instance, selection, powers, threshold=0.5):
    return _json.loads(_core.threshold_and_repair(instance, selection, powers, threshold))
