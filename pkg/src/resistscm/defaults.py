"""Shipped defaults: reference truth parameters and measurement schedules."""

from __future__ import annotations

import json
from importlib import resources

from .scm_core import FixedConstants, ModelParams

__all__ = [
    "reference_truth",
    "default_constants",
    "ns_constants",
    "NS_NOMINAL_TIMES",
]

# Normal-stress schedule: gamma times the accelerated schedule, so each
# measurement carries the same effective (transformed) time either way.
NS_NOMINAL_TIMES = (7.2, 21.6, 36.0)


def reference_truth() -> ModelParams:
    """Truth vector used by the shipped generator configs (see its notes)."""
    text = resources.files("resistscm.data").joinpath("reference_truth.json").read_text()
    return ModelParams.from_dict(json.loads(text))


def default_constants() -> FixedConstants:
    """Constants with the accelerated-stress measurement schedule."""
    return FixedConstants()


def ns_constants() -> FixedConstants:
    """Constants with the normal-stress measurement schedule."""
    return FixedConstants(nominal_times=NS_NOMINAL_TIMES)
