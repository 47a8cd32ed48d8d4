"""Counterfactuals for observed devices via residual recovery.

The structural equations are additive in their noise terms, so given a
parameter point the latent noises of an observed device are recovered
exactly (abduction), interventions modify the deterministic part
(action), and outcomes are re-evaluated with the recovered noise kept
fixed (prediction).  Posterior counterfactuals repeat this for every
retained draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .posterior import params_view
from .queries import QueryError
from .sampler import PosteriorDraws, hdi
from .scm_core import (
    DataError,
    DeviceRecord,
    DomainError,
    FixedConstants,
    ModelParams,
    Regime,
    mean_y0,
    mean_yt,
    slope_sum,
)

__all__ = [
    "CounterfactualQuery",
    "CounterfactualResult",
    "recover_residual",
    "cf_outcome_at_time",
    "cf_failure_time",
    "cf_outcome_humidity",
    "cf_posterior",
]

_MAX_FLAGGED_FRACTION = 0.01


def _require_observed(record: DeviceRecord, t: int) -> None:
    if t not in (0, 1, 2, 3):
        raise DomainError(f"measurement index must be 0..3, got {t}")
    if np.isnan(record.resistances[t]):
        raise DataError(f"record {record.device_id!r} has no measurement at index {t}")


def recover_residual(record: DeviceRecord, t: int, params: ModelParams,
                     constants: FixedConstants = FixedConstants()):
    """Latent noise of measurement t implied by a parameter point."""
    record.validate()
    _require_observed(record, t)
    if t == 0:
        return record.resistances[0] - mean_y0(record.config, params)
    return record.resistances[t] - mean_yt(
        record.y0, record.config, record.times[t], record.regime, params, constants
    )


def cf_outcome_at_time(record: DeviceRecord, t: int, w_new: float,
                       params: ModelParams,
                       constants: FixedConstants = FixedConstants()):
    """Resistance the device would have shown at time w_new instead of w_t."""
    if np.any(np.asarray(w_new, dtype=float) < 0):
        raise DomainError("counterfactual time must be nonnegative")
    u_t = recover_residual(record, t, params, constants)
    return mean_yt(
        record.y0, record.config, w_new, record.regime, params, constants
    ) + u_t


def cf_failure_time(record: DeviceRecord, params: ModelParams,
                    constants: FixedConstants = FixedConstants(),
                    x_h_new: int | None = None):
    """Failure time implied by the device's recovered noise (normal stress).

    Under normal stress the drift is linear in transformed time, so the
    threshold crossing has a closed form.  With array-valued parameters
    draws with nonpositive drift yield NaN; a scalar parameter point
    with nonpositive drift is an error.
    """
    if record.regime is not Regime.NS:
        raise DomainError("closed-form failure time is defined for normal stress")
    u3 = recover_residual(record, 3, params, constants)
    config = record.config if x_h_new is None else record.config.with_humidity(x_h_new)
    slope = slope_sum(config, params)
    excess = constants.threshold_factor - 1.0
    numer = (excess * record.y0 - u3) * constants.gamma
    if np.ndim(slope) == 0:
        if slope <= 0:
            raise QueryError("nonpositive drift: the device never reaches the threshold")
        return numer / slope
    slope = np.asarray(slope, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(slope > 0, numer / slope, np.nan)
    return out


def cf_outcome_humidity(record: DeviceRecord, t: int, x_h_new: int,
                        params: ModelParams,
                        constants: FixedConstants = FixedConstants()):
    """Resistance at the factual time had humidity been x_h_new."""
    u_t = recover_residual(record, t, params, constants)
    config = record.config.with_humidity(x_h_new)
    return mean_yt(
        record.y0, config, record.times[t], record.regime, params, constants
    ) + u_t


@dataclass(frozen=True)
class CounterfactualQuery:
    """What would have happened to this device under an override.

    ``question = "outcome"``: resistance at measurement index ``t``,
    with optional overrides of its time and/or the humidity class.
    ``question = "failure_time"``: the threshold-crossing time implied
    by the recovered noise (normal stress only), with an optional
    humidity override.  No override reproduces the factual world.
    """

    record: DeviceRecord
    question: Literal["outcome", "failure_time"] = "outcome"
    t: int = 3
    time_override: float | None = None
    humidity_override: int | None = None

    def validate(self) -> None:
        if self.question not in ("outcome", "failure_time"):
            raise DomainError(f"unknown question {self.question!r}")
        if self.humidity_override is not None and self.humidity_override not in (-1, 1):
            raise DomainError("humidity_override must be -1 or +1")
        if self.question == "outcome":
            _require_observed(self.record, self.t)
            if self.time_override is not None and self.time_override < 0:
                raise DomainError("time_override must be nonnegative")
        else:
            if self.time_override is not None:
                raise DomainError("failure-time queries take no time override")


@dataclass
class CounterfactualResult:
    """Per-draw counterfactual values plus their summary."""

    values: np.ndarray
    n_flagged: int
    summary: dict


def cf_posterior(query: CounterfactualQuery, draws: PosteriorDraws,
                 constants: FixedConstants = FixedConstants(),
                 level: float = 0.95) -> CounterfactualResult:
    """Evaluate a counterfactual query under every retained draw."""
    query.validate()
    params = params_view(draws.names, draws.values)
    record = query.record
    if query.question == "outcome":
        config = (record.config if query.humidity_override is None
                  else record.config.with_humidity(query.humidity_override))
        w = (record.times[query.t] if query.time_override is None
             else float(query.time_override))
        u_t = recover_residual(record, query.t, params, constants)
        values = np.asarray(
            mean_yt(record.y0, config, w, record.regime, params, constants) + u_t
        )
    else:
        values = np.asarray(
            cf_failure_time(record, params, constants, x_h_new=query.humidity_override)
        )
    flagged = ~np.isfinite(values)
    n_flagged = int(flagged.sum())
    if n_flagged > _MAX_FLAGGED_FRACTION * values.size:
        raise QueryError(
            f"{n_flagged} of {values.size} draws produced no counterfactual value"
        )
    kept = values[~flagged]
    qs = np.quantile(kept, [0.05, 0.25, 0.50, 0.75, 0.95])
    lo, hi = hdi(kept, level)
    summary = {
        "mean": float(kept.mean()),
        "sd": float(kept.std(ddof=1)) if kept.size > 1 else 0.0,
        "median": float(qs[2]),
        "q05": float(qs[0]), "q25": float(qs[1]), "q75": float(qs[3]),
        "q95": float(qs[4]),
        "hdi_low": lo, "hdi_high": hi, "level": level,
        "n": int(kept.size), "n_flagged": n_flagged,
    }
    return CounterfactualResult(values=kept, n_flagged=n_flagged, summary=summary)
