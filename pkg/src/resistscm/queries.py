"""Causal estimands, reliability curves, failure-time prediction, censoring.

Estimands are defined on the structural model: expected degradation
under an assigned configuration, contrasts between two assignments,
back-door-adjusted outcome densities for observational (normal-stress)
data, and the predictive failure-time distribution.  Posterior versions
evaluate an estimand once per retained draw and summarize the draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .posterior import params_view
from .sampler import PosteriorDraws, summary_stats
from .scm_core import (
    Configuration,
    DeviceRecord,
    DomainError,
    FixedConstants,
    ModelError,
    ModelParams,
    Regime,
    diff_mean,
    humidity_class,
    mean_y0,
    mean_yt,
    slope_sum,
    cubic_sum,
)

__all__ = [
    "QueryError",
    "Intervention",
    "EstimandResult",
    "FailureTimeSample",
    "Exact",
    "IntervalCensored",
    "RightCensored",
    "delta1",
    "delta_contrast",
    "delta_contrast_posterior",
    "reliability_known_y0",
    "reliability_unknown_y0",
    "adjusted_outcome_density",
    "predictive_failure_time",
    "censor_classify",
]

_MAX_FLAGGED_FRACTION = 0.01


class QueryError(ModelError):
    """A query is ill-posed or too many draws had to be discarded."""


@dataclass(frozen=True)
class Intervention:
    """Assigned factor levels; None leaves a factor to its natural law."""

    x_s: int | None = None
    x_t: int | None = None
    x_p: int | None = None
    x_h: int | None = None  # humidity class -1/+1 when assigned

    def __post_init__(self) -> None:
        for name in ("x_s", "x_t", "x_p"):
            v = getattr(self, name)
            if v is not None and (not isinstance(v, (int, np.integer)) or v < 1):
                raise DomainError(f"{name} must be a positive level index, got {v!r}")
        if self.x_h is not None and self.x_h not in (-1, 1):
            raise DomainError(f"x_h must be -1 or +1, got {self.x_h!r}")


@dataclass
class EstimandResult:
    """Per-draw values of a scalar estimand plus their summary."""

    values: np.ndarray
    summary: dict


@dataclass
class FailureTimeSample:
    """Predictive failure-time draws and their distribution summary."""

    values: np.ndarray
    n_flagged: int
    summary: dict


def _check_times(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DomainError("times must be nonnegative")
    return w


def delta1(config: Configuration, w_t, params: ModelParams,
           constants: FixedConstants = FixedConstants()):
    """Expected resistance increase by time w_t under accelerated stress."""
    w = _check_times(w_t)
    knot = np.maximum(w - constants.psi, 0.0) ** constants.tau
    out = slope_sum(config, params) * w + cubic_sum(config, params) * knot
    return float(out) if np.ndim(out) == 0 else out


def delta_contrast(config1: Configuration, config2: Configuration, x_h: int,
                   w_t, params: ModelParams,
                   constants: FixedConstants = FixedConstants()):
    """Expected-increase difference, config2 minus config1, at common humidity."""
    c1 = config1.with_humidity(x_h)
    c2 = config2.with_humidity(x_h)
    return delta1(c2, w_t, params, constants) - delta1(c1, w_t, params, constants)


def delta_contrast_posterior(config1: Configuration, config2: Configuration,
                             x_h: int, w_t: float, draws: PosteriorDraws,
                             constants: FixedConstants = FixedConstants(),
                             level: float = 0.95) -> EstimandResult:
    """Posterior distribution of the contrast at a single time."""
    params = params_view(draws.names, draws.values)
    values = np.asarray(
        delta_contrast(config1, config2, x_h, float(w_t), params, constants)
    )
    return EstimandResult(values=values, summary=summary_stats(values, level))


def _check_sigma(value, name: str) -> None:
    if np.any(np.asarray(value) <= 0):
        raise DomainError(f"{name} must be positive")


def reliability_known_y0(t, y0: float, config: Configuration, regime: Regime,
                         params: ModelParams,
                         constants: FixedConstants = FixedConstants()):
    """P(no failure by time t) for a device with known initial resistance."""
    _check_times(t)
    _check_sigma(params.sigma_y, "sigma_y")
    mu_d = diff_mean(y0, config, t, regime, params, constants)
    out = ndtr(-mu_d / params.sigma_y)
    return float(out) if np.ndim(out) == 0 else out


def reliability_unknown_y0(t, config: Configuration, regime: Regime,
                           params: ModelParams,
                           constants: FixedConstants = FixedConstants()):
    """P(no failure by time t) marginalizing the initial resistance."""
    _check_times(t)
    _check_sigma(params.sigma_y, "sigma_y")
    excess = constants.threshold_factor - 1.0
    h_d = mean_yt(0.0, config, t, regime, params, constants)
    mu_d = h_d - excess * mean_y0(config, params)
    sd = np.sqrt(params.sigma_y**2 + (excess * params.sigma0) ** 2)
    out = ndtr(-mu_d / sd)
    return float(out) if np.ndim(out) == 0 else out


def adjusted_outcome_density(y, y0: float, intervention: Intervention, w_t: float,
                             params: ModelParams,
                             constants: FixedConstants = FixedConstants()):
    """Back-door-adjusted density of the outcome under an intervention.

    Normal-stress regime: the density of resistance at time w_t given
    initial resistance y0 under do(x_S[, x_T, x_P]), adjusting for
    humidity:  sum_h p(y | x, h, y0, w) pi_H[h].  Factors left
    unassigned are marginalized over their configuration law, giving a
    normal mixture with one component per marginalized cell.
    """
    if intervention.x_s is None:
        raise QueryError("the adjusted density requires x_s to be assigned")
    if intervention.x_h is not None:
        raise QueryError("humidity is the adjustment variable; it cannot be assigned")
    _check_times(w_t)
    _check_sigma(params.sigma_y, "sigma_y")
    y = np.asarray(y, dtype=float)
    dens = np.zeros_like(y)
    total = 0.0
    for h_level in (1, 2):
        w_h = float(params.pi_h[h_level - 1])
        t_choices = (
            [(intervention.x_t, 1.0)] if intervention.x_t is not None
            else [(i + 1, float(params.pi_t[h_level - 1, i])) for i in range(params.n_t)]
        )
        p_choices = (
            [(intervention.x_p, 1.0)] if intervention.x_p is not None
            else [(i + 1, float(params.pi_p[i])) for i in range(params.n_p)]
        )
        for x_t, w_t_prob in t_choices:
            for x_p, w_p_prob in p_choices:
                weight = w_h * w_t_prob * w_p_prob
                if weight == 0.0:
                    continue
                config = Configuration(
                    x_s=intervention.x_s, x_t=x_t, x_p=x_p,
                    x_h=humidity_class(h_level),
                )
                m = mean_yt(y0, config, w_t, Regime.NS, params, constants)
                z = (y - m) / params.sigma_y
                dens += weight * np.exp(-0.5 * z * z) / (
                    params.sigma_y * math.sqrt(2.0 * math.pi)
                )
                total += weight
    if abs(total - 1.0) > 1e-9:
        raise QueryError(f"mixture weights summed to {total}, expected 1")
    return float(dens) if dens.ndim == 0 else dens


def predictive_failure_time(intervention: Intervention, draws: PosteriorDraws,
                            constants: FixedConstants = FixedConstants(),
                            rng: np.random.Generator | None = None,
                            n_mc: int | None = None) -> FailureTimeSample:
    """Predictive failure time of a new normal-stress device under do(x_S,x_T,x_P).

    Per Monte Carlo replicate (one per retained draw by default):
    humidity is drawn from that draw's pi_H, the initial-resistance and
    measurement noises are drawn, and failure time follows from the
    linear normal-stress drift.  Draws with nonpositive total drift are
    flagged and excluded; more than 1% flagged is an error.
    """
    if intervention.x_s is None or intervention.x_t is None or intervention.x_p is None:
        raise QueryError("predictive failure time requires x_s, x_t and x_p assigned")
    if intervention.x_h is not None:
        raise QueryError("humidity is not assignable for a normal-stress prediction")
    if rng is None:
        rng = np.random.default_rng(0)
    params = params_view(draws.names, draws.values)
    g = draws.g
    idx = np.arange(g)
    if n_mc is not None and n_mc != g:
        if n_mc < 1:
            raise DomainError("n_mc must be >= 1")
        idx = rng.integers(0, g, size=n_mc)
    s, t, p = intervention.x_s - 1, intervention.x_t - 1, intervention.x_p - 1
    for name, lvl, n in (("x_s", s, params.n_s), ("x_t", t, params.n_t),
                         ("x_p", p, params.n_p)):
        if lvl >= n:
            raise DomainError(f"{name} outside 1..{n}")

    pi_h0 = params.pi_h[idx, 0]
    h_idx = (rng.random(idx.size) >= pi_h0).astype(np.intp)  # 0 = normal, 1 = high
    m0 = (params.mu0 + params.alpha_s[:, s] + params.alpha_t[:, t]
          + params.alpha_p[:, p])[idx]
    y0 = m0 + rng.normal(0.0, params.sigma0[idx])
    u3 = rng.normal(0.0, params.sigma_y[idx])
    slope = (params.beta1 + params.delta1_s[:, s] + params.delta1_t[:, t]
             + params.delta1_p[:, p])[idx] + params.delta1_h[idx, h_idx]
    ok = slope > 0
    n_flagged = int((~ok).sum())
    if n_flagged > _MAX_FLAGGED_FRACTION * idx.size:
        raise QueryError(
            f"{n_flagged} of {idx.size} replicates had nonpositive drift"
        )
    excess = constants.threshold_factor - 1.0
    values = (excess * y0[ok] - u3[ok]) * constants.gamma / slope[ok]
    qs = np.quantile(values, [0.05, 0.25, 0.50, 0.75, 0.95])
    summary = {
        "min": float(values.min()),
        "q05": float(qs[0]), "q25": float(qs[1]), "q50": float(qs[2]),
        "q75": float(qs[3]), "q95": float(qs[4]),
        "max": float(values.max()),
        "mean": float(values.mean()),
        "sd": float(values.std(ddof=1)) if values.size > 1 else 0.0,
        "n": int(values.size),
        "n_flagged": n_flagged,
    }
    return FailureTimeSample(values=values, n_flagged=n_flagged, summary=summary)


# --- censoring status ----------------------------------------------------------


@dataclass(frozen=True)
class Exact:
    """Failure observed at an exact time (continuously monitored data)."""

    time: float


@dataclass(frozen=True)
class IntervalCensored:
    """Failure inside (low, high]: below threshold at low, at/above at high."""

    low: float
    high: float


@dataclass(frozen=True)
class RightCensored:
    """No failure by the last recorded measurement at ``low``."""

    low: float


def censor_classify(record: DeviceRecord,
                    threshold_factor: float = 1.1) -> IntervalCensored | RightCensored:
    """Censoring status of a device at threshold_factor * y0.

    A measurement equal to the threshold counts as failed (tie rule),
    so scheduled-measurement data always yields IntervalCensored or
    RightCensored; Exact is reserved for continuously monitored data.
    """
    if threshold_factor <= 1.0:
        raise DomainError("threshold_factor must exceed 1")
    record.validate()
    threshold = threshold_factor * record.y0
    prev = 0
    for t in record.observed_indices():
        if record.resistances[t] >= threshold:
            return IntervalCensored(float(record.times[prev]), float(record.times[t]))
        prev = t
    return RightCensored(float(record.times[prev]))
