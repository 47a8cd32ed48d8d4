"""Core types and structural equations for the resistance-degradation model.

A device with configuration (x_S, x_T, x_P, x_H) has initial resistance

    y_0 = mu0 + alpha_S[x_S] + alpha_T[x_T] + alpha_P[x_P] + u_0,

and resistance at measurement time w_t

    y_t = y_0 + slope_sum * timetransform(w_t)
              + cubic_sum * (w_t - psi)^tau * 1{w_t > psi} * 1{accelerated}
              + u_t,

where slope_sum and cubic_sum are sums of a base coefficient and one
effect per factor, timetransform(w) = w under accelerated stress and
w / gamma under normal stress, u_0 ~ N(0, sigma0^2) and
u_t ~ N(0, sigmaY^2).  A device fails when resistance reaches
``threshold_factor * y_0``.

Effect vectors are sum-to-zero; probability tables describe how
configurations arise in observational (normal-stress) data.

Functions in this module accept parameter objects whose fields carry an
optional leading draw axis (arrays of shape ``(G, k)`` instead of
``(k,)``), in which case results vectorize over draws.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ModelError",
    "CardinalityError",
    "DomainError",
    "DataError",
    "Regime",
    "Configuration",
    "FixedConstants",
    "ModelParams",
    "DeviceRecord",
    "humidity_level",
    "humidity_class",
    "mean_y0",
    "slope_sum",
    "cubic_sum",
    "time_transform",
    "mean_yt",
    "diff_mean",
]


class ModelError(ValueError):
    """Base class for model-level input errors."""


class CardinalityError(ModelError):
    """A factor level is outside the cardinality implied by the parameters."""


class DomainError(ModelError):
    """A numeric argument is outside its admissible domain."""


class DataError(ModelError):
    """A device record or dataset violates its format contract."""


class Regime(enum.Enum):
    """Stress regime: normal (NS) or accelerated (AS)."""

    NS = "NS"
    AS = "AS"


def humidity_level(x_h: int) -> int:
    """Map a humidity class (-1 normal, +1 high) to a level index (1, 2)."""
    if x_h == -1:
        return 1
    if x_h == 1:
        return 2
    raise DomainError(f"humidity class must be -1 or +1, got {x_h!r}")


def humidity_class(level: int) -> int:
    """Map a humidity level index (1, 2) to a class (-1, +1)."""
    if level == 1:
        return -1
    if level == 2:
        return 1
    raise DomainError(f"humidity level must be 1 or 2, got {level!r}")


@dataclass(frozen=True)
class Configuration:
    """Factor levels of one device.

    ``x_s``, ``x_t``, ``x_p`` are 1-based level indices; ``x_h`` is the
    humidity class, -1 (normal) or +1 (high).
    """

    x_s: int
    x_t: int
    x_p: int
    x_h: int

    def __post_init__(self) -> None:
        for name in ("x_s", "x_t", "x_p"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise CardinalityError(f"{name} must be a positive level index, got {v!r}")
        if self.x_h not in (-1, 1):
            raise DomainError(f"x_h must be -1 or +1, got {self.x_h!r}")

    @property
    def h_level(self) -> int:
        """Humidity level index: 1 for class -1, 2 for class +1."""
        return humidity_level(self.x_h)

    def with_humidity(self, x_h: int) -> "Configuration":
        return replace(self, x_h=x_h)


@dataclass(frozen=True)
class FixedConstants:
    """Quantities treated as known without uncertainty.

    ``psi``: knot (in transformed time) where the accelerated cubic term
    switches on; ``tau``: exponent of that term; ``gamma``: acceleration
    factor (normal-stress time is worth 1/gamma of accelerated time);
    ``threshold_factor``: failure when resistance reaches this multiple
    of the initial value; ``nominal_times``: scheduled measurement times
    in kilohours for t = 1..3 (t = 0 is always at time zero).
    """

    psi: float = 2.0
    tau: float = 3.0
    gamma: float = 10.0
    threshold_factor: float = 1.1
    nominal_times: tuple[float, ...] = (0.72, 2.16, 3.60)

    def validate(self) -> None:
        if not self.psi > 0:
            raise DomainError(f"psi must be positive, got {self.psi}")
        if not self.tau >= 1:
            raise DomainError(f"tau must be >= 1, got {self.tau}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if not self.threshold_factor > 1:
            raise DomainError(
                f"threshold_factor must exceed 1, got {self.threshold_factor}"
            )
        times = np.asarray(self.nominal_times, dtype=float)
        if times.ndim != 1 or times.size != 3:
            raise DomainError("nominal_times must hold three times (t = 1..3)")
        if not (times[0] > 0 and np.all(np.diff(times) > 0)):
            raise DomainError("nominal_times must be positive and strictly increasing")

    def to_dict(self) -> dict:
        return {
            "psi": self.psi,
            "tau": self.tau,
            "gamma": self.gamma,
            "threshold_factor": self.threshold_factor,
            "nominal_times": list(self.nominal_times),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FixedConstants":
        known = {"psi", "tau", "gamma", "threshold_factor", "nominal_times"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown constants keys: {sorted(unknown)}")
        kwargs = {k: v for k, v in d.items() if k != "nominal_times"}
        if "nominal_times" in d:
            kwargs["nominal_times"] = tuple(float(x) for x in d["nominal_times"])
        out = cls(**kwargs)
        out.validate()
        return out


def _as_vector(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


_VECTOR_FIELDS = (
    "alpha_s",
    "alpha_t",
    "alpha_p",
    "delta1_s",
    "delta1_t",
    "delta1_p",
    "delta1_h",
    "delta2_s",
    "delta2_t",
    "delta2_p",
    "delta2_h",
    "pi_h",
    "pi_p",
    "pi_s",
    "pi_t",
)

_SCALAR_FIELDS = ("mu0", "beta1", "beta2", "sigma0", "sigma_y")


@dataclass
class ModelParams:
    """Full parameter vector of the structural model.

    ``alpha_*`` act on initial resistance, ``delta1_*``/``beta1`` on the
    linear-in-time drift, ``delta2_*``/``beta2`` on the accelerated cubic
    term.  Vectors indexed by S/T/P have one entry per level; vectors
    indexed by H have two (level 1 = class -1, level 2 = class +1).
    ``pi_h`` and ``pi_p`` are marginal probability vectors; ``pi_s`` and
    ``pi_t`` have one row per humidity level.

    Fields may carry a leading draw axis for vectorized evaluation over
    posterior draws; ``validate`` applies to single-draw instances only.
    """

    mu0: float
    alpha_s: np.ndarray
    alpha_t: np.ndarray
    alpha_p: np.ndarray
    beta1: float
    delta1_s: np.ndarray
    delta1_t: np.ndarray
    delta1_p: np.ndarray
    delta1_h: np.ndarray
    beta2: float
    delta2_s: np.ndarray
    delta2_t: np.ndarray
    delta2_p: np.ndarray
    delta2_h: np.ndarray
    sigma0: float
    sigma_y: float
    pi_h: np.ndarray
    pi_p: np.ndarray
    pi_s: np.ndarray
    pi_t: np.ndarray

    def __post_init__(self) -> None:
        for name in _VECTOR_FIELDS:
            setattr(self, name, _as_vector(getattr(self, name)))

    @property
    def n_s(self) -> int:
        return int(np.shape(self.alpha_s)[-1])

    @property
    def n_t(self) -> int:
        return int(np.shape(self.alpha_t)[-1])

    @property
    def n_p(self) -> int:
        return int(np.shape(self.alpha_p)[-1])

    @property
    def n_h(self) -> int:
        return int(np.shape(self.delta1_h)[-1])

    def validate(self, atol: float = 1e-12) -> None:
        """Check invariants: sum-to-zero effects, positive scales, simplex rows."""
        for name in ("mu0", "beta1", "beta2", "sigma0", "sigma_y"):
            v = getattr(self, name)
            if not np.isscalar(v) and np.ndim(v) != 0:
                raise ModelError(f"{name} must be scalar in a validated instance")
            if not np.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
        if self.sigma0 < 0 or self.sigma_y < 0:
            raise DomainError("sigma0 and sigma_y must be nonnegative")
        if self.n_h != 2:
            raise CardinalityError(f"humidity must have 2 levels, got {self.n_h}")
        for name in (
            "alpha_s", "alpha_t", "alpha_p",
            "delta1_s", "delta1_t", "delta1_p", "delta1_h",
            "delta2_s", "delta2_t", "delta2_p", "delta2_h",
        ):
            v = getattr(self, name)
            if v.ndim != 1:
                raise ModelError(f"{name} must be one-dimensional")
            if v.size < 1:
                raise CardinalityError(f"{name} must have at least one level")
            scale = max(1.0, float(np.abs(v).max()))
            if abs(float(v.sum())) > atol * scale * v.size:
                raise ModelError(f"{name} must sum to zero, got sum {v.sum()!r}")
        for name, shape in (
            ("pi_h", (self.n_h,)),
            ("pi_p", (self.n_p,)),
            ("pi_s", (self.n_h, self.n_s)),
            ("pi_t", (self.n_h, self.n_t)),
        ):
            v = getattr(self, name)
            if v.shape != shape:
                raise CardinalityError(f"{name} must have shape {shape}, got {v.shape}")
            if np.any(v < 0):
                raise DomainError(f"{name} entries must be nonnegative")
            row_sums = v.sum(axis=-1)
            if np.any(np.abs(row_sums - 1.0) > 1e-9):
                raise ModelError(f"{name} rows must sum to one, got {row_sums!r}")
        if np.shape(self.delta2_h)[-1] != 2 or np.shape(self.delta1_h)[-1] != 2:
            raise CardinalityError("humidity effect vectors must have 2 levels")

    def to_dict(self) -> dict:
        out: dict = {}
        for name in _SCALAR_FIELDS:
            out[name] = float(getattr(self, name))
        for name in _VECTOR_FIELDS:
            out[name] = np.asarray(getattr(self, name)).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        fields = set(_SCALAR_FIELDS) | set(_VECTOR_FIELDS)
        unknown = set(d) - fields - {"notes"}
        if unknown:
            raise DataError(f"unknown parameter keys: {sorted(unknown)}")
        missing = fields - set(d)
        if missing:
            raise DataError(f"missing parameter keys: {sorted(missing)}")
        out = cls(**{k: d[k] for k in fields})
        out.validate()
        return out

    @classmethod
    def from_json_file(cls, path) -> "ModelParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class DeviceRecord:
    """One device: identifier, configuration, regime, times, resistances.

    ``times`` holds w_0..w_3 in kilohours with w_0 = 0; ``resistances``
    holds y_0..y_3, NaN marking entries not (yet) observed.
    """

    device_id: str
    config: Configuration
    regime: Regime
    times: np.ndarray
    resistances: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.resistances = np.asarray(self.resistances, dtype=float)

    def validate(self) -> None:
        if self.times.shape != (4,) or self.resistances.shape != (4,):
            raise DataError("a record holds exactly four times and four resistances")
        if self.times[0] != 0.0:
            raise DataError(f"w_0 must be 0, got {self.times[0]!r}")
        if not np.all(np.isfinite(self.times)) or np.any(np.diff(self.times) <= 0):
            raise DataError(f"times must be finite and strictly increasing: {self.times!r}")
        observed = self.resistances[~np.isnan(self.resistances)]
        if np.any(observed <= 0):
            raise DataError(f"recorded resistances must be positive: {self.resistances!r}")
        if np.isnan(self.resistances[0]):
            raise DataError("initial resistance y_0 is mandatory")

    @property
    def y0(self) -> float:
        return float(self.resistances[0])

    def observed_indices(self) -> np.ndarray:
        """Indices t >= 1 with a recorded resistance."""
        return np.where(~np.isnan(self.resistances[1:]))[0] + 1


def _indices(config: Configuration, params: ModelParams) -> tuple[int, int, int, int]:
    """Zero-based (s, t, p, h) indices, checked against cardinalities."""
    for name, value, n in (
        ("x_s", config.x_s, params.n_s),
        ("x_t", config.x_t, params.n_t),
        ("x_p", config.x_p, params.n_p),
    ):
        if not 1 <= value <= n:
            raise CardinalityError(f"{name}={value} outside 1..{n}")
    return config.x_s - 1, config.x_t - 1, config.x_p - 1, config.h_level - 1


def mean_y0(config: Configuration, params: ModelParams):
    """Expected initial resistance for a configuration."""
    s, t, p, _ = _indices(config, params)
    return (
        params.mu0
        + params.alpha_s[..., s]
        + params.alpha_t[..., t]
        + params.alpha_p[..., p]
    )


def slope_sum(config: Configuration, params: ModelParams):
    """Total linear-drift coefficient for a configuration."""
    s, t, p, h = _indices(config, params)
    return (
        params.beta1
        + params.delta1_s[..., s]
        + params.delta1_t[..., t]
        + params.delta1_p[..., p]
        + params.delta1_h[..., h]
    )


def cubic_sum(config: Configuration, params: ModelParams):
    """Total coefficient of the accelerated cubic term."""
    s, t, p, h = _indices(config, params)
    return (
        params.beta2
        + params.delta2_s[..., s]
        + params.delta2_t[..., t]
        + params.delta2_p[..., p]
        + params.delta2_h[..., h]
    )


def time_transform(w, regime: Regime, constants: FixedConstants):
    """Effective time: w under AS, w / gamma under NS.  Requires w >= 0."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DomainError("measurement times must be nonnegative")
    out = w if regime is Regime.AS else w / constants.gamma
    return float(out) if out.ndim == 0 else out


def _knot_term(w, regime: Regime, constants: FixedConstants):
    """(w - psi)^tau above the knot under AS; zero under NS and below psi."""
    w = np.asarray(w, dtype=float)
    if regime is not Regime.AS:
        z = np.zeros_like(w)
        return float(z) if z.ndim == 0 else z
    out = np.maximum(w - constants.psi, 0.0) ** constants.tau
    return float(out) if out.ndim == 0 else out


def mean_yt(y0, config: Configuration, w, regime: Regime,
            params: ModelParams, constants: FixedConstants):
    """Expected resistance at time w given realized initial resistance y0."""
    tt = time_transform(w, regime, constants)
    return (
        y0
        + slope_sum(config, params) * tt
        + cubic_sum(config, params) * _knot_term(w, regime, constants)
    )


def diff_mean(y0, config: Configuration, w, regime: Regime,
              params: ModelParams, constants: FixedConstants):
    """Expected gap between resistance at time w and the failure threshold.

    Negative while the device is expected to be below
    ``threshold_factor * y0``; zero exactly at expected failure.
    """
    return (
        mean_yt(y0, config, w, regime, params, constants)
        - constants.threshold_factor * y0
    )
