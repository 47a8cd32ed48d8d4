"""Posterior density of the degradation model on an unconstrained space.

The sampler works on a contiguous real vector with a named layout:

* free coordinates of each sum-to-zero effect vector (n_q - 1 each, the
  last entry being minus their sum),
* log sigma0 and log sigmaY,
* stick-breaking coordinates for each active probability row
  (n - 1 per row, zero mapping to the uniform row),
* mu0, beta1, beta2.

Probability-table blocks are active for normal-stress fits only; an
accelerated-stress dataset carries no information about them, and the
corresponding rows are fixed at uniform when mapping back to the
constrained space.

Priors: Student-t(3, 0, 25) on each free effect coordinate,
Student-t(3, 0, 50) on beta1 and beta2, Student-t(3, 1000, 1000) on
mu0, half-Student-t(3, 0, 2.5) on sigma0 and sigmaY, and Dirichlet
(all-ones by default) on each active probability row.

``log_posterior`` returns the log target density *in the unconstrained
space* (priors and likelihood plus transform log-Jacobians) along with
its analytic gradient.  Non-finite evaluations yield -inf rather than
raising, which samplers treat as a rejected point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, gammaln, logit

from .scm_core import (
    CardinalityError,
    DataError,
    DeviceRecord,
    DomainError,
    FixedConstants,
    ModelParams,
    Regime,
)

__all__ = [
    "PriorSpec",
    "FitSpec",
    "ParameterLayout",
    "CompiledDataset",
    "PosteriorTarget",
    "log_likelihood",
    "log_prior",
    "log_posterior",
    "make_target",
    "params_view",
]

_LOG_2PI = math.log(2.0 * math.pi)

_SUMZERO_FIELDS = (
    "alpha_s", "alpha_t", "alpha_p",
    "delta1_s", "delta1_t", "delta1_p", "delta1_h",
    "delta2_s", "delta2_t", "delta2_p", "delta2_h",
)
_EFFECT_SCALE_FIELDS = set(_SUMZERO_FIELDS)


def _t_logpdf_const(df: float, scale: float) -> float:
    return (
        gammaln((df + 1.0) / 2.0)
        - gammaln(df / 2.0)
        - 0.5 * math.log(df * math.pi)
        - math.log(scale)
    )


def _t_logpdf(x, df: float, loc: float, scale: float):
    z = (np.asarray(x, dtype=float) - loc) / scale
    return _t_logpdf_const(df, scale) - 0.5 * (df + 1.0) * np.log1p(z * z / df)


def _t_grad(x, df: float, loc: float, scale: float):
    """d/dx log Student-t density."""
    d = np.asarray(x, dtype=float) - loc
    return -(df + 1.0) * d / (df * scale * scale + d * d)


def _dirichlet_logconst(lam: np.ndarray) -> float:
    return float(gammaln(lam.sum()) - gammaln(lam).sum())


# --- simplex transform -------------------------------------------------------
#
# Stick-breaking with a logit offset so the zero vector maps to the uniform
# row: z_k = logistic(y_k - log(K - 1 - k)), pi_k = z_k * prod_{i<k}(1 - z_i).


def _stick_forward(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Return (pi, z, log |d pi / d y|) for one probability row."""
    k_max = y.size
    kk = np.arange(k_max)
    z = expit(y - np.log(k_max - kk))
    sticks = np.concatenate(([1.0], np.cumprod(1.0 - z)))
    pi = np.empty(k_max + 1)
    pi[:k_max] = sticks[:k_max] * z
    pi[k_max] = sticks[k_max]
    with np.errstate(divide="ignore"):
        log_jac = float(
            np.log(sticks[:k_max]).sum() + np.log(z).sum() + np.log1p(-z).sum()
        )
    return pi, z, log_jac


def _stick_inverse(pi: np.ndarray) -> np.ndarray:
    k_max = pi.size - 1
    y = np.empty(k_max)
    stick = 1.0
    for k in range(k_max):
        z = pi[k] / stick
        y[k] = logit(z) + math.log(k_max - k)
        stick -= pi[k]
    return y


def _stick_grad(c: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Gradient wrt y of  sum_r c_r log pi_r  +  log |d pi / d y|.

    With tail sums C_j = sum_{k > j} c_k the first part contributes
    c_j (1 - z_j) - z_j C_j and the Jacobian contributes 1 - (K - j) z_j
    (0-based j, K the row length).
    """
    k_max = z.size
    tail = np.cumsum(c[::-1])[::-1]
    tail_after = np.append(tail[1:], 0.0)
    j = np.arange(k_max)
    return c[:k_max] * (1.0 - z) - z * tail_after[:k_max] + 1.0 - (k_max + 1 - j) * z


# --- layout ------------------------------------------------------------------


@dataclass(frozen=True)
class _Block:
    name: str
    kind: str  # "sumzero" | "logscale" | "simplex" | "scalar"
    size: int  # unconstrained size
    sl: slice
    target: str  # ModelParams field
    row: int | None = None  # row of a probability matrix


class ParameterLayout:
    """Named mapping between the unconstrained vector and ModelParams."""

    def __init__(self, n_s: int, n_t: int, n_p: int, n_h: int,
                 include_tables: bool) -> None:
        if n_h != 2:
            raise CardinalityError(f"humidity must have 2 levels, got {n_h}")
        self.cards = (n_s, n_t, n_p, n_h)
        self.include_tables = include_tables
        blocks: list[_Block] = []
        pos = 0

        def add(name: str, kind: str, size: int, target: str, row=None) -> None:
            nonlocal pos
            blocks.append(_Block(name, kind, size, slice(pos, pos + size), target, row))
            pos += size

        sizes = {"s": n_s, "t": n_t, "p": n_p, "h": n_h}
        for f in _SUMZERO_FIELDS:
            add(f, "sumzero", sizes[f[-1]] - 1, f)
        add("log_sigma0", "logscale", 1, "sigma0")
        add("log_sigma_y", "logscale", 1, "sigma_y")
        if include_tables:
            add("pi_h", "simplex", n_h - 1, "pi_h")
            add("pi_p", "simplex", n_p - 1, "pi_p")
            for r in range(n_h):
                add(f"pi_s[{r + 1}]", "simplex", n_s - 1, "pi_s", row=r)
            for r in range(n_h):
                add(f"pi_t[{r + 1}]", "simplex", n_t - 1, "pi_t", row=r)
        add("mu0", "scalar", 1, "mu0")
        add("beta1", "scalar", 1, "beta1")
        add("beta2", "scalar", 1, "beta2")

        self.blocks = tuple(blocks)
        self.dim = pos
        self._by_name = {b.name: b for b in blocks}

    def slice_of(self, name: str) -> slice:
        return self._by_name[name].sl

    def constrain(self, v: np.ndarray):
        """Map unconstrained v to (ModelParams, stick caches, log-Jacobian)."""
        n_s, n_t, n_p, n_h = self.cards
        fields: dict = {}
        sticks: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        log_jac = 0.0
        pi_s = np.full((n_h, n_s), 1.0 / n_s)
        pi_t = np.full((n_h, n_t), 1.0 / n_t)
        fields["pi_h"] = np.full(n_h, 1.0 / n_h)
        fields["pi_p"] = np.full(n_p, 1.0 / n_p)
        for b in self.blocks:
            x = v[b.sl]
            if b.kind == "sumzero":
                fields[b.target] = np.append(x, -x.sum())
            elif b.kind == "logscale":
                fields[b.target] = float(np.exp(x[0]))
                log_jac += x[0]
            elif b.kind == "scalar":
                fields[b.target] = x[0]
            else:
                pi, z, lj = _stick_forward(x)
                log_jac += lj
                sticks[b.name] = (pi, z)
                if b.row is None:
                    fields[b.target] = pi
                elif b.target == "pi_s":
                    pi_s[b.row] = pi
                else:
                    pi_t[b.row] = pi
        fields["pi_s"] = pi_s
        fields["pi_t"] = pi_t
        return ModelParams(**fields), sticks, log_jac

    def unconstrain(self, params: ModelParams) -> np.ndarray:
        v = np.empty(self.dim)
        for b in self.blocks:
            if b.kind == "sumzero":
                v[b.sl] = getattr(params, b.target)[:-1]
            elif b.kind == "logscale":
                value = float(getattr(params, b.target))
                if value <= 0:
                    raise DomainError(f"{b.target} must be positive to unconstrain")
                v[b.sl] = math.log(value)
            elif b.kind == "scalar":
                v[b.sl] = float(getattr(params, b.target))
            else:
                pi = getattr(params, b.target)
                row = pi if b.row is None else pi[b.row]
                v[b.sl] = _stick_inverse(np.asarray(row, dtype=float))
        return v

    # Constrained-space reporting: full vectors, sigmas, active rows.

    def constrained_names(self) -> list[str]:
        n_s, n_t, n_p, n_h = self.cards
        names = ["mu0"]
        for f, n in (("alpha_s", n_s), ("alpha_t", n_t), ("alpha_p", n_p)):
            names += [f"{f}[{i + 1}]" for i in range(n)]
        names.append("beta1")
        for f, n in (("delta1_s", n_s), ("delta1_t", n_t), ("delta1_p", n_p), ("delta1_h", n_h)):
            names += [f"{f}[{i + 1}]" for i in range(n)]
        names.append("beta2")
        for f, n in (("delta2_s", n_s), ("delta2_t", n_t), ("delta2_p", n_p), ("delta2_h", n_h)):
            names += [f"{f}[{i + 1}]" for i in range(n)]
        names += ["sigma0", "sigma_y"]
        if self.include_tables:
            names += [f"pi_h[{i + 1}]" for i in range(n_h)]
            names += [f"pi_p[{i + 1}]" for i in range(n_p)]
            names += [f"pi_s[{r + 1},{i + 1}]" for r in range(n_h) for i in range(n_s)]
            names += [f"pi_t[{r + 1},{i + 1}]" for r in range(n_h) for i in range(n_t)]
        return names

    def constrained_row(self, params: ModelParams) -> np.ndarray:
        parts = [
            [params.mu0], params.alpha_s, params.alpha_t, params.alpha_p,
            [params.beta1], params.delta1_s, params.delta1_t, params.delta1_p,
            params.delta1_h,
            [params.beta2], params.delta2_s, params.delta2_t, params.delta2_p,
            params.delta2_h,
            [params.sigma0, params.sigma_y],
        ]
        if self.include_tables:
            parts += [params.pi_h, params.pi_p, params.pi_s.ravel(), params.pi_t.ravel()]
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


def params_view(names: Sequence[str], values: np.ndarray,
                cards: tuple[int, int, int, int] | None = None) -> ModelParams:
    """Assemble a draw-axis ModelParams view from named columns.

    ``values`` has shape (G, len(names)).  Columns are matched by name
    (``mu0``, ``alpha_s[2]``, ``pi_s[1,3]``, ...); probability tables
    absent from the columns are filled with uniform rows.
    """
    values = np.asarray(values, dtype=float)
    col = {n: values[:, i] for i, n in enumerate(names)}
    g = values.shape[0]

    def vec(f: str, n: int) -> np.ndarray:
        return np.stack([col[f"{f}[{i + 1}]"] for i in range(n)], axis=-1)

    def card_of(f: str, fallback: int) -> int:
        ns = [n for n in names if n.startswith(f + "[")]
        return len(ns) if ns else fallback

    if cards is None:
        cards = (card_of("alpha_s", 4), card_of("alpha_t", 4),
                 card_of("alpha_p", 4), card_of("delta1_h", 2))
    n_s, n_t, n_p, n_h = cards

    def table(f: str, rows: int, n: int) -> np.ndarray:
        if f"{f}[1,1]" in col:
            return np.stack(
                [np.stack([col[f"{f}[{r + 1},{i + 1}]"] for i in range(n)], axis=-1)
                 for r in range(rows)], axis=-2)
        return np.full((g, rows, n), 1.0 / n)

    def simplex(f: str, n: int) -> np.ndarray:
        if f"{f}[1]" in col:
            return vec(f, n)
        return np.full((g, n), 1.0 / n)

    return ModelParams(
        mu0=col["mu0"],
        alpha_s=vec("alpha_s", n_s), alpha_t=vec("alpha_t", n_t), alpha_p=vec("alpha_p", n_p),
        beta1=col["beta1"],
        delta1_s=vec("delta1_s", n_s), delta1_t=vec("delta1_t", n_t),
        delta1_p=vec("delta1_p", n_p), delta1_h=vec("delta1_h", n_h),
        beta2=col["beta2"],
        delta2_s=vec("delta2_s", n_s), delta2_t=vec("delta2_t", n_t),
        delta2_p=vec("delta2_p", n_p), delta2_h=vec("delta2_h", n_h),
        sigma0=col["sigma0"], sigma_y=col["sigma_y"],
        pi_h=simplex("pi_h", n_h), pi_p=simplex("pi_p", n_p),
        pi_s=table("pi_s", n_h, n_s), pi_t=table("pi_t", n_h, n_t),
    )


# --- priors ------------------------------------------------------------------


@dataclass
class PriorSpec:
    """Hyperparameters of the prior; None lambda means all-ones."""

    student_df: float = 3.0
    effect_scale: float = 25.0
    base_scale: float = 50.0
    mu0_loc: float = 1000.0
    mu0_scale: float = 1000.0
    sigma_scale: float = 2.5
    lambda_h: np.ndarray | None = None
    lambda_p: np.ndarray | None = None
    lambda_s: np.ndarray | None = None
    lambda_t: np.ndarray | None = None

    def validate(self) -> None:
        for name in ("student_df", "effect_scale", "base_scale", "mu0_scale", "sigma_scale"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("lambda_h", "lambda_p", "lambda_s", "lambda_t"):
            v = getattr(self, name)
            if v is not None and np.any(np.asarray(v, dtype=float) <= 0):
                raise DomainError(f"{name} entries must be positive")

    def lam(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        v = getattr(self, f"lambda_{name}")
        if v is None:
            return np.ones(shape)
        v = np.asarray(v, dtype=float)
        if v.shape != shape:
            raise CardinalityError(f"lambda_{name} must have shape {shape}, got {v.shape}")
        return v

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        known = {
            "student_df", "effect_scale", "base_scale", "mu0_loc", "mu0_scale",
            "sigma_scale", "lambda_h", "lambda_p", "lambda_s", "lambda_t",
        }
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown prior keys: {sorted(unknown)}")
        kwargs = dict(d)
        for name in ("lambda_h", "lambda_p", "lambda_s", "lambda_t"):
            if kwargs.get(name) is not None:
                kwargs[name] = np.asarray(kwargs[name], dtype=float)
        out = cls(**kwargs)
        out.validate()
        return out


@dataclass
class FitSpec:
    """What to fit: regime, constants, priors, factor cardinalities.

    Probability-table blocks are active exactly when the regime is NS.
    ``dataset`` is an optional path reference kept for provenance.
    """

    regime: Regime
    constants: FixedConstants = field(default_factory=FixedConstants)
    priors: PriorSpec = field(default_factory=PriorSpec)
    cardinalities: tuple[int, int, int, int] = (4, 4, 4, 2)
    dataset: str | None = None

    @property
    def include_tables(self) -> bool:
        return self.regime is Regime.NS

    def layout(self) -> ParameterLayout:
        n_s, n_t, n_p, n_h = self.cardinalities
        return ParameterLayout(n_s, n_t, n_p, n_h, self.include_tables)

    @classmethod
    def from_dict(cls, d: dict) -> "FitSpec":
        known = {"regime", "constants", "priors", "cardinalities", "dataset"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown fit keys: {sorted(unknown)}")
        if "regime" not in d:
            raise DataError("fit spec requires a regime")
        try:
            regime = Regime(d["regime"])
        except ValueError:
            raise DataError(f"regime must be 'NS' or 'AS', got {d['regime']!r}") from None
        cards = tuple(int(x) for x in d.get("cardinalities", (4, 4, 4, 2)))
        if len(cards) != 4:
            raise DataError("cardinalities must list four sizes (S, T, P, H)")
        return cls(
            regime=regime,
            constants=FixedConstants.from_dict(d.get("constants", {})),
            priors=PriorSpec.from_dict(d.get("priors", {})),
            cardinalities=cards,  # type: ignore[arg-type]
            dataset=d.get("dataset"),
        )


# --- compiled data -----------------------------------------------------------


class CompiledDataset:
    """Dataset flattened into arrays for fast likelihood evaluation."""

    def __init__(self, records: Sequence[DeviceRecord], regime: Regime,
                 constants: FixedConstants,
                 cards: tuple[int, int, int, int] = (4, 4, 4, 2)) -> None:
        n_s, n_t, n_p, n_h = cards
        if not records:
            raise DataError("cannot compile an empty dataset")
        n = len(records)
        self.regime = regime
        self.cards = cards
        self.n_devices = n
        self.y0 = np.empty(n)
        self.s_idx = np.empty(n, dtype=np.intp)
        self.t_idx = np.empty(n, dtype=np.intp)
        self.p_idx = np.empty(n, dtype=np.intp)
        self.h_idx = np.empty(n, dtype=np.intp)
        obs_dev: list[int] = []
        obs_w: list[float] = []
        obs_y: list[float] = []
        for j, rec in enumerate(records):
            rec.validate()
            if rec.regime is not regime:
                raise DataError(
                    f"record {rec.device_id!r} has regime {rec.regime.value}, expected {regime.value}"
                )
            c = rec.config
            if not (c.x_s <= n_s and c.x_t <= n_t and c.x_p <= n_p):
                raise CardinalityError(
                    f"record {rec.device_id!r} has levels outside cardinalities {cards}"
                )
            self.y0[j] = rec.resistances[0]
            self.s_idx[j] = c.x_s - 1
            self.t_idx[j] = c.x_t - 1
            self.p_idx[j] = c.x_p - 1
            self.h_idx[j] = c.h_level - 1
            for t in rec.observed_indices():
                obs_dev.append(j)
                obs_w.append(rec.times[t])
                obs_y.append(rec.resistances[t])
        self.obs_dev = np.asarray(obs_dev, dtype=np.intp)
        self.obs_y = np.asarray(obs_y)
        w = np.asarray(obs_w)
        if regime is Regime.AS:
            self.obs_tau = w
            self.obs_kappa = np.maximum(w - constants.psi, 0.0) ** constants.tau
        else:
            self.obs_tau = w / constants.gamma
            self.obs_kappa = np.zeros_like(w)
        self.n_obs = self.obs_y.size
        self.obs_y0 = self.y0[self.obs_dev]
        self.obs_s = self.s_idx[self.obs_dev]
        self.obs_t = self.t_idx[self.obs_dev]
        self.obs_p = self.p_idx[self.obs_dev]
        self.obs_h = self.h_idx[self.obs_dev]
        # Sufficient statistics of the configuration-sampling terms.
        self.counts_h = np.bincount(self.h_idx, minlength=n_h).astype(float)
        self.counts_p = np.bincount(self.p_idx, minlength=n_p).astype(float)
        self.counts_hs = np.zeros((n_h, n_s))
        self.counts_ht = np.zeros((n_h, n_t))
        np.add.at(self.counts_hs, (self.h_idx, self.s_idx), 1.0)
        np.add.at(self.counts_ht, (self.h_idx, self.t_idx), 1.0)


def _gauss_loglik(params: ModelParams, cd: CompiledDataset,
                  want_grad: bool) -> tuple[float, dict | None]:
    """Gaussian observation terms and (optionally) their gradient."""
    sigma0, sigma_y = float(params.sigma0), float(params.sigma_y)
    if sigma0 <= 0 or sigma_y <= 0:
        raise DomainError("sigma0 and sigma_y must be positive in the likelihood")
    m0 = (
        params.mu0
        + params.alpha_s[cd.s_idx]
        + params.alpha_t[cd.t_idx]
        + params.alpha_p[cd.p_idx]
    )
    r0 = cd.y0 - m0
    n = cd.n_devices
    ll = -n * math.log(sigma0) - 0.5 * n * _LOG_2PI - 0.5 * float(r0 @ r0) / sigma0**2

    slope = (
        params.beta1
        + params.delta1_s[cd.obs_s]
        + params.delta1_t[cd.obs_t]
        + params.delta1_p[cd.obs_p]
        + params.delta1_h[cd.obs_h]
    )
    cub = (
        params.beta2
        + params.delta2_s[cd.obs_s]
        + params.delta2_t[cd.obs_t]
        + params.delta2_p[cd.obs_p]
        + params.delta2_h[cd.obs_h]
    )
    r = cd.obs_y - (cd.obs_y0 + slope * cd.obs_tau + cub * cd.obs_kappa)
    m = cd.n_obs
    ll += -m * math.log(sigma_y) - 0.5 * m * _LOG_2PI - 0.5 * float(r @ r) / sigma_y**2

    if not want_grad:
        return ll, None

    n_s, n_t, n_p, n_h = cd.cards
    w0 = r0 / sigma0**2
    wt = r * cd.obs_tau / sigma_y**2
    wk = r * cd.obs_kappa / sigma_y**2
    g = {
        "mu0": float(w0.sum()),
        "alpha_s": np.bincount(cd.s_idx, weights=w0, minlength=n_s),
        "alpha_t": np.bincount(cd.t_idx, weights=w0, minlength=n_t),
        "alpha_p": np.bincount(cd.p_idx, weights=w0, minlength=n_p),
        "beta1": float(wt.sum()),
        "delta1_s": np.bincount(cd.obs_s, weights=wt, minlength=n_s),
        "delta1_t": np.bincount(cd.obs_t, weights=wt, minlength=n_t),
        "delta1_p": np.bincount(cd.obs_p, weights=wt, minlength=n_p),
        "delta1_h": np.bincount(cd.obs_h, weights=wt, minlength=n_h),
        "beta2": float(wk.sum()),
        "delta2_s": np.bincount(cd.obs_s, weights=wk, minlength=n_s),
        "delta2_t": np.bincount(cd.obs_t, weights=wk, minlength=n_t),
        "delta2_p": np.bincount(cd.obs_p, weights=wk, minlength=n_p),
        "delta2_h": np.bincount(cd.obs_h, weights=wk, minlength=n_h),
        "log_sigma0": float(r0 @ r0) / sigma0**2 - n,
        "log_sigma_y": float(r @ r) / sigma_y**2 - m,
    }
    return ll, g


def _table_loglik(params: ModelParams, cd: CompiledDataset) -> float:
    """Configuration-sampling terms (NS datasets)."""
    with np.errstate(divide="ignore"):
        return float(
            cd.counts_h @ np.log(params.pi_h)
            + cd.counts_p @ np.log(params.pi_p)
            + (cd.counts_hs * np.log(params.pi_s)).sum()
            + (cd.counts_ht * np.log(params.pi_t)).sum()
        )


def log_likelihood(params: ModelParams, records: Sequence[DeviceRecord],
                   regime: Regime, constants: FixedConstants = FixedConstants(),
                   cards: tuple[int, int, int, int] | None = None) -> float:
    """Observed-data log likelihood of a parameter point."""
    if cards is None:
        cards = (params.n_s, params.n_t, params.n_p, params.n_h)
    cd = CompiledDataset(records, regime, constants, cards)
    ll, _ = _gauss_loglik(params, cd, want_grad=False)
    if regime is Regime.NS:
        ll += _table_loglik(params, cd)
    return ll


def log_prior(params: ModelParams, spec: FitSpec) -> float:
    """Log prior density of a constrained parameter point.

    Effect-vector priors act on the free coordinates (all entries but
    the last, the last being determined by the sum-to-zero constraint).
    """
    pr = spec.priors
    df = pr.student_df
    lp = 0.0
    for f in _SUMZERO_FIELDS:
        v = np.asarray(getattr(params, f), dtype=float)
        lp += float(_t_logpdf(v[:-1], df, 0.0, pr.effect_scale).sum())
    lp += float(_t_logpdf(params.beta1, df, 0.0, pr.base_scale))
    lp += float(_t_logpdf(params.beta2, df, 0.0, pr.base_scale))
    lp += float(_t_logpdf(params.mu0, df, pr.mu0_loc, pr.mu0_scale))
    for s in (params.sigma0, params.sigma_y):
        if s <= 0:
            return -math.inf
        lp += math.log(2.0) + float(_t_logpdf(s, df, 0.0, pr.sigma_scale))
    if spec.include_tables:
        n_s, n_t, n_p, n_h = spec.cardinalities
        rows = [
            (params.pi_h, pr.lam("h", (n_h,))),
            (params.pi_p, pr.lam("p", (n_p,))),
        ]
        lam_s = pr.lam("s", (n_h, n_s))
        lam_t = pr.lam("t", (n_h, n_t))
        rows += [(params.pi_s[r], lam_s[r]) for r in range(n_h)]
        rows += [(params.pi_t[r], lam_t[r]) for r in range(n_h)]
        for pi, lam in rows:
            with np.errstate(divide="ignore"):
                lp += _dirichlet_logconst(lam) + float((lam - 1.0) @ np.log(pi))
    return lp


class PosteriorTarget:
    """Unconstrained-space log posterior with analytic gradient."""

    def __init__(self, compiled: CompiledDataset, spec: FitSpec) -> None:
        if compiled.regime is not spec.regime:
            raise DataError("compiled dataset regime does not match the fit spec")
        self.compiled = compiled
        self.spec = spec
        self.layout = spec.layout()
        self.dim = self.layout.dim
        self.param_names = self.layout.constrained_names()
        self._y0_mean = float(np.mean(compiled.y0))
        pr = spec.priors
        n_s, n_t, n_p, n_h = spec.cardinalities
        self._lam = {}
        if spec.include_tables:
            lam_s = pr.lam("s", (n_h, n_s))
            lam_t = pr.lam("t", (n_h, n_t))
            self._lam["pi_h"] = pr.lam("h", (n_h,))
            self._lam["pi_p"] = pr.lam("p", (n_p,))
            for r in range(n_h):
                self._lam[f"pi_s[{r + 1}]"] = lam_s[r]
                self._lam[f"pi_t[{r + 1}]"] = lam_t[r]

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform(-2, 2) start, except mu0 at the sample mean of y0."""
        v = rng.uniform(-2.0, 2.0, size=self.dim)
        v[self.layout.slice_of("mu0")] = self._y0_mean
        return v

    def constrain(self, v: np.ndarray) -> ModelParams:
        return self.layout.constrain(v)[0]

    def constrained_row(self, v: np.ndarray) -> np.ndarray:
        return self.layout.constrained_row(self.constrain(v))

    def logpdf(self, v: np.ndarray) -> float:
        return self.logpdf_and_grad(v)[0]

    def logpdf_and_grad(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        g = np.zeros(self.dim)
        pr = self.spec.priors
        df = pr.student_df
        cd = self.compiled
        layout = self.layout
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                params, sticks, lp = layout.constrain(v)
                if not (0.0 < params.sigma0 < math.inf and 0.0 < params.sigma_y < math.inf):
                    return -math.inf, np.zeros(self.dim)
                ll, gl = _gauss_loglik(params, cd, want_grad=True)
                lp += ll
                counts = {
                    "pi_h": cd.counts_h,
                    "pi_p": cd.counts_p,
                    "pi_s[1]": cd.counts_hs[0], "pi_s[2]": cd.counts_hs[1],
                    "pi_t[1]": cd.counts_ht[0], "pi_t[2]": cd.counts_ht[1],
                }
                for b in layout.blocks:
                    x = v[b.sl]
                    if b.kind == "sumzero":
                        gf = gl[b.name]
                        g[b.sl] += gf[:-1] - gf[-1]
                        lp += float(_t_logpdf(x, df, 0.0, pr.effect_scale).sum())
                        g[b.sl] += _t_grad(x, df, 0.0, pr.effect_scale)
                    elif b.kind == "logscale":
                        g[b.sl] += gl[b.name]
                        s = float(getattr(params, b.target))
                        lp += math.log(2.0) + float(_t_logpdf(s, df, 0.0, pr.sigma_scale))
                        # d/dlog s of [log half-t(s) + log s]
                        g[b.sl] += 1.0 - (df + 1.0) * s * s / (df * pr.sigma_scale**2 + s * s)
                    elif b.kind == "scalar":
                        g[b.sl] += gl[b.name]
                        loc = pr.mu0_loc if b.name == "mu0" else 0.0
                        scale = pr.mu0_scale if b.name == "mu0" else pr.base_scale
                        lp += float(_t_logpdf(x[0], df, loc, scale))
                        g[b.sl] += _t_grad(x[0], df, loc, scale)
                    else:
                        pi, z = sticks[b.name]
                        lam = self._lam[b.name]
                        c = counts[b.name] + lam - 1.0
                        lp += float(c @ np.log(pi)) + _dirichlet_logconst(lam)
                        g[b.sl] += _stick_grad(c, z)
        except (FloatingPointError, OverflowError):
            return -math.inf, np.zeros(self.dim)
        if not np.isfinite(lp) or not np.all(np.isfinite(g)):
            return -math.inf, np.zeros(self.dim)
        return float(lp), g


def make_target(records: Sequence[DeviceRecord], spec: FitSpec) -> PosteriorTarget:
    cd = CompiledDataset(records, spec.regime, spec.constants, spec.cardinalities)
    return PosteriorTarget(cd, spec)


def log_posterior(v: np.ndarray, records: Sequence[DeviceRecord], spec: FitSpec,
                  with_grad: bool = False):
    """Unconstrained-space log posterior (likelihood + priors + Jacobians).

    Convenience wrapper; repeated evaluation should reuse a
    ``PosteriorTarget`` built once via ``make_target``.
    """
    target = make_target(records, spec)
    lp, g = target.logpdf_and_grad(np.asarray(v, dtype=float))
    return (lp, g) if with_grad else lp
