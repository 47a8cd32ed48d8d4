"""MCMC machinery: NUTS with adaptation, diagnostics, summaries, persistence.

The default algorithm is a multinomial no-U-turn sampler with
dual-averaging step-size adaptation and a diagonal mass matrix
estimated over doubling warmup windows.  An adaptive random-walk
Metropolis algorithm is available as a gradient-free fallback.

Targets are objects exposing ``dim`` and ``logpdf_and_grad(v)`` (the
random-walk algorithm only needs ``logpdf``).  Optional hooks:
``initial_point(rng)``, ``param_names`` and ``constrained_row(v)`` for
reporting draws on the constrained scale.

Chains run sequentially with per-chain random streams split from the
root seed, so results are reproducible bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .scm_core import DataError, DomainError

__all__ = [
    "SamplerError",
    "SamplerConfig",
    "PosteriorDraws",
    "run",
    "diagnostics",
    "DiagnosticsReport",
    "summarize",
    "split_rhat",
    "effective_sample_size",
    "hdi",
    "summary_stats",
    "write_draws_csv",
    "read_draws_csv",
]

_DIVERGENCE_THRESHOLD = 1000.0


class SamplerError(RuntimeError):
    """Sampling or adaptation failed in a way retrying will not fix."""


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    draws: int = 5000
    seed: int = 0
    algorithm: str = "nuts"
    target_accept: float = 0.8
    max_treedepth: int = 10

    def validate(self, for_reporting: bool = False) -> None:
        if self.chains < 1:
            raise DomainError("chains must be >= 1")
        if self.warmup < 0 or self.draws < 1:
            raise DomainError("warmup must be >= 0 and draws >= 1")
        if self.algorithm not in ("nuts", "rwm"):
            raise DomainError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 < self.target_accept < 1.0:
            raise DomainError("target_accept must lie in (0, 1)")
        if self.max_treedepth < 1:
            raise DomainError("max_treedepth must be >= 1")
        if for_reporting:
            # Convergence reporting needs multiple chains and enough draws.
            if self.chains < 2:
                raise DomainError("reported fits need chains >= 2")
            if self.chains * self.draws < 4000:
                raise DomainError("reported fits need a retained total of >= 4000 draws")

    def to_dict(self) -> dict:
        return {
            "chains": self.chains, "warmup": self.warmup, "draws": self.draws,
            "seed": self.seed, "algorithm": self.algorithm,
            "target_accept": self.target_accept, "max_treedepth": self.max_treedepth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = {"chains", "warmup", "draws", "seed", "algorithm",
                 "target_accept", "max_treedepth"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown sampler keys: {sorted(unknown)}")
        out = cls(**d)
        out.validate()
        return out


@dataclass
class PosteriorDraws:
    """Retained draws on the constrained scale, chain-major order."""

    values: np.ndarray  # (G, P)
    names: list[str]
    chains: int
    draws_per_chain: int
    seed: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise DataError("draws matrix must be (G, len(names))")
        if self.values.shape[0] != self.chains * self.draws_per_chain:
            raise DataError("G must equal chains * draws_per_chain")

    @property
    def g(self) -> int:
        return self.values.shape[0]

    def chain_view(self) -> np.ndarray:
        """View shaped (chains, draws_per_chain, P)."""
        return self.values.reshape(self.chains, self.draws_per_chain, -1)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None


# --- step size and mass adaptation -------------------------------------------


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, eps0: float, target: float,
                 gamma: float = 0.05, t0: float = 10.0, kappa: float = 0.75) -> None:
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0

    def update(self, accept_stat: float) -> float:
        self.t += 1
        frac = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def adapted_eps(self) -> float:
        return math.exp(self.log_eps_bar)


class _Welford:
    """Streaming mean and variance of unconstrained draws."""

    def __init__(self, dim: int) -> None:
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def variance(self) -> np.ndarray:
        if self.n < 2:
            return np.ones_like(self.mean)
        var = self.m2 / (self.n - 1)
        # Shrink toward a small constant, as in windowed warmup practice.
        return var * (self.n / (self.n + 5.0)) + 1e-3 * (5.0 / (self.n + 5.0))


def _warmup_windows(warmup: int) -> list[tuple[int, int, bool]]:
    """(start, end, is_variance_window) phases covering [0, warmup)."""
    if warmup <= 0:
        return []
    if warmup < 20:
        return [(0, warmup, False)]
    init_buf = min(75, max(1, int(0.15 * warmup)))
    term_buf = min(50, max(1, int(0.10 * warmup)))
    windows: list[tuple[int, int, bool]] = [(0, init_buf, False)]
    pos = init_buf
    size = 25
    while pos < warmup - term_buf:
        end = pos + size
        if end + 2 * size > warmup - term_buf:
            end = warmup - term_buf  # last window absorbs the remainder
        windows.append((pos, end, True))
        pos = end
        size *= 2
    windows.append((warmup - term_buf, warmup, False))
    return windows


# --- NUTS ---------------------------------------------------------------------


class _NutsState:
    __slots__ = ("q", "p", "grad", "logp")

    def __init__(self, q, p, grad, logp):
        self.q = q
        self.p = p
        self.grad = grad
        self.logp = logp


def _leapfrog(target, state: _NutsState, eps: float, inv_mass: np.ndarray) -> _NutsState:
    p = state.p + 0.5 * eps * state.grad
    q = state.q + eps * inv_mass * p
    logp, grad = target.logpdf_and_grad(q)
    p = p + 0.5 * eps * grad
    return _NutsState(q, p, grad, logp)


def _kinetic(p: np.ndarray, inv_mass: np.ndarray) -> float:
    return 0.5 * float(p @ (inv_mass * p))


def _find_reasonable_eps(target, q: np.ndarray, grad: np.ndarray, logp: float,
                         inv_mass: np.ndarray, rng: np.random.Generator) -> float:
    eps = 1.0
    p = rng.standard_normal(q.size) / np.sqrt(inv_mass)
    h0 = -logp + _kinetic(p, inv_mass)
    state = _NutsState(q, p, grad, logp)
    nxt = _leapfrog(target, state, eps, inv_mass)
    log_ratio = (h0 - (-nxt.logp + _kinetic(nxt.p, inv_mass))) if np.isfinite(nxt.logp) else -math.inf
    direction = 1.0 if log_ratio > math.log(0.5) else -1.0
    for _ in range(100):
        eps *= 2.0 ** direction
        if not 1e-10 < eps < 1e7:
            raise SamplerError("could not find a workable initial step size")
        nxt = _leapfrog(target, state, eps, inv_mass)
        log_ratio = (h0 - (-nxt.logp + _kinetic(nxt.p, inv_mass))) if np.isfinite(nxt.logp) else -math.inf
        if direction * log_ratio <= direction * math.log(0.5):
            return eps
    raise SamplerError("initial step-size search did not terminate")


class _Tree:
    """One NUTS subtree: endpoints, multinomial proposal, bookkeeping."""

    __slots__ = ("minus", "plus", "prop_q", "prop_grad", "prop_logp",
                 "log_weight", "sum_accept", "n_leaves", "divergent", "turning")

    def __init__(self, minus, plus, prop_q, prop_grad, prop_logp,
                 log_weight, sum_accept, n_leaves, divergent, turning):
        self.minus = minus
        self.plus = plus
        self.prop_q = prop_q
        self.prop_grad = prop_grad
        self.prop_logp = prop_logp
        self.log_weight = log_weight
        self.sum_accept = sum_accept
        self.n_leaves = n_leaves
        self.divergent = divergent
        self.turning = turning


def _is_turning(minus: _NutsState, plus: _NutsState, inv_mass: np.ndarray) -> bool:
    dq = plus.q - minus.q
    return (dq @ (inv_mass * minus.p)) < 0.0 or (dq @ (inv_mass * plus.p)) < 0.0


def _build_tree(target, state: _NutsState, direction: int, depth: int, eps: float,
                h0: float, inv_mass: np.ndarray, rng: np.random.Generator) -> _Tree:
    if depth == 0:
        nxt = _leapfrog(target, state, direction * eps, inv_mass)
        if np.isfinite(nxt.logp):
            h = -nxt.logp + _kinetic(nxt.p, inv_mass)
        else:
            h = math.inf
        delta = h - h0
        divergent = not np.isfinite(h) or delta > _DIVERGENCE_THRESHOLD
        log_weight = -delta if not divergent else -math.inf
        accept = math.exp(min(0.0, -delta)) if np.isfinite(delta) else 0.0
        return _Tree(nxt, nxt, nxt.q, nxt.grad, nxt.logp,
                     log_weight, accept, 1, divergent, False)

    inner = _build_tree(target, state, direction, depth - 1, eps, h0, inv_mass, rng)
    if inner.divergent or inner.turning:
        return inner
    outer_from = inner.plus if direction == 1 else inner.minus
    outer = _build_tree(target, outer_from, direction, depth - 1, eps, h0, inv_mass, rng)

    log_weight = np.logaddexp(inner.log_weight, outer.log_weight)
    if outer.log_weight > -math.inf and \
            math.log(rng.uniform()) < outer.log_weight - log_weight:
        prop = (outer.prop_q, outer.prop_grad, outer.prop_logp)
    else:
        prop = (inner.prop_q, inner.prop_grad, inner.prop_logp)
    minus = inner.minus if direction == 1 else outer.minus
    plus = outer.plus if direction == 1 else inner.plus
    turning = outer.turning or _is_turning(minus, plus, inv_mass)
    return _Tree(minus, plus, prop[0], prop[1], prop[2],
                 log_weight, inner.sum_accept + outer.sum_accept,
                 inner.n_leaves + outer.n_leaves,
                 outer.divergent, turning)


def _nuts_step(target, q, grad, logp, eps, inv_mass, max_depth,
               rng) -> tuple[np.ndarray, np.ndarray, float, float, bool, bool]:
    """One NUTS transition; returns (q, grad, logp, accept_stat, divergent, moved)."""
    p = rng.standard_normal(q.size) / np.sqrt(inv_mass)
    h0 = -logp + _kinetic(p, inv_mass)
    minus = _NutsState(q, p, grad, logp)
    plus = minus
    prop_q, prop_grad, prop_logp = q, grad, logp
    log_weight = 0.0  # weight of the initial point relative to exp(-h0)
    sum_accept = 0.0
    n_leaves = 0
    divergent = False
    moved = False
    for depth in range(max_depth):
        direction = 1 if rng.uniform() < 0.5 else -1
        start = plus if direction == 1 else minus
        tree = _build_tree(target, start, direction, depth, eps, h0, inv_mass, rng)
        if direction == 1:
            plus = tree.plus
        else:
            minus = tree.minus
        sum_accept += tree.sum_accept
        n_leaves += tree.n_leaves
        if tree.divergent:
            divergent = True
            break
        if tree.turning:
            break
        # Biased progressive sampling: favor the fresh subtree.
        if math.log(rng.uniform()) < tree.log_weight - log_weight:
            prop_q, prop_grad, prop_logp = tree.prop_q, tree.prop_grad, tree.prop_logp
            moved = True
        log_weight = np.logaddexp(log_weight, tree.log_weight)
        if _is_turning(minus, plus, inv_mass):
            break
    accept_stat = sum_accept / max(1, n_leaves)
    return prop_q, prop_grad, prop_logp, accept_stat, divergent, moved


def _run_nuts_chain(target, q0: np.ndarray, cfg: SamplerConfig,
                    rng: np.random.Generator,
                    collect) -> dict:
    dim = q0.size
    inv_mass = np.ones(dim)
    logp, grad = target.logpdf_and_grad(q0)
    if not np.isfinite(logp):
        raise SamplerError("target is not finite at the initialization point")
    q = q0
    eps = _find_reasonable_eps(target, q, grad, logp, inv_mass, rng)
    da = _DualAveraging(eps, cfg.target_accept)
    windows = _warmup_windows(cfg.warmup)
    welford = _Welford(dim)
    divergences_warmup = 0

    it = 0
    for (start, end, is_var) in windows:
        window_moved = False
        for it in range(start, end):
            q, grad, logp, accept, div, moved = _nuts_step(
                target, q, grad, logp, eps, inv_mass, cfg.max_treedepth, rng)
            eps = da.update(accept)
            divergences_warmup += int(div)
            window_moved = window_moved or moved
            if is_var:
                welford.add(q)
        if end > start and not window_moved:
            raise SamplerError(
                "adaptation failed: no proposal accepted during an entire warmup window"
            )
        if is_var and welford.n >= 2:
            inv_mass = welford.variance()
            welford = _Welford(dim)
            eps = da.adapted_eps
            da = _DualAveraging(eps, cfg.target_accept)

    eps = da.adapted_eps if cfg.warmup > 0 else eps
    divergences = 0
    max_depth_hits = 0
    accept_sum = 0.0
    for i in range(cfg.draws):
        q, grad, logp, accept, div, _ = _nuts_step(
            target, q, grad, logp, eps, inv_mass, cfg.max_treedepth, rng)
        divergences += int(div)
        accept_sum += accept
        collect(i, q)
    return {
        "step_size": eps,
        "divergences": divergences,
        "divergences_warmup": divergences_warmup,
        "mean_accept": accept_sum / cfg.draws,
    }


# --- adaptive random-walk Metropolis ------------------------------------------


def _run_rwm_chain(target, q0: np.ndarray, cfg: SamplerConfig,
                   rng: np.random.Generator, collect) -> dict:
    dim = q0.size
    logpdf = getattr(target, "logpdf", None)
    if logpdf is None:
        logpdf = lambda v: target.logpdf_and_grad(v)[0]  # noqa: E731
    q = q0
    logp = logpdf(q)
    if not np.isfinite(logp):
        raise SamplerError("target is not finite at the initialization point")
    sd = np.ones(dim)
    log_s = math.log(2.38 / math.sqrt(dim))
    welford = _Welford(dim)
    windows = _warmup_windows(cfg.warmup)
    accepts = 0
    for (start, end, is_var) in windows:
        window_accepts = 0
        for it in range(start, end):
            prop = q + math.exp(log_s) * sd * rng.standard_normal(dim)
            lp = logpdf(prop)
            alpha = min(1.0, math.exp(min(0.0, lp - logp))) if np.isfinite(lp) else 0.0
            if rng.uniform() < alpha:
                q, logp = prop, lp
                window_accepts += 1
            log_s += (alpha - 0.234) / (it + 10.0) ** 0.6
            if is_var:
                welford.add(q)
        if end > start and window_accepts == 0:
            raise SamplerError(
                "adaptation failed: no proposal accepted during an entire warmup window"
            )
        if is_var and welford.n >= 2:
            sd = np.sqrt(welford.variance())
            welford = _Welford(dim)
    for i in range(cfg.draws):
        prop = q + math.exp(log_s) * sd * rng.standard_normal(dim)
        lp = logpdf(prop)
        if np.isfinite(lp) and math.log(rng.uniform()) < lp - logp:
            q, logp = prop, lp
            accepts += 1
        collect(i, q)
    return {
        "step_size": math.exp(log_s),
        "divergences": 0,
        "divergences_warmup": 0,
        "mean_accept": accepts / cfg.draws,
    }


# --- driver -------------------------------------------------------------------


def run(target, cfg: SamplerConfig) -> PosteriorDraws:
    """Sample the target; returns draws on the reporting (constrained) scale."""
    cfg.validate()
    dim = target.dim
    names = list(getattr(target, "param_names", None) or
                 [f"x{i}" for i in range(dim)])
    to_row = getattr(target, "constrained_row", None) or (lambda v: v)
    n_cols = len(names)
    values = np.empty((cfg.chains * cfg.draws, n_cols))
    chain_stats = []
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)
    for c in range(cfg.chains):
        rng = np.random.Generator(np.random.Philox(seeds[c]))
        q0 = _initial_point(target, rng, dim)
        base = c * cfg.draws

        def collect(i: int, q: np.ndarray, base=base) -> None:
            values[base + i] = to_row(q)

        runner = _run_nuts_chain if cfg.algorithm == "nuts" else _run_rwm_chain
        chain_stats.append(runner(target, q0, cfg, rng, collect))
    provenance = {
        "sampler": cfg.to_dict(),
        "chain_stats": chain_stats,
        "divergences": int(sum(s["divergences"] for s in chain_stats)),
    }
    return PosteriorDraws(
        values=values, names=names, chains=cfg.chains,
        draws_per_chain=cfg.draws, seed=cfg.seed, provenance=provenance,
    )


def _initial_point(target, rng: np.random.Generator, dim: int) -> np.ndarray:
    init = getattr(target, "initial_point", None)
    for _ in range(100):
        q0 = init(rng) if init is not None else rng.uniform(-2.0, 2.0, size=dim)
        lp = target.logpdf_and_grad(q0)[0] if hasattr(target, "logpdf_and_grad") \
            else target.logpdf(q0)
        if np.isfinite(lp):
            return q0
    raise SamplerError("could not find a finite initialization point")


# --- diagnostics ---------------------------------------------------------------


def _split_sequences(x: np.ndarray) -> np.ndarray:
    """(chains, n) -> (2 * chains, n // 2), dropping an odd trailing draw."""
    m, n = x.shape
    half = n // 2
    if half < 1:
        raise DomainError("need at least two draws per chain to split")
    return x[:, : 2 * half].reshape(m * 2, half)


def split_rhat(x: np.ndarray) -> float:
    """Potential scale reduction over split chains; x has shape (chains, n)."""
    seq = _split_sequences(np.asarray(x, dtype=float))
    m, n = seq.shape
    if n < 2:
        return math.nan
    means = seq.mean(axis=1)
    vars_ = seq.var(axis=1, ddof=1)
    w = vars_.mean()
    b = n * means.var(ddof=1)
    if w <= 0.0:
        return math.nan
    var_plus = (n - 1) / n * w + b / n
    return math.sqrt(var_plus / w)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    xd = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xd, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    return acov / n


def effective_sample_size(x: np.ndarray) -> float:
    """Autocorrelation-based ESS over split chains; x has shape (chains, n)."""
    seq = _split_sequences(np.asarray(x, dtype=float))
    m, n = seq.shape
    if n < 4:
        return math.nan
    acov = np.stack([_autocov(s) for s in seq])
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    if w <= 0.0:
        return math.nan
    mean_var = acov[:, 0].mean() * (n - 1.0) / n
    var_plus = mean_var + (np.var(seq.mean(axis=1), ddof=1) if m > 1 else 0.0)
    if var_plus <= 0.0:
        return math.nan
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer initial monotone positive sequence over lag pairs.
    tau = 0.0
    prev_pair = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0.0:
            break
        pair = min(pair, prev_pair)
        tau += pair
        prev_pair = pair
        t += 2
    tau = max(2.0 * tau - 1.0, 1.0 / math.log10(m * n + 10.0))
    return m * n / tau


@dataclass
class DiagnosticsReport:
    names: list[str]
    rhat: np.ndarray
    ess: np.ndarray
    divergences: int
    degenerate: np.ndarray  # bool per parameter: no variation in the draws

    @property
    def max_rhat(self) -> float:
        act = self.rhat[~self.degenerate]
        return float(np.nanmax(act)) if act.size else math.nan

    @property
    def min_ess(self) -> float:
        act = self.ess[~self.degenerate]
        return float(np.nanmin(act)) if act.size else math.nan

    @property
    def converged(self) -> bool:
        act = ~self.degenerate
        if not act.any():
            return False
        return bool(
            np.all(self.rhat[act] <= 1.01) and np.all(self.ess[act] >= 400.0)
        )

    def to_dict(self) -> dict:
        def clean(v: float) -> float | None:
            return None if math.isnan(v) else round(float(v), 6)

        return {
            "converged": self.converged,
            "max_rhat": clean(self.max_rhat),
            "min_ess": clean(self.min_ess),
            "divergences": self.divergences,
            "parameters": [
                {
                    "name": n,
                    "rhat": clean(self.rhat[i]),
                    "ess": clean(self.ess[i]),
                    "degenerate": bool(self.degenerate[i]),
                }
                for i, n in enumerate(self.names)
            ],
        }


def diagnostics(draws: PosteriorDraws) -> DiagnosticsReport:
    """Split R-hat and ESS per parameter; needs at least two chains."""
    if draws.chains < 2:
        raise DomainError("diagnostics need at least two chains")
    cv = draws.chain_view()
    p = cv.shape[2]
    rhat = np.empty(p)
    ess = np.empty(p)
    degenerate = np.empty(p, dtype=bool)
    for i in range(p):
        x = cv[:, :, i]
        degenerate[i] = np.allclose(x, x.ravel()[0], rtol=0.0, atol=0.0)
        if degenerate[i]:
            rhat[i] = math.nan
            ess[i] = math.nan
        else:
            rhat[i] = split_rhat(x)
            ess[i] = effective_sample_size(x)
    return DiagnosticsReport(
        names=list(draws.names), rhat=rhat, ess=ess,
        divergences=int(draws.provenance.get("divergences", 0)),
        degenerate=degenerate,
    )


# --- summaries -----------------------------------------------------------------


def hdi(values: np.ndarray, level: float = 0.95) -> tuple[float, float]:
    """Shortest contiguous interval holding ceil(level * G) sorted draws."""
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie strictly between 0 and 1")
    x = np.sort(np.asarray(values, dtype=float).ravel())
    g = x.size
    if g < 2:
        raise DomainError("need at least two values for an interval")
    k = int(math.ceil(level * g))
    k = min(max(k, 2), g)
    widths = x[k - 1:] - x[: g - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def summary_stats(values: np.ndarray, level: float = 0.95) -> dict:
    """Mean, sd, and HDI of a per-draw scalar quantity."""
    x = np.asarray(values, dtype=float).ravel()
    lo, hi = hdi(x, level)
    return {
        "mean": float(x.mean()),
        "sd": float(x.std(ddof=1)),
        "hdi_low": lo,
        "hdi_high": hi,
        "level": level,
    }


def summarize(draws: PosteriorDraws, level: float = 0.95) -> list[dict]:
    """Per-parameter posterior mean, sd, and HDI bounds."""
    if draws.g < 100:
        raise DomainError("summaries need at least 100 retained draws")
    out = []
    for i, name in enumerate(draws.names):
        stats = summary_stats(draws.values[:, i], level)
        stats["name"] = name
        out.append(stats)
    return out


# --- persistence ----------------------------------------------------------------


def _sidecar_path(path) -> str:
    base, _ = os.path.splitext(os.fspath(path))
    return base + ".meta.json"


def write_draws_csv(draws: PosteriorDraws, path) -> None:
    """Write draws (6-decimal CSV) plus a JSON provenance sidecar."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "draw", *draws.names])
        cv = draws.chain_view()
        for c in range(draws.chains):
            for i in range(draws.draws_per_chain):
                writer.writerow([c, i, *(f"{v:.6f}" for v in cv[c, i])])
    meta = {
        "names": draws.names,
        "chains": draws.chains,
        "draws_per_chain": draws.draws_per_chain,
        "seed": draws.seed,
        "provenance": draws.provenance,
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_draws_csv(path) -> PosteriorDraws:
    """Read a draws CSV (and its sidecar when present)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("draws CSV is empty") from None
        if header[:2] != ["chain", "draw"]:
            raise DataError("draws CSV must start with 'chain,draw' columns")
        names = header[2:]
        rows = []
        chain_col = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields")
            try:
                chain_col.append(int(row[0]))
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
    if not rows:
        raise DataError("draws CSV holds no draws")
    values = np.asarray(rows)
    chain_col = np.asarray(chain_col)
    chains = int(chain_col.max()) + 1
    per_chain = np.bincount(chain_col, minlength=chains)
    if np.any(per_chain != per_chain[0]):
        raise DataError("chains must hold equally many draws")
    meta_path = _sidecar_path(path)
    seed = 0
    provenance: dict = {}
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        seed = int(meta.get("seed", 0))
        provenance = meta.get("provenance", {})
        if meta.get("names") != names:
            raise DataError("sidecar names disagree with the CSV header")
    return PosteriorDraws(
        values=values, names=names, chains=chains,
        draws_per_chain=int(per_chain[0]), seed=seed, provenance=provenance,
    )
