"""Shared fixtures: reference truth, small datasets, and cached fits.

Fits are session-scoped so the sampler runs once per dataset and the
draws are reused across test modules.
"""

from __future__ import annotations

import numpy as np
import pytest

from resistscm import (
    FitSpec,
    FullFactorial,
    GeneratorSpec,
    Observational,
    Regime,
    SamplerConfig,
    default_constants,
    generate_dataset,
    make_target,
    ns_constants,
    reference_truth,
    run,
)


_acceptance_lines: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collector for one PASS/FAIL line per acceptance criterion."""
    return _acceptance_lines.append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def truth():
    return reference_truth()


@pytest.fixture(scope="session")
def constants_as():
    return default_constants()


@pytest.fixture(scope="session")
def constants_ns():
    return ns_constants()


@pytest.fixture(scope="session")
def as_dataset_small(truth, constants_as):
    """One accelerated-stress replicate of the full factorial: 128 devices."""
    spec = GeneratorSpec(
        truth=truth, constants=constants_as, regime=Regime.AS,
        design=FullFactorial(replicates=1), seed=101,
    )
    return generate_dataset(spec)


@pytest.fixture(scope="session")
def ns_dataset_small(truth, constants_ns):
    """A small normal-stress observational sample: 160 devices."""
    spec = GeneratorSpec(
        truth=truth, constants=constants_ns, regime=Regime.NS,
        design=Observational(n=160), seed=102,
    )
    return generate_dataset(spec)


@pytest.fixture(scope="session")
def as_fit_quick(as_dataset_small, constants_as):
    """A short but converged accelerated-stress fit for query-level tests."""
    spec = FitSpec(regime=Regime.AS, constants=constants_as)
    target = make_target(as_dataset_small, spec)
    cfg = SamplerConfig(chains=2, warmup=300, draws=1000, seed=11)
    return run(target, cfg)


@pytest.fixture(scope="session")
def ns_fit_quick(ns_dataset_small, constants_ns):
    """A short normal-stress fit (probability tables included)."""
    spec = FitSpec(regime=Regime.NS, constants=constants_ns)
    target = make_target(ns_dataset_small, spec)
    cfg = SamplerConfig(chains=2, warmup=400, draws=1000, seed=12)
    return run(target, cfg)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(2026)
