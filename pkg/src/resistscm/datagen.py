"""Synthetic dataset generation and the dataset CSV format.

Generation is reproducible from a single root seed.  Each device gets
its own counter-based random stream (Philox keyed by the root seed and
the device index), so a record does not depend on how many devices are
generated or in which order.

Per-device draw order is fixed: configuration (NS observational designs
only: humidity, then S, T, P), then measurement-time jitter (NS only),
then noise u_0, u_1, u_2, u_3.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scm_core import (
    Configuration,
    DataError,
    DeviceRecord,
    DomainError,
    FixedConstants,
    ModelParams,
    Regime,
    humidity_class,
    mean_y0,
    mean_yt,
)

__all__ = [
    "FullFactorial",
    "Observational",
    "GeneratorSpec",
    "sample_measurement_time",
    "sample_config_observational",
    "generate_device",
    "generate_dataset",
    "write_dataset_csv",
    "read_dataset_csv",
    "DATASET_COLUMNS",
]

DATASET_COLUMNS = (
    "id", "regime", "x_S", "x_T", "x_P", "x_H",
    "w0", "w1", "w2", "w3", "y0", "y1", "y2", "y3",
)

# Measurement-time jitter: w_r = nominal_r + (u - 1/2) / 100, u ~ Beta(5, 5),
# i.e. at most +-5 hours around the schedule when times are in kilohours.
_JITTER_A = 5.0
_JITTER_B = 5.0
_JITTER_SCALE = 1.0 / 100.0


@dataclass(frozen=True)
class FullFactorial:
    """Every (x_S, x_T, x_P, x_H) cell, ``replicates`` devices per cell."""

    replicates: int

    def validate(self) -> None:
        if self.replicates < 1:
            raise DomainError(f"replicates must be >= 1, got {self.replicates}")


@dataclass(frozen=True)
class Observational:
    """``n`` devices with configurations drawn from the probability tables."""

    n: int

    def validate(self) -> None:
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")


@dataclass
class GeneratorSpec:
    """Everything needed to generate one dataset deterministically."""

    truth: ModelParams
    constants: FixedConstants
    regime: Regime
    design: FullFactorial | Observational
    seed: int
    time_jitter: bool = True

    def validate(self) -> None:
        self.truth.validate()
        self.constants.validate()
        self.design.validate()
        if isinstance(self.design, Observational) and self.regime is not Regime.NS:
            raise DomainError("observational designs are defined for the NS regime only")
        if self.regime is Regime.AS:
            # AS measurement times are assigned constants; jitter never applies.
            self.time_jitter = False

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "GeneratorSpec":
        known = {"truth", "constants", "regime", "design", "seed", "time_jitter"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown generator keys: {sorted(unknown)}")
        missing = {"truth", "regime", "design", "seed"} - set(d)
        if missing:
            raise DataError(f"missing generator keys: {sorted(missing)}")

        truth = d["truth"]
        if isinstance(truth, str):
            path = truth
            if base_dir is not None:
                import os
                path = os.path.join(base_dir, truth) if not os.path.isabs(truth) else truth
            truth = ModelParams.from_json_file(path)
        else:
            truth = ModelParams.from_dict(truth)

        constants = FixedConstants.from_dict(d.get("constants", {}))

        try:
            regime = Regime(d["regime"])
        except ValueError:
            raise DataError(f"regime must be 'NS' or 'AS', got {d['regime']!r}") from None

        dd = d["design"]
        if not isinstance(dd, dict) or "kind" not in dd:
            raise DataError("design must be an object with a 'kind' key")
        if dd["kind"] == "full_factorial":
            extra = set(dd) - {"kind", "replicates"}
            if extra:
                raise DataError(f"unknown design keys: {sorted(extra)}")
            design: FullFactorial | Observational = FullFactorial(int(dd["replicates"]))
        elif dd["kind"] == "observational":
            extra = set(dd) - {"kind", "n"}
            if extra:
                raise DataError(f"unknown design keys: {sorted(extra)}")
            design = Observational(int(dd["n"]))
        else:
            raise DataError(f"unknown design kind {dd['kind']!r}")

        spec = cls(
            truth=truth,
            constants=constants,
            regime=regime,
            design=design,
            seed=int(d["seed"]),
            time_jitter=bool(d.get("time_jitter", True)),
        )
        spec.validate()
        return spec

    @classmethod
    def from_json_file(cls, path) -> "GeneratorSpec":
        import os
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), base_dir=os.path.dirname(os.fspath(path)))


def sample_measurement_time(r: int, constants: FixedConstants,
                            rng: np.random.Generator) -> float:
    """Jittered time of measurement r in 1..3 for normal-stress devices."""
    if r not in (1, 2, 3):
        raise DomainError(f"measurement index must be 1, 2 or 3, got {r}")
    u = rng.beta(_JITTER_A, _JITTER_B)
    return constants.nominal_times[r - 1] + (u - 0.5) * _JITTER_SCALE


def sample_config_observational(params: ModelParams,
                                rng: np.random.Generator) -> Configuration:
    """Draw a configuration: humidity first, then S and T given humidity, then P."""
    h_level = 1 + int(rng.choice(params.n_h, p=params.pi_h))
    x_s = 1 + int(rng.choice(params.n_s, p=params.pi_s[h_level - 1]))
    x_t = 1 + int(rng.choice(params.n_t, p=params.pi_t[h_level - 1]))
    x_p = 1 + int(rng.choice(params.n_p, p=params.pi_p))
    return Configuration(x_s=x_s, x_t=x_t, x_p=x_p, x_h=humidity_class(h_level))


def generate_device(device_id: str, config: Configuration, regime: Regime,
                    truth: ModelParams, constants: FixedConstants,
                    rng: np.random.Generator, time_jitter: bool = True) -> DeviceRecord:
    """Simulate one device forward through the structural equations."""
    if regime is Regime.AS or not time_jitter:
        times = np.array([0.0, *constants.nominal_times])
    else:
        times = np.array(
            [0.0] + [sample_measurement_time(r, constants, rng) for r in (1, 2, 3)]
        )
    u0 = rng.normal(0.0, truth.sigma0)
    y = np.empty(4)
    y[0] = mean_y0(config, truth) + u0
    for t in (1, 2, 3):
        u = rng.normal(0.0, truth.sigma_y)
        y[t] = mean_yt(y[0], config, times[t], regime, truth, constants) + u
    record = DeviceRecord(
        device_id=device_id,
        config=config,
        regime=regime,
        times=times,
        resistances=y,
    )
    record.validate()
    return record


def _device_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def generate_dataset(spec: GeneratorSpec) -> list[DeviceRecord]:
    """Generate all devices of a spec; deterministic in the spec alone."""
    spec.validate()
    truth, constants = spec.truth, spec.constants
    records: list[DeviceRecord] = []

    if isinstance(spec.design, FullFactorial):
        cells = itertools.product(
            range(1, truth.n_s + 1),
            range(1, truth.n_t + 1),
            range(1, truth.n_p + 1),
            range(1, truth.n_h + 1),
        )
        configs = [
            Configuration(x_s=s, x_t=t, x_p=p, x_h=humidity_class(h))
            for s, t, p, h in cells
            for _ in range(spec.design.replicates)
        ]
        for i, config in enumerate(configs):
            rng = _device_rng(spec.seed, i)
            records.append(
                generate_device(
                    f"{spec.regime.value}{i:05d}", config, spec.regime,
                    truth, constants, rng, time_jitter=spec.time_jitter,
                )
            )
    else:
        for i in range(spec.design.n):
            rng = _device_rng(spec.seed, i)
            config = sample_config_observational(truth, rng)
            records.append(
                generate_device(
                    f"{spec.regime.value}{i:05d}", config, spec.regime,
                    truth, constants, rng, time_jitter=spec.time_jitter,
                )
            )
    return records


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_dataset_csv(records: Sequence[DeviceRecord], path) -> None:
    """Write records in the dataset CSV format (6-decimal numeric fields)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_COLUMNS)
        for rec in records:
            row = [
                rec.device_id,
                rec.regime.value,
                rec.config.x_s,
                rec.config.x_t,
                rec.config.x_p,
                rec.config.x_h,
            ]
            row += [_fmt(w) for w in rec.times]
            row += ["" if np.isnan(y) else _fmt(y) for y in rec.resistances]
            writer.writerow(row)


def read_dataset_csv(path) -> list[DeviceRecord]:
    """Read a dataset CSV, validating format and each record.

    Raises DataError naming the offending line on malformed input.
    """
    records: list[DeviceRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("dataset CSV is empty (header row is mandatory)") from None
        if tuple(header) != DATASET_COLUMNS:
            raise DataError(
                f"line 1: header must be {','.join(DATASET_COLUMNS)}, got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(DATASET_COLUMNS):
                raise DataError(
                    f"line {lineno}: expected {len(DATASET_COLUMNS)} fields, got {len(row)}"
                )
            try:
                regime = Regime(row[1])
                config = Configuration(
                    x_s=int(row[2]), x_t=int(row[3]), x_p=int(row[4]), x_h=int(row[5]),
                )
                times = np.array([float(v) for v in row[6:10]])
                resistances = np.array(
                    [np.nan if v == "" else float(v) for v in row[10:14]]
                )
                rec = DeviceRecord(
                    device_id=row[0], config=config, regime=regime,
                    times=times, resistances=resistances,
                )
                rec.validate()
            except DataError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            except (ValueError, KeyError) as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            records.append(rec)
    return records
