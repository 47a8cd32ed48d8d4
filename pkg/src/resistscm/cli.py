"""Command-line interface: generate, fit, query, and export plot grids.

Every command is driven by a JSON config file plus a few flags, writes
its outputs with fixed 6-decimal numeric formatting, and is
deterministic given the config (seeds included).  Exit codes: 0 on
success, 2 on invalid input, 3 when a fit fails its convergence check
and ``--allow-unconverged`` was not given.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys

import click
import numpy as np

from . import counterfactual as cf
from . import queries
from .datagen import GeneratorSpec, generate_dataset, read_dataset_csv, write_dataset_csv
from .posterior import FitSpec, make_target, params_view
from .sampler import (
    SamplerConfig,
    SamplerError,
    diagnostics,
    read_draws_csv,
    run,
    summarize,
    summary_stats,
    write_draws_csv,
)
from .scm_core import (
    Configuration,
    DataError,
    DeviceRecord,
    FixedConstants,
    ModelParams,
    Regime,
    humidity_class,
)

_EXIT_INVALID = 2
_EXIT_UNCONVERGED = 3

# Anything that means "your input was bad" maps to exit code 2.  ModelError
# and json.JSONDecodeError are ValueError subclasses; bare ValueError also
# covers things like int("x") on malformed config fields.
_INPUT_ERRORS = (ValueError, OSError)


def _fail(message: str, code: int = _EXIT_INVALID) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        _fail(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        _fail(f"{path} is not valid JSON: {exc}")
    raise AssertionError("unreachable")


def _check_keys(d: dict, known: set[str], what: str) -> None:
    unknown = set(d) - known
    if unknown:
        raise DataError(f"unknown {what} keys: {sorted(unknown)}")


def _round6(obj):
    if isinstance(obj, float):
        return round(obj, 6)
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    return obj


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_round6(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary_path(out) -> str:
    base, _ = os.path.splitext(os.fspath(out))
    return base + ".summary.json"


def _config_from_dict(d: dict, x_h: int | None = None) -> Configuration:
    """Parse a configuration object; ``x_h`` supplies humidity externally."""
    _check_keys(d, {"x_s", "x_t", "x_p", "x_h", "x_h_level"}, "configuration")
    missing = [k for k in ("x_s", "x_t", "x_p") if d.get(k) is None]
    if missing:
        raise DataError(f"configuration missing keys: {missing}")
    if x_h is None:
        x_h = _humidity_from_dict(d)
    elif d.get("x_h") is not None or d.get("x_h_level") is not None:
        raise DataError("humidity is set at the query level for contrasts")
    return Configuration(x_s=int(d["x_s"]), x_t=int(d["x_t"]), x_p=int(d["x_p"]), x_h=x_h)


def _humidity_from_dict(d: dict, key: str = "x_h") -> int:
    has_class = d.get(key) is not None
    has_level = d.get(f"{key}_level") is not None
    if has_class == has_level:
        raise DataError(f"give exactly one of {key} (class -1/+1) or {key}_level (1/2)")
    return int(d[key]) if has_class else humidity_class(int(d[f"{key}_level"]))


def _times_from_config(d) -> np.ndarray:
    if isinstance(d, list):
        return np.asarray([float(x) for x in d])
    if isinstance(d, dict):
        _check_keys(d, {"start", "stop", "num"}, "time grid")
        return np.linspace(float(d["start"]), float(d["stop"]), int(d["num"]))
    raise DataError("times must be a list or a {start, stop, num} grid")


def _write_per_draw_csv(path, labels: list[str], matrix: np.ndarray) -> None:
    """Per-draw values: one row per draw, one column per labeled quantity."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", *labels])
        for i, row in enumerate(matrix):
            writer.writerow([i, *(f"{v:.6f}" for v in row)])


class _Group(click.Group):
    """Group whose invoke maps stray input errors to the exit-2 contract.

    Commands guard their load/compute phase explicitly; this net also
    covers the output-writing phase (e.g. --out pointing into a missing
    directory) without wrapping every command body twice.
    """

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except _INPUT_ERRORS as exc:
            _fail(str(exc))


@click.group(cls=_Group)
def main() -> None:
    """Resistance-degradation causal model: data, fits, and queries."""


# --- generate -------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", required=True, help="Generator spec JSON.")
@click.option("--out", required=True, help="Output dataset CSV path.")
@click.option("--seed", type=int, default=None, help="Override the spec seed.")
def generate(config_path, out, seed) -> None:
    """Generate a synthetic dataset."""
    try:
        spec = GeneratorSpec.from_json_file(config_path)
        if seed is not None:
            spec.seed = seed
        records = generate_dataset(spec)
        write_dataset_csv(records, out)
    except _INPUT_ERRORS as exc:
        _fail(str(exc))
    click.echo(f"wrote {len(records)} records to {out} (regime {spec.regime.value}, seed {spec.seed})")


# --- fit ------------------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", required=True, help="Fit spec JSON.")
@click.option("--out", required=True, help="Output draws CSV path.")
@click.option("--seed", type=int, default=None, help="Override the sampler seed.")
@click.option("--allow-unconverged", is_flag=True,
              help="Exit 0 even when the convergence check fails.")
def fit(config_path, out, seed, allow_unconverged) -> None:
    """Fit the model to a dataset and write posterior draws."""
    d = _load_json(config_path)
    base_dir = os.path.dirname(os.fspath(config_path))
    try:
        # Sampling can take minutes; reject a doomed --out before starting.
        out_dir = os.path.dirname(os.path.abspath(out))
        if not os.path.isdir(out_dir):
            raise DataError(f"output directory does not exist: {out_dir}")
        _check_keys(d, {"dataset", "regime", "constants", "priors", "cardinalities",
                        "sampler"}, "fit config")
        if "dataset" not in d:
            raise DataError("fit config requires a dataset path")
        fit_spec = FitSpec.from_dict({k: v for k, v in d.items() if k != "sampler"})
        cfg = SamplerConfig.from_dict(d.get("sampler", {}))
        if seed is not None:
            cfg = SamplerConfig.from_dict({**cfg.to_dict(), "seed": seed})
        cfg.validate(for_reporting=True)
        dataset_path = d["dataset"]
        if base_dir and not os.path.isabs(dataset_path):
            dataset_path = os.path.join(base_dir, dataset_path)
        records = read_dataset_csv(dataset_path)
        target = make_target(records, fit_spec)
    except _INPUT_ERRORS as exc:
        _fail(str(exc))
        return
    try:
        draws = run(target, cfg)
    except SamplerError as exc:
        raise click.ClickException(str(exc)) from None
    report = diagnostics(draws)
    draws.provenance["fit"] = {
        "dataset": d["dataset"],
        "regime": fit_spec.regime.value,
        "cardinalities": list(fit_spec.cardinalities),
        "n_devices": len(records),
    }
    draws.provenance["diagnostics"] = report.to_dict()
    write_draws_csv(draws, out)
    click.echo(
        f"fit {fit_spec.regime.value} dataset ({len(records)} devices): "
        f"{draws.g} draws in {draws.chains} chains -> {out}"
    )
    click.echo(
        f"max_rhat={report.max_rhat:.4f} min_ess={report.min_ess:.0f} "
        f"divergences={report.divergences} converged={report.converged}"
    )
    if not report.converged and not allow_unconverged:
        _fail("fit failed the convergence check (use --allow-unconverged to keep it)",
              _EXIT_UNCONVERGED)


# --- diagnose / summarize --------------------------------------------------------


@main.command()
@click.option("--draws", "draws_path", required=True, help="Draws CSV path.")
@click.option("--out", default=None, help="Optional JSON report path.")
@click.option("--allow-unconverged", is_flag=True,
              help="Exit 0 even when the convergence check fails.")
def diagnose(draws_path, out, allow_unconverged) -> None:
    """Report split R-hat and effective sample size per parameter."""
    try:
        draws = read_draws_csv(draws_path)
        report = diagnostics(draws)
    except _INPUT_ERRORS as exc:
        _fail(str(exc))
        return
    click.echo(f"{'parameter':<16s} {'rhat':>8s} {'ess':>10s}")
    for i, name in enumerate(report.names):
        if report.degenerate[i]:
            click.echo(f"{name:<16s} {'--':>8s} {'--':>10s}")
        else:
            click.echo(f"{name:<16s} {report.rhat[i]:>8.4f} {report.ess[i]:>10.0f}")
    click.echo(
        f"max_rhat={report.max_rhat:.4f} min_ess={report.min_ess:.0f} "
        f"divergences={report.divergences} converged={report.converged}"
    )
    if out:
        _write_json(out, report.to_dict())
    if not report.converged and not allow_unconverged:
        _fail("convergence check failed", _EXIT_UNCONVERGED)


@main.command("summarize")
@click.option("--draws", "draws_path", required=True, help="Draws CSV path.")
@click.option("--level", type=float, default=0.95, show_default=True,
              help="HDI probability level.")
@click.option("--out", default=None, help="Optional summary CSV path.")
def summarize_cmd(draws_path, level, out) -> None:
    """Posterior mean, sd, and HDI per parameter."""
    try:
        draws = read_draws_csv(draws_path)
        rows = summarize(draws, level)
    except _INPUT_ERRORS as exc:
        _fail(str(exc))
        return
    click.echo(f"{'parameter':<16s} {'mean':>12s} {'sd':>10s} {'hdi_low':>12s} {'hdi_high':>12s}")
    for r in rows:
        click.echo(
            f"{r['name']:<16s} {r['mean']:>12.6f} {r['sd']:>10.6f} "
            f"{r['hdi_low']:>12.6f} {r['hdi_high']:>12.6f}"
        )
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "mean", "sd", "hdi_low", "hdi_high", "level"])
            for r in rows:
                writer.writerow([
                    r["name"], f"{r['mean']:.6f}", f"{r['sd']:.6f}",
                    f"{r['hdi_low']:.6f}", f"{r['hdi_high']:.6f}", f"{level:.6f}",
                ])


# --- estimand ---------------------------------------------------------------------


@main.command()
@click.option("--draws", "draws_path", required=True, help="Draws CSV path.")
@click.option("--config", "config_path", required=True, help="Estimand query JSON.")
@click.option("--out", required=True, help="Per-draw CSV path (summary JSON beside it).")
def estimand(draws_path, config_path, out) -> None:
    """Expected-increase or contrast estimand under assigned configurations."""
    d = _load_json(config_path)
    try:
        _check_keys(d, {"kind", "config", "config2", "x_h", "x_h_level", "times",
                        "constants", "level"}, "estimand query")
        kind = d.get("kind")
        if kind not in ("increase", "contrast"):
            raise DataError("kind must be 'increase' or 'contrast'")
        if "config" not in d:
            raise DataError("estimand queries need a config")
        constants = FixedConstants.from_dict(d.get("constants", {}))
        level = float(d.get("level", 0.95))
        times = _times_from_config(d.get("times", list(constants.nominal_times)))
        draws = read_draws_csv(draws_path)
        params = params_view(draws.names, draws.values)
        if kind == "increase":
            config = _config_from_dict(d["config"])
            per_time = [np.asarray(queries.delta1(config, float(w), params, constants))
                        for w in times]
        else:
            if "config2" not in d:
                raise DataError("contrast queries need config and config2")
            x_h = _humidity_from_dict(d)
            c1 = _config_from_dict(d["config"], x_h=x_h)
            c2 = _config_from_dict(d["config2"], x_h=x_h)
            per_time = [
                np.asarray(queries.delta_contrast(c1, c2, x_h, float(w), params, constants))
                for w in times
            ]
        labels = [f"w={w:.6f}" for w in times]
        matrix = np.column_stack(per_time)
        _write_per_draw_csv(out, labels, matrix)
        summary = {
            "kind": kind,
            "times": [float(w) for w in times],
            "results": [
                {"time": float(w), **summary_stats(per_time[i], level)}
                for i, w in enumerate(times)
            ],
        }
        _write_json(_summary_path(out), summary)
    except _INPUT_ERRORS as exc:
        _fail(str(exc))
        return
    click.echo(f"wrote per-draw estimand values to {out} ({matrix.shape[0]} draws, "
               f"{len(times)} times)")


# --- reliability -------------------------------------------------------------------


@main.command()
@click.option("--draws", "draws_path", default=None, help="Draws CSV path.")
@click.option("--params", "params_path", default=None,
              help="Parameter JSON path (single point instead of draws).")
@click.option("--config", "config_path", required=True, help="Reliability query JSON.")
@click.option("--out", required=True, help="Output grid CSV path.")
def reliability(draws_path, params_path, config_path, out) -> None:
    """Reliability curve R(t) for a configuration (known or unknown y0)."""
    d = _load_json(config_path)
    try:
        _check_keys(d, {"config", "regime", "y0", "times", "constants", "level"},
                    "reliability query")
        if (draws_path is None) == (params_path is None):
            raise DataError("give exactly one of --draws or --params")
        if "config" not in d:
            raise DataError("reliability queries need a config")
        constants = FixedConstants.from_dict(d.get("constants", {}))
        config = _config_from_dict(d["config"])
        regime = Regime(d.get("regime", "NS"))
        times = _times_from_config(d.get("times", {"start": 0.0, "stop": 60.0, "num": 200}))
        y0 = d.get("y0")
        level = float(d.get("level", 0.95))

        def curve(p):
            if y0 is None:
                return [queries.reliability_unknown_y0(float(t), config, regime, p, constants)
                        for t in times]
            return [queries.reliability_known_y0(float(t), float(y0), config, regime, p, constants)
                    for t in times]

        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            if params_path is not None:
                p = ModelParams.from_json_file(params_path)
                values = curve(p)
                writer.writerow(["t", "reliability"])
                for t, v in zip(times, values):
                    writer.writerow([f"{t:.6f}", f"{v:.6f}"])
            else:
                draws = read_draws_csv(draws_path)
                p = params_view(draws.names, draws.values)
                writer.writerow(["t", "mean", "hdi_low", "hdi_high"])
                for t, v in zip(times, curve(p)):
                    stats = summary_stats(np.asarray(v), level)
                    writer.writerow([
                        f"{t:.6f}", f"{stats['mean']:.6f}",
                        f"{stats['hdi_low']:.6f}", f"{stats['hdi_high']:.6f}",
                    ])
    except _INPUT_ERRORS as exc:
        _fail(str(exc))
        return
    click.echo(f"wrote reliability grid ({times.size} points) to {out}")


# --- predict-failure ------------------------------------------------------------------


@main.command("predict-failure")
@click.option("--draws", "draws_path", required=True, help="Draws CSV path.")
@click.option("--config", "config_path", required=True, help="Prediction query JSON.")
@click.option("--out", required=True, help="Per-replicate CSV path (summary JSON beside it).")
@click.option("--seed", type=int, default=None, help="Override the query seed.")
def predict_failure(draws_path, config_path, out, seed) -> None:
    """Predictive failure-time distribution of a new normal-stress device."""
    d = _load_json(config_path)
    try:
        _check_keys(d, {"x_s", "x_t", "x_p", "n_mc", "seed", "constants"},
                    "prediction query")
        constants = FixedConstants.from_dict(d.get("constants", {}))
        # Leave absent factors unassigned; the query itself decides whether a
        # partial assignment is admissible.
        intervention = queries.Intervention(
            x_s=None if d.get("x_s") is None else int(d["x_s"]),
            x_t=None if d.get("x_t") is None else int(d["x_t"]),
            x_p=None if d.get("x_p") is None else int(d["x_p"]),
        )
        rng_seed = seed if seed is not None else int(d.get("seed", 0))
        n_mc = d.get("n_mc")
        draws = read_draws_csv(draws_path)
        sample = queries.predictive_failure_time(
            intervention, draws, constants,
            rng=np.random.default_rng(rng_seed),
            n_mc=None if n_mc is None else int(n_mc),
        )
        _write_per_draw_csv(out, ["failure_time"], sample.values[:, None])
        _write_json(_summary_path(out), {"seed": rng_seed, **sample.summary})
    except _INPUT_ERRORS as exc:
        _fail(str(exc))
        return
    click.echo(
        f"predicted failure time over {sample.values.size} replicates "
        f"(mean {sample.summary['mean']:.3f}, sd {sample.summary['sd']:.3f}) -> {out}"
    )


# --- counterfactual --------------------------------------------------------------------


def _record_from_query(d: dict, base_dir: str) -> DeviceRecord:
    if ("record" in d) == ("dataset" in d):
        raise DataError("give exactly one of an inline record or dataset + id")
    if "dataset" in d:
        if "id" not in d:
            raise DataError("dataset-based queries need an id")
        path = d["dataset"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        for rec in read_dataset_csv(path):
            if rec.device_id == d["id"]:
                return rec
        raise DataError(f"no record with id {d['id']!r} in {d['dataset']}")
    r = d["record"]
    _check_keys(r, {"id", "regime", "x_s", "x_t", "x_p", "x_h", "x_h_level",
                    "times", "resistances"}, "record")
    missing = [k for k in ("regime", "x_s", "x_t", "x_p", "times", "resistances")
               if k not in r]
    if missing:
        raise DataError(f"record missing keys: {missing}")
    config = Configuration(
        x_s=int(r["x_s"]), x_t=int(r["x_t"]), x_p=int(r["x_p"]),
        x_h=_humidity_from_dict(r),
    )
    resist = [math.nan if v is None else float(v) for v in r["resistances"]]
    rec = DeviceRecord(
        device_id=str(r.get("id", "inline")),
        config=config,
        regime=Regime(r["regime"]),
        times=np.asarray([float(v) for v in r["times"]]),
        resistances=np.asarray(resist),
    )
    rec.validate()
    return rec


@main.command()
@click.option("--draws", "draws_path", required=True, help="Draws CSV path.")
@click.option("--config", "config_path", required=True, help="Counterfactual query JSON.")
@click.option("--out", required=True, help="Per-draw CSV path (summary JSON beside it).")
def counterfactual(draws_path, config_path, out) -> None:
    """Counterfactual outcome or failure time for an observed device."""
    d = _load_json(config_path)
    base_dir = os.path.dirname(os.fspath(config_path))
    try:
        _check_keys(d, {"record", "dataset", "id", "question", "t", "time_override",
                        "humidity_override", "humidity_override_level", "constants",
                        "level"}, "counterfactual query")
        constants = FixedConstants.from_dict(d.get("constants", {}))
        record = _record_from_query(d, base_dir)
        override = None
        if "humidity_override" in d and d["humidity_override"] is not None:
            override = int(d["humidity_override"])
        elif "humidity_override_level" in d and d["humidity_override_level"] is not None:
            override = humidity_class(int(d["humidity_override_level"]))
        query = cf.CounterfactualQuery(
            record=record,
            question=d.get("question", "outcome"),
            t=int(d.get("t", 3)),
            time_override=(None if d.get("time_override") is None
                           else float(d["time_override"])),
            humidity_override=override,
        )
        draws = read_draws_csv(draws_path)
        result = cf.cf_posterior(query, draws, constants, float(d.get("level", 0.95)))
        _write_per_draw_csv(out, ["value"], result.values[:, None])
        _write_json(_summary_path(out), result.summary)
    except _INPUT_ERRORS as exc:
        _fail(str(exc))
        return
    click.echo(
        f"counterfactual {query.question} for {record.device_id}: "
        f"mean {result.summary['mean']:.3f}, sd {result.summary['sd']:.3f} -> {out}"
    )


# --- plot-data ---------------------------------------------------------------------------


@main.command("plot-data")
@click.option("--kind", type=click.Choice(["reliability", "histogram", "trajectories"]),
              required=True, help="Which plot grid to emit.")
@click.option("--draws", "draws_path", default=None, help="Draws CSV (reliability).")
@click.option("--params", "params_path", default=None, help="Params JSON (reliability).")
@click.option("--config", "config_path", default=None, help="Query JSON (reliability).")
@click.option("--in", "in_path", default=None, help="Per-draw CSV (histogram).")
@click.option("--bins", type=int, default=50, show_default=True, help="Histogram bins.")
@click.option("--dataset", "dataset_path", default=None, help="Dataset CSV (trajectories).")
@click.option("--ids", default=None, help="Comma-separated device ids (trajectories).")
@click.option("--out", required=True, help="Output grid CSV path.")
@click.pass_context
def plot_data(ctx, kind, draws_path, params_path, config_path, in_path, bins,
              dataset_path, ids, out) -> None:
    """Emit plot-ready CSV grids (no image rendering)."""
    try:
        if kind == "reliability":
            if config_path is None:
                raise DataError("reliability grids need --config")
            ctx.invoke(reliability, draws_path=draws_path, params_path=params_path,
                       config_path=config_path, out=out)
            return
        if kind == "histogram":
            if in_path is None:
                raise DataError("histograms need --in with a per-draw CSV")
            if bins < 1:
                raise DataError("bins must be >= 1")
            values = _read_per_draw_values(in_path)
            dens, edges = np.histogram(values, bins=bins, density=True)
            with open(out, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["bin_low", "bin_high", "density"])
                for i in range(bins):
                    writer.writerow([f"{edges[i]:.6f}", f"{edges[i + 1]:.6f}",
                                     f"{dens[i]:.6f}"])
            click.echo(f"wrote {bins}-bin histogram grid to {out}")
            return
        if dataset_path is None:
            raise DataError("trajectory grids need --dataset")
        records = read_dataset_csv(dataset_path)
        if ids is not None:
            wanted = {s.strip() for s in ids.split(",") if s.strip()}
            records = [r for r in records if r.device_id in wanted]
            missing = wanted - {r.device_id for r in records}
            if missing:
                raise DataError(f"ids not in dataset: {sorted(missing)}")
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "t", "resistance"])
            for rec in records:
                for t in range(4):
                    if not math.isnan(rec.resistances[t]):
                        writer.writerow([
                            rec.device_id, f"{rec.times[t]:.6f}",
                            f"{rec.resistances[t]:.6f}",
                        ])
        click.echo(f"wrote trajectories for {len(records)} devices to {out}")
    except _INPUT_ERRORS as exc:
        _fail(str(exc))


def _read_per_draw_values(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "draw" or len(header) < 2:
            raise DataError("per-draw CSVs start with a 'draw' column plus values")
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values.append(float(row[1]))
            except (ValueError, IndexError):
                raise DataError(f"line {lineno}: malformed per-draw row") from None
    if not values:
        raise DataError("per-draw CSV holds no rows")
    return np.asarray(values)


if __name__ == "__main__":
    main()
