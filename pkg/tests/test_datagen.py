"""Dataset generation: determinism, jitter, designs, and the CSV format."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from resistscm import (
    Configuration,
    DataError,
    DomainError,
    FullFactorial,
    GeneratorSpec,
    ModelParams,
    Observational,
    Regime,
    generate_dataset,
    generate_device,
    mean_y0,
    mean_yt,
    read_dataset_csv,
    sample_measurement_time,
    write_dataset_csv,
)
from resistscm.datagen import _device_rng


def _spec(truth, constants, regime=Regime.AS, design=None, seed=7, jitter=True):
    if design is None:
        design = FullFactorial(replicates=1)
    return GeneratorSpec(truth=truth, constants=constants, regime=regime,
                         design=design, seed=seed, time_jitter=jitter)


def _noiseless(truth) -> ModelParams:
    d = truth.to_dict()
    d.pop("notes", None)
    d["sigma0"] = 0.0
    d["sigma_y"] = 0.0
    return ModelParams.from_dict(d)


class TestDeterminism:
    def test_regeneration_is_identical(self, truth, constants_ns):
        spec = _spec(truth, constants_ns, Regime.NS, Observational(n=32), seed=5)
        a = generate_dataset(spec)
        b = generate_dataset(_spec(truth, constants_ns, Regime.NS,
                                   Observational(n=32), seed=5))
        for ra, rb in zip(a, b):
            assert ra.device_id == rb.device_id
            assert ra.config == rb.config
            np.testing.assert_array_equal(ra.times, rb.times)
            np.testing.assert_array_equal(ra.resistances, rb.resistances)

    def test_device_streams_do_not_depend_on_dataset_size(self, truth, constants_ns):
        small = generate_dataset(
            _spec(truth, constants_ns, Regime.NS, Observational(n=5), seed=5))
        large = generate_dataset(
            _spec(truth, constants_ns, Regime.NS, Observational(n=20), seed=5))
        for ra, rb in zip(small, large[:5]):
            assert ra.config == rb.config
            np.testing.assert_array_equal(ra.resistances, rb.resistances)

    def test_seed_changes_data(self, truth, constants_as):
        a = generate_dataset(_spec(truth, constants_as, seed=1))
        b = generate_dataset(_spec(truth, constants_as, seed=2))
        assert any(
            not np.array_equal(ra.resistances, rb.resistances)
            for ra, rb in zip(a, b)
        )

    def test_csv_bytes_identical_across_reruns(self, truth, constants_as, tmp_path):
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_dataset_csv(generate_dataset(_spec(truth, constants_as, seed=3)), p1)
        write_dataset_csv(generate_dataset(_spec(truth, constants_as, seed=3)), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestDesigns:
    def test_full_factorial_covers_every_cell(self, as_dataset_small):
        cells = {
            (r.config.x_s, r.config.x_t, r.config.x_p, r.config.x_h)
            for r in as_dataset_small
        }
        assert len(as_dataset_small) == 128
        assert len(cells) == 128

    def test_full_factorial_order_and_ids(self, as_dataset_small):
        assert as_dataset_small[0].device_id == "AS00000"
        assert as_dataset_small[0].config == Configuration(1, 1, 1, -1)
        assert as_dataset_small[1].config == Configuration(1, 1, 1, 1)
        assert as_dataset_small[2].config == Configuration(1, 1, 2, -1)
        assert as_dataset_small[-1].config == Configuration(4, 4, 4, 1)

    def test_replicates_share_the_cell(self, truth, constants_as):
        data = generate_dataset(
            _spec(truth, constants_as, design=FullFactorial(replicates=3)))
        assert len(data) == 3 * 128
        assert data[0].config == data[1].config == data[2].config
        assert not np.array_equal(data[0].resistances, data[1].resistances)

    def test_observational_requires_ns(self, truth, constants_as):
        with pytest.raises(DomainError):
            _spec(truth, constants_as, Regime.AS, Observational(n=4)).validate()

    def test_observational_frequencies_match_tables(self, truth, constants_ns):
        data = generate_dataset(
            _spec(truth, constants_ns, Regime.NS, Observational(n=4000), seed=9))
        # All probability tables in the reference truth are uniform.
        h_high = np.mean([r.config.x_h == 1 for r in data])
        assert h_high == pytest.approx(0.5, abs=0.03)
        for attr, k in (("x_s", 4), ("x_t", 4), ("x_p", 4)):
            counts = np.bincount(
                [getattr(r.config, attr) - 1 for r in data], minlength=k)
            np.testing.assert_allclose(counts / len(data), 0.25, atol=0.03)


class TestTimes:
    def test_as_times_are_nominal(self, as_dataset_small, constants_as):
        for rec in as_dataset_small:
            np.testing.assert_array_equal(
                rec.times, [0.0, *constants_as.nominal_times])

    def test_as_spec_forces_jitter_off(self, truth, constants_as):
        spec = _spec(truth, constants_as, Regime.AS, jitter=True)
        spec.validate()
        assert spec.time_jitter is False

    def test_ns_jitter_bounds(self, ns_dataset_small, constants_ns):
        nominal = np.asarray(constants_ns.nominal_times)
        for rec in ns_dataset_small:
            offsets = rec.times[1:] - nominal
            assert np.all(np.abs(offsets) <= 0.005 + 1e-12)
            assert np.all(np.diff(rec.times) > 0)

    def test_jitter_moments(self, constants_ns, rng):
        # Offset = (Beta(5,5) - 1/2) / 100: mean 0, sd = sqrt(1/44)/100.
        n = 4000
        draws = np.array([
            sample_measurement_time(1, constants_ns, rng) for _ in range(n)
        ]) - constants_ns.nominal_times[0]
        sd = math.sqrt(1.0 / 44.0) / 100.0
        assert abs(draws.mean()) < 4.0 * sd / math.sqrt(n)
        assert draws.std() == pytest.approx(sd, rel=0.1)

    def test_jitter_rejects_bad_index(self, constants_ns, rng):
        with pytest.raises(DomainError):
            sample_measurement_time(0, constants_ns, rng)


class TestNoiselessRoundTrip:
    def test_as_resistances_equal_structural_means(self, truth, constants_as):
        quiet = _noiseless(truth)
        data = generate_dataset(_spec(quiet, constants_as, seed=13))
        for rec in data:
            y0 = mean_y0(rec.config, quiet)
            assert rec.y0 == pytest.approx(y0, abs=1e-9)
            for t in (1, 2, 3):
                expected = mean_yt(y0, rec.config, rec.times[t], Regime.AS,
                                   quiet, constants_as)
                assert rec.resistances[t] == pytest.approx(expected, abs=1e-9)

    def test_ns_resistances_equal_structural_means(self, truth, constants_ns):
        quiet = _noiseless(truth)
        data = generate_dataset(
            _spec(quiet, constants_ns, Regime.NS, Observational(n=16),
                  seed=14, jitter=False))
        for rec in data:
            y0 = mean_y0(rec.config, quiet)
            assert rec.y0 == pytest.approx(y0, abs=1e-9)
            for t in (1, 2, 3):
                expected = mean_yt(y0, rec.config, rec.times[t], Regime.NS,
                                   quiet, constants_ns)
                assert rec.resistances[t] == pytest.approx(expected, abs=1e-9)


class TestCsvFormat:
    def test_round_trip(self, ns_dataset_small, tmp_path):
        records = [dataclasses.replace(r) for r in ns_dataset_small[:8]]
        # Knock out one follow-up to exercise the missing-value encoding.
        records[3].resistances[2] = math.nan
        path = tmp_path / "data.csv"
        write_dataset_csv(records, path)
        again = read_dataset_csv(path)
        assert len(again) == len(records)
        for ra, rb in zip(records, again):
            assert ra.device_id == rb.device_id
            assert ra.config == rb.config
            assert ra.regime == rb.regime
            np.testing.assert_allclose(rb.times, ra.times, atol=5e-7)
            np.testing.assert_allclose(rb.resistances, ra.resistances, atol=5e-7)
        assert math.isnan(again[3].resistances[2])

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,regime,x_S\nAS0,AS,1\n")
        with pytest.raises(DataError):
            read_dataset_csv(path)

    def test_malformed_row_reports_line_number(self, ns_dataset_small, tmp_path):
        path = tmp_path / "bad.csv"
        write_dataset_csv(ns_dataset_small[:4], path)
        lines = path.read_text().splitlines()
        fields = lines[3].split(",")
        fields[1] = "XX"
        lines[3] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="line 4"):
            read_dataset_csv(path)

    def test_bad_number_reports_line_number(self, ns_dataset_small, tmp_path):
        path = tmp_path / "bad.csv"
        write_dataset_csv(ns_dataset_small[:4], path)
        lines = path.read_text().splitlines()
        fields = lines[2].split(",")
        fields[10] = "not-a-number"
        lines[2] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError, match="line 3"):
            read_dataset_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_dataset_csv(tmp_path / "nope.csv")


class TestGeneratorSpecParsing:
    def _base_dict(self, truth):
        d = truth.to_dict()
        d.pop("notes", None)
        return {
            "regime": "AS",
            "truth": d,
            "design": {"kind": "full_factorial", "replicates": 1},
            "seed": 3,
        }

    def test_parses_inline_truth(self, truth):
        spec = GeneratorSpec.from_dict(self._base_dict(truth))
        assert spec.regime is Regime.AS
        assert isinstance(spec.design, FullFactorial)

    def test_rejects_unknown_keys(self, truth):
        d = self._base_dict(truth)
        d["extra"] = 1
        with pytest.raises(DataError, match="unknown"):
            GeneratorSpec.from_dict(d)

    def test_rejects_missing_keys(self, truth):
        d = self._base_dict(truth)
        del d["seed"]
        with pytest.raises(DataError, match="missing"):
            GeneratorSpec.from_dict(d)

    def test_rejects_unknown_design(self, truth):
        d = self._base_dict(truth)
        d["design"] = {"kind": "latin_square", "n": 8}
        with pytest.raises(DataError):
            GeneratorSpec.from_dict(d)

    def test_truth_path_resolved_against_config_dir(self, truth, tmp_path):
        import json

        td = truth.to_dict()
        td.pop("notes", None)
        (tmp_path / "t.json").write_text(json.dumps(td))
        d = self._base_dict(truth)
        d["truth"] = "t.json"
        spec = GeneratorSpec.from_dict(d, base_dir=tmp_path)
        assert spec.truth.mu0 == truth.mu0


class TestGenerateDevice:
    def test_draw_order_baseline_then_followups(self, truth, constants_as):
        # Same stream, manual replay of the documented draw order.
        config = Configuration(2, 3, 1, 1)
        rec = generate_device("d", config, Regime.AS, truth, constants_as,
                              _device_rng(77, 0), time_jitter=False)
        rng = _device_rng(77, 0)
        u0 = rng.normal(0.0, truth.sigma0)
        y0 = mean_y0(config, truth) + u0
        assert rec.y0 == pytest.approx(y0, abs=1e-12)
        for t in (1, 2, 3):
            u = rng.normal(0.0, truth.sigma_y)
            expected = mean_yt(y0, config, rec.times[t], Regime.AS,
                               truth, constants_as) + u
            assert rec.resistances[t] == pytest.approx(expected, abs=1e-12)
