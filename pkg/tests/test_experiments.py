import csv
import io

import numpy as np
import pytest

from gradlab import experiments as ex
from gradlab.experiments import SCHEMAS, CsvTable, ExperimentConfig, format_cell

SMALL = dict(dim=2, n_data=8, replicates=40, m_list=(1, 4), k_list=(1, 4, 16), oracle_samples=1000)


def small(**kw):
    return ExperimentConfig.from_preset("custom", **(SMALL | kw))


def parse(table: CsvTable):
    lines = table.render().splitlines()
    return lines[0], list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


class TestConfig:
    def test_near_optimum_pins(self):
        cfg = ExperimentConfig.from_preset("near-optimum")
        assert (cfg.dim, cfg.n_data, cfg.proposal_variance, cfg.offset_std) == (20, 1024, 2.0 / 3.0, 0.01)
        with pytest.raises(ValueError, match="custom"):
            ExperimentConfig.from_preset("near-optimum", dim=3)

    def test_high_variance_pins(self):
        cfg = ExperimentConfig.from_preset("high-variance")
        assert (cfg.offset_std, cfg.proposal_variance) == (0.5, 1.0)
        assert max(cfg.k_list) == 100 and not cfg.fits_slopes
        with pytest.raises(ValueError):
            ExperimentConfig.from_preset("high-variance", offset_std=0.1)
        with pytest.raises(ValueError):
            ExperimentConfig(preset="high-variance")

    @pytest.mark.parametrize(
        "kw", [dict(estimators=("bogus",)), dict(replicates=0), dict(m_list=()), dict(k_list=(0,)), dict(seed=-1), dict(offset_std=-1.0)]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            small(**kw)

    def test_specs_order(self):
        specs = ex.specs_for(small(estimators=("iwae", "vae", "piwae")))
        assert [(s.kind, s.m, s.k) for s in specs] == [
            ("iwae", 1, 1), ("iwae", 1, 4), ("iwae", 1, 16), ("vae", 1, 1), ("vae", 4, 1),
            ("piwae", 1, 1), ("piwae", 1, 4), ("piwae", 1, 16), ("piwae", 4, 4), ("piwae", 4, 16),
        ]

    def test_problem_is_seeded(self):
        a, b = ex.build_problem(small()), ex.build_problem(small())
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, ex.build_problem(small(seed=1)).data)


class TestCsv:
    def test_cell_formatting(self):
        assert format_cell(0.1) == "0.10000000000000001"
        assert float(format_cell(np.pi)) == np.pi
        assert format_cell(True) == "true" and format_cell(None) == "" and format_cell(np.int64(3)) == "3"

    def test_header_and_schema_line(self):
        t = CsvTable("rmse", SCHEMAS["rmse"])
        t.add(row="data", estimator="iwae", M=1, K=2, rmse=0.5)
        schema, rows = parse(t)
        assert schema == "#schema=gradlab.rmse/1"
        assert list(rows[0]) == list(SCHEMAS["rmse"])

    def test_unknown_column(self):
        with pytest.raises((KeyError, ValueError)):
            CsvTable("rmse", SCHEMAS["rmse"]).add(nope=1)

    def test_write_error_names_path(self, tmp_path):
        t = CsvTable("rmse", SCHEMAS["rmse"])
        bad = tmp_path / "missing" / "out.csv"
        with pytest.raises(OSError, match="missing"):
            t.write(bad)


class TestRunners:
    def test_snr_smoke(self):
        cfg = small(replicates=2, estimators=("iwae",), k_list=(3,))
        _, rows = parse(ex.run_snr_sweep(cfg))
        data = [r for r in rows if r["row"] == "data"]
        assert len(data) == 8
        assert all(np.isfinite(float(r[c])) for r in data for c in ("mean", "std", "snr", "stderr_mean"))

    def test_snr_summary_rows(self):
        _, rows = parse(ex.run_snr_sweep(small()))
        slopes = [r for r in rows if r["row"] == "slope"]
        assert {(r["estimator"], r["group"]) for r in slopes} == {(e, g) for e in ("iwae", "vae") for g in ("theta", "phi")}

    def test_high_variance_emits_trends(self):
        cfg = ExperimentConfig.from_preset("high-variance", dim=2, n_data=8, replicates=10, k_list=(1, 4), m_list=(1, 4))
        _, rows = parse(ex.run_snr_sweep(cfg))
        assert not [r for r in rows if r["row"] == "slope"]
        assert {r["snr"] for r in rows if r["row"] == "trend"} <= {"-1", "0", "1"}

    @pytest.mark.parametrize("policy", ex.TARGET_POLICIES)
    def test_dsnr_policies(self, policy):
        _, rows = parse(ex.run_dsnr_sweep(small(replicates=20, k_list=(1, 4)), policy))
        assert [r["group"] for r in rows if r["row"] == "baseline"] == ["theta", "phi"]
        assert all(float(r["iqr_low"]) <= float(r["iqr_high"]) for r in rows)

    def test_hist_single_replicate(self):
        _, rows = parse(ex.run_hist(small(replicates=1, estimators=("vae",), m_list=(1,))))
        assert len(rows) == 1 and rows[0]["row"] == "sample"

    def test_hist_summary(self):
        _, rows = parse(ex.run_hist(small(track="mu:1")))
        fractions = [float(r["value"]) for r in rows if r["row"] == "sign_fraction"]
        assert len(fractions) == 5 and all(0 <= f <= 1 for f in fractions)
        with pytest.raises(ValueError):
            ex.run_hist(small(track="A:9"))

    def test_rmse_rows(self):
        _, rows = parse(ex.run_rmse(small()))
        assert {r["row"] for r in rows} == {"data", "slope", "variation", "trend"}
        assert all(float(r["rmse"]) >= 0 for r in rows if r["row"] == "data")

    def test_direction_rows(self):
        _, rows = parse(ex.run_direction(small()))
        data = [r for r in rows if r["row"] == "data"]
        assert [int(r["K"]) for r in data] == [1, 4, 16]
        assert all(-1 <= float(r["cosine"]) <= 1 for r in data)
        with pytest.raises(ValueError):
            ex.run_direction(small(replicates=1))

    def test_lemma_rows(self):
        _, rows = parse(ex.run_lemma(small(replicates=10_000, k_list=(1,))))
        summary = [r for r in rows if r["row"] == "summary"]
        assert len(summary) == 6
        assert all(r["passed"] == "true" for r in summary)

    def test_train_rows(self):
        _, rows = parse(ex.run_train(small(steps=3, minibatch_size=4, m_list=(2,), k_list=(2,))))
        assert [(r["estimator"], r["iteration"]) for r in rows] == [(e, str(i)) for e in ("iwae", "vae") for i in range(4)]


@pytest.mark.parametrize("name", list(ex.SUBCOMMANDS))
def test_byte_identical_rerun(name):
    runner, _ = ex.SUBCOMMANDS[name]
    cfg = small(replicates=10_000 if name == "lemma" else 20, steps=5, k_list=(1, 4))
    assert runner(cfg).render() == runner(cfg).render()
