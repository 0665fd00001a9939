import csv
import json
import os
import subprocess
import sys

import pytest

import sthawkes.cli as cli
from conftest import DATA
from sthawkes.engine import log_likelihood
from sthawkes.geo import load_regions_geojson
from sthawkes.io import load_events
from sthawkes.model import HawkesParams

COUNTIES = os.path.join(DATA, "county_lengthscales.csv")


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    # about 500 events
    assert run("simulate", "--out", out, "--seed", 5, "--rate", 2.5, "--horizon", 100) == 0
    return out


class TestSimulate:
    def test_outputs(self, sim_dir):
        c = load_events(sim_dir / "events.csv", load_regions_geojson(sim_dir / "regions.geojson"))
        assert 400 < len(c) < 650
        truth = json.loads((sim_dir / "truth.json").read_text())
        assert truth["N"] == len(c) and truth["seed"] == 5

    def test_deterministic_given_seed(self, sim_dir, tmp_path):
        assert run("simulate", "--out", tmp_path, "--seed", 5, "--rate", 2.5, "--horizon", 100) == 0
        assert (tmp_path / "events.csv").read_bytes() == (sim_dir / "events.csv").read_bytes()

    def test_grid_mode_is_coarse(self, tmp_path):
        assert run("simulate", "--out", tmp_path, "--seed", 1, "--rate", 2, "--horizon", 20,
                   "--sigma-x", 0.01, "--region-mode", "grid", "--grid", 4) == 0
        regions = load_regions_geojson(tmp_path / "regions.geojson")
        c = load_events(tmp_path / "events.csv", regions)
        assert c.locations_pending and len(regions) == 16


class TestLoglik:
    def test_matches_library(self, sim_dir, tmp_path, capsys):
        rc = run("loglik", "--out", tmp_path, "--events", sim_dir / "events.csv", "--area", 100,
                 "--mu0", 0.4, "--xi0", 0.6, "--workers", 2)
        assert rc == 0
        got = json.loads(capsys.readouterr().out)
        c = load_events(sim_dir / "events.csv")
        ref = log_likelihood(c, HawkesParams(0.4, 1.0, 0.6, 0.1, 1.0, area=100.0))
        assert got["loglik"] == pytest.approx(ref, rel=1e-12)
        assert json.loads((tmp_path / "loglik.json").read_text())["loglik"] == got["loglik"]


class TestBench:
    def test_writes_csv_json_png(self, tmp_path):
        assert run("bench", "--out", tmp_path, "--sizes", "200,400", "--bench-workers", "1,2",
                   "--repeats", 1) == 0
        with open(tmp_path / "bench.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4 and rows[0]["precision"] == "double"
        assert set(json.loads((tmp_path / "bench.json").read_text())["slopes"]) == {"1", "2"}
        assert (tmp_path / "bench.png").stat().st_size > 0


class TestFit:
    def test_smoke_two_chains(self, sim_dir, tmp_path):
        rc = run("fit", "--out", tmp_path, "--events", sim_dir / "events.csv", "--regions",
                 sim_dir / "regions.geojson", "--chains", 2, "--iterations", 200, "--burn-in", 100,
                 "--seed", 3)
        assert rc == 0
        for k in range(2):
            with open(tmp_path / f"chain_{k}.csv") as fh:
                assert len(list(csv.reader(fh))) == 101
            assert json.loads((tmp_path / f"chain_{k}.json").read_text())["cut"] is True
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["chains"] == 2 and set(summary["parameters"]) == {"mu0", "tau_t", "xi0", "sigma_x", "sigma_t"}
        assert (tmp_path / "traces.png").exists() and (tmp_path / "summary.txt").exists()
        # diagnose re-reads the same chain files
        diag = tmp_path / "diag"
        assert run("diagnose", "--out", diag, "--chains-dir", tmp_path) == 0
        assert json.loads((diag / "summary.json").read_text()) == summary

    def test_invalid_config_exits_2(self, sim_dir, tmp_path, capsys):
        rc = run("fit", "--out", tmp_path, "--events", sim_dir / "events.csv", "--iterations", 100,
                 "--burn-in", 100)
        assert rc == 2 and "burn_in" in capsys.readouterr().err

    def test_coarse_events_need_regions(self, tmp_path):
        (tmp_path / "e.csv").write_text("event_id,t_weeks,region_id\na,0,r\n")
        assert run("fit", "--out", tmp_path, "--events", tmp_path / "e.csv", "--iterations", 5) == 2

    def test_chain_failure_reports_index(self, sim_dir, tmp_path, monkeypatch, capsys):
        real = cli.run_cut_posterior

        def flaky(config, catalog, regions):
            if config.seed == cli.chain_seeds(0, 2)[1]:
                raise RuntimeError("boom")
            return real(config, catalog, regions)

        monkeypatch.setattr(cli, "run_cut_posterior", flaky)
        rc = run("fit", "--out", tmp_path, "--events", sim_dir / "events.csv", "--chains", 2,
                 "--iterations", 5, "--burn-in", 1, "--seed", 0, "--fixed-locations")
        assert rc == 1 and "chain 1 failed" in capsys.readouterr().err

    def test_process_chains_match_sequential(self, sim_dir, tmp_path):
        common = ["--events", sim_dir / "events.csv", "--chains", 2, "--iterations", 15,
                  "--burn-in", 5, "--seed", 8, "--fixed-locations"]
        assert run("fit", "--out", tmp_path / "seq", *common) == 0
        assert run("fit", "--out", tmp_path / "par", "--jobs", 2, *common) == 0
        for k in range(2):
            name = f"chain_{k}.csv"
            assert (tmp_path / "seq" / name).read_bytes() == (tmp_path / "par" / name).read_bytes()


class TestLengthscales:
    def test_published_constant_column(self, tmp_path):
        assert run("lengthscales", "--out", tmp_path, "--counties", COUNTIES, "--sigma-x", 0.0798) == 0
        with open(COUNTIES) as fh:
            published = {r["county"]: float(r["constant_mi"]) for r in csv.DictReader(fh)}
        with open(tmp_path / "lengthscales.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        for r in rows:
            assert float(r["median"]) == pytest.approx(published[r["county"]], abs=0.05)

    def test_varying_unit_density_equals_constant(self, tmp_path):
        (tmp_path / "c.csv").write_text("county,density,latitude\nx,1.0,34.2\n")
        outs = []
        for variant in ("constant", "varying"):
            d = tmp_path / variant
            assert run("lengthscales", "--out", d, "--counties", tmp_path / "c.csv", "--sigma-x", 0.0798,
                       "--variant", variant) == 0
            outs.append((d / "lengthscales.csv").read_text())
        assert outs[0] == outs[1]

    def test_from_chain_files(self, tmp_path):
        (tmp_path / "chain_0.csv").write_text(
            "iteration,mu0,tau_t,xi0,sigma_x,sigma_t,loglik\n"
            + "".join(f"{i},0.1,1,1,0.0798,2,-5\n" for i in range(10)))
        assert run("lengthscales", "--out", tmp_path, "--counties", COUNTIES) == 0
        with open(tmp_path / "lengthscales.csv") as fh:
            assert float(next(csv.DictReader(fh))["median"]) == pytest.approx(5.04, abs=0.005)

    def test_empty_county_list(self, tmp_path, capsys):
        (tmp_path / "c.csv").write_text("county,density,latitude\n")
        assert run("lengthscales", "--out", tmp_path, "--counties", tmp_path / "c.csv") == 0
        assert (tmp_path / "lengthscales.csv").read_text().strip() == "county,density,latitude,median,q025,q975"

    def test_missing_chains(self, tmp_path):
        assert run("lengthscales", "--out", tmp_path, "--counties", COUNTIES) == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "sthawkes", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("simulate", "loglik", "bench", "fit", "diagnose", "lengthscales"):
        assert cmd in out.stdout
