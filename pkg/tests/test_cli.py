import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from oracles import type7_percentile
from chinet.cli import main
from chinet.domain import edf_ranks, pairwise_distances
from chinet.io import read_csv, read_matrix, read_maxima, write_csv
from chinet.ingest import read_stations_csv
from chinet.pipeline import chi_network, percentile_summary

DATA = Path(__file__).parent / "data"


def run(*args):
    assert main([str(a) for a in args]) == 0


def files(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).iterdir())}


def assert_hash_everywhere(d):
    chash = json.loads((Path(d) / "manifest.json").read_text())["config_hash"]
    for name, blob in files(d).items():
        if name.endswith(".csv"):
            assert blob.decode().splitlines()[0] == f"# config_hash={chash}", name
        elif name.endswith(".geojson"):
            assert json.loads(blob)["properties"]["config_hash"] == chash
        else:
            assert json.loads(blob)["config_hash"] == chash, name


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    run("simulate", "--out", out, "--d", 30, "--m", 40, "--seed", 3)
    return out


def test_simulate_files_and_determinism(sim, tmp_path):
    assert set(files(sim)) == {"manifest.json", "stations.csv", "maxima.csv", "true_chi.csv",
                               "true_network.csv"}
    run("simulate", "--out", tmp_path / "b", "--d", 30, "--m", 40, "--seed", 3, "--workers", 3)
    assert files(sim) == files(tmp_path / "b")
    run("simulate", "--out", tmp_path / "c", "--manifest", sim / "manifest.json")
    assert files(sim) == files(tmp_path / "c")
    assert_hash_everywhere(sim)


def test_simulate_defaults_and_two_stations(tmp_path):
    run("simulate", "--out", tmp_path / "a")
    cfg = json.loads((tmp_path / "a" / "manifest.json").read_text())["config"]
    assert (cfg["d"], cfg["m"], cfg["rho"], cfg["kappa"], cfg["chi_min"]) == (100, 50, 0.05, 1.0, 0.3)
    assert read_maxima(tmp_path / "a" / "maxima.csv").shape == (50, 100)
    run("simulate", "--out", tmp_path / "b", "--d", 2, "--m", 5)
    assert read_maxima(tmp_path / "b" / "maxima.csv").shape == (5, 2)


def test_maxima_round_trip_exact(sim):
    mx = read_maxima(sim / "maxima.csv")
    header, rows = read_csv(sim / "maxima.csv")
    assert header[0] == "block" and len(rows) == 40
    assert np.all(np.isfinite(mx.values)) and np.all(mx.values > 0)


def test_chinet_equals_module_composition(sim, tmp_path):
    out = tmp_path / "net"
    run("chinet", "--out", out, "--stations", sim / "stations.csv", "--maxima", sim / "maxima.csv",
        "--boot", 40, "--bins", 20, "--seed", 1)
    s = read_stations_csv(sim / "stations.csv")
    mx = read_maxima(sim / "maxima.csv")
    res = chi_network(mx, pairwise_distances(s), 0.3, 20, 40, 1)
    _, chi_hat = read_matrix(out / "chi_hat.csv")
    _, chi_tilde = read_matrix(out / "chi_tilde.csv")
    np.testing.assert_array_equal(chi_hat, res.chi.chi_hat)
    np.testing.assert_array_equal(chi_tilde, res.shrunk.chi_tilde)
    _, rows = read_csv(out / "edges_corrected.csv")
    assert len(rows) == len(res.corrected)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["tau2_provenance"] == "estimated"
    assert summary["rank_convention"] == "over_m"
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    for key in ("chi_min", "bins", "boot", "seed", "rank_convention", "pairing", "tau2",
                "tau2_params", "lam", "weighted", "bin_scheme", "months", "completeness",
                "min_coverage", "coverage_span"):
        assert key in cfg
    assert_hash_everywhere(out)


def test_chinet_empty_network_and_worker_independence(sim, tmp_path):
    args = ["chinet", "--stations", sim / "stations.csv", "--maxima", sim / "maxima.csv",
            "--boot", 30, "--bins", 15, "--chi-min", 0.99]
    run(*args, "--out", tmp_path / "a")
    run(*args, "--out", tmp_path / "b", "--workers", 4)
    assert files(tmp_path / "a") == files(tmp_path / "b")
    _, rows = read_csv(tmp_path / "a" / "edges_empirical.csv")
    assert rows == []


def test_evaluate_rows_and_percentiles(tmp_path):
    run("evaluate", "--out", tmp_path, "--d", 25, "--m", 30, "--reps", 4, "--boot", 20, "--bins", 15)
    _, rows = read_csv(tmp_path / "replicates.csv")
    assert len(rows) == 4
    header, summ = read_csv(tmp_path / "summary.csv")
    assert header[3:] == ["p5", "p25", "p50", "p75", "p95"] and len(summ) == 4
    k = read_csv(tmp_path / "replicates.csv")[0].index("tpr_emp")
    vals = sorted(float(r[k]) for r in rows if r[k])

    got = [float(v) for v in summ[0][3:]]
    np.testing.assert_allclose(got, [type7_percentile(vals, q) for q in (5, 25, 50, 75, 95)], atol=1e-15)


def test_single_replicate_summary(tmp_path):
    run("evaluate", "--out", tmp_path, "--d", 20, "--m", 30, "--reps", 1, "--boot", 10, "--bins", 10)
    _, summ = read_csv(tmp_path / "summary.csv")
    for row in summ:
        if row[2] == "1":
            assert len(set(row[3:])) == 1


def test_percentile_summary_ignores_nan():
    np.testing.assert_array_equal(percentile_summary([np.nan, 2.0]), [2.0] * 5)
    assert np.all(np.isnan(percentile_summary([np.nan])))


@pytest.fixture(scope="module")
def fixture_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("fx")
    run("chinet", "--out", out / "net", "--stations", DATA / "stations.csv", "--daily", DATA / "ghcn",
        "--years", "1978-2017", "--boot", 50)
    run("annual", "--out", out / "an", "--stations", DATA / "stations.csv",
        "--maxima", out / "net" / "maxima.csv")
    run("regress", "--out", out / "rg", "--series", out / "an" / "long_distance.csv",
        "--sst-grid", DATA / "sst_grid.csv.gz")
    return out


def test_fixture_pipeline_outputs(fixture_run):
    out = fixture_run
    assert (out / "net" / "edges_corrected.geojson").exists()
    cfg = json.loads((out / "an" / "manifest.json").read_text())["config"]
    assert cfg["u_star"] == 0.95 and cfg["long_km"] == 1000.0
    assert cfg["rank_convention"] == "over_m_plus_1"
    reg = json.loads((out / "rg" / "regression.json").read_text())
    assert reg["n_joined"] == 40
    for fit in (reg["lm"], reg["glm"]):
        assert all(np.isfinite(v) for v in fit["coefficients"].values())
        assert all(0 <= p <= 1 for p in fit["p_values"].values())
    for sub in ("net", "an", "rg"):
        assert_hash_everywhere(out / sub)


def test_annual_counts_match_brute_force(fixture_run):
    out = fixture_run
    mx = read_maxima(out / "net" / "maxima.csv")
    s = read_stations_csv(DATA / "stations.csv")
    keep = [s.ids.index(i) for i in mx.station_ids]
    dist = pairwise_distances(s).values[np.ix_(keep, keep)]
    r = edf_ranks(mx, "over_m_plus_1")
    _, rows = read_csv(out / "an" / "long_distance.csv")
    for t, row in enumerate(rows):
        hits = np.flatnonzero(r.valid[t] & (np.nan_to_num(r.values[t]) > 0.95))
        total = sum(1 for a in hits for b in hits if a < b)
        long = sum(1 for a in hits for b in hits if a < b and dist[a, b] > 1000.0)
        assert (int(row[1]), int(row[2])) == (total, long)


def test_annual_no_long_pairs_fails(fixture_run, tmp_path, capsys):
    rc = main(["annual", "--out", str(tmp_path), "--stations", str(DATA / "stations.csv"),
               "--maxima", str(fixture_run / "net" / "maxima.csv"), "--long-km", "1e6"])
    assert rc != 0
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "NoEligiblePairsError" and err["command"] == "annual"


def _series(path, years, log_ratio, counts):
    rows = [(y, c, c, 100, lr, True) for y, lr, c in zip(years, log_ratio, counts)]
    write_csv(path, ["block", "n_edges", "n_long", "eligible_pairs", "log_ratio", "usable"], rows, "x")


def test_regress_perfect_line_and_join(tmp_path):
    years = list(range(2000, 2010))
    sst = np.linspace(25, 27, 10)
    _series(tmp_path / "ld.csv", years, 2 + 3 * sst, [3, 5, 4, 6, 7, 9, 8, 10, 12, 11])
    with open(tmp_path / "sst.csv", "w") as fh:
        fh.write("year,sst\n")
        for y, v in zip(years[2:] + [2020, 2021], list(sst[2:]) + [30.0, 31.0]):
            fh.write(f"{y},{float(v)!r}\n")
    run("regress", "--out", tmp_path / "o", "--series", tmp_path / "ld.csv", "--sst", tmp_path / "sst.csv")
    reg = json.loads((tmp_path / "o" / "regression.json").read_text())
    assert reg["n_joined"] == 8
    assert reg["lm"]["coefficients"]["intercept"] == pytest.approx(2, abs=1e-9)
    assert reg["lm"]["coefficients"]["slope"] == pytest.approx(3, abs=1e-9)
    _, rows = read_csv(tmp_path / "o" / "joined.csv")
    assert [int(r[0]) for r in rows] == years[2:]


def test_regress_too_few_years(tmp_path, capsys):
    _series(tmp_path / "ld.csv", [2000, 2001], [0.1, 0.2], [1, 2])
    (tmp_path / "sst.csv").write_text("year,sst\n2000,25\n2001,26\n")
    rc = main(["regress", "--out", str(tmp_path / "o"), "--series", str(tmp_path / "ld.csv"),
               "--sst", str(tmp_path / "sst.csv")])
    assert rc == 1
    assert "need 3" in json.loads(capsys.readouterr().err)["message"]


def test_entry_point_error_line(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "chinet.cli", "chinet", "--out", str(tmp_path),
                           "--stations", str(tmp_path / "missing.csv"), "--maxima", "x"],
                          capture_output=True, text=True)
    assert proc.returncode != 0
    lines = proc.stderr.strip().splitlines()
    assert len(lines) == 1 and "error" in json.loads(lines[0])


def test_schema_mismatch_fails(sim, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,a,b\n1,2,3\n")
    rc = main(["chinet", "--out", str(tmp_path / "o"), "--stations", str(bad),
               "--maxima", str(sim / "maxima.csv")])
    assert rc == 1 and json.loads(capsys.readouterr().err)["error"] == "IngestError"


def test_regress_without_series_is_a_command_error(tmp_path, capsys):
    assert main(["regress", "--out", str(tmp_path), "--sst-grid", str(DATA / "sst_grid.csv.gz")]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["command"] == "regress" and "--series" in err["message"]
