"""Command-line front end.

Each subcommand writes its outputs plus ``manifest.json`` into ``--out``.
The manifest holds every configuration value (defaults included) and the
SHA-256 of every input file; ``--manifest`` re-runs a command from one.
Worker counts are execution details and are not part of the manifest.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .annualnet import annual_networks, long_distance_series
from .brsim import BRParams, br_simulate, br_true_chi, true_network, uniform_stations
from .chicurve import TAU2_PAPER_SIM
from .domain import CoordSystem, StationSet, pairwise_distances
from .ingest import (
    GULF_BOX,
    filter_stations,
    read_daily,
    read_sst_series,
    read_stations_csv,
    sst_area_average,
    seasonal_maxima,
    write_rejects,
)
from .io import (
    config_hash,
    file_sha256,
    network_geojson,
    read_csv,
    read_maxima,
    write_csv,
    write_edges,
    write_json,
    write_maxima,
    write_matrix,
    write_stations,
)
from .pipeline import PERCENTILES, chi_network, percentile_summary, simulation_study
from .regress import ols_fit, poisson_glm_fit
from .shrinkage import Network, degree_summary, threshold_network

log = logging.getLogger("chinet")

# options that never enter the manifest
EXECUTION_ONLY = {"out", "workers", "manifest", "command", "func", "verbose"}
INPUT_OPTIONS = {"stations", "maxima", "daily", "series", "sst", "sst_grid"}


class CommandError(Exception):
    pass


def _months(s: str) -> list[int]:
    out = []
    for part in s.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return sorted(set(out))


def _years(s: str | None):
    if s is None:
        return None
    a, b = s.split("-")
    return [int(a), int(b)]


def _tau2_params(s):
    if s is None:
        return None
    vals = [float(v) for v in s.split(",")] if isinstance(s, str) else [float(v) for v in s]
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("tau2 params need three values a,b,c")
    return vals


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in EXECUTION_ONLY}
    cfg["command"] = args.command
    return cfg


def _start(args) -> tuple[dict, str, Path]:
    cfg = _config(args)
    inputs = {}
    for k in sorted(INPUT_OPTIONS):
        v = cfg.get(k)
        if v is None:
            continue
        paths = v if isinstance(v, list) else [v]
        inputs[k] = [file_sha256(p) for p in paths if Path(p).is_file()]
    chash = config_hash({"config": {k: v for k, v in cfg.items() if k not in INPUT_OPTIONS},
                         "inputs": inputs})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "chinet_version": __version__,
        "command": args.command,
        "config": cfg,
        "config_hash": chash,
        "input_sha256": inputs,
    }
    write_json(out / "manifest.json", manifest)
    return cfg, chash, out


def _load_stations_and_maxima(args, chash, out):
    if args.stations is None:
        raise CommandError("--stations is required")
    stations = read_stations_csv(args.stations)
    if args.maxima:
        mx = read_maxima(args.maxima)
    elif args.daily:
        table = read_daily(args.daily)
        if table.rejects:
            write_rejects(table.rejects, out / "rejects.csv")
        years = _years(args.years)
        start = f"{years[0]:04d}-01-01" if years else None
        end = f"{years[1]:04d}-12-31" if years else None
        table = filter_stations(table, args.min_coverage, start, end, args.coverage_span)
        yrange = range(years[0], years[1] + 1) if years else None
        mx = seasonal_maxima(table, _months(args.months), yrange, args.completeness)
        write_maxima(out / "maxima.csv", mx, chash)
    else:
        raise CommandError("one of --maxima or --daily is required")
    if mx.station_ids is None:
        raise CommandError("maxima file lacks station ids")
    pos = {sid: k for k, sid in enumerate(stations.ids)}
    missing = [sid for sid in mx.station_ids if sid not in pos]
    if missing:
        raise CommandError(f"stations missing coordinates: {missing[:5]}")
    idx = [pos[sid] for sid in mx.station_ids]
    stations = StationSet(
        tuple(stations.ids[k] for k in idx), stations.coords[idx], stations.coord_system
    )
    return stations, mx


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> None:
    cfg, chash, out = _start(args)
    if args.stations:
        stations = read_stations_csv(args.stations)
    else:
        stations = uniform_stations(args.d, (args.seed, 0))
    p = BRParams(args.rho, args.kappa, (args.seed, 1))
    mx = br_simulate(stations, p, args.m, method=args.method, n_spectral=args.n_spectral,
                     workers=args.workers)
    dm = pairwise_distances(stations)
    chi = br_true_chi(dm.values, p)
    truth = true_network(stations, p, args.chi_min)
    net = threshold_network(chi, dm, args.chi_min, "true")
    assert net.edge_set() == truth.edge_set()

    write_stations(out / "stations.csv", stations, chash)
    write_maxima(out / "maxima.csv", mx, chash)
    write_matrix(out / "true_chi.csv", chi, stations.ids, chash)
    write_edges(out / "true_network.csv", net, stations.ids, chash)


# ---------------------------------------------------------------- chinet

def _degree_json(net: Network, ids) -> dict:
    ds = degree_summary(net)
    return {
        "n_edges": ds.n_edges,
        "degree": dict(zip(ids, ds.degree.tolist())),
        "degree_histogram": ds.degree_histogram,
        "edge_distance_quantiles": dict(zip(
            [str(q) for q in PERCENTILES], percentile_summary(ds.edge_distances).tolist()
        )),
    }


def cmd_chinet(args) -> None:
    cfg, chash, out = _start(args)
    stations, mx = _load_stations_and_maxima(args, chash, out)
    dm = pairwise_distances(stations)
    tau2_mode = "parametric-logistic" if args.tau2 == "logistic" else "estimated"
    res = chi_network(
        mx, dm, args.chi_min, args.bins, args.boot, args.seed, args.rank_convention,
        args.pairing, tau2_mode, args.tau2_params, args.lam, args.weighted,
        args.bin_scheme, args.workers,
    )
    ids = stations.ids
    write_matrix(out / "chi_hat.csv", res.chi.chi_hat, ids, chash)
    write_matrix(out / "sd_boot.csv", res.boot.sd, ids, chash)
    write_matrix(out / "chi_tilde.csv", res.shrunk.chi_tilde, ids, chash)
    write_matrix(out / "lambda.csv", res.shrunk.lam, ids, chash)
    b = res.binned
    write_csv(
        out / "binned.csv",
        ["distance", "chi_mean", "n_pairs", "chi_var", "curve", "tau2"],
        zip(b.centers, b.means, b.counts, b.variances, res.curve.fitted, res.tau2(b.centers)),
        chash,
    )
    grid = np.linspace(0.0, float(dm.values.max()), 201)
    write_csv(out / "curve.csv", ["distance", "chi", "tau2"],
              zip(grid, res.curve(grid), res.tau2(grid)), chash)
    write_edges(out / "edges_empirical.csv", res.empirical, ids, chash)
    write_edges(out / "edges_corrected.csv", res.corrected, ids, chash)
    if stations.coord_system is CoordSystem.GEOGRAPHIC:
        write_json(out / "edges_empirical.geojson", network_geojson(res.empirical, stations, chash))
        write_json(out / "edges_corrected.geojson", network_geojson(res.corrected, stations, chash))
    boot_counts = res.boot.edge_counts
    summary = {
        "config_hash": chash,
        "d": len(stations),
        "m": mx.shape[0],
        "distance_units": dm.units,
        "rank_convention": args.rank_convention,
        "pairing": args.pairing,
        "tau2_provenance": res.tau2.provenance,
        "tau2_params": list(res.tau2.params),
        "spline": {"lam": res.curve.lam, "edf": res.curve.spline.edf,
                   "gcv": res.curve.spline.gcv, "weighted": res.curve.weighted},
        "n_bins_used": len(b),
        "empirical": _degree_json(res.empirical, ids),
        "corrected": _degree_json(res.corrected, ids),
        "bootstrap_edge_counts": boot_counts.tolist(),
        "bootstrap_edge_count_quantiles": dict(zip(
            [str(q) for q in PERCENTILES], percentile_summary(boot_counts).tolist()
        )),
    }
    write_json(out / "summary.json", summary)


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args) -> None:
    cfg, chash, out = _start(args)
    if args.stations:
        stations = read_stations_csv(args.stations)
    else:
        stations = uniform_stations(args.d, (args.seed, 0))
    tau2_mode = "parametric-logistic" if args.tau2 == "logistic" else "estimated"
    params = args.tau2_params if args.tau2_params is not None else list(TAU2_PAPER_SIM)
    study = simulation_study(
        stations, BRParams(args.rho, args.kappa), args.m, args.reps, args.chi_min,
        args.bins, args.boot, args.seed, tau2_mode, tuple(params), args.rank_convention,
        args.method, args.workers,
    )
    n_true = len(study.truth)
    rows = []
    for o in study.outcomes:
        e, c = o.empirical, o.corrected
        rows.append((o.rep, n_true, e.n_est, e.n_overlap, e.tpr, e.ppv,
                     c.n_est, c.n_overlap, c.tpr, c.ppv, o.lam, o.edf))
    write_csv(
        out / "replicates.csv",
        ["rep", "n_true", "n_emp", "overlap_emp", "tpr_emp", "ppv_emp",
         "n_corr", "overlap_corr", "tpr_corr", "ppv_corr", "spline_lam", "spline_edf"],
        rows, chash,
    )
    tab = study.table()
    summary_rows = []
    for col, (metric, est) in enumerate([("TPR", "empirical"), ("PPV", "empirical"),
                                         ("TPR", "corrected"), ("PPV", "corrected")]):
        vals = tab[:, col]
        summary_rows.append((metric, est, int(np.isfinite(vals).sum()), *percentile_summary(vals)))
    write_csv(out / "summary.csv",
              ["metric", "estimator", "n_defined", *[f"p{q}" for q in PERCENTILES]],
              summary_rows, chash)
    write_stations(out / "stations.csv", stations, chash)
    write_json(out / "summary.json", {
        "config_hash": chash,
        "n_true_edges": n_true,
        "median_edges_empirical": float(np.median(tab[:, 4])),
        "median_edges_corrected": float(np.median(tab[:, 5])),
        "percentile_rule": "linear interpolation between order statistics (R type 7)",
        "percentiles": {f"{r[0]}_{r[1]}": dict(zip([str(q) for q in PERCENTILES], r[3:]))
                        for r in summary_rows},
    })


# ---------------------------------------------------------------- annual

def cmd_annual(args) -> None:
    cfg, chash, out = _start(args)
    stations, mx = _load_stations_and_maxima(args, chash, out)
    dm = pairwise_distances(stations)
    series = annual_networks(mx, args.u_star, args.rank_convention)
    lds = long_distance_series(series, dm, args.long_km, args.eligible, args.continuity)
    ids = stations.ids
    rows = []
    for label, e in zip(series.block_labels, series.edges):
        for a, b in e.tolist():
            rows.append((label, ids[a], ids[b], dm.values[a, b]))
    write_csv(out / "annual_edges.csv", ["block", "i", "j", "distance"], rows, chash)
    write_csv(
        out / "long_distance.csv",
        ["block", "n_edges", "n_long", "eligible_pairs", "log_ratio", "usable"],
        zip(lds.block_labels, series.counts(), lds.counts, lds.eligible, lds.log_ratio, lds.usable),
        chash,
    )


# ---------------------------------------------------------------- regress

def _read_long_distance(path):
    header, rows = read_csv(path)
    col = {h: k for k, h in enumerate(header)}
    for need in ("block", "n_long", "eligible_pairs", "log_ratio", "usable"):
        if need not in col:
            raise CommandError(f"{path}: missing column {need}")
    years = np.array([int(r[col["block"]]) for r in rows])
    counts = np.array([int(r[col["n_long"]]) for r in rows])
    pairs = np.array([int(r[col["eligible_pairs"]]) for r in rows])
    ratio = np.array([float(r[col["log_ratio"]]) if r[col["log_ratio"]] else np.nan for r in rows])
    usable = np.array([r[col["usable"]] == "true" for r in rows])
    return years, counts, pairs, ratio, usable


def cmd_regress(args) -> None:
    if not args.series:
        raise CommandError("--series is required")
    cfg, chash, out = _start(args)
    years, counts, pairs, ratio, usable = _read_long_distance(args.series)
    if args.sst:
        sst = read_sst_series(args.sst)
    elif args.sst_grid:
        sst = sst_area_average(args.sst_grid, tuple(args.lon_range), tuple(args.lat_range),
                               args.end_month)
    else:
        raise CommandError("one of --sst or --sst-grid is required")
    sst_map = sst.as_dict()
    joined = np.array([y in sst_map for y in years.tolist()])
    x_all = np.array([sst_map.get(y, np.nan) for y in years.tolist()])
    if joined.sum() < 3:
        raise CommandError(f"only {int(joined.sum())} years join the covariate; need 3")

    lm_rows = joined & usable
    if lm_rows.sum() < 3:
        raise CommandError("fewer than 3 usable log-ratio years")
    lm = ols_fit(x_all[lm_rows], ratio[lm_rows])
    offset = np.log(pairs[joined]) if args.offset else None
    glm = poisson_glm_fit(x_all[joined], counts[joined], offset)
    write_csv(out / "joined.csv", ["year", "sst", "n_long", "eligible_pairs", "log_ratio", "in_lm"],
              zip(years[joined], x_all[joined], counts[joined], pairs[joined], ratio[joined],
                  usable[joined]), chash)
    write_json(out / "regression.json", {
        "config_hash": chash,
        "n_joined": int(joined.sum()),
        "lm": lm.to_dict(),
        "glm": {**glm.to_dict(), "offset_log_eligible_pairs": bool(args.offset)},
    })


# ---------------------------------------------------------------- parser

def _add_common(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="threads (results do not depend on it)")
    p.add_argument("--manifest", help="take defaults from an earlier manifest.json")


def _add_sim(p):
    p.add_argument("--d", type=int, default=100, help="number of uniform stations")
    p.add_argument("--m", type=int, default=50, help="blocks per replicate")
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--method", choices=["exact", "spectral"], default="exact")


def _add_chi(p, tau2_default):
    p.add_argument("--chi-min", type=float, default=0.3)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--boot", type=int, default=500)
    p.add_argument("--rank-convention", choices=["over_m", "over_m_plus_1"], default="over_m")
    p.add_argument("--tau2", choices=["logistic", "estimated"], default=tau2_default)
    p.add_argument("--tau2-params", type=_tau2_params, default=None, help="a,b,c of the logistic")


def _add_inputs(p):
    p.add_argument("--stations", help="CSV station,x,y or station,lon,lat")
    p.add_argument("--maxima", help="maxima CSV (block,<station ids>)")
    p.add_argument("--daily", nargs="+", help="daily CSV / .dly files or directories")
    p.add_argument("--months", default="6-10")
    p.add_argument("--years", default=None, help="YYYY-YYYY study period")
    p.add_argument("--min-coverage", type=float, default=0.9)
    p.add_argument("--coverage-span", choices=["study", "record"], default="record")
    p.add_argument("--completeness", type=float, default=0.8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chinet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate Brown-Resnick maxima with known truth")
    _add_common(p)
    _add_sim(p)
    p.add_argument("--stations", help="planar station CSV (default: uniform on the unit square)")
    p.add_argument("--chi-min", type=float, default=0.3)
    p.add_argument("--n-spectral", type=int, default=1000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("chinet", help="empirical and bias-corrected chi networks")
    _add_common(p)
    _add_inputs(p)
    _add_chi(p, "estimated")
    p.add_argument("--pairing", choices=["common", "marginal"], default="common")
    p.add_argument("--lam", type=float, default=None, help="spline smoothing (default: GCV)")
    p.add_argument("--weighted", action="store_true", help="weight bins by pair count")
    p.add_argument("--bin-scheme", choices=["equal_width", "equal_count"], default="equal_width")
    p.set_defaults(func=cmd_chinet)

    p = sub.add_parser("evaluate", help="Monte Carlo TPR/PPV study")
    _add_common(p)
    _add_sim(p)
    _add_chi(p, "logistic")
    p.add_argument("--stations", help="planar station CSV (default: uniform on the unit square)")
    p.add_argument("--reps", type=int, default=100)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("annual", help="annual extremal networks")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--u-star", type=float, default=0.95)
    p.add_argument("--long-km", type=float, default=1000.0,
                   help="long-distance cutoff in the stations' distance units")
    p.add_argument("--rank-convention", choices=["over_m", "over_m_plus_1"], default="over_m_plus_1")
    p.add_argument("--eligible", choices=["valid", "all"], default="valid")
    p.add_argument("--continuity", action="store_true", help="log((N+0.5)/P) for zero counts")
    p.set_defaults(func=cmd_annual)

    p = sub.add_parser("regress", help="regress long-distance connectivity on SST")
    _add_common(p)
    p.add_argument("--series", help="long_distance.csv from 'annual'")
    p.add_argument("--sst", help="CSV year,sst")
    p.add_argument("--sst-grid", help="CSV lon,lat,year,month,sst")
    p.add_argument("--lon-range", type=float, nargs=2, default=list(GULF_BOX[0]))
    p.add_argument("--lat-range", type=float, nargs=2, default=list(GULF_BOX[1]))
    p.add_argument("--end-month", type=int, default=6)
    p.add_argument("--offset", action="store_true", help="log eligible-pair offset in the GLM")
    p.set_defaults(func=cmd_regress)
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.manifest:
        with open(args.manifest, encoding="utf-8") as fh:
            man = json.load(fh)
        if man.get("command") != args.command:
            raise CommandError(f"manifest is for {man.get('command')!r}, not {args.command!r}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k: v for k, v in man["config"].items() if k != "command"})
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    command = next((a for a in argv if not a.startswith("-")), "?")
    try:
        args = _parse(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # one machine-parsable line per failure
        msg = json.dumps({"error": type(exc).__name__, "command": command, "message": str(exc)})
        print(msg, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
