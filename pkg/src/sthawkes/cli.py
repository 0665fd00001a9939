"""Command-line interface: simulate, loglik, bench, fit, diagnose, lengthscales.

Every command takes ``--config`` (a JSON document) and the common flags; a
flag always overrides its config key.  Exit status 2 means a bad
configuration, 1 a runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import multiprocessing
import os
import re
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import diagnostics, plotting
from .engine import ParallelEngine, benchmark_eval, physical_cores, write_benchmark_csv
from .geo import (CONVENTIONS, SCALINGS, RegionError, domain_area, grid_regions, point_regions,
                  write_regions_geojson)
from .io import ConfigError, EventsError, RunConfig, load_config, load_events, write_events
from .mcmc import ChainConfig, LogNormalPrior, read_chain, run_cut_posterior, write_chain
from .model import PARAM_NAMES, VARIANTS, Catalog, HawkesParams
from .simulate import SimConfig, coarsen_catalog, simulate_catalog, write_truth

logger = logging.getLogger("sthawkes")

DEFAULT_INITIAL = {"mu0": 0.5, "tau_t": 1.0, "xi0": 0.5, "sigma_x": 0.1, "sigma_t": 1.0}
INITIAL_JITTER = 0.1


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _common(parser):
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int, help="likelihood worker threads G")
    parser.add_argument("--precision", choices=("single", "double"))
    parser.add_argument("--variant", choices=VARIANTS)
    parser.add_argument("--out", help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true")


def _data_flags(parser):
    parser.add_argument("--events", help="events CSV")
    parser.add_argument("--regions", help="regions GeoJSON")
    parser.add_argument("--densities", help="region_id,density CSV")
    parser.add_argument("--area", type=float, help="A(X) in square degrees")


def build_parser():
    p = argparse.ArgumentParser(prog="sthawkes", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw a synthetic catalog")
    _common(s)
    s.add_argument("--rate", type=float, help="immigrants per week")
    s.add_argument("--horizon", type=float, help="weeks")
    s.add_argument("--xi0", type=float)
    s.add_argument("--sigma-x", dest="sigma_x", type=float)
    s.add_argument("--sigma-t", dest="sigma_t", type=float)
    s.add_argument("--region-mode", choices=("point", "grid", "none"), default="point",
                   help="point: one exact region per event; grid: coarsen to a grid")
    s.add_argument("--grid", type=int, default=10, help="cells per side for --region-mode grid")

    s = sub.add_parser("loglik", help="evaluate the log-likelihood once")
    _common(s)
    _data_flags(s)
    for name in PARAM_NAMES:
        s.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)

    s = sub.add_parser("bench", help="time evaluations over N and G")
    _common(s)
    s.add_argument("--sizes", type=_ints, help="comma-separated N values")
    s.add_argument("--bench-workers", type=_ints, help="comma-separated G values")
    s.add_argument("--repeats", type=int)

    s = sub.add_parser("fit", help="run cut-posterior chains")
    _common(s)
    _data_flags(s)
    s.add_argument("--chains", type=int)
    s.add_argument("--jobs", type=int, help="chains run in parallel processes")
    s.add_argument("--iterations", type=int)
    s.add_argument("--burn-in", dest="burn_in", type=int)
    s.add_argument("--thin", type=int)
    s.add_argument("--refresh-period", dest="refresh_period", type=int)
    s.add_argument("--fixed-locations", dest="fixed_locations", action="store_true", default=None,
                   help="keep event coordinates fixed instead of resampling them")

    s = sub.add_parser("diagnose", help="R-hat, ESS and posterior summary of chain CSVs")
    _common(s)
    s.add_argument("--chains-dir", help="directory holding chain_*.csv (default: --out)")

    s = sub.add_parser("lengthscales", help="effective spatial lengthscales in miles")
    _common(s)
    s.add_argument("--counties", required=True, help="CSV with county,density,latitude")
    s.add_argument("--chains-dir", help="directory holding chain_*.csv (default: --out)")
    s.add_argument("--sigma-x", dest="sigma_x", type=float,
                   help="use this fixed sigma_x instead of chain draws")
    s.add_argument("--convention", choices=CONVENTIONS, default="averaged")
    s.add_argument("--scaling", choices=SCALINGS, default="eq3_sqrt")
    return p


_CONFIG_KEYS = ("seed", "workers", "precision", "variant", "out", "events", "regions",
                "densities", "area", "chains", "jobs", "iterations", "burn_in", "thin",
                "refresh_period", "fixed_locations")


def _config(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    return load_config(args.config, overrides)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)


# --- simulate -------------------------------------------------------------------


def cmd_simulate(args, cfg: RunConfig):
    cfg.validate()
    sim = dict(cfg.simulate)
    for key in ("rate", "horizon", "xi0", "sigma_x", "sigma_t"):
        if getattr(args, key) is not None:
            sim[key] = getattr(args, key)
    if "window" in sim:
        sim["window"] = tuple(sim["window"])
    try:
        config = SimConfig(variant=cfg.variant, seed=cfg.seed, **sim)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"simulate settings: {exc}") from None
    catalog = simulate_catalog(config)
    regions_path = os.path.join(cfg.out, "regions.geojson")
    if args.region_mode == "point":
        regions = point_regions(catalog.lon, catalog.lat, catalog.density)
        catalog = Catalog(catalog.times, catalog.lon, catalog.lat, regions.ids(), catalog.density)
        write_regions_geojson(regions, regions_path)
    elif args.region_mode == "grid":
        regions = grid_regions(config.window, args.grid, args.grid,
                               None if config.density is None else lambda x, y: config.density)
        catalog = coarsen_catalog(catalog, regions)
        write_regions_geojson(regions, regions_path)
    events_path = os.path.join(cfg.out, "events.csv")
    write_events(catalog, events_path)
    write_truth(config, os.path.join(cfg.out, "truth.json"), N=len(catalog),
                region_mode=args.region_mode)
    print(f"wrote {len(catalog)} events to {events_path}")
    return 0


# --- shared data loading --------------------------------------------------------


def load_inputs(cfg: RunConfig):
    regions = cfg.load_regions()
    catalog = load_events(cfg.events, regions)
    if regions is not None and len(regions) == 0:
        raise ConfigError("region table is empty")
    return catalog, regions


def resolve_area(cfg: RunConfig, catalog: Catalog, regions):
    if cfg.area is not None:
        return domain_area(override=cfg.area)
    if regions is not None:
        return domain_area(bounds=regions.bounds())
    if catalog.locations_pending:
        raise ConfigError("coarse-only events need --regions or --area")
    return domain_area(catalog)


# --- loglik ---------------------------------------------------------------------


def cmd_loglik(args, cfg: RunConfig):
    cfg.validate(need_events=True)
    catalog, regions = load_inputs(cfg)
    if catalog.locations_pending:
        raise ConfigError("loglik needs exact coordinates; this catalog is coarse-only")
    values = {**DEFAULT_INITIAL, **cfg.initial}
    values.update({k: getattr(args, k) for k in PARAM_NAMES if getattr(args, k) is not None})
    params = HawkesParams(**values, area=resolve_area(cfg, catalog, regions), variant=cfg.variant)
    with ParallelEngine(cfg.workers, cfg.precision) as engine:
        value = engine.log_likelihood(catalog, params)
    result = {"loglik": value, "N": len(catalog), "G": cfg.workers, "precision": cfg.precision,
              "variant": cfg.variant, "area": params.area, "params": values}
    _write_json(os.path.join(cfg.out, "loglik.json"), result)
    print(json.dumps(result))
    return 0


# --- bench ----------------------------------------------------------------------


def cmd_bench(args, cfg: RunConfig):
    cfg.validate()
    bench = dict(cfg.bench)
    sizes = args.sizes or bench.get("sizes") or [2000, 4000, 8000]
    workers = args.bench_workers or bench.get("workers") or sorted({1, physical_cores()})
    repeats = args.repeats if args.repeats is not None else bench.get("repeats", 3)
    rows, slopes = benchmark_eval(sizes, workers, repeats, cfg.precision, cfg.variant, cfg.seed)
    write_benchmark_csv(rows, os.path.join(cfg.out, "bench.csv"))
    _write_json(os.path.join(cfg.out, "bench.json"),
                {"slopes": {str(g): s for g, s in slopes.items()},
                 "physical_cores": physical_cores(), "rows": rows})
    if rows:
        plotting.plot_benchmark(rows, os.path.join(cfg.out, "bench.png"))
    for r in rows:
        print(f"N={r['N']:>8} G={r['G']:>3} median={r['seconds_median']:.4f}s")
    for g, s in slopes.items():
        print(f"G={g} log-log slope {s:.3f}")
    return 0


# --- fit ------------------------------------------------------------------------


def chain_seeds(seed: int, chains: int):
    """Independent per-chain seeds derived from the run seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(chains)]


def initial_params(cfg: RunConfig, area: float, chain_seed: int) -> HawkesParams:
    """Configured starting point, jittered by a chain-specific log-normal factor."""
    rng = np.random.default_rng([chain_seed, 1])
    values = {**DEFAULT_INITIAL, **cfg.initial}
    values = {k: v * float(np.exp(INITIAL_JITTER * rng.standard_normal())) for k, v in values.items()}
    return HawkesParams(**values, area=area, variant=cfg.variant)


def chain_config(cfg: RunConfig, area: float, k: int) -> ChainConfig:
    seed = chain_seeds(cfg.seed, cfg.chains)[k]
    steps = {name: cfg.steps.get(name, 0.05) for name in PARAM_NAMES}
    return ChainConfig(iterations=cfg.iterations, initial=initial_params(cfg, area, seed),
                       burn_in=cfg.burn_in, seed=seed, steps=steps,
                       refresh_period=cfg.refresh_period, precision=cfg.precision,
                       workers=cfg.workers, prior=LogNormalPrior(0.0, cfg.prior_sd),
                       adapt=cfg.adapt, thin=cfg.thin)


def _run_chain(k, chain_cfg, catalog, regions, out):
    output = run_cut_posterior(chain_cfg, catalog, regions)
    write_chain(output, os.path.join(out, f"chain_{k}.csv"), os.path.join(out, f"chain_{k}.json"))
    return k, output.seconds, output.acceptance


def cmd_fit(args, cfg: RunConfig):
    cfg.validate(need_events=True)
    catalog, regions = load_inputs(cfg)
    if cfg.fixed_locations:
        if catalog.locations_pending:
            raise ConfigError("--fixed-locations needs exact coordinates in the events CSV")
        regions = None
    elif regions is None and catalog.locations_pending:
        raise ConfigError("coarse-only events need --regions for the cut-posterior fit")
    area = resolve_area(cfg, catalog, regions)
    configs = [chain_config(cfg, area, k) for k in range(cfg.chains)]
    _write_json(os.path.join(cfg.out, "run_config.json"), {**cfg.to_dict(), "area_used": area})
    failures = []
    if cfg.jobs > 1 and cfg.chains > 1:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(min(cfg.jobs, cfg.chains), mp_context=ctx) as pool:
            futures = {k: pool.submit(_run_chain, k, c, catalog, regions, cfg.out)
                       for k, c in enumerate(configs)}
            for k, fut in futures.items():
                try:
                    _report_chain(*fut.result())
                except Exception as exc:  # surfaced per chain below
                    failures.append((k, exc))
    else:
        for k, c in enumerate(configs):
            try:
                _report_chain(*_run_chain(k, c, catalog, regions, cfg.out))
            except Exception as exc:
                logger.debug(traceback.format_exc())
                failures.append((k, exc))
    for k, exc in failures:
        print(f"chain {k} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
    if failures:
        return 1
    summary = write_summary(cfg.out, cfg.out)
    print(format_table(summary))
    return 0


def _report_chain(k, seconds, acceptance):
    rates = " ".join(f"{n}={a:.2f}" for n, a in acceptance.items())
    print(f"chain {k} done in {seconds:.1f}s; acceptance {rates}")


# --- diagnose -------------------------------------------------------------------


def chain_files(directory):
    files = glob.glob(os.path.join(directory, "chain_*.csv"))
    files.sort(key=lambda p: [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", p)])
    if not files:
        raise FileNotFoundError(f"no chain_*.csv files in {directory}")
    return files


def load_chains(directory):
    """Stack chain CSVs into ``{name: (M, S) array}``, truncating to the shortest chain."""
    draws = [read_chain(p)[1] for p in chain_files(directory)]
    s = min(d.shape[0] for d in draws)
    if s == 0:
        raise ValueError(f"a chain in {directory} has no draws")
    stacked = np.stack([d[:s] for d in draws])
    return {name: stacked[:, :, j] for j, name in enumerate(PARAM_NAMES)}


def write_summary(chains_dir, out):
    chains = load_chains(chains_dir)
    params = diagnostics.diagnose(chains)
    frac = diagnostics.contagion_fraction(chains["mu0"], chains["xi0"])
    summary = {"chains": int(chains["mu0"].shape[0]), "draws_per_chain": int(chains["mu0"].shape[1]),
               "parameters": params,
               "contagion_fraction": diagnostics.summarize(frac.ravel(), ["f"])["f"],
               "max_rhat": max(p["rhat"] for p in params.values()),
               "min_ess_bulk": min(p["ess_bulk"] for p in params.values())}
    _write_json(os.path.join(out, "summary.json"), summary)
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(format_table(summary) + "\n")
    plotting.plot_traces(chains, os.path.join(out, "traces.png"))
    return summary


def format_table(summary):
    head = f"{'param':<8} {'median':>11} {'q025':>11} {'q975':>11} {'rhat':>7} {'ess_bulk':>9} {'ess_tail':>9}"
    lines = [head, "-" * len(head)]
    for name, r in summary["parameters"].items():
        lines.append(f"{name:<8} {r['median']:>11.5g} {r['q025']:>11.5g} {r['q975']:>11.5g} "
                     f"{r['rhat']:>7.4f} {r['ess_bulk']:>9.1f} {r['ess_tail']:>9.1f}")
    c = summary["contagion_fraction"]
    lines.append(f"contagion fraction xi0/(xi0+mu0): {c['median']:.4f} "
                 f"({c['q025']:.4f}, {c['q975']:.4f})")
    return "\n".join(lines)


def cmd_diagnose(args, cfg: RunConfig):
    cfg.validate()
    summary = write_summary(args.chains_dir or cfg.out, cfg.out)
    print(format_table(summary))
    return 0


# --- lengthscales ---------------------------------------------------------------


def read_counties(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"county", "density", "latitude"}
        if reader.fieldnames is None:
            return rows
        if not need <= set(reader.fieldnames):
            raise ConfigError(f"{path}: header must contain county,density,latitude")
        for line, row in enumerate(reader, start=2):
            try:
                rows.append({"county": row["county"], "density": float(row["density"]),
                             "latitude": float(row["latitude"])})
            except ValueError:
                raise ConfigError(f"{path}:{line}: density and latitude must be numbers") from None
    return rows


LENGTHSCALE_COLUMNS = ("county", "density", "latitude", "median", "q025", "q975")


def cmd_lengthscales(args, cfg: RunConfig):
    cfg.validate()
    if not os.path.isfile(args.counties):
        raise ConfigError(f"counties file not found: {args.counties}")
    counties = read_counties(args.counties)
    if args.sigma_x is not None:
        sigma_x = np.array([args.sigma_x])
    elif counties:
        sigma_x = load_chains(args.chains_dir or cfg.out)["sigma_x"].ravel()
    else:
        sigma_x = np.array([])
    rows = diagnostics.lengthscale_table(sigma_x, counties, cfg.variant, args.scaling,
                                         args.convention) if counties else []
    path = os.path.join(cfg.out, "lengthscales.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LENGTHSCALE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"{'county':<24} {'median_mi':>10} {'q025':>8} {'q975':>8}")
    for r in rows:
        print(f"{r['county']:<24} {r['median']:>10.2f} {r['q025']:>8.2f} {r['q975']:>8.2f}")
    return 0


COMMANDS = {"simulate": cmd_simulate, "loglik": cmd_loglik, "bench": cmd_bench,
            "fit": cmd_fit, "diagnose": cmd_diagnose, "lengthscales": cmd_lengthscales}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EventsError, RegionError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
