"""Partitioned log-likelihood evaluation.

The N per-event terms are split into G contiguous slices, one per worker
thread.  Each worker fills its own slots of a shared output vector and sums
its slice in ascending order; the slice sums are then reduced in ascending
worker order.  Workers run compiled, GIL-free kernels, so threads give real
parallelism on multi-core hosts.
"""
from __future__ import annotations

import csv
import logging
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._kernels import LANES, kernels, ordered_sum
from .model import CONSTANT, Catalog, HawkesParams, kernel_arrays

logger = logging.getLogger(__name__)

PRECISIONS = {"single": np.float32, "double": np.float64}

BENCH_COLUMNS = ("N", "G", "precision", "variant", "seconds_median", "seconds_min")


@dataclass(frozen=True)
class Partition:
    ranges: tuple[tuple[int, int], ...]

    @property
    def G(self):
        return len(self.ranges)

    @property
    def N(self):
        return self.ranges[-1][1]


def make_partition(N: int, G: int) -> Partition:
    """Split ``range(N)`` into G contiguous slices; the first ``N % G`` get one extra."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not 1 <= G <= N:
        raise ValueError(f"need 1 <= G <= N, got G={G}, N={N}")
    size, extra = divmod(N, G)
    ranges, b = [], 0
    for g in range(G):
        e = b + size + (1 if g < extra else 0)
        ranges.append((b, e))
        b = e
    return Partition(tuple(ranges))


def dtype_for(precision: str):
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise ValueError(f"precision must be 'single' or 'double', got {precision!r}") from None


class ParallelEngine:
    """Evaluates the log-likelihood with ``workers`` threads in one precision.

    The engine also exposes the cached-lane path used by the sampler:
    :meth:`lane_sums` computes the O(N^2) background/triggering partial sums
    and :meth:`combine` turns them into the total for any weights.  Both paths
    share the same arithmetic, so they agree bitwise.
    """

    def __init__(self, workers: int = 1, precision: str = "double"):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = int(workers)
        self.precision = precision
        self.dtype = dtype_for(precision)
        self.kernels = kernels(self.dtype)
        self._pool = None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __getstate__(self):
        return {"workers": self.workers, "precision": self.precision}

    def __setstate__(self, state):
        self.__init__(state["workers"], state["precision"])

    def partition(self, N: int) -> Partition:
        return make_partition(N, min(self.workers, N))

    def _run(self, partition: Partition, fn):
        # one task per slice; the barrier is the list() over all futures
        if partition.G == 1:
            return [fn(*partition.ranges[0])]
        if self._pool is None or self._pool._max_workers < partition.G:
            self.close()
            self._pool = ThreadPoolExecutor(max_workers=partition.G)
        return list(self._pool.map(lambda r: fn(*r), partition.ranges))

    def contributions(self, catalog: Catalog, params: HawkesParams, partition=None):
        """Per-event terms, in the engine dtype."""
        partition = partition or self.partition(len(catalog))
        arrays = kernel_arrays(catalog, params, self.dtype)
        consts = params.kernel_constants(self.dtype)
        out = np.zeros(len(catalog), dtype=self.dtype)
        self._run(partition, lambda b, e: self.kernels.loglik_slice(*arrays, b, e, consts, out))
        return out

    def _reduce(self, out, partition):
        slices = self._run(partition, lambda b, e: ordered_sum(out, b, e))
        total = 0.0
        for s in slices:
            total += s
        return total

    def log_likelihood(self, catalog: Catalog, params: HawkesParams, partition=None) -> float:
        partition = partition or self.partition(len(catalog))
        _check_cover(partition, len(catalog))
        out = self.contributions(catalog, params, partition)
        return self._reduce(out, partition)

    def lane_sums(self, catalog: Catalog, params: HawkesParams, background=True,
                  trigger=True, cache=None, partition=None):
        """Fill (or refresh part of) the per-event lane sums.

        ``cache`` is a ``(BG, TR)`` pair of ``(N, LANES)`` arrays; only the
        requested halves are recomputed.
        """
        n = len(catalog)
        partition = partition or self.partition(n)
        if cache is None:
            cache = (np.zeros((n, LANES), self.dtype), np.zeros((n, LANES), self.dtype))
        BG, TR = cache
        arrays = kernel_arrays(catalog, params, self.dtype)
        d = self.dtype
        self._run(partition, lambda b, e: self.kernels.lanes_slice(
            *arrays, b, e, d(params.tau_t_prec), d(params.omega), d(params.sigma_x_prec ** 2),
            background, trigger, BG, TR))
        return BG, TR

    def combine(self, catalog: Catalog, params: HawkesParams, cache, partition=None) -> float:
        """Total log-likelihood from cached lane sums under ``params``."""
        partition = partition or self.partition(len(catalog))
        BG, TR = cache
        times = np.ascontiguousarray(catalog.times, dtype=self.dtype)
        consts = params.kernel_constants(self.dtype)
        out = np.zeros(len(catalog), dtype=self.dtype)
        self._run(partition, lambda b, e: self.kernels.combine_slice(BG, TR, times, b, e, consts, out))
        return self._reduce(out, partition)


def _check_cover(partition: Partition, n: int):
    if partition.ranges[0][0] != 0 or partition.N != n:
        raise ValueError(f"partition covers [0, {partition.N}), catalog has {n} events")


def log_likelihood(catalog: Catalog, params: HawkesParams, partition: Partition | None = None,
                   precision: str = "double") -> float:
    partition = partition or make_partition(len(catalog), 1)
    with ParallelEngine(partition.G, precision) as engine:
        return engine.log_likelihood(catalog, params, partition)


def physical_cores() -> int:
    try:
        import psutil
        n = psutil.cpu_count(logical=False)
    except ImportError:
        n = None
    return n or os.cpu_count() or 1


def random_catalog(N: int, rng, horizon=None, extent=10.0, density=None) -> Catalog:
    """Uniform catalog used by the benchmarks and the equivalence tests."""
    horizon = horizon if horizon is not None else max(10.0, N / 50.0)
    times = np.sort(rng.uniform(0.0, horizon, N))
    lon = rng.uniform(0.0, extent, N)
    lat = rng.uniform(0.0, extent, N)
    return Catalog(times, lon, lat, density=density)


def benchmark_eval(sizes, workers, repeats=3, precision="double", variant=CONSTANT,
                   seed=0, params=None, clock=time.perf_counter):
    """Time log-likelihood evaluations over a grid of (N, G).

    Returns ``(rows, slopes)`` where each row holds the BENCH_COLUMNS fields
    and ``slopes[G]`` is the fitted log-log slope of median seconds vs N.
    One warm-up evaluation per cell is discarded.
    """
    if not sizes:
        raise ValueError("sizes must be nonempty")
    rows = []
    if repeats <= 0:
        return rows, {}
    rng = np.random.default_rng(seed)
    for N in sizes:
        catalog = random_catalog(int(N), rng)
        p = params or HawkesParams(0.5, 5.0, 0.5, 0.5, 1.0, area=100.0, variant=variant)
        for G in workers:
            with ParallelEngine(min(G, N), precision) as engine:
                engine.log_likelihood(catalog, p)
                samples = []
                for _ in range(repeats):
                    t0 = clock()
                    engine.log_likelihood(catalog, p)
                    samples.append(clock() - t0)
            row = dict(N=int(N), G=int(G), precision=precision, variant=p.variant,
                       seconds_median=statistics.median(samples), seconds_min=min(samples))
            logger.info("bench N=%d G=%d %.4fs", N, G, row["seconds_median"])
            rows.append(row)
    return rows, scaling_slopes(rows)


def scaling_slopes(rows):
    slopes = {}
    for G in sorted({r["G"] for r in rows}):
        cells = sorted((r["N"], r["seconds_median"]) for r in rows if r["G"] == G)
        if len(cells) >= 2:
            x, y = np.log([c[0] for c in cells]), np.log([c[1] for c in cells])
            slopes[G] = float(np.polyfit(x, y, 1)[0])
    return slopes


def write_benchmark_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in BENCH_COLUMNS})
