"""Convergence diagnostics and posterior summaries.

R-hat and ESS follow the rank-normalised, split-chain recipe: chains are
halved, draws are replaced by normal scores of their pooled ranks, and the
autocorrelation sum is truncated with Geyer's initial monotone sequence.
"""
from __future__ import annotations

import warnings

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .geo import effective_lengthscale_degrees, lengthscale_to_miles


class DegenerateChainsWarning(RuntimeWarning):
    """All draws are identical; the diagnostic is reported by convention."""


def _as_chains(chains):
    x = np.asarray(chains, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected an (M, S) array of draws")
    return x


def split_chains(chains):
    x = _as_chains(chains)
    half = x.shape[1] // 2
    if half < 2:
        raise ValueError("need at least 4 draws per chain")
    # odd lengths drop the middle draw
    return np.vstack([x[:, :half], x[:, -half:]])


def rank_normalize(x):
    """Normal scores of pooled fractional ranks, same shape as ``x``."""
    x = np.asarray(x, dtype=np.float64)
    r = rankdata(x, method="average").reshape(x.shape)
    return ndtri((r - 0.375) / (x.size + 0.25))


def _is_constant(x):
    return np.ptp(x) == 0


def _rhat(x):
    m, n = x.shape
    within = x.var(axis=1, ddof=1).mean()
    between = n * x.mean(axis=1).var(ddof=1)
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def split_rank_rhat(chains) -> float:
    """Max of bulk and folded (tail) rank-normalised split R-hat."""
    x = split_chains(chains)
    if _is_constant(x):
        warnings.warn("constant draws: R-hat set to 1", DegenerateChainsWarning, stacklevel=2)
        return 1.0
    bulk = _rhat(rank_normalize(x))
    folded = np.abs(x - np.median(x))
    tail = _rhat(rank_normalize(folded)) if not _is_constant(folded) else 1.0
    return max(bulk, tail)


def _autocovariance(x):
    """Biased autocovariance of each row, via FFT."""
    m, n = x.shape
    centred = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, size, axis=1)
    return np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n


def _ess(x) -> float:
    m, n = x.shape
    acov = _autocovariance(x)
    within = acov[:, 0].mean() * n / (n - 1)
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer: sum consecutive pairs while positive, forcing them non-increasing
    pairs = []
    prev = np.inf
    for t in range(0, n - 1, 2):
        p = rho[t] + rho[t + 1]
        if p <= 0:
            break
        prev = min(prev, p)
        pairs.append(prev)
    tau = -1.0 + 2.0 * sum(pairs)
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def ess(chains, kind="bulk") -> float:
    """Bulk (rank-normalised) or tail (5%/95% quantile indicator) ESS."""
    x = split_chains(chains)
    if _is_constant(x):
        warnings.warn("constant draws: ESS set to 0", DegenerateChainsWarning, stacklevel=2)
        return 0.0
    if kind == "bulk":
        return _ess(rank_normalize(x))
    if kind == "tail":
        out = []
        for q in (0.05, 0.95):
            ind = (x <= np.quantile(x, q)).astype(np.float64)
            out.append(_ess(ind) if not _is_constant(ind) else float(x.size))
        return min(out)
    raise ValueError(f"kind must be 'bulk' or 'tail', got {kind!r}")


def summarize(draws, names=None):
    """Median and 2.5%/97.5% quantiles (linear interpolation) per column."""
    x = np.asarray(draws, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no draws to summarize")
    if x.ndim == 1:
        x = x[:, None]
    names = names or [f"x{k}" for k in range(x.shape[1])]
    q = np.quantile(x, [0.5, 0.025, 0.975], axis=0)
    return {name: {"median": float(q[0, k]), "q025": float(q[1, k]), "q975": float(q[2, k])}
            for k, name in enumerate(names)}


def contagion_fraction(mu0, xi0):
    """Per-draw share of events attributed to self-excitation, xi0 / (xi0 + mu0)."""
    mu0 = np.asarray(mu0, dtype=np.float64)
    xi0 = np.asarray(xi0, dtype=np.float64)
    return xi0 / (xi0 + mu0)


def diagnose(chains_by_param: dict):
    """R-hat, bulk and tail ESS, and summary for every parameter.

    ``chains_by_param`` maps a name to an (M, S) array.
    """
    out = {}
    for name, chains in chains_by_param.items():
        x = _as_chains(chains)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateChainsWarning)
            row = {"rhat": split_rank_rhat(x), "ess_bulk": ess(x, "bulk"),
                   "ess_tail": ess(x, "tail"), "degenerate": bool(_is_constant(x))}
        row.update(summarize(x.ravel(), [name])[name])
        out[name] = row
    return out


def lengthscale_table(sigma_x, counties, variant="constant", scaling="eq3_sqrt",
                      convention="averaged"):
    """Posterior median and 95% interval of effective spatial lengthscale in miles.

    ``counties`` is an iterable of dicts with ``county``, ``density`` and
    ``latitude``.
    """
    sigma_x = np.asarray(sigma_x, dtype=np.float64).ravel()
    rows = []
    for c in counties:
        deg = effective_lengthscale_degrees(sigma_x, float(c["density"]), scaling, variant)
        miles = lengthscale_to_miles(np.asarray(deg), float(c["latitude"]), convention)
        s = summarize(miles, ["miles"])["miles"]
        rows.append({"county": c["county"], "density": float(c["density"]),
                     "latitude": float(c["latitude"]), **s})
    return rows
