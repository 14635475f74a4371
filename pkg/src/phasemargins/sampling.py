"""Seeded Monte Carlo draws from gridded densities and their empirical summaries.

Every draw goes through an explicit counter-based generator (Philox) keyed by
``(seed, worker index)``; there is no global random state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .hilbert import Grid, Measure1D
from .reconstruct import MomentSequence


@dataclass(eq=False)
class SampleSet:
    values: np.ndarray
    seed: int
    source_label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def __len__(self) -> int:
        return self.values.size


def _generator(seed: int, worker: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, worker])))


def _inverse_cdf(mu: Measure1D, u: np.ndarray) -> np.ndarray:
    x = mu.grid.points
    d = np.clip(np.asarray(mu.density, dtype=float), 0.0, None)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * mu.grid.dx)])
    cdf /= cdf[-1]
    i = np.clip(np.searchsorted(cdf, u, side="right"), 1, len(x) - 1)
    lo, hi = cdf[i - 1], cdf[i]
    t = (u - lo) / np.where(hi > lo, hi - lo, 1.0)
    return x[i - 1] + t * mu.grid.dx


def sample_measure(mu: Measure1D, n: int, seed: int, workers: int = 1) -> SampleSet:
    """Draw n outcomes by inverse-CDF sampling with a piecewise-linear CDF.

    The n draws are split into ``workers`` contiguous blocks, block w using
    the stream keyed by ``(seed, w)``; the result depends on ``workers``,
    which is recorded.  Mass the grid cut off (``mu.tail_mass``) is recorded
    too; the draws are from the density truncated to the grid.
    """
    if n < 0:
        raise ValueError("sample count must be non-negative")
    if workers < 1:
        raise ValueError("workers must be positive")
    sizes = [n // workers + (w < n % workers) for w in range(workers)]
    blocks = [_inverse_cdf(mu, _generator(seed, w).random(m)) for w, m in enumerate(sizes)]
    values = np.concatenate(blocks) if blocks else np.zeros(0)
    meta = {"n": n, "workers": workers, "tail_mass": float(mu.tail_mass), "grid": mu.grid.describe()}
    return SampleSet(values, seed, mu.label, meta)


def empirical_measure(s: SampleSet, grid: Grid, bandwidth: float = 0.0) -> Measure1D:
    """Histogram on ``grid`` (one bin per grid point), optionally Gaussian-smoothed.

    ``bandwidth`` is the kernel standard deviation in x units; 0 gives the
    plain histogram.  Samples outside the grid are dropped and their count is
    recorded; the result has unit mass.
    """
    if len(s) == 0:
        raise ValueError("empty sample set")
    if bandwidth < 0:
        raise ValueError("bandwidth must be non-negative")
    x, dx = grid.points, grid.dx
    edges = np.concatenate([x - 0.5 * dx, [x[-1] + 0.5 * dx]])
    counts, _ = np.histogram(s.values, bins=edges)
    dens = counts / (len(s) * dx)
    if bandwidth > 0:
        dens = gaussian_filter1d(dens, bandwidth / dx, mode="constant", truncate=6.0)
    return Measure1D.normalized(
        grid,
        dens,
        f"empirical[{s.source_label}]",
        dropped=int(len(s) - counts.sum()),
        bandwidth=bandwidth,
        n=len(s),
    )


def empirical_moments(s: SampleSet, K: int) -> MomentSequence:
    """Sample moments with standard errors and their covariance (both / n)."""
    n = len(s)
    if n == 0:
        raise ValueError("empty sample set")
    powers = s.values[None, :] ** np.arange(K + 1)[:, None]
    m = powers.mean(axis=1)
    m[0] = 1.0
    if n > 1:
        cov = np.cov(powers) / n
        cov = np.atleast_2d(cov)
    else:
        cov = np.zeros((K + 1, K + 1))
    cov[0, :] = cov[:, 0] = 0.0
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return MomentSequence(m, se=se, cov=cov, label=f"empirical moments[{s.source_label}]")


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def write_samples(s: SampleSet, path) -> None:
    """CSV with a ``value`` column plus a JSON sidecar ``<path>.meta.json``."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("value\n")
        if len(s):
            np.savetxt(fh, s.values, fmt="%.17g")
    meta = {"seed": s.seed, "source": s.source_label, "n": len(s), "meta": s.meta}
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_samples(path) -> SampleSet:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text())
    with open(path) as fh:
        if fh.readline().strip() != "value":
            raise ValueError("sample file must start with a 'value' header")
        values = np.loadtxt(fh, ndmin=1) if meta["n"] else np.zeros(0)
    if values.size != meta["n"]:
        raise ValueError("row count does not match metadata")
    return SampleSet(values, meta["seed"], meta["source"], meta.get("meta", {}))
