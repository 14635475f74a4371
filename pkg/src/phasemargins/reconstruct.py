"""Recovering a position density from a Cartesian margin.

Two routes:

* Fourier deconvolution: ``p_hat = margin_hat / (sqrt(2 pi) mu_hat)`` on the
  conjugate grid, with local cubic interpolation across isolated zeros of
  ``mu_hat`` and a noise-driven band limit;
* moments: the binomial recursion that undoes convolution of moment
  sequences, followed by a Gaussian-weighted polynomial density fit.

Moment convolution and deconvolution run in exact rational arithmetic on
the (exactly representable) float inputs and round once at the end; the
recursion amplifies a single rounding of intermediate results by up to
~1e7 at order 12, so float evaluation could not make the two inverse.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Callable

import numpy as np
from scipy.special import gammaln

from ._conventions import SQRT_2PI
from .hilbert import Grid, Measure1D, fourier_rows, inverse_fourier_transform, GridFunction, simpson_weights

log = logging.getLogger(__name__)

ILL_POSED = "convolver support deficient — deconvolution ill-posed"
NO_MOMENTS = "no finite moments"
CLIP_LEVEL = -1e-6
MAX_GAP = 5
ABRUPT_ZERO = 1e-15
NOISE_FACTOR = 8.0
BAND_GAP = 16
COND_LIMIT = 1e12
TAIL_TOL = 1e-9


class HeavyTailWarning(UserWarning):
    """Moment integrand has not decayed at the grid edge."""


class NoFiniteMomentsError(ValueError):
    """Moments requested of a measure whose tails defeat them."""


# -- Fourier deconvolution ---------------------------------------------------


def _clip_renormalize(grid: Grid, density: np.ndarray) -> tuple[np.ndarray, float]:
    w = simpson_weights(grid.n, grid.dx)
    d = np.array(density, dtype=float)
    neg = d < CLIP_LEVEL * max(float(d.max()), 0.0)
    clipped = float(np.dot(w, np.abs(d) * neg))
    d[neg] = 0.0
    mass = float(np.dot(w, d))
    if not mass > 0:
        raise ValueError("reconstruction has no positive mass")
    return d / mass, clipped


def _cubic_fill(p: np.ndarray, vals: np.ndarray, valid: np.ndarray, i0: int, i1: int) -> bool:
    """Fill vals[i0..i1] from the two nearest valid samples on each side."""
    left = [i for i in range(i0 - 1, -1, -1) if valid[i]][:2]
    right = [i for i in range(i1 + 1, len(p)) if valid[i]][:2]
    if len(left) < 2 or len(right) < 2:
        return False
    idx = np.array(left[::-1] + right)
    nodes, t = p[idx], p[i0 : i1 + 1]
    # Lagrange basis of the cubic through the four nodes
    basis = np.ones((t.size, 4))
    for j in range(4):
        for m in range(4):
            if m != j:
                basis[:, j] *= (t - nodes[m]) / (nodes[j] - nodes[m])
    fill = basis @ vals[idx]
    vals[i0 : i1 + 1] = fill
    return True


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    d = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1) - 1))


def _reach(significant: np.ndarray, gap: int = BAND_GAP) -> int:
    """Last significant index reached from 0 without crossing ``gap`` insignificant ones."""
    last, run = 0, 0
    for i, s in enumerate(significant):
        if s:
            last, run = i, 0
        else:
            run += 1
            if run > gap:
                break
    return last


def estimate_noise(spectrum: np.ndarray, fraction: float = 0.1) -> float:
    """RMS of the outermost ``fraction`` of a centred spectrum on each side."""
    n = len(spectrum)
    m = max(1, int(fraction * n / 2))
    outer = np.concatenate([spectrum[:m], spectrum[-m:]])
    return float(np.sqrt(np.mean(np.abs(outer) ** 2)))


def fourier_deconvolve(
    margin: Measure1D,
    mu_hat: Callable | np.ndarray,
    eps_floor: float | None = None,
    noise_level: float | None = None,
    max_gap: int = MAX_GAP,
    noise_factor: float = NOISE_FACTOR,
) -> Measure1D:
    """Density ``p`` with ``margin = mu * p``, computed frequency by frequency.

    ``mu_hat`` is a callable or its samples on ``margin.grid.conjugate()``.
    Frequencies where ``|mu_hat| < eps_floor`` (default 1e-4 max|mu_hat|)
    are handled by kind:

    * interior runs of at most ``max_gap`` cells, and the sample nearest each
      sign change of ``mu_hat``, are filled by cubic interpolation of p_hat;
    * a wider interior run, or a tail that drops abruptly to zero (compactly
      supported ``mu_hat``), raises ``ValueError(ILL_POSED)``;
    * a gradually decaying tail is divided through as long as the margin
      transform stands out of the noise.

    The estimate is set to zero beyond the band where
    ``|margin_hat| >= noise_factor * noise_level``, grown outwards from p = 0 across
    gaps of at most 16 cells (isolated zeros of the spectrum).  The
    noise level defaults to the RMS of the outer tenth of the spectrum; pass
    ``1/sqrt(2 pi n)`` for an empirical measure of n samples.

    The transforms run in long double; see ``margin_density``.
    """
    grid = margin.grid
    pg = grid.conjugate()
    p = pg.points
    mh = np.asarray(mu_hat(p) if callable(mu_hat) else mu_hat, dtype=complex)
    if mh.shape != p.shape:
        raise ValueError("mu_hat samples do not match the conjugate grid")
    if abs(margin.mass() - 1.0) > 1e-6:
        raise ValueError("margin must have unit mass")
    M = fourier_rows(margin.density.astype(np.longdouble), grid)
    amax = float(np.abs(mh).max())
    eps_floor = 1e-4 * amax if eps_floor is None else eps_floor
    noise = estimate_noise(M) if noise_level is None else float(noise_level)

    low = np.abs(mh) < eps_floor
    n = len(p)
    tails = np.zeros(n, bool)
    for i0, i1 in _runs(low):
        if i0 == 0 or i1 == n - 1:
            # tail: abrupt drop to zero means mu_hat is compactly supported
            seg = np.abs(mh[i0 : i1 + 1])
            seg = seg if i0 > 0 else seg[::-1]
            dead = np.flatnonzero(seg <= ABRUPT_ZERO * amax)
            if dead.size and dead[0] <= max_gap:
                raise ValueError(ILL_POSED)
            tails[i0 : i1 + 1] = True
        elif i1 - i0 + 1 > max_gap:
            raise ValueError(ILL_POSED)
    fill = low & ~tails

    # isolated zeros falling between samples: drop the nearest sample too
    re = mh.real
    realish = np.abs(mh.imag) <= 1e-6 * amax
    cross = np.flatnonzero(realish[:-1] & realish[1:] & (re[:-1] * re[1:] < 0))
    for i in cross:
        j = i if abs(re[i]) <= abs(re[i + 1]) else i + 1
        if not tails[j]:
            fill[j] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        ph = np.where(fill, 0.0, M / (SQRT_2PI * mh.astype(np.clongdouble)))

    valid = ~fill & ~tails
    bands = []
    for i0, i1 in _runs(fill):
        if not _cubic_fill(p, ph, valid, i0, i1):
            raise ValueError(ILL_POSED)
        bands.append((float(p[i0]), float(p[i1])))

    significant = np.abs(M) >= noise_factor * noise
    mid = n // 2  # index of p = 0 on a centred conjugate grid
    hi = mid + _reach(significant[mid:])
    lo = mid - _reach(significant[: mid + 1][::-1])
    ph[~np.isfinite(ph)] = 0.0
    ph[hi + 1 :] = 0.0
    ph[:lo] = 0.0
    ph[tails & ~significant] = 0.0

    if bands:
        log.info("interpolated p_hat across %d sub-floor band(s): %s", len(bands), bands)
    rec = inverse_fourier_transform(GridFunction(pg, ph), grid).values.real.astype(float)
    density, clipped = _clip_renormalize(grid, rec)
    diagnostics = {
        "interpolated_bands": bands,
        "clipped_mass": clipped,
        "band_limit": (float(p[lo]), float(p[hi])),
        "noise_level": noise,
        "noise_factor": noise_factor,
        "eps_floor": eps_floor,
    }
    return Measure1D(grid, density, 1.0, f"deconvolved[{margin.label}]", diagnostics)


# -- moments -------------------------------------------------------------------


@dataclass(eq=False)
class MomentSequence:
    """Moments ``m[0..K]``; ``exact`` optionally holds them as Fractions.

    Results of ``convolve_moments``/``deconvolve_moments`` keep the exact
    rational value so that chained moment algebra rounds only once.
    """

    values: np.ndarray
    se: np.ndarray | None = None
    cov: np.ndarray | None = None
    label: str = ""
    exact: tuple | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("moment sequence must be a non-empty 1D array")
        if self.exact is not None and len(self.exact) != self.values.size:
            raise ValueError("exact values do not match the float values")

    def rational(self) -> list[Fraction]:
        if self.exact is not None:
            return list(self.exact)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("moment sequence has non-finite entries")
        return [Fraction(float(v)) for v in self.values]

    @property
    def K(self) -> int:
        return self.values.size - 1

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, k):
        return self.values[k]

    def hankel_psd(self, tol: float = 1e-10) -> bool:
        """Whether the largest available Hankel moment matrix is PSD within tol."""
        h = (self.K // 2) + 1
        H = np.array([[self.values[i + j] for j in range(h)] for i in range(h)])
        d = np.sqrt(np.abs(np.diag(H))) + 1e-300
        ev = np.linalg.eigvalsh(H / np.outer(d, d))
        return bool(ev.min() >= -tol)


@dataclass(frozen=True)
class ExpBoundFit:
    C: float
    R: float
    satisfied: bool
    max_ratio_order: int
    slope: float = 0.0


def moments_of(measure: Measure1D, K: int) -> MomentSequence:
    """Raw moments by Simpson quadrature, with a heavy-tail guard on order K."""
    if K < 0:
        raise ValueError("K must be non-negative")
    x = measure.grid.points
    w = simpson_weights(measure.grid.n, measure.grid.dx) * measure.density
    powers = x[None, :] ** np.arange(K + 1)[:, None]
    vals = powers @ w
    top = np.abs(x) ** K * np.abs(measure.density)
    if top.max() > 0 and max(top[0], top[-1]) > TAIL_TOL * top.max():
        warnings.warn(
            f"order-{K} moment integrand of {measure.label or 'measure'} has not decayed at the grid edge",
            HeavyTailWarning,
            stacklevel=2,
        )
    return MomentSequence(vals, label=f"moments[{measure.label}]")


def finite_moments(measure: Measure1D, K: int) -> MomentSequence:
    """``moments_of`` that refuses heavy tails instead of warning.

    Raises
    ------
    NoFiniteMomentsError
        If the order-K integrand has not decayed at the grid edge.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("error", HeavyTailWarning)
        try:
            return moments_of(measure, K)
        except HeavyTailWarning as w:
            raise NoFiniteMomentsError(f"{NO_MOMENTS}: {w}") from None


def _binomial_matrix(conv: np.ndarray) -> np.ndarray:
    K = conv.size - 1
    L = np.zeros((K + 1, K + 1))
    for k in range(K + 1):
        for n in range(k + 1):
            L[k, n] = comb(k, n) * conv[k - n]
    return L


def _rounded(exact: list[Fraction], label: str = "") -> MomentSequence:
    return MomentSequence(np.array([float(v) for v in exact]), label=label, exact=tuple(exact))


def convolve_moments(a: MomentSequence, b: MomentSequence) -> MomentSequence:
    """Moments of the convolution: ``c[k] = sum_n binom(k, n) a[k-n] b[n]``."""
    if len(a) != len(b):
        raise ValueError("moment sequences differ in length")
    A, B = a.rational(), b.rational()
    c = [sum(comb(k, n) * A[k - n] * B[n] for n in range(k + 1)) for k in range(len(A))]
    return _rounded(c, "convolved moments")


def deconvolve_moments(margin_m: MomentSequence, conv_m: MomentSequence) -> MomentSequence:
    """Inverse of ``convolve_moments`` in its second argument.

    ``m[k] = (margin[k] - sum_{n<k} binom(k, n) conv[k-n] m[n]) / conv[0]``.
    A covariance attached to ``margin_m`` is propagated through the (linear)
    recursion.
    """
    if len(margin_m) != len(conv_m):
        raise ValueError("moment sequences differ in length")
    C, M = conv_m.rational(), margin_m.rational()
    if C[0] == 0:
        raise ValueError("convolver has zero mass")
    m: list[Fraction] = []
    for k in range(len(C)):
        acc = sum(comb(k, n) * C[k - n] * m[n] for n in range(k))
        m.append((M[k] - acc) / C[0])
    out = _rounded(m, "deconvolved moments")
    if margin_m.cov is not None:
        Linv = np.linalg.inv(_binomial_matrix(conv_m.values))
        out.cov = Linv @ margin_m.cov @ Linv.T
        out.se = np.sqrt(np.clip(np.diag(out.cov), 0.0, None))
    return out


def exp_bound_check(m: MomentSequence) -> ExpBoundFit:
    """Finite-order surrogate of ``|m[k]| <= C R^k k!``.

    ``r_k = (|m[k]| / k!)^(1/k)``; R is their maximum and C the smallest
    constant making the bound hold up to order K.  Orders with r_k below
    1e-3 R are treated as vanishing moments.  The sequence counts as
    exponentially bounded when log r_k shows no upward trend (least-squares
    slope below 0.01).
    """
    k = np.arange(1, len(m))
    a = np.abs(m.values[1:])
    with np.errstate(divide="ignore"):
        log_r = (np.log(a) - gammaln(k + 1)) / k
    # orders whose r_k is negligible against the largest are zeros (odd moments
    # of symmetric measures up to roundoff); they say nothing about growth
    nz = np.isfinite(log_r) & (log_r > log_r.max() + math.log(1e-3))
    if not nz.any():
        return ExpBoundFit(float(abs(m[0])) or 1.0, 0.0, True, 0, 0.0)
    k, log_r = k[nz], log_r[nz]
    R = float(np.exp(log_r.max()))
    order = int(k[np.argmax(log_r)])
    ks = np.arange(len(m))
    logs = np.log(np.abs(m.values) + 1e-300) - ks * math.log(R) - gammaln(ks + 1)
    C = float(np.exp(logs.max()))
    slope = float(np.polyfit(k, log_r, 1)[0]) if k.size >= 2 else 0.0
    return ExpBoundFit(C, R, slope < 0.01, order, slope)


def gaussian_moments(n: int) -> np.ndarray:
    """``G[i] = integral x^i exp(-x^2) dx`` for i = 0..n."""
    i = np.arange(n + 1)
    return np.where(i % 2 == 0, np.exp(gammaln((i + 1) / 2)), 0.0)


def density_from_moments(m: MomentSequence, max_degree: int, grid: Grid | None = None) -> Measure1D:
    """Density ``exp(-x^2) sum_j c_j x^j`` matching moments 0..max_degree.

    Solves ``sum_j c_j G[k+j] = m[k]`` after column scaling.  The condition
    number of the scaled system is reported in ``meta``.
    """
    from .hilbert import default_grid

    if max_degree < 0 or max_degree % 2:
        raise ValueError("max_degree must be a non-negative even integer")
    if len(m) < max_degree + 1:
        raise ValueError("not enough moments for the requested degree")
    D = max_degree
    G = gaussian_moments(2 * D)
    H = np.array([[G[k + j] for j in range(D + 1)] for k in range(D + 1)])
    scale = 1.0 / np.linalg.norm(H, axis=0)
    Hs = H * scale
    cond = float(np.linalg.cond(Hs))
    if not cond <= COND_LIMIT:
        raise ValueError("moment system ill-conditioned — reduce degree")
    c = np.linalg.solve(Hs, m.values[: D + 1]) * scale
    grid = grid or default_grid()
    x = grid.points
    raw = np.exp(-x * x) * np.polynomial.polynomial.polyval(x, c)
    density, clipped = _clip_renormalize(grid, raw)
    meta = {"coefficients": c.tolist(), "condition_number": cond, "clipped_mass": clipped}
    return Measure1D(grid, density, 1.0, "moment density", meta)


def _abs_quadratic_integral(d0: float, d1: float, d2: float, h: float) -> float:
    """Exact integral of |P| over [0, 2h] for the quadratic P through (0,d0), (h,d1), (2h,d2)."""
    a = (d0 - 2 * d1 + d2) / (2 * h * h)
    b = (d1 - d0) / h - a * h
    c = d0
    roots = np.roots([a, b, c]) if a != 0 else (np.array([-c / b]) if b != 0 else np.zeros(0))
    cuts = sorted(float(r.real) for r in np.atleast_1d(roots) if abs(r.imag) < 1e-300 and 0 < r.real < 2 * h)
    edges = [0.0] + cuts + [2 * h]
    prim = lambda t: a * t**3 / 3 + b * t * t / 2 + c * t
    return float(sum(abs(prim(v) - prim(u)) for u, v in zip(edges[:-1], edges[1:])))


def l1_distance(a: Measure1D, b: Measure1D) -> float:
    """``integral |a - b|`` on a's grid (b interpolated, zero outside its grid).

    Simpson panels on which ``a - b`` changes sign are integrated exactly for
    the interpolating quadratic, so the kink of ``|a - b|`` at a crossing
    does not cost the rule its order.
    """
    if a.grid == b.grid:
        db = np.asarray(b.density, dtype=float)
    else:
        db = np.interp(a.grid.points, b.grid.points, np.asarray(b.density, dtype=float), left=0.0, right=0.0)
    d = np.asarray(a.density, dtype=float) - db
    n, h = a.grid.n, a.grid.dx
    if n % 2 == 0 or n < 3:
        return float(np.dot(simpson_weights(n, h), np.abs(d)))
    d0, d1, d2 = d[0:-2:2], d[1:-1:2], d[2::2]
    total = (np.abs(d0) + 4 * np.abs(d1) + np.abs(d2)) * h / 3
    mixed = np.flatnonzero(~((np.sign(d0) == np.sign(d1)) & (np.sign(d1) == np.sign(d2))))
    for i in mixed:
        total[i] = _abs_quadratic_integral(d0[i], d1[i], d2[i], h)
    return float(total.sum())
