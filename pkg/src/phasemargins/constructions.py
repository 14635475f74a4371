"""Concrete generating operators and smearing functions.

* the vacuum projector (Husimi observable),
* the half-half mixture of the box state chi_[-1/2,1/2] and its Fourier
  transform, whose Weyl transform vanishes off a cross around the axes,
* rotated strip functions g_{theta,r} and the dyadic-angle series built
  from them, and the two-strip function f_0,
* ``f * T0`` as a Weyl-field operator.

Transforms of strips are always evaluated from their closed forms so that
support statements are exact rather than grid-limited.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._conventions import INV_SQRT_2PI, TWO_PI
from .hilbert import Grid, HermiteState, indicator_wavefunction
from .phase_space import (
    GeneratingOperator,
    MixtureOperator,
    WeylFieldOperator,
    pure_operator,
    weyl_transform,
)

MAX_SERIES_DEPTH = 8


def husimi_operator() -> MixtureOperator:
    return pure_operator(HermiteState([1.0]).wavefunction(), "husimi")


def husimi_mu_hat(p):
    """Closed-form ``mu_hat`` of the vacuum convolver: ``exp(-p^2/4) / sqrt(2 pi)``."""
    p = np.asarray(p, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.25 * p * p)
    return float(out) if out.ndim == 0 else out


def prop1_operator(grid: Grid | None = None) -> MixtureOperator:
    """``T = 1/2 |chi><chi| + 1/2 |chi_hat><chi_hat|`` for chi = indicator of [-1/2, 1/2].

    chi_hat is the sinc wavefunction, carried analytically (its momentum
    wavefunction is the indicator again), never through an FFT.  ``grid`` is
    accepted for signature symmetry and unused.
    """
    chi = indicator_wavefunction(-0.5, 0.5)
    return MixtureOperator([0.5, 0.5], [chi, chi.fourier()], "prop1")


def prop1_mu_hat(p):
    """Closed-form Fourier transform of the box/sinc convolving measure."""
    p = np.asarray(p, dtype=float)
    sinc = np.sinc(p / TWO_PI)  # sin(p/2) / (p/2)
    out = 0.5 * INV_SQRT_2PI * (np.maximum(1.0 - np.abs(p), 0.0) + sinc)
    return float(out) if out.ndim == 0 else out


def prop1_weyl(q, p):
    """Closed-form ``tr[T W(q, p)]`` for ``prop1_operator``.

    Both overlap integrals are over intervals of length ``1 - |q|`` and
    ``1 - |p|`` and evaluate to scaled sincs; the result is real and vanishes
    exactly when ``|q| >= 1`` and ``|p| >= 1``.
    """
    q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    lq = np.maximum(1.0 - np.abs(q), 0.0)
    lp = np.maximum(1.0 - np.abs(p), 0.0)
    out = 0.5 * lq * np.sinc(lq * p / TWO_PI) + 0.5 * lp * np.sinc(lp * q / TWO_PI)
    return float(out) if out.ndim == 0 else out


# -- strips ------------------------------------------------------------------


def _rotate(theta: float, a, b):
    c, s = math.cos(theta), math.sin(theta)
    # exact zeros at multiples of pi/2 keep strip edges exact
    c, s = (0.0 if abs(c) < 1e-15 else c), (0.0 if abs(s) < 1e-15 else s)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return a * c + b * s, -a * s + b * c


def strip_g(theta: float, r: float, x, y):
    """``g_{theta,r}(x, y)``: a unit-mass density whose transform lives on a strip.

    ``g_{0,r}(x, y) = (1 - cos(r y)) / y^2 * exp(-x^2/4) / (2 r pi^{3/2})``,
    evaluated as ``(r^2/2) sinc^2`` so that y = 0 needs no special case.
    """
    if r <= 0:
        raise ValueError("strip width must be positive")
    xr, yr = _rotate(theta, x, y)
    kernel = 0.5 * r * r * np.sinc(r * yr / TWO_PI) ** 2
    return kernel * np.exp(-0.25 * xr * xr) / (2.0 * r * math.pi ** 1.5)


def strip_g_hat(theta: float, r: float, q, p):
    """``g_hat_{theta,r}(q, p) = exp(-q'^2) (r - |p'|)_+ / (2 pi r)`` in rotated coordinates."""
    if r <= 0:
        raise ValueError("strip width must be positive")
    qr, pr = _rotate(theta, q, p)
    return np.exp(-qr * qr) * np.maximum(r - np.abs(pr), 0.0) / (TWO_PI * r)


@dataclass(eq=False)
class Function2D:
    grid2d: tuple[Grid, Grid]
    values: np.ndarray
    nonnegative: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values)
        gx, gy = self.grid2d
        if self.values.shape != (gx.n, gy.n):
            raise ValueError("values do not match grid2d")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite values")

    def to_csv(self, path) -> None:
        gx, gy = self.grid2d
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for i, xv in enumerate(gx.points):
                for j, yv in enumerate(gy.points):
                    w.writerow([repr(float(xv)), repr(float(yv)), repr(float(self.values[i, j]))])

    def interpolator(self):
        gx, gy = self.grid2d
        interp = RegularGridInterpolator(
            (gx.points, gy.points), self.values, bounds_error=False, fill_value=0.0
        )
        return lambda a, b: interp(np.stack(np.broadcast_arrays(a, b), axis=-1))


@dataclass(frozen=True)
class Prop2Params:
    N_max: int = 4
    grid2d: tuple[Grid, Grid] = field(
        default_factory=lambda: (Grid(-5.0, 5.0, 201), Grid(-5.0, 5.0, 201))
    )

    def __post_init__(self):
        if not 1 <= self.N_max <= MAX_SERIES_DEPTH:
            raise ValueError(f"N_max out of range (1..{MAX_SERIES_DEPTH})")

    @staticmethod
    def angle(n: int) -> float:
        return math.pi / 2 ** (n + 1)

    @staticmethod
    def width(n: int) -> float:
        return math.sin(Prop2Params.angle(n)) / (2**n - 1)


@dataclass(frozen=True, eq=False)
class StripSeries:
    """``f = C * sum_i w_i g_{theta_i, r_i}`` (optionally symmetrized in x).

    With ``reflect`` the density is ``C (g(x, y) + g(-x, y))`` and
    ``C = 1 / (2 sum w_i)``; otherwise ``C = 1 / sum w_i``.  Every g has unit
    mass, so the normalization is exact.
    """

    terms: tuple[tuple[float, float, float], ...]  # (weight, theta, r)
    reflect: bool
    label: str = ""

    @property
    def C(self) -> float:
        total = sum(w for w, _, _ in self.terms)
        return 1.0 / (2.0 * total) if self.reflect else 1.0 / total

    def _g(self, x, y):
        return sum(w * strip_g(th, r, x, y) for w, th, r in self.terms)

    def _g_hat(self, q, p):
        return sum(w * strip_g_hat(th, r, q, p) for w, th, r in self.terms)

    def f(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if self.reflect:
            return self.C * (self._g(x, y) + self._g(-x, y))
        return self.C * self._g(x, y)

    def f_hat(self, q, p):
        q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
        if self.reflect:
            return self.C * (self._g_hat(q, p) + self._g_hat(-q, p))
        return self.C * self._g_hat(q, p)

    def term_hats(self, q, p) -> np.ndarray:
        """Stack of every constituent (weighted, reflected) transform term."""
        q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
        rows = [w * strip_g_hat(th, r, q, p) for w, th, r in self.terms]
        if self.reflect:
            rows += [w * strip_g_hat(th, r, -q, p) for w, th, r in self.terms]
        return np.stack(rows)

    def _bound(self, trig) -> float:
        # f_hat(q, 0) = 0 iff every term's strip misses (q, 0): |q sin(theta)| >= r
        vals = []
        for _, th, r in self.terms:
            s = abs(trig(th))
            vals.append(math.inf if s < 1e-15 else r / s)
        return max(vals)

    @property
    def q_star(self) -> float:
        """Smallest Q with f_hat(q, 0) = 0 for all |q| >= Q."""
        return self._bound(math.sin)

    @property
    def p_star(self) -> float:
        """Smallest P with f_hat(0, p) = 0 for all |p| >= P."""
        return self._bound(math.cos)

    def tabulate(self, grid2d: tuple[Grid, Grid]) -> tuple[Function2D, Function2D]:
        gx, gy = grid2d
        X, Y = np.meshgrid(gx.points, gy.points, indexing="ij")
        return (
            Function2D(grid2d, self.f(X, Y), nonnegative=True),
            Function2D(grid2d, self.f_hat(X, Y), nonnegative=True),
        )


def prop2_series(N_max: int = 4) -> StripSeries:
    """Truncated dyadic series: n = 1..N_max, k = 1..2^n - 1, weight 2^-(n+k)."""
    Prop2Params(N_max)
    terms = []
    for n in range(1, N_max + 1):
        th, r = Prop2Params.angle(n), Prop2Params.width(n)
        for k in range(1, 2**n):
            terms.append((2.0 ** -(n + k), k * th, r))
    return StripSeries(tuple(terms), reflect=True, label=f"prop2:{N_max}")


def prop2_f(params: Prop2Params | None = None) -> tuple[Function2D, Function2D, float]:
    """Tabulated f and f_hat of the truncated series on ``params.grid2d``, and C."""
    params = params or Prop2Params()
    series = prop2_series(params.N_max)
    f, f_hat = series.tabulate(params.grid2d)
    return f, f_hat, series.C


def remark_series() -> StripSeries:
    return StripSeries(((1.0, 0.0, 1.0), (1.0, math.pi / 2, 1.0)), reflect=False, label="remark-f0")


def remark_f0(grid2d: tuple[Grid, Grid] | None = None) -> tuple[Function2D, Function2D, float]:
    """``f_0 = C_0 (g_{0,1} + g_{pi/2,1})`` tabulated, with C_0 = 1/2."""
    grid2d = grid2d or Prop2Params().grid2d
    series = remark_series()
    f, f_hat = series.tabulate(grid2d)
    return f, f_hat, series.C


def prop2_gap_explainer(N_max: int, n_check: int = 12) -> Callable:
    """Mark points whose cell is crossed by a strip the truncation at N_max omits.

    Returns ``explain(q, p, cell) -> bool array`` in f_hat coordinates: True
    where some term with ``N_max < n <= n_check`` (either reflection) has its
    strip of half-width r_n passing through the square cell of side ``cell``
    centred at (q, p).  Zero cells so marked are truncation gaps, which the
    full series fills.
    """
    angles, widths = [], []
    for n in range(N_max + 1, n_check + 1):
        k = np.arange(1, 2**n)
        a = k * Prop2Params.angle(n)
        angles += [a, math.pi - a]
        widths += [np.full(2 * k.size, Prop2Params.width(n))]
    angles = np.concatenate(angles) if angles else np.zeros(0)
    widths = np.concatenate(widths) if widths else np.zeros(0)
    s, c = np.sin(angles), np.cos(angles)

    def explain(q, p, cell: float, chunk: int = 256) -> np.ndarray:
        q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
        qf, pf = q.ravel(), p.ravel()
        out = np.zeros(qf.size, bool)
        reach = widths + 0.5 * cell * (np.abs(s) + np.abs(c))
        for i in range(0, qf.size, chunk):
            # distance from the point to the line spanned by (cos a, sin a)
            d = np.abs(qf[i : i + chunk, None] * s - pf[i : i + chunk, None] * c)
            out[i : i + chunk] = np.any(d <= reach, axis=1)
        return out.reshape(q.shape)

    return explain


def convolved_operator(
    f_hat,
    T0: GeneratingOperator,
    check_grid: tuple[Grid, Grid] | None = None,
    label: str = "",
    explainer: Callable | None = None,
) -> WeylFieldOperator:
    """``f * T0`` through its Weyl transform ``2 pi f_hat(-p, q) tr[T0 W(q, p)]``.

    ``f_hat`` is a callable ``(q, p) -> value`` or a tabulated Function2D.
    T0 must be regular on ``check_grid``.  ``explainer`` (in f_hat
    coordinates, see ``prop2_gap_explainer``) is attached for completeness
    verdicts.
    """
    from .infocheck import regularity_check

    if isinstance(f_hat, Function2D):
        f_hat = f_hat.interpolator()
    check_grid = check_grid or (Grid(-5.0, 5.0, 41), Grid(-5.0, 5.0, 41))
    verdict = regularity_check(T0, *check_grid)
    if verdict.kind != "regular":
        raise ValueError("base operator not regular")

    def field_fn(q, p):
        q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
        shape = np.broadcast(q, p).shape
        qb, pb = (np.broadcast_to(a, shape).ravel() for a in (q, p))
        fh = TWO_PI * np.broadcast_to(np.asarray(f_hat(-pb, qb)), qb.shape)
        out = np.zeros(qb.shape, dtype=complex)
        nz = fh != 0
        if np.any(nz):
            out[nz] = fh[nz] * weyl_transform(T0, qb[nz], pb[nz])
        return out.reshape(shape)

    meta = {}
    if explainer is not None:
        meta["gap_explainer"] = lambda q, p, cell: explainer(-np.asarray(p), np.asarray(q), cell)
    return WeylFieldOperator(field_fn, label or f"f*{getattr(T0, 'label', 'T0')}", meta)
