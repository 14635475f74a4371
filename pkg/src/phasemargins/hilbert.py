"""Wavefunctions on L^2(R): grids, Hermite functions, Fourier transforms, densities.

Two representations coexist.  ``GridFunction`` holds samples on a uniform
grid and is what the FFT machinery operates on.  ``Wavefunction`` holds a
pair of callables (position and momentum wavefunction) plus optional compact
supports, so that a state can be evaluated at shifted points exactly and
overlap integrals of compactly supported functions can be done by Gauss
quadrature on the overlap interval rather than on a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from ._conventions import (
    DEFAULT_N,
    DEFAULT_X_MAX,
    DEFAULT_X_MIN,
    EDGE_DECAY_TOL,
    INV_SQRT_2PI,
    MAX_HERMITE_DEGREE,
    PI_QUARTER,
    TWO_PI,
)

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``x_min, x_min + dx, ..., x_max`` with ``n`` points."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("grid requires x_min < x_max")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("grid requires n >= 2")
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "n", int(self.n))

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)

    @property
    def period(self) -> float:
        """Length of the torus the DFT implicitly lives on (``n * dx``)."""
        return self.n * self.dx

    def conjugate(self) -> Grid:
        """Frequency grid of the DFT, centred so that it contains p = 0."""
        dp = TWO_PI / (self.n * self.dx)
        p0 = -(self.n // 2) * dp
        return Grid(p0, p0 + (self.n - 1) * dp, self.n)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return abs(self.x_min + self.x_max) <= tol * max(1.0, abs(self.x_max))

    def describe(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "n": self.n}


def default_grid() -> Grid:
    return Grid(DEFAULT_X_MIN, DEFAULT_X_MAX, DEFAULT_N)


@dataclass(eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dtype = np.clongdouble if _is_extended(self.values) else complex
        self.values = np.asarray(self.values, dtype=dtype)
        if self.values.shape != (self.grid.n,):
            raise ValueError(
                f"values have shape {self.values.shape}, grid has {self.grid.n} points"
            )

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    def norm(self) -> float:
        return math.sqrt(quadrature(GridFunction(self.grid, np.abs(self.values) ** 2)).real)

    def inner(self, other: GridFunction) -> complex:
        """``<self, other>``, antilinear in the first slot."""
        if other.grid != self.grid:
            raise ValueError("inner product needs a common grid")
        return quadrature(GridFunction(self.grid, np.conj(self.values) * other.values))


def simpson_weights(n: int, dx: float) -> np.ndarray:
    """Composite Simpson weights for odd ``n``; trapezoid weights otherwise."""
    w = np.full(n, dx)
    if n % 2 == 1 and n >= 3:
        w[1:-1:2] = 4.0 * dx / 3.0
        w[2:-1:2] = 2.0 * dx / 3.0
        w[0] = w[-1] = dx / 3.0
    else:
        w[0] = w[-1] = dx / 2.0
    return w


def quadrature(f: GridFunction) -> complex:
    """Integral of ``f`` over its grid (Simpson for odd n, trapezoid for even n)."""
    return complex(np.dot(simpson_weights(f.grid.n, f.grid.dx), f.values))


# -- Hermite functions -------------------------------------------------------


def hermite_functions(nmax: int, x) -> np.ndarray:
    """Rows ``h_0(x) .. h_nmax(x)`` of the normalized Hermite functions.

    Uses the three-term recurrence on the functions themselves,

        h_{k+1} = sqrt(2/(k+1)) x h_k - sqrt(k/(k+1)) h_{k-1},

    which never forms the raw polynomials and stays finite for k <= 200.
    """
    if nmax < 0:
        raise ValueError("degree must be nonnegative")
    if nmax > MAX_HERMITE_DEGREE:
        raise ValueError(f"degree too large (max {MAX_HERMITE_DEGREE})")
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = PI_QUARTER * np.exp(-0.5 * x * x)
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(1, nmax):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * x * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


def hermite_function(n: int, grid: Grid) -> GridFunction:
    return GridFunction(grid, hermite_functions(n, grid.points)[n], {"label": f"h_{n}"})


# -- analytic wavefunctions --------------------------------------------------


@dataclass(frozen=True, eq=False)
class Wavefunction:
    """A pure state known through its position and momentum wavefunctions.

    ``support`` / ``momentum_support`` are closed intervals outside of which
    the respective wavefunction vanishes identically, or None.
    """

    position: ArrayFn
    momentum: ArrayFn
    support: tuple[float, float] | None = None
    momentum_support: tuple[float, float] | None = None
    label: str = ""

    def __call__(self, x):
        return self.position(np.asarray(x, dtype=float))

    def fourier(self) -> Wavefunction:
        """The state ``F psi``: its position wavefunction is psi_hat."""
        pos, mom = self.position, self.momentum
        sup = self.support
        return Wavefunction(
            position=mom,
            momentum=lambda p: pos(-np.asarray(p, dtype=float)),
            support=self.momentum_support,
            momentum_support=None if sup is None else (-sup[1], -sup[0]),
            label=f"F[{self.label}]",
        )

    def shifted(self, a: float) -> Wavefunction:
        """``W(a, 0) psi``, i.e. ``x -> psi(x - a)``."""
        pos, mom = self.position, self.momentum
        sup = self.support
        return Wavefunction(
            position=lambda x: pos(np.asarray(x, dtype=float) - a),
            momentum=lambda p: np.exp(-1j * a * np.asarray(p, dtype=float)) * mom(p),
            support=None if sup is None else (sup[0] + a, sup[1] + a),
            momentum_support=self.momentum_support,
            label=f"W({a:g},0)[{self.label}]",
        )

    def on(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self.position(grid.points), {"label": self.label})

    def momentum_on(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self.momentum(grid.points), {"label": f"F[{self.label}]"})

    @classmethod
    def from_samples(cls, f: GridFunction, label: str = "") -> Wavefunction:
        """Wrap grid samples; values between samples are linearly interpolated."""
        x = f.grid.points
        vals = f.values.copy()
        ft = fourier_transform(f)
        p, fvals = ft.grid.points, ft.values

        def pos(t):
            t = np.asarray(t, dtype=float)
            return np.interp(t, x, vals.real, 0.0, 0.0) + 1j * np.interp(t, x, vals.imag, 0.0, 0.0)

        def mom(t):
            t = np.asarray(t, dtype=float)
            return np.interp(t, p, fvals.real, 0.0, 0.0) + 1j * np.interp(t, p, fvals.imag, 0.0, 0.0)

        return cls(pos, mom, None, None, label or f.meta.get("label", ""))


def indicator_wavefunction(a: float = -0.5, b: float = 0.5) -> Wavefunction:
    """Normalized indicator of ``[a, b]``; takes half its height at the two jumps."""
    if not a < b:
        raise ValueError("need a < b")
    height = 1.0 / math.sqrt(b - a)

    def pos(x):
        x = np.asarray(x, dtype=float)
        v = np.where((x > a) & (x < b), height, 0.0)
        return np.where((x == a) | (x == b), 0.5 * height, v).astype(complex)

    width, centre = b - a, 0.5 * (a + b)

    def mom(p):
        p = np.asarray(p, dtype=float)
        return INV_SQRT_2PI * height * width * np.exp(-1j * p * centre) * np.sinc(width * p / TWO_PI)

    return Wavefunction(pos, mom, (a, b), None, f"chi[{a:g},{b:g}]")


def gaussian_wavefunction(sigma: float) -> Wavefunction:
    """Centred Gaussian with position standard deviation ``sigma`` of ``|psi|^2``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    cx = (TWO_PI * sigma * sigma) ** -0.25
    cp = (2.0 / math.pi) ** 0.25 * math.sqrt(sigma)

    def pos(x):
        x = np.asarray(x, dtype=float)
        return (cx * np.exp(-x * x / (4.0 * sigma * sigma))).astype(complex)

    def mom(p):
        p = np.asarray(p, dtype=float)
        return (cp * np.exp(-sigma * sigma * p * p)).astype(complex)

    return Wavefunction(pos, mom, None, None, f"gauss[{sigma:g}]")


# -- states ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HermiteState:
    """Pure state ``sum_k c_k h_k``; coefficients are normalized on construction."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        nrm = np.linalg.norm(c)
        if c.ndim != 1 or nrm == 0:
            raise ValueError("coefficients must be a nonzero vector")
        if len(c) - 1 > MAX_HERMITE_DEGREE:
            raise ValueError(f"degree too large (max {MAX_HERMITE_DEGREE})")
        object.__setattr__(self, "coeffs", c / nrm)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def position(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.tensordot(self.coeffs, hermite_functions(self.degree, x), axes=1)

    def momentum(self, p) -> np.ndarray:
        # F h_k = (-i)^k h_k
        phases = (-1j) ** np.arange(len(self.coeffs))
        p = np.asarray(p, dtype=float)
        return np.tensordot(self.coeffs * phases, hermite_functions(self.degree, p), axes=1)

    def wavefunction(self) -> Wavefunction:
        return Wavefunction(self.position, self.momentum, None, None, f"hermite{self.degree}")


@dataclass(frozen=True, eq=False)
class MixedState:
    """Finite mixture ``sum_j w_j |psi_j><psi_j|``."""

    weights: np.ndarray
    pures: Sequence

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) != len(self.pures) or len(w) == 0:
            raise ValueError("one weight per pure component required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "pures", tuple(self.pures))


State = Union[HermiteState, MixedState, Wavefunction, GridFunction]


def as_wavefunction(psi) -> Wavefunction:
    if isinstance(psi, Wavefunction):
        return psi
    if isinstance(psi, HermiteState):
        return psi.wavefunction()
    if isinstance(psi, GridFunction):
        return Wavefunction.from_samples(psi)
    raise TypeError(f"cannot interpret {type(psi).__name__} as a pure state")


def decompose(state: State) -> tuple[np.ndarray, list[Wavefunction]]:
    """Weights and pure components of any supported state."""
    if isinstance(state, MixedState):
        return state.weights, [as_wavefunction(p) for p in state.pures]
    return np.ones(1), [as_wavefunction(state)]


def state_wavefunction(s: HermiteState, grid: Grid) -> GridFunction:
    return GridFunction(grid, s.position(grid.points), {"label": f"hermite{s.degree}"})


# -- Fourier transforms ------------------------------------------------------


def _edges_decay(values: np.ndarray) -> bool:
    return max(abs(values[0]), abs(values[-1])) <= EDGE_DECAY_TOL


def _is_extended(values) -> bool:
    return np.asarray(values).dtype in (np.longdouble, np.clongdouble)


def _ramps(grid: Grid, extended: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Phase ramps ``exp(-i p0 dx k)`` and ``exp(-i p_j x0)`` of the grid transform.

    Since ``dp dx = 2 pi / n`` the phases are reduced modulo 2 pi before
    scaling; evaluating them directly would lose ~|p x| * 1e-16 in accuracy,
    which is far above roundoff at the band edge.  ``extended`` evaluates
    them in long double.
    """
    n = grid.n
    ftype = np.longdouble if extended else np.float64
    two_pi = 2 * np.arccos(ftype(-1))
    k = np.arange(n)
    pre = np.exp(1j * (two_pi * ((((n // 2) * k) % n).astype(ftype) / n)))
    c = ftype(grid.x_min) / ftype(grid.dx)
    post = np.exp(-1j * (two_pi * (np.mod((k - n // 2).astype(ftype) * c, n) / n)))
    return pre, post


def fourier_rows(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Row-wise version of ``fourier_transform`` returning bare arrays.

    Long double input is transformed in long double.
    """
    values = np.asarray(values)
    ext = _is_extended(values)
    pre, post = _ramps(grid, ext)
    scale = (np.longdouble(grid.dx) if ext else grid.dx) * INV_SQRT_2PI
    return scale * post * np.fft.fft(values * pre, axis=-1)


def fourier_transform(f: GridFunction) -> GridFunction:
    """Continuum transform of ``f`` sampled on ``f.grid.conjugate()``.

    The Riemann sum ``dx / sqrt(2 pi) * sum_k f_k exp(-i p_j x_k)`` is
    evaluated by one FFT with phase ramps accounting for the grid offsets, so
    it is exactly unitary on the discrete level and exactly inverted by
    ``inverse_fourier_transform``.
    """
    vals = fourier_rows(f.values, f.grid)
    meta = {"source_grid": f.grid, "edge_warning": not _edges_decay(f.values)}
    return GridFunction(f.grid.conjugate(), vals, meta)


def inverse_fourier_transform(f: GridFunction, grid: Grid | None = None) -> GridFunction:
    """Inverse of ``fourier_transform``.

    The target grid defaults to ``f.meta['source_grid']`` when present, else
    the centred grid whose conjugate is ``f.grid``.
    """
    pg = f.grid
    if grid is None:
        grid = f.meta.get("source_grid")
    if grid is None:
        grid = pg.conjugate()
    if grid.n != pg.n or not math.isclose(grid.dx * pg.dx * pg.n, TWO_PI, rel_tol=1e-10):
        raise ValueError("target grid is not conjugate to the frequency grid")
    ext = _is_extended(f.values)
    pre, post = _ramps(grid, ext)
    scale = (np.longdouble(pg.dx) if ext else pg.dx) * INV_SQRT_2PI * pg.n
    vals = scale * np.conj(pre) * np.fft.ifft(f.values * np.conj(post))
    return GridFunction(grid, vals, {"edge_warning": not _edges_decay(f.values)})


def fourier_at(f: GridFunction, p, chunk: int = 256) -> np.ndarray:
    """Same Riemann-sum transform as ``fourier_transform`` at arbitrary ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    x = f.grid.points
    out = np.empty(p.shape, dtype=complex)
    flat, res = p.ravel(), out.reshape(-1)
    for i in range(0, flat.size, chunk):
        block = flat[i:i + chunk]
        res[i:i + chunk] = np.exp(-1j * np.outer(block, x)) @ f.values
    return out * (f.grid.dx * INV_SQRT_2PI)


# -- densities ---------------------------------------------------------------


@dataclass(eq=False)
class Measure1D:
    """Probability density sampled on a grid.

    ``raw_mass`` is the quadrature mass before renormalization; for a density
    that is normalized on R it measures what the grid cut off.
    """

    grid: Grid
    density: np.ndarray
    raw_mass: float = 1.0
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dtype = np.longdouble if _is_extended(self.density) else float
        self.density = np.asarray(self.density, dtype=dtype)
        if self.density.shape != (self.grid.n,):
            raise ValueError("density length does not match grid")

    @classmethod
    def normalized(cls, grid: Grid, density, label: str = "", **meta) -> Measure1D:
        density = np.asarray(density)
        density = density.astype(np.longdouble if _is_extended(density) else float)
        mass = float(np.dot(simpson_weights(grid.n, grid.dx), density))
        if not mass > 0:
            raise ValueError("density has no positive mass on the grid")
        return cls(grid, density / mass, mass, label, dict(meta))

    @property
    def tail_mass(self) -> float:
        return 1.0 - self.raw_mass

    def mass(self) -> float:
        return float(np.dot(simpson_weights(self.grid.n, self.grid.dx), self.density))

    def as_grid_function(self) -> GridFunction:
        return GridFunction(self.grid, self.density)

    def moment(self, k: int) -> float:
        """Raw moment ``integral x^k density`` (Simpson), cached in ``meta``."""
        cache = self.meta.setdefault("moments", {})
        if k not in cache:
            w = simpson_weights(self.grid.n, self.grid.dx)
            cache[k] = float(np.dot(w, self.grid.points**k * self.density))
        return cache[k]


def _density(state: State, grid: Grid, momentum: bool) -> np.ndarray:
    weights, pures = decompose(state)
    x = grid.points
    dens = np.zeros(grid.n)
    for w, psi in zip(weights, pures):
        vals = psi.momentum(x) if momentum else psi.position(x)
        dens += w * np.abs(vals) ** 2
    return dens


def position_density(state: State, grid: Grid | None = None) -> Measure1D:
    grid = grid or default_grid()
    return Measure1D.normalized(grid, _density(state, grid, False), "position")


def momentum_density(state: State, grid: Grid | None = None) -> Measure1D:
    grid = grid or default_grid()
    return Measure1D.normalized(grid, _density(state, grid, True), "momentum")


def fourier_swap(state: State) -> State:
    """The state ``F rho F*``; its position density is rho's momentum density."""
    weights, pures = decompose(state)
    swapped = [p.fourier() for p in pures]
    if isinstance(state, MixedState):
        return MixedState(weights, swapped)
    return swapped[0]
