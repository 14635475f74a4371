"""Weyl operators, generating operators, the observable G^T and its margins.

Conventions: ``W(q, p) = exp(i q p / 2) exp(-i q P) exp(i p Q)`` acts as

    (W(q, p) psi)(x) = exp(-i q p / 2) exp(i p x) psi(x - q),

and conjugation by the Fourier-Plancherel operator F gives
``F W(q, p) F^-1 = W(p, -q)``.  The latter lets overlap integrals of
wavefunctions with compact *momentum* support be done in momentum space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from ._conventions import INV_SQRT_2PI, SQRT_2PI, TWO_PI
from .hilbert import (
    Grid,
    GridFunction,
    Measure1D,
    State,
    Wavefunction,
    as_wavefunction,
    decompose,
    default_grid,
    fourier_rows,
    fourier_swap,
    fourier_transform,
    inverse_fourier_transform,
    simpson_weights,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def weyl_apply(q: float, p: float, psi: GridFunction) -> GridFunction:
    """``W(q, p) psi`` on the grid, translating by an FFT phase ramp.

    The translation is exact for band-limited periodic samples; the caller
    must keep the shifted function away from the grid edges.
    """
    g = psi.grid
    width = g.x_max - g.x_min
    if abs(q) > width / 4 or abs(p) > math.pi / (2 * g.dx):
        raise ValueError("shift exceeds grid margin")
    k = TWO_PI * np.fft.fftfreq(g.n, g.dx)
    shifted = np.fft.ifft(np.fft.fft(psi.values) * np.exp(-1j * k * q))
    x = g.points
    return GridFunction(g, np.exp(-0.5j * q * p) * np.exp(1j * p * x) * shifted, dict(psi.meta))


# -- matrix elements <a, W(q,p) b> ------------------------------------------


def _gauss_interval(a: Wavefunction, b: Wavefunction, q, p, lo, hi):
    """Gauss-Legendre quadrature of conj(a(x)) exp(ipx) b(x-q) over [lo, hi]."""
    length = np.maximum(hi - lo, 0.0)
    # enough panels that each carries at most about one oscillation
    npan = int(max(1, math.ceil(float(np.max(length * (np.abs(p) + 1.0))) / 4.0)))
    edges = np.linspace(0.0, 1.0, npan + 1)
    t = ((edges[:-1, None] + edges[1:, None]) + (edges[1:, None] - edges[:-1, None]) * _GL_NODES) / 2
    t = t.ravel()
    w = np.tile(_GL_WEIGHTS, npan) / (2.0 * npan)
    x = lo[..., None] + length[..., None] * t
    vals = np.conj(a.position(x)) * np.exp(1j * p[..., None] * x) * b.position(x - q[..., None])
    out = (vals @ w) * length
    return np.where(length > 0, out, 0.0)


def _grid_matrix_element(a: Wavefunction, b: Wavefunction, q, p, grid: Grid, chunk: int = 512):
    x = grid.points
    w = simpson_weights(grid.n, grid.dx)
    abar = np.conj(a.position(x)) * w
    out = np.empty(q.shape, dtype=complex)
    qf, pf, of = q.ravel(), p.ravel(), out.reshape(-1)
    for qv in np.unique(qf):
        idx = np.nonzero(qf == qv)[0]
        prod = abar * b.position(x - qv)
        for i in range(0, idx.size, chunk):
            sel = idx[i:i + chunk]
            of[sel] = np.exp(1j * np.outer(pf[sel], x)) @ prod
    return out


def matrix_element(a: Wavefunction, b: Wavefunction, q, p, grid: Grid | None = None):
    """``<a, W(q, p) b>`` for broadcastable arrays ``q``, ``p``.

    Compact position supports are integrated by Gauss-Legendre on the exact
    overlap interval; compact momentum supports are moved to momentum space
    first; anything else uses Simpson quadrature on ``grid``.
    """
    q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    if a.support is not None or b.support is not None:
        lo = np.full(q.shape, -np.inf)
        hi = np.full(q.shape, np.inf)
        if a.support is not None:
            lo = np.maximum(lo, a.support[0])
            hi = np.minimum(hi, a.support[1])
        if b.support is not None:
            lo = np.maximum(lo, b.support[0] + q)
            hi = np.minimum(hi, b.support[1] + q)
        raw = _gauss_interval(a, b, q, p, lo, hi)
    elif a.momentum_support is not None or b.momentum_support is not None:
        return matrix_element(a.fourier(), b.fourier(), p, -q, grid)
    else:
        raw = _grid_matrix_element(a, b, q, p, grid or default_grid())
    return np.exp(-0.5j * q * p) * raw


# -- generating operators ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixtureOperator:
    """``T = sum_k t_k |phi_k><phi_k|`` with unit-norm wavefunctions."""

    weights: np.ndarray
    components: Sequence[Wavefunction]
    label: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) != len(self.components) or len(w) == 0:
            raise ValueError("one weight per component required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be convex")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", tuple(as_wavefunction(c) for c in self.components))
        for phi in self.components:
            nrm = matrix_element(phi, phi, 0.0, 0.0).real
            if abs(nrm - 1.0) > 1e-9:
                raise ValueError(f"component {phi.label!r} has norm^2 {nrm:.12g}, expected 1")

    def fourier(self) -> MixtureOperator:
        """``F T F^-1``."""
        return MixtureOperator(self.weights, [c.fourier() for c in self.components], f"F[{self.label}]")


@dataclass(frozen=True, eq=False)
class WeylFieldOperator:
    """Generating operator known only through ``(q, p) -> tr[T W(q, p)]``."""

    field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        at0 = complex(np.asarray(self.field(np.zeros(1), np.zeros(1))).ravel()[0])
        if abs(at0 - 1.0) > 1e-6:
            raise ValueError(f"field(0,0) = {at0}, expected 1")

    def fourier(self) -> WeylFieldOperator:
        f = self.field
        meta = dict(self.meta)
        if "gap_explainer" in meta:
            g = meta["gap_explainer"]
            meta["gap_explainer"] = lambda q, p, cell: g(-np.asarray(p), np.asarray(q), cell)
        return WeylFieldOperator(lambda q, p: f(-np.asarray(p), np.asarray(q)), f"F[{self.label}]", meta)


GeneratingOperator = Union[MixtureOperator, WeylFieldOperator]


def pure_operator(phi: Wavefunction, label: str = "") -> MixtureOperator:
    return MixtureOperator(np.ones(1), [phi], label or phi.label)


def weyl_transform(T: GeneratingOperator, q, p, grid: Grid | None = None):
    """``tr[T W(q, p)]``; scalar in, scalar out."""
    scalar = np.ndim(q) == 0 and np.ndim(p) == 0
    if isinstance(T, WeylFieldOperator):
        q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
        out = np.asarray(T.field(q, p), dtype=complex)
    else:
        out = sum(t * matrix_element(phi, phi, q, p, grid) for t, phi in zip(T.weights, T.components))
    return complex(np.ravel(out)[0]) if scalar else out


@dataclass(eq=False)
class PhaseSpaceField:
    q_grid: Grid
    p_grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.q_grid.n, self.p_grid.n):
            raise ValueError("field shape does not match its grids")

    def to_csv(self, path) -> None:
        q, p = self.q_grid.points, self.p_grid.points
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "p", "re", "im"])
            for i, qv in enumerate(q):
                for j, pv in enumerate(p):
                    v = self.values[i, j]
                    w.writerow([repr(float(qv)), repr(float(pv)), repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path) -> PhaseSpaceField:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        q, p = np.unique(data[:, 0]), np.unique(data[:, 1])
        vals = (data[:, 2] + 1j * data[:, 3]).reshape(len(q), len(p))
        return cls(Grid(q[0], q[-1], len(q)), Grid(p[0], p[-1], len(p)), vals)


def weyl_transform_field(T: GeneratingOperator, q_grid: Grid, p_grid: Grid) -> PhaseSpaceField:
    """Tabulate ``tr[T W(q, p)]``.

    On symmetric odd grids only the rows with q >= 0 are computed; the rest
    follow from ``tr[T W(-q, -p)] = conj tr[T W(q, p)]``.
    """
    q, p = q_grid.points, p_grid.points
    nq, npp = q_grid.n, p_grid.n
    mirror = q_grid.is_symmetric() and p_grid.is_symmetric() and nq % 2 == 1 and npp % 2 == 1
    start = nq // 2 if mirror else 0
    Q, P = np.meshgrid(q[start:], p, indexing="ij")
    vals = np.empty((nq, npp), dtype=complex)
    vals[start:] = weyl_transform(T, Q, P)
    if mirror:
        vals[:start] = np.conj(vals[start + 1:][::-1, ::-1])
    return PhaseSpaceField(q_grid, p_grid, vals)


# -- statistics of G^T -------------------------------------------------------


def _require_mixture(T) -> MixtureOperator:
    if not isinstance(T, MixtureOperator):
        raise TypeError("density requires pure decomposition")
    return T


def gt_density(T: GeneratingOperator, rho: State, q, p, grid: Grid | None = None):
    """Outcome density of G^T in state rho:

        (1/2 pi) sum_j w_j sum_k t_k |<W(q,p) phi_k, psi_j>|^2.
    """
    T = _require_mixture(T)
    weights, pures = decompose(rho)
    total = 0.0
    for w, psi in zip(weights, pures):
        for t, phi in zip(T.weights, T.components):
            total = total + w * t * np.abs(matrix_element(psi, phi, q, p, grid)) ** 2
    out = total / TWO_PI
    return float(out) if np.ndim(out) == 0 else out


def gt_table(T: GeneratingOperator, rho: State, q_values, grid: Grid | None = None):
    """G^T density on ``q_values x grid.conjugate()``.

    For fixed q the map p -> <W(q,p) phi, psi> is, up to a phase, the Fourier
    transform of conj(phi(x - q)) psi(x), so each row is one FFT.  Returns
    ``(p_grid, table)`` with ``table[i, j]`` the density at (q_i, p_j).
    """
    T = _require_mixture(T)
    grid = grid or default_grid()
    x = grid.points
    q_values = np.atleast_1d(np.asarray(q_values, dtype=float))
    weights, pures = decompose(rho)
    table = np.zeros((q_values.size, grid.n))
    for t, phi in zip(T.weights, T.components):
        shifted = np.conj(phi.position(x[None, :] - q_values[:, None]))
        for w, psi in zip(weights, pures):
            rows = fourier_rows(shifted * psi.position(x)[None, :], grid)
            table += w * t * np.abs(rows) ** 2
    return grid.conjugate(), table


def integrate_gt_over_p(T: GeneratingOperator, rho: State, q_values, grid: Grid | None = None):
    """Unnormalized position margin ``q -> integral G^T density dp``."""
    p_grid, table = gt_table(T, rho, q_values, grid)
    return table.sum(axis=1) * p_grid.dx


# -- margins -----------------------------------------------------------------


def convolving_measures(T: GeneratingOperator, grid: Grid | None = None) -> tuple[Measure1D, Measure1D]:
    """Densities of mu^T (x -> sum t_k |phi_k(-x)|^2) and nu^T (p -> sum t_k |phi_hat_k(-p)|^2)."""
    T = _require_mixture(T)
    grid = grid or default_grid()
    x = grid.points
    mu = sum(t * np.abs(phi.position(-x)) ** 2 for t, phi in zip(T.weights, T.components))
    nu = sum(t * np.abs(phi.momentum(-x)) ** 2 for t, phi in zip(T.weights, T.components))
    return (
        Measure1D.normalized(grid, mu, f"mu^T[{T.label}]"),
        Measure1D.normalized(grid, nu, f"nu^T[{T.label}]"),
    )


def ft_convolver(T: GeneratingOperator, axis: str, p, grid: Grid | None = None):
    """Fourier transform of the convolving measure.

    position: ``mu_hat(p) = tr[T W(0, p)] / sqrt(2 pi)``;
    momentum: ``nu_hat(q) = tr[T W(-q, 0)] / sqrt(2 pi)``.
    """
    p_arr = np.asarray(p, dtype=float)
    if axis == "position":
        val = weyl_transform(T, np.zeros_like(p_arr), p_arr, grid)
    elif axis == "momentum":
        val = weyl_transform(T, -p_arr, np.zeros_like(p_arr), grid)
    else:
        raise ValueError(f"unknown axis {axis!r}")
    out = INV_SQRT_2PI * np.asarray(val)
    return complex(out) if np.ndim(p) == 0 else out


def convolver_ft_on_conjugate(T: GeneratingOperator, axis: str, grid: Grid) -> np.ndarray:
    """``mu_hat`` (or ``nu_hat``) at the points of ``grid.conjugate()``.

    Components without compact support go through one FFT of |phi|^2, which
    is spectrally accurate for smooth decaying phi; the rest use
    ``ft_convolver``.
    """
    if axis == "momentum":
        return convolver_ft_on_conjugate(T.fourier(), "position", grid)
    pc = grid.conjugate().points
    if isinstance(T, WeylFieldOperator):
        return ft_convolver(T, "position", pc)
    out = np.zeros(grid.n, dtype=complex)
    x = grid.points
    for t, phi in zip(T.weights, T.components):
        if phi.support is None and phi.momentum_support is None:
            # integral |phi|^2 e^{ipx} dx = sqrt(2 pi) * conj(FT[|phi|^2](p))
            dens = np.abs(phi.position(x)) ** 2
            out += t * np.conj(fourier_rows(dens, grid)) * SQRT_2PI
        else:
            out += t * matrix_element(phi, phi, np.zeros_like(pc), pc)
    return INV_SQRT_2PI * out


def margin_density(
    T: GeneratingOperator,
    rho: State,
    axis: str = "position",
    grid: Grid | None = None,
    wrap: bool = True,
    extended: bool = True,
) -> Measure1D:
    """Outcome density of the Cartesian margin ``mu^T * p^Q_rho`` (or ``nu^T * p^P_rho``).

    With ``wrap=True`` (default) the convolution is periodic on the grid's
    torus and is computed spectrally from ``mu_hat`` and the FFT of the
    state density; this is the model that FFT deconvolution inverts exactly.
    ``wrap=False`` gives the plain linear convolution restricted to the grid,
    with the convolver sampled on the doubled interval.

    ``extended`` carries the periodic route in long double and returns a long
    double density.  Deconvolving by a rapidly decaying ``mu_hat`` divides
    the margin transform by numbers as small as 1e-14, so its roundoff
    floor decides how much of the state's spectrum survives.
    """
    T = _require_mixture(T)
    grid = grid or default_grid()
    if axis == "momentum":
        m = margin_density(T.fourier(), fourier_swap(rho), "position", grid, wrap, extended)
        m.label = f"momentum margin[{T.label}]"
        return m
    if axis != "position":
        raise ValueError(f"unknown axis {axis!r}")
    weights, pures = decompose(rho)
    x = grid.points
    dens = sum(w * np.abs(psi.position(x)) ** 2 for w, psi in zip(weights, pures))
    if wrap:
        mu_hat = convolver_ft_on_conjugate(T, "position", grid)
        rho_hat = fourier_transform(GridFunction(grid, dens.astype(np.longdouble) if extended else dens))
        rho_hat.values = SQRT_2PI * mu_hat * rho_hat.values
        raw = inverse_fourier_transform(rho_hat).values.real
        model = "periodic"
    else:
        ext = np.arange(-(grid.n - 1), grid.n) * grid.dx
        mu = sum(t * np.abs(phi.position(-ext)) ** 2 for t, phi in zip(T.weights, T.components))
        # direct sum: relative accuracy in the tails, where moments look
        raw = np.convolve(mu, dens, mode="valid") * grid.dx
        model = "linear"
    return Measure1D.normalized(grid, raw, f"position margin[{T.label}]", model=model)
