"""Numerical support verdicts: completeness, margin equivalence, regularity.

A sample counts as zero when ``|v| < eps * envelope``, the envelope being the
local maximum of ``|v|`` over a small window.  Samples whose envelope falls
below ``floor_rel * max|v|`` carry no usable information (rounding noise or
underflow) and are *unresolved*.  An unresolved run is promoted to a zero run
only when it adjoins resolved zeros, which is how an exact cut-off such as
``(r - |p|)_+`` differs from a smooth Gaussian tail sinking into noise.

All verdicts hold on the given grid at the given tolerance, nothing more.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from .hilbert import Grid, GridFunction
from .phase_space import GeneratingOperator, WeylFieldOperator, ft_convolver, weyl_transform_field

CAVEAT = "grid-and-tolerance limited"
DEFAULT_EPS = 1e-8
DEFAULT_FLOOR = 1e-12
DEFAULT_WINDOW = 10
MIN_RUN = 3
MAX_WITNESSES = 16

VERDICT_KINDS = (
    "complete_on_grid",
    "incomplete",
    "equivalent_margins",
    "inequivalent_margins",
    "regular",
    "not_regular",
)


@dataclass
class SupportReport:
    dimension: int
    zero_regions: list
    witness_points: list
    epsilon: float
    grid: dict
    zero_points: list = field(default_factory=list)
    unresolved_regions: list = field(default_factory=list)
    explained_regions: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


@dataclass
class Verdict:
    kind: str
    report: SupportReport
    caveat: str = CAVEAT
    label: str = ""

    def __post_init__(self):
        if self.kind not in VERDICT_KINDS:
            raise ValueError(f"unknown verdict kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "label": self.label, "caveat": self.caveat, "report": self.report.to_dict()}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- classification ------------------------------------------------------------


def _classify(values: np.ndarray, eps: float, window: int, floor_rel: float):
    """Return (zero mask, unresolved mask, envelope) for 1D or 2D samples."""
    a = np.abs(values)
    gmax = float(a.max()) if a.size else 0.0
    if gmax == 0.0:
        return np.ones(a.shape, bool), np.zeros(a.shape, bool), a
    env = ndimage.maximum_filter(a, size=2 * window + 1, mode="nearest")
    resolved = env >= floor_rel * gmax
    zero = resolved & (a < eps * env)
    unresolved = ~resolved
    if unresolved.any() and zero.any():
        labels, n = ndimage.label(unresolved)
        touching = np.unique(labels[ndimage.binary_dilation(zero, np.ones((3,) * a.ndim, bool)) & unresolved])
        promote = np.isin(labels, touching[touching > 0])
        zero |= promote
        unresolved &= ~promote
    return zero, unresolved, env


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges of True runs."""
    if not mask.any():
        return []
    d = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1) - 1))


def _witnesses(points, keep: np.ndarray) -> list:
    idx = np.flatnonzero(keep.ravel())
    if idx.size > MAX_WITNESSES:
        idx = idx[np.linspace(0, idx.size - 1, MAX_WITNESSES).round().astype(int)]
    return [points(i) for i in idx]


def zero_set_1d(
    samples: GridFunction,
    eps: float = DEFAULT_EPS,
    func: Callable | None = None,
    window: int = DEFAULT_WINDOW,
    floor_rel: float = DEFAULT_FLOOR,
    min_run: int = MIN_RUN,
) -> SupportReport:
    """Zero intervals and isolated zeros of sampled values.

    Runs of at least ``min_run`` zero samples are intervals; shorter runs
    flanked on both sides by values ``>= 10 eps * envelope`` are isolated
    zeros.  Short runs touching either end of the band are only counted.
    Sign changes of the real part between resolved samples are also
    isolated zeros.  With ``func`` (the real-valued function behind the
    samples) isolated zeros are refined by bracketing root search.
    """
    x = samples.grid.points
    v = np.asarray(samples.values)
    zero, unresolved, env = _classify(v, eps, window, floor_rel)
    a = np.abs(v)
    n = len(v)
    regions, points = [], []

    def refine(lo: int, hi: int, fallback: float) -> float:
        if func is None:
            return fallback
        flo, fhi = float(np.real(func(x[lo]))), float(np.real(func(x[hi])))
        if flo == 0.0:
            return float(x[lo])
        if fhi == 0.0:
            return float(x[hi])
        if flo * fhi < 0:
            return float(brentq(lambda t: float(np.real(func(t))), x[lo], x[hi], xtol=1e-14, rtol=1e-15))
        return fallback

    edge_zeros = 0
    for i0, i1 in _runs(zero):
        short = i1 - i0 + 1 < min_run
        if short and (i0 == 0 or i1 == n - 1) and i1 - i0 + 1 < n:
            # a zero on the band edge cannot be bracketed; counted, not placed
            edge_zeros += 1
            continue
        flanked = (
            i1 - i0 + 1 < min_run
            and i0 > 0
            and i1 < n - 1
            and a[i0 - 1] >= 10 * eps * env[i0 - 1]
            and a[i1 + 1] >= 10 * eps * env[i1 + 1]
        )
        if flanked:
            best = i0 + int(np.argmin(a[i0 : i1 + 1]))
            points.append(refine(i0 - 1, i1 + 1, float(x[best])))
        else:
            regions.append((float(x[i0]), float(x[i1])))

    re = np.real(v)
    im_small = np.abs(np.imag(v)) <= 1e-6 * np.maximum(env, np.finfo(float).tiny)
    ok = ~zero & ~unresolved & im_small
    cross = np.flatnonzero(ok[:-1] & ok[1:] & (re[:-1] * re[1:] < 0))
    for i in cross:
        lin = float(x[i] - re[i] * (x[i + 1] - x[i]) / (re[i + 1] - re[i]))
        points.append(refine(i, i + 1, lin))
    points.sort()

    keep = ~zero & ~unresolved & (a >= 10 * eps * env)
    return SupportReport(
        dimension=1,
        zero_regions=regions,
        witness_points=_witnesses(lambda i: float(x[i]), keep),
        epsilon=eps,
        grid=samples.grid.describe(),
        zero_points=points,
        unresolved_regions=[(float(x[i]), float(x[j])) for i, j in _runs(unresolved)],
        counts={
            "zero_samples": int(zero.sum()),
            "unresolved_samples": int(unresolved.sum()),
            "edge_zeros": edge_zeros,
        },
    )


# -- 2D ------------------------------------------------------------------------


def _rectangles(labels: np.ndarray, ids, q: np.ndarray, p: np.ndarray) -> list:
    out = []
    slices = ndimage.find_objects(labels)
    for i in ids:
        sq, sp = slices[i - 1]
        out.append(((float(q[sq.start]), float(q[sq.stop - 1])), (float(p[sp.start]), float(p[sp.stop - 1]))))
    return out


def support_report_2d(
    values: np.ndarray,
    q_grid: Grid,
    p_grid: Grid,
    eps: float = DEFAULT_EPS,
    explainer: Callable | None = None,
    window: int = DEFAULT_WINDOW,
    floor_rel: float = DEFAULT_FLOOR,
) -> SupportReport:
    """Positive-area zero regions of a sampled phase-space function.

    A zero component has positive area when it contains a full 3x3 block of
    zero samples; thinner components are zero curves and are only counted.
    ``explainer(Q, P, cell)`` may mark zero samples as accounted for (e.g. by
    terms omitted in a truncation); a component whose positive-area core is
    fully explained is listed under ``explained_regions``.
    """
    q, p = q_grid.points, p_grid.points
    zero, unresolved, env = _classify(values, eps, window, floor_rel)
    core = ndimage.binary_erosion(zero, np.ones((3, 3), bool), border_value=1)
    labels, _ = ndimage.label(zero, np.ones((3, 3), bool))
    area_ids = np.unique(labels[core])
    area_ids = area_ids[area_ids > 0]

    explained_ids, open_ids = [], []
    if explainer is not None and area_ids.size:
        cell = max(q_grid.dx, p_grid.dx)
        sel = core & np.isin(labels, area_ids)
        ii, jj = np.nonzero(sel)
        ok = np.asarray(explainer(q[ii], p[jj], cell), bool)
        bad = np.unique(labels[ii[~ok], jj[~ok]])
        for i in area_ids:
            (open_ids if i in bad else explained_ids).append(int(i))
    else:
        open_ids = [int(i) for i in area_ids]

    keep = ~zero & ~unresolved & (np.abs(values) >= 10 * eps * env)
    unres_labels, n_unres = ndimage.label(unresolved)
    return SupportReport(
        dimension=2,
        zero_regions=_rectangles(labels, open_ids, q, p),
        witness_points=_witnesses(lambda k: (float(q[k // len(p)]), float(p[k % len(p)])), keep),
        epsilon=eps,
        grid={"q": q_grid.describe(), "p": p_grid.describe()},
        unresolved_regions=_rectangles(unres_labels, range(1, n_unres + 1), q, p),
        explained_regions=_rectangles(labels, explained_ids, q, p),
        counts={
            "zero_samples": int(zero.sum()),
            "positive_area_zero_samples": int(np.isin(labels, area_ids).sum()),
            "unexplained_zero_samples": int(np.isin(labels, open_ids).sum()) if open_ids else 0,
            "unresolved_samples": int(unresolved.sum()),
        },
    )


def completeness_verdict(
    T: GeneratingOperator,
    q_grid: Grid,
    p_grid: Grid,
    eps: float = DEFAULT_EPS,
    explainer: Callable | None = None,
) -> Verdict:
    """``incomplete`` iff tr[T W] vanishes on a region of positive area.

    For Weyl-field operators built from a truncated series the operator's
    ``meta["gap_explainer"]`` is used unless ``explainer`` is given.
    """
    if explainer is None and isinstance(T, WeylFieldOperator):
        explainer = T.meta.get("gap_explainer")
    field_ = weyl_transform_field(T, q_grid, p_grid)
    report = support_report_2d(field_.values, q_grid, p_grid, eps, explainer)
    kind = "incomplete" if report.zero_regions else "complete_on_grid"
    return Verdict(kind, report, label=getattr(T, "label", ""))


def default_margin_band() -> Grid:
    return Grid(-8 * math.pi, 8 * math.pi, 1601)


def margins_equivalence_verdict(
    T: GeneratingOperator, grid: Grid | None = None, eps: float = DEFAULT_EPS
) -> tuple[Verdict, Verdict]:
    """Position and momentum verdicts from the zero sets of mu_hat and nu_hat on ``grid``.

    A margin is informationally equivalent to the sharp observable iff the
    zero set has empty interior, i.e. only isolated zeros are found.
    """
    grid = grid or default_margin_band()
    out = []
    for axis in ("position", "momentum"):
        vals = ft_convolver(T, axis, grid.points)

        def func(t, axis=axis):
            return float(np.real(ft_convolver(T, axis, float(t))))

        rep = zero_set_1d(GridFunction(grid, vals), eps, func=func)
        kind = "inequivalent_margins" if rep.zero_regions else "equivalent_margins"
        out.append(Verdict(kind, rep, label=f"{axis}[{getattr(T, 'label', '')}]"))
    return out[0], out[1]


def regularity_check(
    T: GeneratingOperator,
    q_grid: Grid,
    p_grid: Grid,
    eps: float = DEFAULT_EPS,
) -> Verdict:
    """``regular`` iff no sample is zero and the real part changes sign nowhere.

    Sign changes between neighbouring samples (with negligible imaginary
    part) catch zero curves that fall between grid points.
    """
    field_ = weyl_transform_field(T, q_grid, p_grid)
    v = field_.values
    zero, unresolved, env = _classify(v, eps, DEFAULT_WINDOW, DEFAULT_FLOOR)
    re = v.real
    real_like = np.abs(v.imag) <= 1e-6 * np.maximum(env, np.finfo(float).tiny)
    cross = np.zeros(v.shape, bool)
    for ax in (0, 1):
        a = [slice(None)] * 2
        b = [slice(None)] * 2
        a[ax], b[ax] = slice(None, -1), slice(1, None)
        sc = (re[tuple(a)] * re[tuple(b)] < 0) & real_like[tuple(a)] & real_like[tuple(b)]
        cross[tuple(a)] |= sc
    bad = zero | cross
    q, p = q_grid.points, p_grid.points
    report = SupportReport(
        dimension=2,
        zero_regions=[],
        witness_points=_witnesses(lambda k: (float(q[k // len(p)]), float(p[k % len(p)])), ~bad & ~unresolved),
        epsilon=eps,
        grid={"q": q_grid.describe(), "p": p_grid.describe()},
        zero_points=_witnesses(lambda k: (float(q[k // len(p)]), float(p[k % len(p)])), bad),
        counts={
            "zero_samples": int(zero.sum()),
            "sign_changes": int(cross.sum()),
            "unresolved_samples": int(unresolved.sum()),
        },
    )
    kind = "not_regular" if bad.any() else "regular"
    return Verdict(kind, report, label=getattr(T, "label", ""))
