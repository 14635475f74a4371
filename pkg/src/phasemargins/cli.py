"""Command-line experiment runner.

Each command writes ``report.json`` (resolved config, checks, verdicts) and
plot-ready CSVs into ``--out``.  Exit status: 0 all checks pass, 1 a check
failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .constructions import (
    Function2D,
    convolved_operator,
    husimi_mu_hat,
    husimi_operator,
    prop1_mu_hat,
    prop1_operator,
    prop2_gap_explainer,
    prop2_series,
    remark_series,
)
from .hilbert import Grid, HermiteState, default_grid, position_density
from .infocheck import (
    DEFAULT_EPS,
    completeness_verdict,
    margins_equivalence_verdict,
    regularity_check,
)
from .phase_space import (
    convolver_ft_on_conjugate,
    convolving_measures,
    ft_convolver,
    margin_density,
    weyl_transform_field,
)
from .reconstruct import (
    NoFiniteMomentsError,
    deconvolve_moments,
    density_from_moments,
    finite_moments,
    fourier_deconvolve,
    l1_distance,
    moments_of,
)
from .sampling import empirical_measure, empirical_moments, sample_measure, write_samples

log = logging.getLogger("phasemargins")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SCENARIOS = ("verify-prop1", "verify-prop2", "reconstruct", "completeness-check")
CLAIMED_Q_STAR = 0.5


class ConfigError(ValueError):
    pass


@dataclass
class GridSpec:
    min: float
    max: float
    n: int

    def build(self) -> Grid:
        return Grid(float(self.min), float(self.max), int(self.n))


@dataclass
class RunConfig:
    scenario: str
    out: str = "out"
    seed: int = 0
    eps: float = DEFAULT_EPS
    grid: GridSpec | None = None
    band: GridSpec = field(default_factory=lambda: GridSpec(-8 * math.pi, 8 * math.pi, 1601))
    field_grid: GridSpec | None = None
    n_max: int = 4
    operator: str = "husimi"
    convolver: str = "husimi"
    state: object = "h0"
    method: str = "both"
    mode: str = "exact"
    samples: int = 1_000_000
    noise_factor: float | None = None
    moments_order: int = 10
    max_degree: int | None = None
    bounds: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_GRID_KEYS = ("grid", "band", "field_grid")
_RANGES = {
    "eps": (1e-16, 1e-2),
    "n_max": (1, 8),
    "samples": (0, 10**8),
    "moments_order": (0, 24),
    "noise_factor": (0.5, 100.0),
}
_CHOICES = {
    "convolver": ("husimi", "prop1"),
    "method": ("fourier", "moments", "both"),
    "mode": ("exact", "sampled"),
}


def _coerce_grid(name: str, value) -> GridSpec | None:
    if value is None or isinstance(value, GridSpec):
        return value
    if not isinstance(value, dict) or set(value) != {"min", "max", "n"}:
        raise ConfigError(f"{name} must be a mapping with keys min, max, n")
    spec = GridSpec(float(value["min"]), float(value["max"]), int(value["n"]))
    if not (spec.max > spec.min and 3 <= spec.n <= 2**16):
        raise ConfigError(f"{name} out of range")
    return spec


def resolve_config(scenario: str, raw: dict) -> RunConfig:
    """Validate a raw mapping into a RunConfig; unknown keys are rejected."""
    known = {f.name for f in dataclasses.fields(RunConfig)} - {"scenario"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    vals = dict(raw)
    for k in _GRID_KEYS:
        if k in vals:
            vals[k] = _coerce_grid(k, vals[k])
    cfg = RunConfig(scenario, **vals)
    for k, (lo, hi) in _RANGES.items():
        v = getattr(cfg, k)
        if v is not None and not lo <= v <= hi:
            raise ConfigError(f"{k}={v} outside [{lo}, {hi}]")
    for k, options in _CHOICES.items():
        if getattr(cfg, k) not in options:
            raise ConfigError(f"{k} must be one of {options}")
    if cfg.max_degree is not None and (cfg.max_degree < 0 or cfg.max_degree % 2):
        raise ConfigError("max_degree must be a non-negative even integer")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    parse_state(cfg.state)
    if cfg.scenario == "completeness-check":
        parse_operator(cfg.operator)
    return cfg


def parse_state(spec) -> HermiteState:
    """``"h3"``, ``"h0+h1"`` or a list of Hermite coefficients ([re, im] pairs allowed)."""
    try:
        if isinstance(spec, str):
            idx = [int(t.strip().lstrip("h")) for t in spec.split("+")]
            if any(i < 0 for i in idx) or not all(t.strip().startswith("h") for t in spec.split("+")):
                raise ValueError
            c = np.zeros(max(idx) + 1, complex)
            c[idx] = 1.0
            return HermiteState(c)
        coeffs = [complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v) for v in spec]
        return HermiteState(coeffs)
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"bad state specification {spec!r}") from exc


def parse_operator(name: str):
    """Named generating operators: husimi, prop1, prop2:N, remark-f0 (all strip ones on the vacuum)."""
    if name == "husimi":
        return husimi_operator()
    if name == "prop1":
        return prop1_operator()
    if name == "remark-f0":
        return convolved_operator(remark_series().f_hat, husimi_operator(), label="remark-f0*husimi")
    if name.startswith("prop2:"):
        try:
            n = int(name.split(":", 1)[1])
            series = prop2_series(n)
        except ValueError as exc:
            raise ConfigError(f"bad operator {name!r}") from exc
        return convolved_operator(series.f_hat, husimi_operator(), label=f"{name}*husimi", explainer=prop2_gap_explainer(n))
    raise ConfigError(f"unknown operator {name!r}")


# -- output helpers ------------------------------------------------------------


class Report:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.checks: dict = {}
        self.verdicts: dict = {}
        self.values: dict = {}
        self.notes: list[str] = []
        self.warnings: list[str] = []
        self.files: list[str] = []

    def check(self, name: str, passed: bool, **detail) -> bool:
        self.checks[name] = {"passed": bool(passed), **detail}
        log.info("%s: %s", name, "pass" if passed else "FAIL")
        return bool(passed)

    def warn(self, msg: str) -> None:
        self.warnings.append(msg)
        log.warning(msg)

    def csv(self, name: str, header: list[str], rows) -> None:
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self.files.append(name)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def write(self) -> int:
        doc = {
            "command": self.cfg.scenario,
            "version": __version__,
            "config": self.cfg.to_dict(),
            "passed": self.passed,
            "checks": self.checks,
            "verdicts": self.verdicts,
            "values": self.values,
            "notes": self.notes,
            "warnings": self.warnings,
            "files": self.files,
        }
        (self.out / "report.json").write_text(json.dumps(_plain(doc), indent=2))
        return EXIT_OK if self.passed else EXIT_FAIL


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# -- commands ------------------------------------------------------------------


def run_verify_prop1(cfg: RunConfig) -> int:
    rep = Report(cfg)
    T = prop1_operator()
    band = cfg.band.build()
    p = band.points

    num = ft_convolver(T, "position", p)
    exact = prop1_mu_hat(p)
    err = float(np.abs(num - exact).max())
    rep.csv("mu_hat.csv", ["p", "mu_hat_closed_form", "mu_hat_numeric"], zip(p, exact, num.real))
    rep.check("mu_hat_matches_closed_form", err <= 1e-6, max_abs_error=err)

    pos, mom = margins_equivalence_verdict(T, band, cfg.eps)
    zeros = np.array(pos.report.zero_points)
    n_max = int(max(abs(p[0]), abs(p[-1])) // (2 * math.pi))
    expected = np.array([2 * math.pi * k for k in range(-n_max, n_max + 1) if k != 0 and abs(2 * math.pi * k) < p[-1]])
    rows, ok = [], zeros.size == expected.size
    for e in expected:
        found = zeros[np.argmin(np.abs(zeros - e))] if zeros.size else float("nan")
        rows.append((round(e / (2 * math.pi)), e, found, abs(found - e)))
        ok = ok and abs(found - e) <= 1e-6
    rep.csv("zeros.csv", ["n", "expected", "found", "abs_error"], rows)
    rep.check("zeros_at_2pi_n", ok, found=zeros.tolist(), expected=expected.tolist())

    fg = (cfg.field_grid or GridSpec(-5.0, 5.0, 101)).build()
    field_ = weyl_transform_field(T, fg, fg)
    field_.to_csv(rep.out / "weyl_field.csv")
    rep.files.append("weyl_field.csv")
    comp = completeness_verdict(T, fg, fg, cfg.eps)
    rep.verdicts["completeness"] = comp.to_dict()
    rep.check("completeness_incomplete", comp.kind == "incomplete")

    rep.verdicts["position_margin"] = pos.to_dict()
    rep.verdicts["momentum_margin"] = mom.to_dict()
    rep.check("margins_equivalent", pos.kind == mom.kind == "equivalent_margins")

    # convergence: same verdicts on a band of half the resolution
    half = Grid(band.x_min, band.x_max, (band.n - 1) // 2 + 1)
    if band.n < 1601:
        rep.warn(f"margin band has {band.n} points, coarser than the default 1601")
    hp, hm = margins_equivalence_verdict(T, half, cfg.eps)
    rep.values["half_resolution_margin_verdicts"] = [hp.kind, hm.kind]
    if (hp.kind, hm.kind) != (pos.kind, mom.kind):
        rep.warn("margin verdicts change at half resolution")
    rep.values["mu_hat_at_0"] = float(prop1_mu_hat(0.0))
    return rep.write()


def run_verify_prop2(cfg: RunConfig) -> int:
    rep = Report(cfg)
    series = prop2_series(cfg.n_max)
    fg = (cfg.field_grid or GridSpec(-3.0, 3.0, 121)).build()
    f, f_hat = series.tabulate((fg, fg))
    f_hat.to_csv(rep.out / "f_hat.csv")
    rep.files.append("f_hat.csv")

    rep.values.update(
        C=series.C,
        terms=len(series.terms),
        Q_star=series.q_star,
        P_star=series.p_star,
        Q_star_claimed=CLAIMED_Q_STAR,
        f_min_on_grid=float(f.values.min()),
        total_mass_from_f_hat=float(2 * math.pi * series.f_hat(0.0, 0.0)),
        grid_mass=float(f.values.sum() * fg.dx * fg.dx),
    )
    if not math.isclose(series.q_star, CLAIMED_Q_STAR):
        rep.notes.append(
            f"Q* from the truncated index set is {series.q_star:.12g} (attained at n=1, k=1); "
            f"the quoted bound is {CLAIMED_Q_STAR}. Reported, not asserted."
        )
    qs = np.linspace(series.q_star + 1e-9, 10.0, 2001)
    tail = float(np.abs(series.f_hat(np.concatenate([qs, -qs]), 0.0)).max())
    rep.check("f_hat_axis_vanishes_beyond_Q_star", tail == 0.0, max_abs=tail)
    rep.check("f_nonnegative", rep.values["f_min_on_grid"] >= 0.0)
    rep.check("f_normalized", abs(rep.values["total_mass_from_f_hat"] - 1.0) <= 1e-6)
    rep.check("Q_star_reported", math.isfinite(series.q_star))

    T = parse_operator(f"prop2:{cfg.n_max}")
    comp = completeness_verdict(T, fg, fg, cfg.eps)
    rep.verdicts["completeness"] = comp.to_dict()
    rep.check("completeness_complete_on_grid", comp.kind == "complete_on_grid")
    pos, mom = margins_equivalence_verdict(T, cfg.band.build(), cfg.eps)
    rep.verdicts["position_margin"] = pos.to_dict()
    rep.verdicts["momentum_margin"] = mom.to_dict()
    rep.check("margins_inequivalent", pos.kind == mom.kind == "inequivalent_margins")
    return rep.write()


def _convolver(name: str, grid: Grid):
    if name == "husimi":
        return husimi_operator(), husimi_mu_hat
    T = prop1_operator()
    return T, convolver_ft_on_conjugate(T, "position", grid)


def run_reconstruct(cfg: RunConfig) -> int:
    rep = Report(cfg)
    sampled = cfg.mode == "sampled"
    default = GridSpec(-10.0, 10.0, 2049) if sampled else GridSpec(-20.0, 20.0, 4097)
    grid = (cfg.grid or default).build()
    state = parse_state(cfg.state)
    T, mu_hat = _convolver(cfg.convolver, grid)
    truth = position_density(state, grid)
    margin = margin_density(T, state, grid=grid)
    bounds = {"fourier": 0.02 if sampled else (1e-6 if cfg.convolver == "husimi" else 1e-3), "moments": 1e-6}
    bounds.update(cfg.bounds)

    if sampled:
        samples = sample_measure(margin, cfg.samples, cfg.seed)
        write_samples(samples, rep.out / "samples.csv")
        rep.files.append("samples.csv")
        data = empirical_measure(samples, grid, 0.0)
        noise = 1.0 / math.sqrt(2 * math.pi * max(cfg.samples, 1))
        factor = cfg.noise_factor or 3.0
    else:
        data, noise, factor = margin, None, cfg.noise_factor or 8.0

    if cfg.method in ("fourier", "both"):
        try:
            rec = fourier_deconvolve(data, mu_hat, noise_level=noise, noise_factor=factor)
        except ValueError as exc:
            rep.check("fourier", False, error=str(exc))
        else:
            e = l1_distance(truth, rec)
            rep.csv("fourier.csv", ["x", "truth", "reconstruction"], zip(grid.points, truth.density, rec.density))
            rep.check("fourier", e <= bounds["fourier"], l1=e, bound=bounds["fourier"], diagnostics=rec.meta)

    if cfg.method in ("moments", "both"):
        K = cfg.moments_order
        conv, _ = convolving_measures(T, default_grid())
        try:
            conv_m = finite_moments(conv, max(K, 2))
        except NoFiniteMomentsError as exc:
            rep.check("moments", False, error=str(exc))
            return rep.write()
        conv_m.values = conv_m.values[: K + 1]
        margin_m = empirical_moments(samples, K) if sampled else moments_of(margin_density(T, state, grid=grid, wrap=False), K)
        state_m = deconvolve_moments(margin_m, conv_m)
        true_m = moments_of(truth, K)
        rep.csv(
            "moments.csv",
            ["k", "truth", "reconstruction", "standard_error"],
            [(k, true_m[k], state_m[k], (state_m.se[k] if state_m.se is not None else 0.0)) for k in range(K + 1)],
        )
        deg = cfg.max_degree if cfg.max_degree is not None else 2 * (len(state.coeffs) - 1)
        if deg > K:
            rep.check("moments", False, error=f"max_degree {deg} needs {deg + 1} moments, have {K + 1}")
            return rep.write()
        try:
            dens = density_from_moments(state_m, deg, grid)
        except ValueError as exc:
            rep.check("moments", False, error=str(exc))
            return rep.write()
        e = l1_distance(truth, dens)
        rep.csv("moment_density.csv", ["x", "truth", "reconstruction"], zip(grid.points, truth.density, dens.density))
        rep.check("moments", e <= bounds["moments"], l1=e, bound=bounds["moments"], condition_number=dens.meta["condition_number"])
    return rep.write()


def run_completeness_check(cfg: RunConfig) -> int:
    rep = Report(cfg)
    T = parse_operator(cfg.operator)
    fg = (cfg.field_grid or GridSpec(-3.0, 3.0, 121)).build()
    comp = completeness_verdict(T, fg, fg, cfg.eps)
    pos, mom = margins_equivalence_verdict(T, cfg.band.build(), cfg.eps)
    reg = regularity_check(T, fg, fg, cfg.eps)
    for name, v in (("completeness", comp), ("position_margin", pos), ("momentum_margin", mom), ("regularity", reg)):
        rep.verdicts[name] = v.to_dict()
    rep.values["summary"] = {"completeness": comp.kind, "margins": [pos.kind, mom.kind], "regularity": reg.kind}
    rep.check("verdicts_computed", True)
    expect = cfg.expect or {}
    if "completeness" in expect:
        rep.check("expected_completeness", comp.kind == expect["completeness"], expected=expect["completeness"])
    if "margins" in expect:
        rep.check("expected_margins", pos.kind == mom.kind == expect["margins"], expected=expect["margins"])
    if "regularity" in expect:
        rep.check("expected_regularity", reg.kind == expect["regularity"], expected=expect["regularity"])
    return rep.write()


COMMANDS = {
    "verify-prop1": run_verify_prop1,
    "verify-prop2": run_verify_prop2,
    "reconstruct": run_reconstruct,
    "completeness-check": run_completeness_check,
}


# -- argument parsing --------------------------------------------------------------


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phasemargins", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML or JSON file of config keys")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--eps", type=float)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key (YAML value)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "verify-prop2":
            sp.add_argument("--n-max", type=int, dest="n_max")
        if name == "reconstruct":
            sp.add_argument("--convolver")
            sp.add_argument("--state")
            sp.add_argument("--method")
            sp.add_argument("--mode")
            sp.add_argument("--samples", type=int)
        if name == "completeness-check":
            sp.add_argument("--operator")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw: dict = {}
        if args.config:
            loaded = yaml.safe_load(Path(args.config).read_text())
            if loaded is not None and not isinstance(loaded, dict):
                raise ConfigError("config file must hold a mapping")
            raw.update(loaded or {})
        for key in ("out", "seed", "eps", "n_max", "convolver", "state", "method", "mode", "samples", "operator"):
            v = getattr(args, key, None)
            if v is not None:
                raw[key] = v
        raw.update(_parse_set(args.set))
        cfg = resolve_config(args.command, raw)
    except (ConfigError, OSError, yaml.YAMLError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code = COMMANDS[args.command](cfg)
    print(json.dumps({"command": args.command, "passed": code == EXIT_OK, "report": str(Path(cfg.out) / "report.json")}))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
