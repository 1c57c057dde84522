"""Command line runner: trajectories, solver comparisons, demos and plots.

Configuration is a JSON object; command line flags override the file, and
the file overrides the built-in defaults.  Schema (all keys optional)::

    {
      "domain":  {"kind": "interval", "size": 1.0, "n": 64,
                  "n_radial": 16, "n_angular": 64},
      "initial": {"preset": "interior-only", "path": null},
      "solver":  "jko",                       # or "fd"
      "T": 0.1,
      "dt": null,                             # fd step, defaults to tau
      "save_every": 1,
      "seed": 0,
      "out": "runs/default",
      "jko": {"tau": 0.001, "sinkhorn_epsilon": null, "epsilon_start": null,
              "proximal_rounds": 0, "inner_tol": 1e-10, "max_inner_iter": 200}
    }

Presets: ``uniform`` (stationary), ``interior-only``, ``boundary-only``,
``two-blobs`` (centres jittered by ``seed``) and ``csv`` (``path`` to a file
in the measure CSV format).

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures as cf
import copy
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .domain import DomainSpec, build_discretization
from .jko import JkoConfig, StepError, run_trajectory
from .measure import (DecomposedMeasure, entropy, functional_report, read_measure_csv, rel_entropy_stationary,
                      trace_gap, tv_distance, write_measure_csv)
from .pde_oracle import fd_run
from .svgplot import line_plot

LAYOUT_VERSION = 1
PRESETS = ("uniform", "interior-only", "boundary-only", "two-blobs", "csv")
DEMOS = ("nonconvexity", "slope_probe", "max_principle")
SERIES_COLUMNS = ("t", "mass", "entropy", "rel_entropy", "boundary_mass", "trace_gap", "tv_to_stationary")
FD_LEDGER_COLUMNS = ("t", "mass", "entropy", "tv_to_stationary")

DEFAULTS = {
    "domain": {"kind": "interval", "size": 1.0, "n": 64, "n_radial": 16, "n_angular": 64},
    "initial": {"preset": "interior-only", "path": None},
    "solver": "jko",
    "T": 0.1,
    "dt": None,
    "save_every": 1,
    "seed": 0,
    "out": "runs/default",
    "jko": {"tau": 1e-3},
}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


class SolverFailure(RuntimeError):
    pass


# ----------------------------------------------------------------- config
def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _jko_field_names() -> set:
    return {f.name for f in fields(JkoConfig)}


@dataclass
class RunConfig:
    raw: dict

    @property
    def solver(self) -> str:
        return self.raw["solver"]

    @property
    def T(self) -> float:
        return float(self.raw["T"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    @property
    def save_every(self) -> int:
        return int(self.raw["save_every"])

    def domain_spec(self) -> DomainSpec:
        d = self.raw["domain"]
        if d["kind"] == "interval":
            return DomainSpec.interval(float(d["size"]), int(d["n"]))
        return DomainSpec.disk(float(d["size"]), int(d["n_radial"]), int(d["n_angular"]))

    def jko_config(self) -> JkoConfig:
        return JkoConfig(**self.raw["jko"])

    @property
    def dt(self) -> float:
        dt = self.raw.get("dt")
        return float(self.raw["jko"]["tau"] if dt is None else dt)


def _num(path: str, v, lo=None, positive=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{path}: must be positive, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be >= {lo}, got {v!r}")


def validate(raw: dict) -> RunConfig:
    """Check every field and return a :class:`RunConfig`."""
    known = set(DEFAULTS)
    for k in raw:
        if k not in known:
            raise ConfigError(f"{k}: unknown field")
    d = raw["domain"]
    if d.get("kind") not in ("interval", "disk"):
        raise ConfigError(f"domain.kind: expected 'interval' or 'disk', got {d.get('kind')!r}")
    _num("domain.size", d.get("size"), positive=True)
    if d["kind"] == "interval":
        _num("domain.n", d.get("n"), lo=2, integer=True)
    else:
        _num("domain.n_radial", d.get("n_radial"), lo=2, integer=True)
        _num("domain.n_angular", d.get("n_angular"), lo=8, integer=True)
    ini = raw["initial"]
    if ini.get("preset") not in PRESETS:
        raise ConfigError(f"initial.preset: expected one of {', '.join(PRESETS)}, got {ini.get('preset')!r}")
    if ini["preset"] == "csv":
        p = ini.get("path")
        if not p or not Path(p).exists():
            raise ConfigError(f"initial.path: file {p!r} does not exist")
    if raw["solver"] not in ("jko", "fd"):
        raise ConfigError(f"solver: expected 'jko' or 'fd', got {raw['solver']!r}")
    _num("T", raw["T"], positive=True)
    if raw.get("dt") is not None:
        _num("dt", raw["dt"], positive=True)
    _num("save_every", raw["save_every"], lo=1, integer=True)
    _num("seed", raw["seed"], lo=0, integer=True)
    j = raw["jko"]
    names = _jko_field_names()
    for k in j:
        if k not in names:
            raise ConfigError(f"jko.{k}: unknown field")
    _num("jko.tau", j.get("tau"), positive=True)
    for k in ("sinkhorn_epsilon", "epsilon_start", "mu_regularization"):
        if j.get(k) is not None:
            _num(f"jko.{k}", j[k], positive=True)
    for k in ("inner_tol",):
        if k in j:
            _num(f"jko.{k}", j[k], positive=True)
    for k in ("max_inner_iter", "scaling_sweeps", "proximal_rounds"):
        if k in j:
            _num(f"jko.{k}", j[k], lo=0, integer=True)
    cfg = RunConfig(raw)
    try:
        cfg.domain_spec()
        cfg.jko_config()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"jko: {exc}") from exc
    if raw["T"] / cfg.raw["jko"]["tau"] > 1e6:
        raise ConfigError("T: more than 1e6 steps requested")
    return cfg


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Defaults, then the JSON file, then command line overrides."""
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"--config: file {path!r} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--config: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("--config: top level must be an object")
        raw = _merge(raw, data)
    raw = _merge(raw, overrides)
    return validate(raw)


def _overrides(args) -> dict:
    o: dict = {}
    if getattr(args, "out", None) is not None:
        o["out"] = args.out
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    if getattr(args, "solver", None) is not None:
        o["solver"] = args.solver
    if getattr(args, "domain", None) is not None:
        o.setdefault("domain", {})["kind"] = args.domain
    if getattr(args, "n", None) is not None:
        key = "n" if (args.domain or "interval") == "interval" else "n_angular"
        o.setdefault("domain", {})[key] = args.n
    if getattr(args, "horizon", None) is not None:
        o["T"] = args.horizon
    if getattr(args, "preset", None) is not None:
        o.setdefault("initial", {})["preset"] = args.preset
    if getattr(args, "tau", None) is not None:
        o.setdefault("jko", {})["tau"] = args.tau
    if getattr(args, "epsilon", None) is not None:
        o.setdefault("jko", {})["sinkhorn_epsilon"] = args.epsilon
    return o


# ----------------------------------------------------------- initial data
def initial_measure(cfg: RunConfig, disc=None) -> DecomposedMeasure:
    disc = build_discretization(cfg.domain_spec()) if disc is None else disc
    ini = cfg.raw["initial"]
    preset = ini["preset"]
    ni, nb = disc.n_interior, disc.n_boundary
    if preset == "uniform":
        return DecomposedMeasure.stationary(disc)
    if preset == "interior-only":
        return DecomposedMeasure.from_masses(disc, np.concatenate([disc.interior_vol, np.zeros(nb)])
                                             / disc.interior_vol.sum())
    if preset == "boundary-only":
        return DecomposedMeasure.from_masses(disc, np.concatenate([np.zeros(ni), disc.boundary_area])
                                             / disc.boundary_area.sum())
    if preset == "two-blobs":
        rng = np.random.default_rng(cfg.seed)
        x = disc.interior_pos
        size = disc.spec.size
        if disc.is_disk:
            ang = rng.uniform(0, 2 * np.pi)
            c = 0.5 * size * np.array([[np.cos(ang), np.sin(ang)], [-np.cos(ang), -np.sin(ang)]])
        else:
            c = size * np.array([[0.25], [0.75]]) + 0.05 * size * rng.uniform(-1, 1, size=(2, 1))
        s = 0.08 * size
        f = sum(np.exp(-np.sum((x - ci) ** 2, axis=1) / (2 * s * s)) for ci in c)
        m = np.concatenate([f * disc.interior_vol, np.zeros(nb)])
        return DecomposedMeasure.from_masses(disc, m / m.sum())
    states = read_measure_csv(ini["path"], disc, probability=False)
    if not states:
        raise ConfigError("initial.path: no measure rows")
    r = states[0]
    if r.mass <= 0:
        raise ConfigError("initial.path: measure has no mass")
    return DecomposedMeasure.from_masses(disc, r.masses / r.mass)


# -------------------------------------------------------------- run command
def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_rows(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _series_rows(times, states) -> list[dict]:
    bar = DecomposedMeasure.stationary(states[0].disc)
    return [{"t": float(t), "mass": s.mass, "entropy": entropy(s), "rel_entropy": rel_entropy_stationary(s),
             "boundary_mass": s.boundary_mass, "trace_gap": trace_gap(s), "tv_to_stationary": tv_distance(s, bar)}
            for t, s in zip(times, states)]


def simulate(cfg: RunConfig, rho0: DecomposedMeasure | None = None):
    """Run the configured solver; returns ``(times, states, ledger_columns, ledger_rows, extra)``."""
    rho0 = initial_measure(cfg) if rho0 is None else rho0
    if cfg.solver == "jko":
        jc = cfg.jko_config()
        try:
            traj = run_trajectory(rho0, cfg.T, jc, store_plans=False, w2_mode="exact")
        except (StepError, FloatingPointError, np.linalg.LinAlgError) as exc:
            raise SolverFailure(str(exc)) from exc
        from .jko import LEDGER_COLUMNS
        extra = {"all_converged": bool(all(traj.converged)),
                 "max_marginal_residual": float(max(traj.residuals, default=0.0)), "traj": traj}
        return traj.times, traj.states, LEDGER_COLUMNS, traj.records, extra
    try:
        run = fd_run(rho0, cfg.T, cfg.dt)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        raise SolverFailure(str(exc)) from exc
    return run.times, run.states, FD_LEDGER_COLUMNS, run.ledger(), {"run": run}


def _diagnostics(cfg: RunConfig, times, states, extra) -> dict:
    from .diagnostics import decay_fit, edi_ledger
    masses = np.array([s.mass for s in states])
    dens = np.array([s.density for s in states])
    rho0 = states[0]
    M = rho0.disc.total_mass
    f0 = rho0.density * M
    out = {
        "mass_drift": float(np.max(np.abs(masses - masses[0]))),
        "min_density": float(dens.min()),
        "max_principle": {
            "initial_min": float(f0.min()), "initial_max": float(f0.max()),
            "run_min": float(dens.min() * M), "run_max": float(dens.max() * M),
            "ok": bool(dens.min() * M >= f0.min() * (1 - 1e-6) and dens.max() * M <= f0.max() * (1 + 1e-6)),
        },
        "final": functional_report(states[-1]).as_dict(),
    }
    fit = decay_fit((times, states))
    out["decay_fit"] = {k: v for k, v in fit.as_dict().items() if k not in ("times", "rel_entropy")}
    if "traj" in extra:
        traj = extra["traj"]
        out["edi_one_step"] = edi_ledger(traj, "one_step").as_dict()
        out["edi_with_dissipation"] = edi_ledger(traj, "with_dissipation").as_dict()
        out["all_converged"] = extra["all_converged"]
        out["max_marginal_residual"] = extra["max_marginal_residual"]
    return _clean_json(out)


def _clean_json(obj):
    if isinstance(obj, dict):
        return {k: _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _manifest(cfg_raw: dict, command: str, timings: dict, status: str, error: str | None = None) -> dict:
    return {"command": command, "version": __version__, "layout_version": LAYOUT_VERSION,
            "config": cfg_raw, "timings": timings, "status": status, "error": error}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_run(cfg: RunConfig) -> Path:
    """Execute one trajectory and write its run directory.

    Layout: ``states/state_XXXXXX.csv`` (measure format), ``ledger.csv``
    (solver ledger), ``series.csv`` (t, mass, entropy, rel_entropy,
    boundary_mass, trace_gap, tv_to_stationary), ``diagnostics.json`` and
    ``manifest.json``.
    """
    out = cfg.out
    (out / "states").mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    try:
        times, states, cols, rows, extra = simulate(cfg)
    except SolverFailure as exc:
        timings["solve_s"] = time.perf_counter() - t0
        _dump(out / "manifest.json", _manifest(cfg.raw, "run", timings, "solver_failure", str(exc)))
        raise
    timings["solve_s"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    keep = [k for k in range(len(states)) if k % cfg.save_every == 0 or k == len(states) - 1]
    for k in keep:
        write_measure_csv(out / "states" / f"state_{k:06d}.csv", states[k], tag=repr(float(times[k])))
    _write_rows(out / "ledger.csv", cols, rows)
    _write_rows(out / "series.csv", SERIES_COLUMNS, _series_rows(times, states))
    _dump(out / "diagnostics.json", _diagnostics(cfg, times, states, extra))
    timings["write_s"] = time.perf_counter() - t1
    _dump(out / "manifest.json", _manifest(cfg.raw, "run", timings, "ok"))
    return out


# ---------------------------------------------------------- compare command
def compare_states(times_a, states_a, times_b, states_b) -> list[dict]:
    """Distances at the times present in both runs (matched to 1e-9)."""
    rows = []
    tb = np.asarray(times_b)
    for ta, sa in zip(times_a, states_a):
        k = int(np.argmin(np.abs(tb - ta)))
        if abs(tb[k] - ta) > 1e-9 * max(1.0, abs(ta)):
            continue
        sb = states_b[k]
        dm = np.abs(sa.masses - sb.masses)
        ni = sa.disc.n_interior
        rows.append({"t": float(ta), "l1_omega": float(dm[:ni].sum()), "l1_gamma": float(dm[ni:].sum()),
                     "tv": float(0.5 * dm.sum())})
    return rows


def _refined(raw: dict, level: int) -> dict:
    r = copy.deepcopy(raw)
    f = 2 ** level
    r["jko"]["tau"] = raw["jko"]["tau"] / f
    if raw.get("dt") is not None:
        r["dt"] = raw["dt"] / f
    d = r["domain"]
    if d["kind"] == "interval":
        d["n"] = int(d["n"]) * f
    else:
        d["n_radial"] = int(d["n_radial"]) * f
        d["n_angular"] = int(d["n_angular"]) * f
    return r


def _compare_level(raw: dict, solvers: tuple) -> dict:
    cfg = validate(raw)
    rho0 = initial_measure(cfg)
    runs = []
    for s in solvers:
        r = copy.deepcopy(raw)
        r["solver"] = s
        times, states, *_ = simulate(validate(r), rho0)
        runs.append((times, states))
    rows = compare_states(*runs[0], *runs[1])
    return {"tau": raw["jko"]["tau"], "domain": raw["domain"], "rows": rows,
            "sup_tv": max((r["tv"] for r in rows), default=0.0)}


def _threads() -> int:
    v = os.environ.get("STICKY_JKO_THREADS")
    if v is None:
        return 1
    try:
        n = int(v)
    except ValueError:
        raise ConfigError(f"STICKY_JKO_THREADS: expected an integer, got {v!r}") from None
    if n < 1:
        raise ConfigError("STICKY_JKO_THREADS: must be at least 1")
    return n


def cmd_compare(cfg: RunConfig, solvers=("jko", "fd"), refine: int = 0) -> dict:
    """Compare two solvers on one configuration.

    With ``refine > 0`` the comparison is repeated with ``tau`` halved and
    the grid doubled ``refine`` times; ratios of consecutive sup-TV values
    are reported.  Levels run in a process pool capped by
    ``STICKY_JKO_THREADS``.
    """
    if len(solvers) != 2 or any(s not in ("jko", "fd") for s in solvers):
        raise ConfigError(f"--solvers: expected two of jko,fd, got {solvers!r}")
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    raws = [_refined(cfg.raw, k) for k in range(refine + 1)]
    for r in raws:
        validate(r)
    workers = min(_threads(), len(raws))
    t0 = time.perf_counter()
    try:
        if workers > 1:
            with cf.ProcessPoolExecutor(max_workers=workers) as ex:
                levels = list(ex.map(_compare_level, raws, [tuple(solvers)] * len(raws)))
        else:
            levels = [_compare_level(r, tuple(solvers)) for r in raws]
    except SolverFailure as exc:
        _dump(out / "manifest.json", _manifest(cfg.raw, "compare", {"solve_s": time.perf_counter() - t0},
                                              "solver_failure", str(exc)))
        raise
    for k, lv in enumerate(levels):
        _write_rows(out / f"compare_level{k}.csv", ("t", "l1_omega", "l1_gamma", "tv"), lv["rows"])
    sup = [lv["sup_tv"] for lv in levels]
    ratios = [b / a if a > 0 else None for a, b in zip(sup[:-1], sup[1:])]
    report = {"solvers": list(solvers), "levels": [{"tau": lv["tau"], "domain": lv["domain"], "sup_tv": lv["sup_tv"]}
                                                   for lv in levels], "sup_tv_ratios": ratios}
    _dump(out / "compare.json", _clean_json(report))
    _dump(out / "manifest.json", _manifest(cfg.raw, "compare", {"solve_s": time.perf_counter() - t0}, "ok"))
    return report


# ------------------------------------------------------------- demo command
def demo_nonconvexity(out: Path) -> dict:
    from .diagnostics import nonconvexity_refinement
    rows = nonconvexity_refinement((16, 32, 64))
    mids = [r["entropy_mid"] for r in rows]
    rep = {"levels": rows, "interior_fraction": rows[-1]["interior_fraction"],
           "midpoint_entropy_increments": list(np.diff(mids)),
           "ok": bool(rows[-1]["interior_fraction"] >= 0.99 and np.all(np.diff(mids) > 0))}
    nts = [r["n_theta"] for r in rows]
    svg = line_plot({"midpoint": (nts, mids), "endpoint": (nts, [r["entropy_start"] for r in rows])},
                    "Entropy along the boundary-cap geodesic", "n_theta", "entropy")
    (out / "nonconvexity.svg").write_text(svg)
    print(f"interior-mass fraction at n_theta=64: {rep['interior_fraction']:.6f}")
    return rep


def demo_slope_probe(out: Path) -> dict:
    from .diagnostics import slope_probe
    disc = build_discretization(DomainSpec.interval(1.0, 64))
    x = disc.interior_pos[:, 0]
    r = DecomposedMeasure(disc, 1 + x, np.array([1.0, 2.0]), probability=False)
    r = DecomposedMeasure.from_masses(disc, r.masses / r.mass)
    probe = slope_probe(r, [1e-4, 3e-4, 1e-3, 3e-3, 1e-2])
    rows = probe.rows()
    for row in rows:
        print(f"t={row['t']:.0e}  quotient={row['quotient']:.6f}  half_fisher={row['half_fisher']:.6f}  "
              f"ratio={row['ratio']:.4f}")
    svg = line_plot({"quotient / (I/2)": (probe.times, [row["ratio"] for row in rows])},
                    "Heat-flow slope quotient", "t", "ratio")
    (out / "slope_probe.svg").write_text(svg)
    return {"rows": rows, "ok": probe.ok, "w2_mode": probe.w2_mode}


def demo_max_principle(out: Path, n_steps: int = 100, tau: float = 1e-3) -> dict:
    from .pde_oracle import fd_run as _fd
    disc = build_discretization(DomainSpec.interval(1.0, 64))
    M = disc.total_mass
    x = disc.positions[:, 0]
    # density between 0.5 and 2 times the stationary density
    f = (1.25 + 0.75 * np.cos(3 * np.pi * x)) / M
    rho = DecomposedMeasure.from_density(disc, f / (disc.weights @ f), probability=True)
    lo, hi = rho.density.min() * M, rho.density.max() * M
    traj = run_trajectory(rho, n_steps * tau, JkoConfig(tau=tau), store_plans=False, w2_mode="plan")
    fd = _fd(rho, n_steps * tau, tau)
    rows = []
    for name, states in (("jko", traj.states), ("fd", fd.states)):
        for n, s in enumerate(states):
            g = s.density * M
            rows.append({"solver": name, "n": n, "min": float(g.min()), "max": float(g.max()),
                         "ok": bool(g.min() >= lo * (1 - 1e-6) and g.max() <= hi * (1 + 1e-6))})
    ok = all(r["ok"] for r in rows)
    svg = line_plot({f"{s} max": ([r["n"] for r in rows if r["solver"] == s], [r["max"] for r in rows if r["solver"] == s])
                     for s in ("jko", "fd")} |
                    {f"{s} min": ([r["n"] for r in rows if r["solver"] == s], [r["min"] for r in rows if r["solver"] == s])
                     for s in ("jko", "fd")},
                    "Density bounds relative to the stationary density", "step", "f / f_bar",
                    notes=[f"initial bounds [{lo:.3f}, {hi:.3f}]"])
    (out / "max_principle.svg").write_text(svg)
    print(f"max principle over {n_steps} steps: {'all steps pass' if ok else 'VIOLATED'}")
    return {"initial_min": lo, "initial_max": hi, "ok": ok, "steps": rows}


def cmd_demo(name: str, out: Path) -> dict:
    if name not in DEMOS:
        raise ConfigError(f"demo: unknown name {name!r}; available demos: {', '.join(DEMOS)}")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rep = {"nonconvexity": demo_nonconvexity, "slope_probe": demo_slope_probe,
           "max_principle": demo_max_principle}[name](out)
    _dump(out / f"{name}.json", _clean_json(rep))
    _dump(out / "manifest.json", _manifest({"demo": name}, "demo", {"solve_s": time.perf_counter() - t0}, "ok"))
    return rep


# ------------------------------------------------------------- plot command
def _read_csv(path: Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return {}
    head = rows[0]
    cols = {h: [] for h in head}
    for r in rows[1:]:
        if len(r) != len(head):
            break  # truncated trailing line of an interrupted run
        for h, v in zip(head, r):
            try:
                cols[h].append(float(v))
            except ValueError:
                cols[h].append(math.nan)
    return {h: np.array(v) for h, v in cols.items()}


def cmd_plot(run_dir: Path) -> list[Path]:
    """Write SVG plots for a run directory; missing series produce warnings."""
    run_dir = Path(run_dir)
    sources = {}
    for name in ("series.csv", "ledger.csv"):
        p = run_dir / name
        if p.exists():
            sources.update({k: v for k, v in _read_csv(p).items() if k not in sources})
    if not sources or "t" not in sources:
        raise ConfigError(f"{run_dir}: no ledger with a 't' column")
    t = sources["t"]
    written = []

    def get(col):
        if col not in sources:
            print(f"warning: series {col!r} missing from {run_dir}", file=sys.stderr)
            return None
        return sources[col][: len(t)]

    def emit(fname, svg):
        p = run_dir / fname
        p.write_text(svg)
        written.append(p)

    e = get("entropy")
    if e is not None:
        emit("entropy.svg", line_plot({"E": (t[: len(e)], e)}, "Entropy", "t", "E"))
    h = get("rel_entropy")
    if h is not None:
        series = {"H(rho | mu_bar)": (t[: len(h)], h)}
        notes = []
        diag = run_dir / "diagnostics.json"
        lam = None
        if diag.exists():
            fit = json.loads(diag.read_text()).get("decay_fit") or {}
            if not fit.get("flagged", True) and fit.get("lambda_fit") is not None:
                lam, t_tail = fit["lambda_fit"], fit["tail_start"]
        if lam is not None:
            k = int(np.argmin(np.abs(t - t_tail)))
            tt = t[k:]
            series["fit exp(-2 lambda t)"] = (tt, h[k] * np.exp(-2 * lam * (tt - t[k])))
            notes.append(f"fitted slope -2 lambda = {-2 * lam:.6g} (lambda_fit = {lam:.6g})")
        emit("rel_entropy.svg", line_plot(series, "Relative entropy to the stationary state", "t", "H",
                                          logy=True, notes=notes))
    g = get("trace_gap")
    if g is not None:
        emit("trace_gap.svg", line_plot({"trace gap": (t[: len(g)], g)}, "Trace gap", "t", "gap"))
    b = get("boundary_mass")
    if b is not None:
        emit("boundary_mass.svg", line_plot({"boundary mass": (t[: len(b)], b)}, "Boundary mass", "t", "mass"))
    ledger = run_dir / "ledger.csv"
    if ledger.exists():
        L = _read_csv(ledger)
        if "w2" in L and "edi_slack" in L and "n" in L:
            tau = float(L["t"][0] / L["n"][0]) if L["t"].size else 1.0
            series = {"cumulative W2/(2 tau)": (L["t"], np.cumsum(L["w2"]) / (2 * tau)),
                      "cumulative one-step slack": (L["t"], np.cumsum(L["edi_slack"]))}
            if "fisherI" in L and "fisherB" in L:
                series["cumulative tau D/2"] = (L["t"], np.cumsum(0.5 * tau * (L["fisherI"] + L["fisherB"])))
            emit("edi.svg", line_plot(series, "EDI ledger terms", "t", "value"))
        else:
            print(f"warning: EDI columns missing from {ledger}", file=sys.stderr)
    return written


# ------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sticky-jko", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--epsilon", type=float, help="final entropic parameter")
        sp.add_argument("--solver", choices=("jko", "fd"))
        sp.add_argument("--domain", choices=("interval", "disk"))
        sp.add_argument("--n", type=int, help="interval cells or disk angular nodes")
        sp.add_argument("--T", dest="horizon", type=float, help="time horizon")
        sp.add_argument("--preset", choices=PRESETS)

    common(sub.add_parser("run", help="run one trajectory"))
    c = sub.add_parser("compare", help="compare two solvers")
    common(c)
    c.add_argument("--solvers", default="jko,fd")
    c.add_argument("--refine", type=int, default=0, help="number of (tau, h) halvings")
    d = sub.add_parser("demo", help="run a named diagnostic")
    d.add_argument("name")
    d.add_argument("--out", metavar="DIR", default=None)
    pl = sub.add_parser("plot", help="plot a run directory")
    pl.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config, _overrides(args))
            out = cmd_run(cfg)
            print(f"wrote {out}")
        elif args.command == "compare":
            cfg = load_config(args.config, _overrides(args))
            if args.refine < 0:
                raise ConfigError("--refine: must be >= 0")
            rep = cmd_compare(cfg, tuple(s.strip() for s in args.solvers.split(",")), args.refine)
            for lv in rep["levels"]:
                print(f"tau={lv['tau']:.3e}  sup TV={lv['sup_tv']:.6f}")
            for r in rep["sup_tv_ratios"]:
                print(f"ratio {r}")
        elif args.command == "demo":
            cmd_demo(args.name, Path(args.out or f"runs/demo_{args.name}"))
        else:
            for pth in cmd_plot(Path(args.run_dir)):
                print(f"wrote {pth}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
