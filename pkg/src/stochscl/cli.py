"""Config-driven experiment runner.

Configs are INI files (``configparser``) with the sections ``run``,
``model``, ``numerics``, ``monte_carlo``, ``verification`` and ``output``.
Model parameters use dotted keys, e.g. ``flux = linear`` with ``flux.c =
1.0``. Lists are whitespace separated; test functions are ``;``-separated
triples ``t_end x_center half_width``. See the README for the full schema.

Exit codes: 0 all reports passed, 1 a verification failed, 2 configuration
or stability error, 3 numerical blow-up.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models, oracle, verify
from .calculus import build_entropy_pair, product_test_function, spatial_bump
from .core import build_grid, sample_wiener
from .errors import ConfigError, NumericalBlowup, StabilityError, StochSCLError
from .solver import ViscousConfig, check_stability, export_trajectory, run_ensemble, solve, stable_dt

EXPERIMENTS = (
    "solve",
    "entropy-check",
    "contraction",
    "comparison",
    "initial-attainment",
    "strong-entropy",
    "young",
    "convergence",
    "oracle-validate",
)
ORACLES = ("entropy-envelope", "linear-additive", "riemann-shock")
SECTIONS = ("run", "model", "numerics", "monte_carlo", "verification", "output")

# key -> (parser kind, default); None default means required
_SCHEMA = {
    "run": {"experiment": ("str", None), "name": ("str", "")},
    "model": {"flux": ("str", "burgers"), "noise": ("str", "zero"), "u0": ("str", "bump"),
              "v0": ("str", ""), "v0_minus": ("str", "")},
    "numerics": {
        "x_min": ("float", -1.0), "x_max": ("float", 1.0), "n_cells": ("ints", [256]),
        "T": ("float", 0.5), "dt": ("str", "auto"), "eps_visc": ("floats", [5e-3]),
        "eps_reg": ("str", "auto"), "u_bound": ("float", 2.0), "stride": ("ints", [10]),
        "viscous_dominance": ("bool", True), "blowup_guard": ("float", 1e6),
    },
    "monte_carlo": {"n_paths": ("int", 100), "base_seed": ("int", 0)},
    "verification": {
        "times": ("floats", []), "slack": ("float", 0.05), "entropy_eps": ("float", 0.05),
        "k_grid_size": ("int", 9), "psi": ("str", "0.5 0.0 0.6"), "tolerance": ("str", "budget"),
        "fraction": ("float", 0.95), "h_ladder": ("floats", [0.08, 0.04, 0.02, 0.01]),
        "psi_x": ("floats", [0.0, 0.5]), "delta": ("float", 0.1),
        "delta0": ("floats", [0.08, 0.04, 0.02]), "v_grid_n": ("int", 64),
        "direct_paths": ("int", 0), "cells": ("ints", [4, 4]), "moment_ratio": ("float", 2.0),
        "moments": ("ints", [2, 4]), "oracle": ("str", ""), "envelope_eps": ("floats", [1.0, 0.1, 0.01]),
        "envelope_points": ("int", 10000), "min_ratio": ("float", 1.7), "max_error": ("float", 0.05),
        "shock_tolerance": ("float", 0.02), "enforce_a4": ("bool", True),
        "control_bound": ("str", "none"),
    },
    "output": {"directory": ("str", "results"), "formats": ("str", "json csv"),
               "trajectories": ("str", "none"), "trajectory_paths": ("int", 1)},
}


def _parse_value(kind, raw, key):
    try:
        if kind == "str":
            return raw.strip()
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return [int(v) for v in raw.split()]
        if kind == "floats":
            return [float(v) for v in raw.split()]
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {kind}", key) from None
    raise AssertionError(kind)


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict                      # section -> key -> parsed value
    params: dict                      # model role -> dict of float parameters
    source: str = ""
    label: str = ""
    extra: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.values[section][key]


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and type-check a config; raises :class:`ConfigError` naming the key."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}", "config") from None
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", sec)
    values, params = {}, {"flux": {}, "noise": {}, "u0": {}, "v0": {}, "v0_minus": {}}
    for sec, schema in _SCHEMA.items():
        values[sec] = {}
        items = dict(cp.items(sec)) if cp.has_section(sec) else {}
        for key, raw in items.items():
            name = f"{sec}.{key}"
            if sec == "model" and "." in key:
                role, p = key.split(".", 1)
                if role not in params:
                    raise ConfigError(f"unknown model role in {name}", name)
                params[role][p] = _parse_value("float", raw, name)
            elif key not in schema:
                raise ConfigError(f"unknown key {name}", name)
        for key, (kind, default) in schema.items():
            name = f"{sec}.{key}"
            if key in items:
                values[sec][key] = _parse_value(kind, items[key], name)
            elif default is None:
                raise ConfigError(f"missing required key {name}", name)
            else:
                values[sec][key] = default
    exp = values["run"]["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"run.experiment must be one of {', '.join(EXPERIMENTS)}, got {exp!r}", "run.experiment")
    cfg = ExperimentConfig(exp, values, params, source, values["run"]["name"] or exp)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}", "config") from None
    return parse_config(text, str(p))


# ---------------------------------------------------------------------------
# Model construction


def _build_model(kind, role, cfg):
    name = cfg.get("model", role)
    try:
        return models.build(kind, name, cfg.params[role])
    except KeyError as exc:
        key = f"model.{role}" if exc.args and exc.args[0] == name else f"model.{role}.{exc.args[0]}"
        raise ConfigError(f"{key}: no registered {kind} named {name!r} or unknown parameter", key) from None
    except TypeError as exc:
        raise ConfigError(f"model.{role}: {exc}", f"model.{role}") from None


def _initial_data(cfg):
    u0 = _build_model("u0", "u0", cfg)
    v0 = u0 if not cfg.get("model", "v0") else _build_model("u0", "v0", cfg)
    if cfg.get("model", "v0_minus"):
        base, minus = v0, _build_model("u0", "v0_minus", cfg)

        def v0(x):
            return np.asarray(base(x), dtype=float) - np.asarray(minus(x), dtype=float)

        sup = [getattr(f, "support", None) for f in (base, minus)]
        if all(s is not None for s in sup):
            v0.support = (min(sup[0][0], sup[1][0]), max(sup[0][1], sup[1][1]))
        else:
            v0.support = None
    return u0, v0


def _eps_reg(cfg):
    raw = cfg.get("numerics", "eps_reg")
    if raw == "auto":
        return None
    return _parse_value("float", raw, "numerics.eps_reg")


def _ladder(cfg):
    """(eps_visc, n_cells, stride) per rung; scalars broadcast."""
    eps = cfg.get("numerics", "eps_visc")
    ns = cfg.get("numerics", "n_cells")
    strides = cfg.get("numerics", "stride")
    n = max(len(eps), len(ns), len(strides))
    for key, v in (("eps_visc", eps), ("n_cells", ns), ("stride", strides)):
        if len(v) not in (1, n):
            raise ConfigError(f"numerics.{key} has {len(v)} entries, expected 1 or {n}", f"numerics.{key}")
    pick = lambda v, i: v[i] if len(v) > 1 else v[0]  # noqa: E731
    return [(pick(eps, i), pick(ns, i), pick(strides, i)) for i in range(n)]


def viscous_configs(cfg) -> list:
    """One :class:`ViscousConfig` per ladder rung; all rungs share ``dt``
    (the smallest stable one with ``dt = auto``) so their drivers coincide."""
    flux = _build_model("flux", "flux", cfg)
    noise = _build_model("noise", "noise", cfg)
    num = cfg.values["numerics"]
    e_reg = _eps_reg(cfg)
    try:
        grids = [(e, build_grid(num["x_min"], num["x_max"], n), s) for e, n, s in _ladder(cfg)]
    except (ValueError, StochSCLError) as exc:
        raise ConfigError(f"numerics: {exc}", "numerics.n_cells") from None
    if num["dt"] == "auto":
        dt = min(stable_dt(g, flux, e, num["T"], num["u_bound"], e_reg) for e, g, _ in grids)
    else:
        dt = _parse_value("float", num["dt"], "numerics.dt")
    out = []
    for e, g, s in grids:
        vc = ViscousConfig(e, g, num["T"], dt, flux, noise, eps_reg=e_reg, u_bound=num["u_bound"],
                           require_viscous_dominance=num["viscous_dominance"],
                           blowup_guard=num["blowup_guard"])
        n_steps = vc.n_steps
        if n_steps % s:
            raise ConfigError(f"numerics.stride={s} does not divide the {n_steps} time steps", "numerics.stride")
        out.append((vc, s))
    return out


def _optional_float(raw, key):
    return None if raw == "none" else _parse_value("float", raw, key)


def _psi_set(cfg):
    raw = cfg.get("verification", "psi")
    out = []
    for chunk in raw.split(";"):
        parts = chunk.split()
        if len(parts) not in (3, 4):
            raise ConfigError("verification.psi entries are 't_end x_center half_width [amplitude]'",
                              "verification.psi")
        try:
            out.append(product_test_function(*(float(p) for p in parts)))
        except ValueError:
            raise ConfigError(f"cannot parse test function {chunk.strip()!r}", "verification.psi") from None
    return out


def _validate(cfg):
    ver = cfg.values["verification"]
    if cfg.experiment == "oracle-validate":
        if ver["oracle"] not in ORACLES:
            raise ConfigError(f"verification.oracle must be one of {', '.join(ORACLES)}", "verification.oracle")
        if ver["oracle"] == "entropy-envelope":
            return
    _build_model("flux", "flux", cfg)
    _build_model("noise", "noise", cfg)
    _initial_data(cfg)
    _psi_set(cfg)
    if cfg.get("monte_carlo", "n_paths") < 1:
        raise ConfigError("monte_carlo.n_paths must be positive", "monte_carlo.n_paths")
    if len(ver["cells"]) != 2:
        raise ConfigError("verification.cells takes two integers", "verification.cells")
    if len(ver["psi_x"]) != 2:
        raise ConfigError("verification.psi_x is 'center half_width'", "verification.psi_x")
    _optional_float(ver["control_bound"], "verification.control_bound")
    tol = ver["tolerance"]
    if tol != "budget":
        _parse_value("float", tol, "verification.tolerance")
    fmts = cfg.get("output", "formats").split()
    if any(f not in ("json", "csv") for f in fmts):
        raise ConfigError("output.formats takes json and/or csv", "output.formats")
    if cfg.get("output", "trajectories") not in ("none", "csv", "npz"):
        raise ConfigError("output.trajectories is none, csv or npz", "output.trajectories")
    for vc, _ in viscous_configs(cfg):
        check_stability(vc)


# ---------------------------------------------------------------------------
# Experiments


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


class _Runner:
    def __init__(self, cfg: ExperimentConfig, threads: int):
        self.cfg = cfg
        self.threads = threads
        self.mc = cfg.values["monte_carlo"]
        self.ver = cfg.values["verification"]
        self.ensembles = {}
        if cfg.experiment == "oracle-validate" and self.ver["oracle"] == "entropy-envelope":
            return
        self.u0, self.v0 = _initial_data(cfg)
        self.rungs = viscous_configs(cfg)

    def ensemble(self, which="u", rung=0):
        key = (which, rung)
        if key not in self.ensembles:
            vc, stride = self.rungs[rung]
            data = self.u0 if which == "u" else self.v0
            _log(f"simulating {self.mc['n_paths']} paths ({which}, eps_visc={vc.eps_visc:g}, "
                 f"{vc.grid.n_cells} cells, {vc.n_steps} steps)")
            self.ensembles[key] = run_ensemble(vc, self.mc["n_paths"], self.mc["base_seed"], data,
                                               stride=stride, threads=self.threads)
        return self.ensembles[key]

    def run(self) -> list:
        return getattr(self, "exp_" + self.cfg.experiment.replace("-", "_"))()

    def exp_solve(self):
        ens = self.ensemble()
        meta = {"eps_visc": ens.config.eps_visc, "n_cells": ens.config.grid.n_cells, "dt": ens.config.dt,
                "paths": ens.n_paths}
        reports = []
        for p in self.ver["moments"]:
            per = np.sum(np.abs(ens.snapshots) ** p, axis=2) * ens.config.grid.dx
            m, se = verify.mean_se(per)
            i = int(np.argmax(m))
            reports.append(verify.VerificationReport(
                f"sup_moment_p{p}", float(m[i]), float(se[i]), math.inf, bool(np.isfinite(m).all()),
                {**meta, "p": p, "times": ens.times, "moments": m, "rule": "finite moments"}))
        return reports

    def exp_entropy_check(self):
        ens = self.ensemble()
        pair = build_entropy_pair(self.ver["entropy_eps"])
        ks = verify.default_k_grid(ens, self.ver["k_grid_size"])
        tol = self.ver["tolerance"]
        res = verify.entropy_report(ens, pair, ks, _psi_set(self.cfg), None if tol == "budget" else float(tol))
        need = self.ver["fraction"]
        meta = {"k_grid": ks, "entropy_eps": pair.eps, "paths": ens.n_paths, "mean_min_functional": res.mean,
                "mean_std_error": res.std_error, "lowest_min_functional": float(np.min(res.per_path_values)),
                "tolerance": res.tolerance if tol != "budget" else "per-path error budget",
                "largest_budget": res.tolerance,
                "rule": f"fraction of paths with min functional >= -tolerance is >= {need}"}
        # one-sided in the shortfall 1 - fraction
        return [verify.VerificationReport("entropy_inequality", res.fraction_nonnegative, 0.0, need,
                                          bool(res.fraction_nonnegative >= need), meta)]

    def _times(self):
        t = self.ver["times"]
        if not t:
            raise ConfigError("verification.times is required for this experiment", "verification.times")
        return t

    def exp_contraction(self):
        return [verify.l1_contraction(self.ensemble("u"), self.ensemble("v"), self._times(), self.ver["slack"])]

    def exp_comparison(self):
        # v0 <= u0 is the ordered pair; (v - u)_+ should stay at the initial level
        return [verify.comparison(self.ensemble("v"), self.ensemble("u"), self._times(), self.ver["slack"])]

    def exp_initial_attainment(self):
        c, w = self.ver["psi_x"]
        chi = spatial_bump(c, w)[0]
        return [verify.initial_attainment(self.ensemble(), self.u0, chi, self.ver["h_ladder"])]

    def exp_strong_entropy(self):
        psi = _psi_set(self.cfg)[0]
        pair = build_entropy_pair(self.ver["entropy_eps"])
        return verify.strong_entropy_residual(
            self.ensemble("u"), self.ensemble("v"), pair, psi, self.ver["delta"], self.ver["delta0"],
            self.ver["v_grid_n"], direct_paths=self.ver["direct_paths"])

    def _ladder_ensembles(self):
        return [self.ensemble("u", i) for i in range(len(self.rungs))]

    def exp_young(self):
        flux = self.rungs[0][0].flux
        psi = _psi_set(self.cfg)[0]
        ladder = self._ladder_ensembles()
        return [
            verify.young_diagnostic(ladder, flux, psi, tuple(self.ver["cells"]), self.ver["enforce_a4"],
                                    control_bound=_optional_float(self.ver["control_bound"],
                                                                  "verification.control_bound")),
            verify.moment_uniformity(ladder, tuple(self.ver["moments"]), self.ver["moment_ratio"]),
        ]

    def exp_convergence(self):
        return [verify.cauchy_convergence(self._ladder_ensembles())]

    def exp_oracle_validate(self):
        kind = self.ver["oracle"]
        return getattr(self, "oracle_" + kind.replace("-", "_"))()

    def oracle_entropy_envelope(self):
        return [envelope_report(self.ver["envelope_eps"], self.ver["envelope_points"])]

    def oracle_linear_additive(self):
        errs = []
        flux = self.rungs[0][0].flux
        noise = self.rungs[0][0].noise
        c = float(flux.params.get("c", 1.0))
        s0 = float(noise.params.get("sigma0", 0.0))
        for i, (vc, _) in enumerate(self.rungs):
            ens = run_ensemble(vc, self.mc["n_paths"], self.mc["base_seed"], self.u0, stride=vc.n_steps,
                               threads=self.threads)
            g = vc.grid
            W = ens.increments.sum(axis=1)
            exact = np.asarray(self.u0(g.wrap(g.centers - c * vc.T)), dtype=float)[None, :] + s0 * W[:, None]
            per = np.sum((ens.snapshots[:, -1] - exact) ** 2, axis=1) * g.dx
            errs.append(float(np.sqrt(np.mean(per))))
        ratios = [a / b for a, b in zip(errs, errs[1:])]
        ok = all(r >= self.ver["min_ratio"] for r in ratios) and errs[-1] <= self.ver["max_error"]
        meta = {"n_cells": [vc.grid.n_cells for vc, _ in self.rungs], "l2_errors": errs, "ratios": ratios,
                "min_ratio": self.ver["min_ratio"], "max_error": self.ver["max_error"], "paths": self.mc["n_paths"],
                "dt": [vc.dt for vc, _ in self.rungs],
                "rule": "error ratio >= min_ratio on every refinement and final error <= max_error"}
        return [verify.VerificationReport("linear_additive_error", errs[-1], 0.0, self.ver["max_error"], bool(ok), meta)]

    def oracle_riemann_shock(self):
        vc, _ = self.rungs[0]
        uL = float(self.cfg.params["u0"].get("u_left", 1.0))
        uR = float(self.cfg.params["u0"].get("u_right", 0.0))
        x0 = float(self.cfg.params["u0"].get("x0", 0.0))
        rp = oracle.RiemannProblem(uL, uR, vc.flux)
        s = rp.shock_speed
        if s is None:
            raise ConfigError("riemann-shock needs u_left > u_right", "model.u0.u_left")
        path = sample_wiener(self.mc["base_seed"], 0, vc.n_steps, vc.dt)
        tr = solve(vc, path, self.u0, stride=vc.n_steps)
        pos = shock_position(vc.grid.centers, tr.snapshots[-1], uL, uR, x0)
        exact = x0 + s * vc.T
        err = abs(pos - exact) / abs(exact) if exact != 0 else abs(pos)
        tol = self.ver["shock_tolerance"]
        meta = {"measured": pos, "exact": exact, "shock_speed": s, "n_cells": vc.grid.n_cells,
                "eps_visc": vc.eps_visc, "dt": vc.dt, "rule": "relative shock position error <= tolerance"}
        return [verify.VerificationReport("riemann_shock_position", err, 0.0, tol, bool(err <= tol), meta)]


def shock_position(x, u, uL, uR, x0=0.0) -> float:
    """Location right of ``x0`` where ``u`` crosses the mid state, by linear
    interpolation between neighbouring cells."""
    mid = 0.5 * (uL + uR)
    above = (u - mid) * np.sign(uL - uR) > 0
    cross = np.nonzero((x[:-1] >= x0) & above[:-1] & ~above[1:])[0]
    if cross.size == 0:
        return math.nan
    i = int(cross[0])
    return float(x[i] + (mid - u[i]) / (u[i + 1] - u[i]) * (x[i + 1] - x[i]))


def envelope_report(eps_list, n_points=10000) -> verify.VerificationReport:
    """``|r| - M1 eps <= beta_eps(r) <= |r|`` and ``supp beta'' in [-eps, eps]``."""
    worst = 0.0
    rows = []
    ok = True
    for e in eps_list:
        pair = build_entropy_pair(e)
        r = np.linspace(-3 * e, 3 * e, n_points)
        b = pair.beta(r)
        upper = float(np.max(b - np.abs(r)))
        lower = float(np.max(np.abs(r) - pair.M1 * e - b))
        outside = np.abs(r) > e
        supp = float(np.max(np.abs(pair.d2beta(r[outside])))) if outside.any() else 0.0
        good = upper <= 1e-12 and lower <= 1e-12 and supp == 0.0 and pair.M1 == 5 / 16
        ok &= good
        worst = max(worst, upper, lower)
        rows.append({"eps": e, "max_excess_over_abs": upper, "max_shortfall_below_lower": lower,
                     "d2beta_outside_support": supp, "M1": pair.M1})
    meta = {"per_eps": rows, "points": n_points, "rule": "both envelope violations <= 1e-12, M1 = 5/16"}
    return verify.VerificationReport("entropy_envelope", worst, 0.0, 1e-12, bool(ok), meta)


# ---------------------------------------------------------------------------
# Output


def _echo(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for sec, vals in cfg.values.items():
        cp.add_section(sec)
        for k, v in vals.items():
            cp.set(sec, k, " ".join(map(str, v)) if isinstance(v, list) else str(v))
    for role, ps in cfg.params.items():
        for k, v in sorted(ps.items()):
            cp.set("model", f"{role}.{k}", repr(v))
    from io import StringIO

    buf = StringIO()
    cp.write(buf)
    return buf.getvalue()


def report_document(cfg: ExperimentConfig, reports) -> str:
    doc = {"experiment": cfg.experiment, "name": cfg.label, "passed": all(r.passed for r in reports),
           "reports": [r.to_dict() for r in reports]}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_outputs(cfg: ExperimentConfig, reports, outdir, threads, started, runner=None) -> Path:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime(started))
    base = Path(outdir) / f"{cfg.label}-{stamp}"
    run_dir, k = base, 1
    while run_dir.exists():
        run_dir = Path(f"{base}-{k}")
        k += 1
    run_dir.mkdir(parents=True)
    fmts = cfg.get("output", "formats").split()
    if "json" in fmts:
        (run_dir / "report.json").write_text(report_document(cfg, reports))
    if "csv" in fmts:
        with open(run_dir / "summary.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(verify.CSV_COLUMNS)
            for r in reports:
                w.writerow(r.csv_row(cfg.experiment))
    (run_dir / "config.ini").write_text(_echo(cfg))
    meta = {"started_utc": stamp, "wall_seconds": round(time.time() - started, 3), "threads": threads,
            "source": cfg.source}
    (run_dir / "run_meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    fmt = cfg.get("output", "trajectories")
    if fmt != "none" and runner is not None:
        for (which, rung), ens in sorted(runner.ensembles.items()):
            for i in range(min(cfg.get("output", "trajectory_paths"), ens.n_paths)):
                export_trajectory(ens.trajectory(i), run_dir / f"traj-{which}{rung}-{i}.{fmt}", fmt)
    return run_dir


def run_experiment(cfg: ExperimentConfig, threads: int = 1):
    """Run the configured experiment; returns ``(reports, runner)``."""
    runner = _Runner(cfg, threads)
    return runner.run(), runner


# ---------------------------------------------------------------------------
# Entry point


def list_models() -> str:
    lines = []
    for kind, table in (("flux", models.FLUXES), ("noise", models.NOISES), ("u0", models.INITIAL_DATA)):
        lines.append(f"[{kind}]")
        for name in sorted(table):
            schema = table[name][1]
            ps = ", ".join(f"{k}={v!r}" for k, v in sorted(schema.items()))
            lines.append(f"  {name}({ps})")
    return "\n".join(lines) + "\n"


def _parser():
    ap = argparse.ArgumentParser(prog="stochscl", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    r.add_argument("--outdir", default=None)
    r.add_argument("--seed-override", type=int, default=None)
    v = sub.add_parser("validate", help="parse and check a config without running it")
    v.add_argument("config")
    v.add_argument("--seed-override", type=int, default=None)
    sub.add_parser("list-models", help="print registered fluxes, noises and initial data")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-models":
        sys.stdout.write(list_models())
        return 0
    started = time.time()
    try:
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg.values["monte_carlo"]["base_seed"] = args.seed_override
        if args.command == "validate":
            print(f"{args.config}: ok ({cfg.experiment})")
            return 0
        reports, runner = run_experiment(cfg, max(1, args.threads))
        outdir = args.outdir or cfg.get("output", "directory")
        run_dir = write_outputs(cfg, reports, outdir, args.threads, started, runner)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return 2
    except StabilityError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalBlowup as exc:
        print(f"numerical blow-up at step {exc.step}: {exc}", file=sys.stderr)
        return 3
    except StochSCLError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.property_name}: estimate={r.estimate:.6g} threshold={r.threshold:.6g}")
    print(f"wrote {run_dir}")
    return 0 if all(r.passed for r in reports) else 1
