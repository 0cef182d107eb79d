"""Command line front end: config-driven runs and acceptance reproduction.

    hoi sim <config.yaml>          run any experiment type
    hoi stability <config.yaml>    stability-report or two-atom experiments
    hoi convergence <config.yaml>  convergence experiments
    hoi reproduce <name>           one acceptance scenario (or "all")

Every run writes ``trajectory.csv`` (long format: t, population, entity_id,
value_kind, value), ``report.json`` and ``manifest.json`` into the output
directory.  Exit codes: 0 success, 1 failed reproduction, 2 bad configuration
or unknown name, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import ast
import csv
import datetime
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .circle import TWO_PI, circ_dist, wrap
from .coupling import (
    CouplingModel,
    FourierDifference,
    FourierGeneral,
    preset_bick3,
    preset_kuramoto,
    preset_phase_reduction,
    preset_skardal,
)
from .errors import ConfigurationError, DomainError, HoiError, ValidationError
from .meanfield import (
    NetworkState,
    convergence_study,
    dobrushin_check,
    evolve_density,
    trace_characteristics,
)
from .measures import (
    Atomic,
    GridDensity,
    circular_moments,
    density_from_function,
    dist_to_splay,
    dist_to_sync,
    equally_spaced,
    quantile_sample,
    uniform_density,
    von_mises_density,
)
from .nbody import PhaseState, integrate, integrate_particles, order_parameter
from .scenarios import REPRODUCE_NAMES, run_criterion
from .stability import (
    classify_trend,
    perturbation_experiment,
    reduce_fixed_populations,
    splay_report,
    sync_report,
    two_atom_steady_state,
)
from .wstrogatz import fit_constants, integrate_reduced, order_parameter_ws, potential_H

log = logging.getLogger("hoi")

EXPERIMENTS = (
    "simulate-finite",
    "simulate-meanfield",
    "ws-reduce",
    "stability-report",
    "dobrushin",
    "convergence",
    "two-atom",
)
COMMAND_EXPERIMENTS = {
    "sim": EXPERIMENTS,
    "stability": ("stability-report", "two-atom"),
    "convergence": ("convergence",),
}
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class SchemaError(Exception):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


# --------------------------------------------------------------------------
# schema helpers


_MISSING = object()


def _get(d, key, path, kind=None, default=_MISSING):
    full = f"{path}.{key}" if path else key
    if not isinstance(d, dict):
        raise SchemaError(path or "<root>", "expected a mapping")
    if key not in d:
        if default is _MISSING:
            raise SchemaError(full, "required field is missing")
        return default
    val = d[key]
    if kind is None:
        return val
    return _coerce(val, kind, full)


def _coerce(val, kind, path):
    if kind == "float":
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise SchemaError(path, f"expected a number, got {val!r}")
        if not math.isfinite(val):
            raise SchemaError(path, "must be finite")
        return float(val)
    if kind == "int":
        if isinstance(val, bool) or not isinstance(val, int):
            raise SchemaError(path, f"expected an integer, got {val!r}")
        return int(val)
    if kind == "str":
        if not isinstance(val, str):
            raise SchemaError(path, f"expected a string, got {val!r}")
        return val
    if kind == "bool":
        if not isinstance(val, bool):
            raise SchemaError(path, f"expected true or false, got {val!r}")
        return val
    if kind == "floats":
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            val = [val]
        if not isinstance(val, list) or not val:
            raise SchemaError(path, "expected a number or a non-empty list of numbers")
        return [_coerce(v, "float", f"{path}[{i}]") for i, v in enumerate(val)]
    if kind == "ints":
        if not isinstance(val, list) or not val:
            raise SchemaError(path, "expected a non-empty list of integers")
        return [_coerce(v, "int", f"{path}[{i}]") for i, v in enumerate(val)]
    if kind == "dict":
        if not isinstance(val, dict):
            raise SchemaError(path, "expected a mapping")
        return val
    if kind == "list":
        if not isinstance(val, list):
            raise SchemaError(path, "expected a list")
        return val
    raise AssertionError(kind)


def _positive(val, path, strict=True):
    if (val <= 0) if strict else (val < 0):
        raise SchemaError(path, "must be positive" if strict else "must be nonnegative")
    return val


def _choice(val, options, path):
    if val not in options:
        raise SchemaError(path, f"must be one of {', '.join(map(str, options))}; got {val!r}")
    return val


_FORMULA_NAMES = {
    "x": None, "pi": np.pi, "e": np.e,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "tanh": np.tanh, "arctan": np.arctan,
}
_FORMULA_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def _formula(expr: str, path: str):
    """Compile a density expression in ``x`` built from arithmetic and elementary functions."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise SchemaError(path, f"cannot parse formula: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _FORMULA_NODES):
            raise SchemaError(path, f"formula may not contain {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id not in _FORMULA_NAMES:
            raise SchemaError(path, f"unknown name {node.id!r} in formula")
        if isinstance(node, ast.Call) and not (
                isinstance(node.func, ast.Name) and callable(_FORMULA_NAMES.get(node.func.id))):
            raise SchemaError(path, "only elementary functions may be called")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise SchemaError(path, "formula constants must be numbers")
    code = compile(tree, path, "eval")
    names = {k: v for k, v in _FORMULA_NAMES.items() if v is not None}

    def f(x):
        return eval(code, {"__builtins__": {}}, dict(names, x=x))  # noqa: S307

    return f


# --------------------------------------------------------------------------
# model


def _complex(d, path):
    return complex(_get(d, "re", path, "float", 0.0), _get(d, "im", path, "float", 0.0))


def build_model(spec, path="model") -> CouplingModel:
    spec = _coerce(spec, "dict", path)
    if "preset" in spec:
        preset = _choice(_get(spec, "preset", path, "str"), ("kuramoto", "skardal", "bick3", "phase-reduction"),
                         f"{path}.preset")
        omega = _get(spec, "omega", path, "floats", [0.0])
        omega = omega[0] if len(omega) == 1 else omega
        if preset == "kuramoto":
            return preset_kuramoto(omega, _get(spec, "K", path, "float"))
        if preset == "skardal":
            return preset_skardal(omega, _get(spec, "K1", path, "float"), _get(spec, "K2", path, "float", 0.0),
                                  _get(spec, "K3", path, "float", 0.0))
        if preset == "bick3":
            h2 = {}
            for i, row in enumerate(_get(spec, "h2", path, "list")):
                p = f"{path}.h2[{i}]"
                h2[_positive(_get(row, "k", p, "int"), f"{p}.k")] = _complex(row, p)
            h4 = {}
            for i, row in enumerate(_get(spec, "h4", path, "list", [])):
                p = f"{path}.h4[{i}]"
                h4[(_get(row, "l", p, "int"), _positive(_get(row, "k", p, "int"), f"{p}.k", strict=False))] = \
                    _complex(row, p)
            return preset_bick3(omega, h2, h4, _get(spec, "K_plus", path, "float"),
                                _get(spec, "K_minus", path, "float"))
        xi = _get(spec, "xi", path, "floats")
        chi = _get(spec, "chi", path, "floats")
        return preset_phase_reduction(_get(spec, "lambda", path, "float"), _get(spec, "epsilon", path, "float"),
                                      xi, chi, omega)
    omega = _get(spec, "omega", path, "floats")
    pops = _get(spec, "populations", path, "list")
    if len(pops) != len(omega):
        raise SchemaError(f"{path}.populations", f"need {len(omega)} entries, one per omega")
    inters = []
    for s, pop in enumerate(pops):
        p = f"{path}.populations[{s}]"
        form = _choice(_get(pop, "form", p, "str", "difference"), ("difference", "general"), f"{p}.form")
        coeffs = {}
        for i, row in enumerate(_get(pop, "coefficients", p, "list")):
            q = f"{p}.coefficients[{i}]"
            vec = tuple(_get(row, "b" if form == "difference" else "c", q, "list"))
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in vec):
                raise SchemaError(q, "index vector entries must be integers")
            coeffs[(vec, _get(row, "l", q, "int"))] = _complex(row, q)
        if form == "difference":
            r = _get(pop, "r", p, "list")
            inters.append(FourierDifference(tuple(r), coeffs))
        else:
            inters.append(FourierGeneral(tuple(_get(pop, "s", p, "list")), coeffs))
    name = _get(spec, "name", path, "str", "fourier")
    return CouplingModel(tuple(omega), tuple(inters), name=name)


# --------------------------------------------------------------------------
# initial conditions


def _density(spec, path, cells):
    kind = _get(spec, "kind", path, "str")
    if kind == "splay":
        return uniform_density(cells)
    if kind == "von-mises":
        kappa = _positive(_get(spec, "kappa", path, "float"), f"{path}.kappa", strict=False)
        return von_mises_density(kappa, _get(spec, "loc", path, "float", 0.0), cells)
    if kind == "formula":
        return density_from_function(_formula(_get(spec, "density", path, "str"), f"{path}.density"), cells)
    raise SchemaError(f"{path}.kind", f"{kind!r} has no density representation")


def build_population(spec, path, rng, default_repr, cells):
    """One population measure from its spec."""
    spec = _coerce(spec, "dict", path)
    kind = _choice(_get(spec, "kind", path, "str"), ("atoms", "sync", "splay", "von-mises", "formula"),
                   f"{path}.kind")
    rep = _choice(_get(spec, "representation", path, "str", default_repr), ("atoms", "density"),
                  f"{path}.representation")
    cells = _positive(_get(spec, "cells", path, "int", cells), f"{path}.cells")
    if kind == "atoms":
        pos = _get(spec, "positions", path, "floats")
        w = _get(spec, "weights", path, "floats", None)
        if w is not None and len(w) != len(pos):
            raise SchemaError(f"{path}.weights", "needs one weight per position")
        return Atomic.equal_weights(pos) if w is None else Atomic(pos, w)
    if kind == "sync":
        at = _get(spec, "at", path, "float", 0.0)
        n = _positive(_get(spec, "N", path, "int", 1), f"{path}.N")
        return Atomic.equal_weights(np.full(n, at))
    if rep == "density":
        return _density(spec, path, cells)
    n = _positive(_get(spec, "N", path, "int"), f"{path}.N")
    if kind == "splay":
        return equally_spaced(n, _get(spec, "offset", path, "float", 0.0))
    sampling = _choice(_get(spec, "sampling", path, "str", "quantile"), ("quantile", "random"), f"{path}.sampling")
    if sampling == "random" and kind == "von-mises":
        kappa = _get(spec, "kappa", path, "float")
        return Atomic.equal_weights(wrap(rng.vonmises(_get(spec, "loc", path, "float", 0.0), kappa, n)))
    dens = _density(spec, path, max(cells, 4096))
    if sampling == "quantile":
        return quantile_sample(dens, n)
    c = dens.cumulative() / dens.mass
    u = rng.uniform(size=n)
    return Atomic.equal_weights(np.interp(u, c, dens.edges))


def build_initial(spec, path, model, rng, default_repr, cells) -> NetworkState:
    spec = _coerce(spec, "dict", path)
    pops = _get(spec, "populations", path, "list")
    if len(pops) != model.M:
        raise SchemaError(f"{path}.populations", f"model has {model.M} populations, got {len(pops)}")
    return NetworkState(tuple(build_population(p, f"{path}.populations[{i}]", rng, default_repr, cells)
                              for i, p in enumerate(pops)))


# --------------------------------------------------------------------------
# config


def load_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise SchemaError("<file>", f"config {path} does not exist")
    try:
        cfg = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SchemaError("<file>", f"invalid YAML: {exc}") from None
    return validate_config(cfg)


def validate_config(cfg) -> dict:
    """Check the top-level and solver fields; sections are checked when they are built."""
    if not isinstance(cfg, dict):
        raise SchemaError("<root>", "expected a mapping")
    known = {"name", "experiment", "seed", "model", "initial", "compare", "solver", "analysis", "output",
             "budget_seconds", "description"}
    extra = sorted(set(cfg) - known)
    if extra:
        raise SchemaError(extra[0], "unknown top-level field")
    _choice(_get(cfg, "experiment", "", "str"), EXPERIMENTS, "experiment")
    _get(cfg, "seed", "", "int")
    _get(cfg, "model", "", "dict")
    solver = _get(cfg, "solver", "", "dict")
    if cfg["experiment"] != "two-atom" and cfg["experiment"] != "stability-report":
        _positive(_get(solver, "dt", "solver", "float"), "solver.dt")
        _positive(_get(solver, "T", "solver", "float"), "solver.T", strict=False)
    else:
        for key in ("dt", "T"):
            if key in solver:
                _positive(_get(solver, key, "solver", "float"), f"solver.{key}", strict=key == "dt")
    if "stride" in solver:
        _positive(_get(solver, "stride", "solver", "int"), "solver.stride")
    if "grid" in solver:
        _positive(_get(solver, "grid", "solver", "int"), "solver.grid")
    if "method" in solver:
        _choice(_get(solver, "method", "solver", "str"), ("rk4", "heun"), "solver.method")
    if "budget_seconds" in cfg:
        _positive(_get(cfg, "budget_seconds", "", "float"), "budget_seconds")
    for key in ("analysis", "output"):
        cfg[key] = _get(cfg, key, "", "dict", {}) or {}
    return cfg


# --------------------------------------------------------------------------
# experiments


class Recorder:
    """Rows of the long-format trajectory table."""

    def __init__(self):
        self.rows = []

    def add(self, t, population, entity, kind, value):
        self.rows.append((float(t), int(population), int(entity), kind, float(value)))

    def write(self, path: Path):
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "population", "entity_id", "value_kind", "value"])
            for t, p, e, k, v in self.rows:
                w.writerow([repr(t), p, e, k, repr(v)])

    def kinds(self):
        return sorted({(r[1], r[3]) for r in self.rows})


def _r_of(mu) -> float:
    return float(abs(circular_moments(mu, 1)[1]))


def _solver(cfg):
    s = cfg["solver"]
    return (s.get("dt"), s.get("T"), int(s.get("stride", 1)), int(s.get("grid", 256)), s.get("method", "rk4"))


def run_simulate_finite(cfg, model, rng, rec):
    dt, T, stride, cells, method = _solver(cfg)
    init = build_initial(_get(cfg, "initial", "", "dict"), "initial", model, rng, "atoms", cells)
    if not all(isinstance(mu, Atomic) for mu in init.measures):
        raise SchemaError("initial.populations", "simulate-finite needs atomic populations")
    rhs = _choice(cfg["solver"].get("rhs", "auto"), ("auto", "naive", "fast"), "solver.rhs")
    phases_out = _coerce(cfg["output"].get("phases", False), "bool", "output.phases")
    traj = integrate(model, PhaseState.from_measures(init.measures), dt, T, method=method, rhs=rhs, stride=stride)
    for t, st in traj.samples:
        for s in range(model.M):
            r, a = order_parameter(st, s)
            rec.add(t, s, -1, "r", r)
            rec.add(t, s, -1, "alpha", a)
            if phases_out:
                for k, ph in enumerate(st.phases[s]):
                    rec.add(t, s, k, "phase", ph)
    final = [order_parameter(traj.final, s) for s in range(model.M)]
    return {"N": [p.size for p in traj.final.phases], "final_r": [r for r, _ in final],
            "final_alpha": [a for _, a in final], "samples": len(traj)}


def _distance_rows(rec, states, M):
    sync = np.zeros((len(states), M))
    splay = np.zeros((len(states), M))
    for i, st in enumerate(states):
        for s, mu in enumerate(st.measures):
            sync[i, s] = dist_to_sync(mu)[0]
            splay[i, s] = dist_to_splay(mu)
            rec.add(st.time, s, -1, "dist_to_sync", sync[i, s])
            rec.add(st.time, s, -1, "dist_to_splay", splay[i, s])
            rec.add(st.time, s, -1, "r", _r_of(mu))
    return sync, splay


def run_simulate_meanfield(cfg, model, rng, rec):
    dt, T, stride, cells, method = _solver(cfg)
    init = build_initial(_get(cfg, "initial", "", "dict"), "initial", model, rng, "density", cells)
    has_density = any(isinstance(mu, GridDensity) for mu in init.measures)
    engine = _choice(cfg["solver"].get("engine", "density" if has_density else "characteristics"),
                     ("density", "characteristics"), "solver.engine")
    if engine == "density":
        if not has_density:
            raise SchemaError("solver.engine", "the density engine needs at least one density population")
        states = evolve_density(model, init, dt, T, stride=stride)
    else:
        n_q = _positive(_get(cfg["solver"], "quantile_atoms", "solver", "int", 512), "solver.quantile_atoms")
        _, states = trace_characteristics(model, init, None, dt, T, method=method, n_quantile=n_q, stride=stride)
    if _coerce(cfg["output"].get("density", False), "bool", "output.density"):
        for st in states:
            for s, mu in enumerate(st.measures):
                if isinstance(mu, GridDensity):
                    for j, v in enumerate(mu.values):
                        rec.add(st.time, s, j, "density", v)
    sync, splay = _distance_rows(rec, states, model.M)
    times = np.array([st.time for st in states])
    trend = {}
    for name, d in (("dist_to_sync", sync), ("dist_to_splay", splay)):
        slope, verdict = classify_trend(times, d.sum(axis=1))
        trend[name] = {"initial": float(d[0].sum()), "final": float(d[-1].sum()), "slope": slope,
                       "verdict": verdict}
    return {"engine": engine, "samples": len(states), "trend": trend}


def run_ws_reduce(cfg, model, rng, rec):
    dt, T, stride, cells, method = _solver(cfg)
    init = build_initial(_get(cfg, "initial", "", "dict"), "initial", model, rng, "atoms", cells)
    mu = init.measures[0]
    if not isinstance(mu, Atomic) or model.M != 1:
        raise SchemaError("initial.populations", "ws-reduce needs a single atomic population")
    state = fit_constants(mu.positions)
    times, states = integrate_reduced(state, model, dt, T, stride=stride)
    for t, st in zip(times, states):
        rec.add(t, 0, -1, "gamma", st.gamma)
        rec.add(t, 0, -1, "Psi", st.Psi)
        rec.add(t, 0, -1, "Theta", st.Theta)
        rec.add(t, 0, -1, "r", order_parameter_ws(st))
        rec.add(t, 0, -1, "H", potential_H(st))
    out = {"N": state.N, "r0": order_parameter_ws(states[0]), "final_r": order_parameter_ws(states[-1]),
           "final_gamma": states[-1].gamma, "final_H": potential_H(states[-1])}
    if _coerce(cfg["analysis"].get("compare_full", False), "bool", "analysis.compare_full"):
        traj = integrate(model, PhaseState((mu.positions,)), dt, T, method=method, stride=stride)
        for t, st in traj.samples:
            rec.add(t, 0, -1, "r_full", order_parameter(st, 0)[0])
        out["final_r_full"] = order_parameter(traj.final, 0)[0]
    return out


def _fixed_flags(spec, path, M):
    flags = _get(spec, "fixed", path, "list")
    if len(flags) != M:
        raise SchemaError(f"{path}.fixed", f"need {M} entries")
    for i, f in enumerate(flags):
        _choice(f, ("free", "sync", "splay"), f"{path}.fixed[{i}]")
    return flags


def run_stability_report(cfg, model, rng, rec):
    an = cfg["analysis"]
    out = {}
    if "reduce" in an:
        flags = _fixed_flags(_coerce(an["reduce"], "dict", "analysis.reduce"), "analysis.reduce", model.M)
        model = reduce_fixed_populations(model, flags)
        out["reduced_to"] = {"fixed": flags, "M": model.M, "omega": list(model.omega)}
        if model.M == 0:
            return out
    if model.is_difference_form:
        out["sync"] = sync_report(model).as_dict()
    k_max = _positive(_get(an, "k_max", "analysis", "int", 4), "analysis.k_max")
    if model.is_difference_form:
        measure = _get(an, "measure_rates", "analysis", "bool", False)
        out["splay"] = splay_report(model, k_max, measure=measure).as_dict()
    if "perturbation" in an:
        p = _coerce(an["perturbation"], "dict", "analysis.perturbation")
        path = "analysis.perturbation"
        base = _choice(_get(p, "base", path, "str"), ("sync", "splay"), f"{path}.base")
        kind = _choice(_get(p, "kind", path, "str"), ("bump", "atom_split"), f"{path}.kind")
        if kind == "bump":
            pert = {"kind": kind, "epsilon": _positive(_get(p, "epsilon", path, "float"), f"{path}.epsilon"),
                    "mode": _get(p, "mode", path, "int", 1)}
        else:
            pert = {"kind": kind, "n": _get(p, "n", path, "int"), "psi": _get(p, "psi", path, "float")}
        dt = _positive(_get(cfg["solver"], "dt", "solver", "float"), "solver.dt")
        T = _positive(_get(cfg["solver"], "T", "solver", "float"), "solver.T")
        res = perturbation_experiment(model, base, pert, T, dt, population=_get(p, "population", path, "int", 0),
                                      stride=int(cfg["solver"].get("stride", 10)),
                                      n_cells=int(cfg["solver"].get("grid", 256)))
        kind_name = "dist_to_sync" if base == "sync" else "dist_to_splay"
        for i, t in enumerate(res.times):
            for s in range(res.distances.shape[1]):
                rec.add(t, s, -1, kind_name, res.distances[i, s])
        out["perturbation"] = res.as_dict()
    return out


def run_dobrushin(cfg, model, rng, rec):
    dt, T, stride, cells, method = _solver(cfg)
    an = cfg["analysis"]
    pairs = []
    if "initial" in cfg:
        a = build_initial(cfg["initial"], "initial", model, rng, "atoms", cells)
        b = build_initial(_get(cfg, "compare", "", "dict"), "compare", model, rng, "atoms", cells)
        pairs.append((a, b))
    else:
        n_pairs = _positive(_get(an, "random_pairs", "analysis", "int"), "analysis.random_pairs")
        n_max = _positive(_get(an, "max_atoms", "analysis", "int", 8), "analysis.max_atoms")

        def draw():
            n = int(rng.integers(1, n_max + 1))
            return Atomic(rng.uniform(0, TWO_PI, n), rng.dirichlet(np.ones(n)))

        for _ in range(n_pairs):
            pairs.append((NetworkState(tuple(draw() for _ in range(model.M))),
                          NetworkState(tuple(draw() for _ in range(model.M)))))
    violations, tightest = 0, 0.0
    for i, (a, b) in enumerate(pairs):
        rep = dobrushin_check(model, a, b, T, dt, stride=stride, method=method)
        for t, w, bound in zip(rep.times, rep.w, rep.bound):
            rec.add(t, -1, i, "w", w)
            rec.add(t, -1, i, "bound", bound)
        violations += rep.violations
        tightest = max(tightest, float(np.max(rep.w / np.maximum(rep.bound, 1e-300))))
    return {"pairs": len(pairs), "rate": model.L * (model.sbar_sum + 1), "violations": violations,
            "max_w_over_bound": tightest, "satisfied": violations == 0}


def run_convergence(cfg, model, rng, rec):
    dt, T, stride, cells, method = _solver(cfg)
    init = build_initial(_get(cfg, "initial", "", "dict"), "initial", model, rng, "density", cells)
    Ns = _get(cfg["analysis"], "N", "analysis", "ints")
    density_dt = cfg["solver"].get("density_dt")
    if density_dt is not None:
        density_dt = _positive(_coerce(density_dt, "float", "solver.density_dt"), "solver.density_dt")
    tab = convergence_study(model, init, Ns, T, dt, density_dt=density_dt, method=method)
    for n, w, f in tab.rows():
        rec.add(T, -1, n, "w1", w)
        rec.add(T, -1, n, "floor", f)
    return {"rows": [{"N": n, "w1": w, "floor": f} for n, w, f in tab.rows()],
            "strictly_decreasing": tab.strictly_decreasing, "final_over_floor": float(tab.w1[-1] / tab.floor[-1])}


def run_two_atom(cfg, model, rng, rec):
    an = cfg["analysis"]
    ns = _get(an, "n", "analysis", "ints")
    T = cfg["solver"].get("T")
    dt = cfg["solver"].get("dt", 1e-2)
    rows = []
    for n in ns:
        if n < 2:
            raise SchemaError("analysis.n", "entries must be >= 2")
        st = two_atom_steady_state(model, n)
        row = {"n": n, "psi0": st.psi0, "residual": st.residual, "roots": st.roots}
        if st.found:
            rec.add(0.0, 0, n, "psi0", st.psi0)
            rec.add(0.0, 0, n, "residual", st.residual)
            if T:
                mu = Atomic([0.0, st.psi0], [1 - 1 / n, 1 / n])
                _, samples = integrate_particles(model, [mu.positions], [mu.weights], dt, T)
                row["max_deviation"] = max(float(circ_dist(wrap(a[0][1] - a[0][0]), st.psi0)) for a, _ in samples)
        rows.append(row)
    return {"rows": rows}


RUNNERS = {
    "simulate-finite": run_simulate_finite,
    "simulate-meanfield": run_simulate_meanfield,
    "ws-reduce": run_ws_reduce,
    "stability-report": run_stability_report,
    "dobrushin": run_dobrushin,
    "convergence": run_convergence,
    "two-atom": run_two_atom,
}


# --------------------------------------------------------------------------
# output


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _gnuplot(rec: Recorder, path: Path):
    lines = ['set datafile separator ","', 'set xlabel "t"', "set key outside", "plot \\"]
    series = [(p, k) for p, k in rec.kinds() if k not in ("phase", "density")]
    parts = [f"  \"< awk -F, '$2=={p} && $4==\\\"{k}\\\"' trajectory.csv\" using 1:5 with lines "
             f"title \"{k} (population {p})\"" for p, k in series]
    lines.append(", \\\n".join(parts))
    path.write_text("\n".join(lines) + "\n")


def _manifest(cfg, config_path, wall):
    return {
        "config": cfg,
        "config_path": str(config_path),
        "versions": {"hoi": __version__, "python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__, "pyyaml": yaml.__version__},
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "wall_time_seconds": wall,
    }


def run_config(config_path, out_dir=None, stride=None, allowed=EXPERIMENTS) -> tuple:
    """Run one config; returns (report, output directory)."""
    cfg = load_config(config_path)
    if cfg["experiment"] not in allowed:
        raise SchemaError("experiment", f"this command runs {', '.join(allowed)}; got {cfg['experiment']!r}")
    if stride is not None:
        cfg["solver"]["stride"] = stride
    out = Path(out_dir) if out_dir else Path("hoi-out") / Path(config_path).stem
    rng = np.random.default_rng(cfg["seed"])
    t0 = time.perf_counter()
    model = build_model(cfg["model"])
    rec = Recorder()
    result = RUNNERS[cfg["experiment"]](cfg, model, rng, rec)
    wall = time.perf_counter() - t0
    report = {"name": cfg.get("name", Path(config_path).stem), "experiment": cfg["experiment"],
              "model": model.name, "model_hash": model.fingerprint(), "result": result}
    out.mkdir(parents=True, exist_ok=True)
    rec.write(out / "trajectory.csv")
    _dump(report, out / "report.json")
    _dump(_manifest(cfg, config_path, wall), out / "manifest.json")
    if _coerce(cfg["output"].get("gnuplot", False), "bool", "output.gnuplot") and rec.rows:
        _gnuplot(rec, out / "plot.gp")
    log.info("wrote %s (%.1fs)", out, wall)
    return report, out


def reproduce(name, out_dir=None) -> int:
    names = list(REPRODUCE_NAMES) if name == "all" else [name]
    if any(n not in REPRODUCE_NAMES for n in names):
        print(f"error: unknown scenario {name!r}; choose from all, {', '.join(REPRODUCE_NAMES)}", file=sys.stderr)
        return EXIT_CONFIG
    results = []
    for n in names:
        res = run_criterion(n)
        print(res.line())
        sys.stdout.flush()
        results.append(res)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _dump([r.as_dict() for r in results], out / "reproduce.json")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoi", description="Phase oscillator networks with higher-order coupling")
    parser.add_argument("--version", action="version", version=f"hoi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, helptext in (("sim", "run a scenario config"), ("stability", "run a stability config"),
                          ("convergence", "run a convergence config")):
        p = sub.add_parser(cmd, help=helptext)
        p.add_argument("config")
        p.add_argument("--out", help="output directory (default hoi-out/<config name>)")
        p.add_argument("--stride", type=int, help="record every n-th step (overrides solver.stride)")
        p.add_argument("--quiet", action="store_true")
    p = sub.add_parser("reproduce", help="run an acceptance scenario against its tolerances")
    p.add_argument("name", help=f"one of: all, {', '.join(REPRODUCE_NAMES)}")
    p.add_argument("--out", help="write reproduce.json here")
    p.add_argument("--stride", type=int, help="accepted for symmetry; scenarios use fixed strides")
    p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.stride is not None and args.stride < 1:
        print("error: --stride must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "reproduce":
            return reproduce(args.name, args.out)
        report, out = run_config(args.config, args.out, args.stride, COMMAND_EXPERIMENTS[args.command])
        if not args.quiet:
            print(json.dumps(report["result"], indent=2, sort_keys=True, default=_json_default))
        return EXIT_OK
    except SchemaError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigurationError, ValidationError, DomainError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HoiError as exc:
        print(f"error: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
