"""Acceptance scenarios with their tolerances and runtime budgets.

Each scenario is a function returning a ``CriterionResult``; ``CRITERIA`` maps
the scenario key to (number, title, budget in seconds, function).  The command
line ``reproduce`` subcommand and the acceptance tests both run from here.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .circle import TWO_PI, circ_dist, wrap
from .coupling import (
    CouplingModel,
    FourierDifference,
    preset_bick3,
    preset_kuramoto,
    preset_skardal,
)
from .meanfield import (
    NetworkState,
    convergence_study,
    dobrushin_check,
    evolve_density,
    to_rotating_frame,
    trace_characteristics,
)
from .measures import (
    Atomic,
    dist_to_splay,
    dist_to_sync,
    equally_spaced,
    pushforward,
    two_atom,
    uniform_density,
    von_mises_density,
    w1_bruteforce_oracle,
    w1_circle,
)
from .nbody import PhaseState, integrate, integrate_particles, order_parameter, rhs_fast, rhs_naive
from .stability import (
    empirical_mode_rate,
    perturbation_experiment,
    reduce_fixed_populations,
    splay_report,
    sync_report,
    two_atom_steady_state,
)
from .wstrogatz import dH_check, fit_constants, integrate_reduced, order_parameter_ws, potential_H

__all__ = ["CriterionResult", "CRITERIA", "REPRODUCE_NAMES", "run_criterion", "bick_example"]


@dataclass
class CriterionResult:
    key: str
    number: int | None
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float = float("inf")

    @property
    def within_budget(self) -> bool:
        return self.runtime <= self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        num = f"[{self.number}] " if self.number is not None else ""
        extra = "" if self.within_budget else " over budget"
        return f"{tag} {num}{self.key}: {self.title} ({self.runtime:.1f}s of {self.budget:g}s{extra})"

    def as_dict(self) -> dict:
        return {
            "key": self.key,
            "number": self.number,
            "title": self.title,
            "passed": self.ok,
            "checks_passed": self.passed,
            "runtime": self.runtime,
            "budget": self.budget,
            "details": _plain(self.details),
        }


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def bick_example(omega=1.0, K_plus=0.8, K_minus=0.4) -> CouplingModel:
    """Three-population h2/h4 model used throughout the scenarios."""
    h2 = {1: 0.2 - 0.4j, 2: 0.05j}
    h4 = {(0, 1): 0.1 - 0.3j, (1, 1): 0.15 + 0.1j, (-1, 1): -0.05j, (1, 0): 0.1}
    return preset_bick3(omega, h2, h4, K_plus, K_minus)


def _random_atomic(rng, n_max=6) -> Atomic:
    n = int(rng.integers(1, n_max + 1))
    return Atomic(rng.uniform(0, TWO_PI, n), rng.dirichlet(np.ones(n)))


def _spread(x) -> float:
    x = np.asarray(x)
    return float(np.max(circ_dist(x, x[0])))


# --------------------------------------------------------------------------
# 1, 2: metric


def check_w1_oracle(seed: int = 0, n_pairs: int = 200) -> tuple:
    rng = np.random.default_rng(seed)
    errs = [abs(w1_circle(a, b) - w1_bruteforce_oracle(a, b))
            for a, b in ((_random_atomic(rng), _random_atomic(rng)) for _ in range(n_pairs))]
    worst = max(errs)
    return worst < 1e-9, {"pairs": n_pairs, "max_abs_diff": worst, "tol": 1e-9}


def _circle_map(rng):
    shift, amp, k = rng.uniform(0, TWO_PI), rng.uniform(-0.9, 0.9), int(rng.integers(1, 4))
    return lambda x: x + shift + amp / k * np.sin(k * x)


def check_pushforward_bound(seed: int = 1, n_cases: int = 100) -> tuple:
    rng = np.random.default_rng(seed)
    tol = 1e-10
    probe = np.linspace(0, TWO_PI, 4097)
    tri = rot = push = 0.0
    for _ in range(n_cases):
        a, b, c = (_random_atomic(rng) for _ in range(3))
        tri = max(tri, w1_circle(a, c) - w1_circle(a, b) - w1_circle(b, c))
        theta = rng.uniform(0, TWO_PI)
        rot = max(rot, abs(w1_circle(a.rotate(theta), b.rotate(theta)) - w1_circle(a, b)))
        h1, h2 = _circle_map(rng), _circle_map(rng)
        pts = np.concatenate([probe, a.positions])
        sup = float(np.max(circ_dist(wrap(h1(pts)), wrap(h2(pts)))))
        push = max(push, w1_circle(pushforward(a, h1), pushforward(a, h2)) - sup)
    ok = tri <= tol and rot <= tol and push <= tol
    return ok, {"cases": n_cases, "triangle_excess": tri, "rotation_defect": rot, "pushforward_excess": push,
                "tol": tol}


# --------------------------------------------------------------------------
# 3: invariant subspaces


def _invariance_run(model, measures, sync_pops, splay_pops, T, dt):
    states = evolve_density(model, NetworkState(tuple(measures)), dt, T, stride=10)
    spread = dev = 0.0
    for st in states:
        for s in sync_pops:
            spread = max(spread, _spread(st.measures[s].positions))
        for s in splay_pops:
            dev = max(dev, float(np.max(np.abs(st.measures[s].values - 1.0 / TWO_PI))))
    return spread, dev


def check_invariant_subspaces(T: float = 10.0, dt: float = 1e-2, n_cells: int = 256) -> tuple:
    sync = Atomic.equal_weights(np.full(16, 1.3))
    bump = von_mises_density(1.5, 2.0, n_cells)
    unif = uniform_density(n_cells)
    bick = bick_example()
    cases = {
        "kuramoto S": (preset_kuramoto(0.5, 1.0), [sync], [0], []),
        "kuramoto D": (preset_kuramoto(0.5, 1.0), [unif], [], [0]),
        "skardal S": (preset_skardal(0.5, 1.0, 0.0, -4.0), [sync], [0], []),
        "skardal D": (preset_skardal(0.5, 1.0, 0.0, -4.0), [unif], [], [0]),
        "bick SSS": (bick, [sync, sync, sync], [0, 1, 2], []),
        "bick DDD": (bick, [unif, unif, unif], [], [0, 1, 2]),
        "bick S mu D": (bick, [sync, bump, unif], [0], [2]),
        "bick D S mu": (bick, [unif, sync, bump], [1], [0]),
    }
    out = {}
    worst_spread = worst_dev = 0.0
    for name, (model, measures, sp, dp) in cases.items():
        spread, dev = _invariance_run(model, measures, sp, dp, T, dt)
        out[name] = {"sync_spread": spread, "uniform_deviation": dev}
        worst_spread, worst_dev = max(worst_spread, spread), max(worst_dev, dev)
    ok = worst_spread < 1e-10 and worst_dev < 1e-8
    return ok, {"cases": out, "max_sync_spread": worst_spread, "max_uniform_deviation": worst_dev}


# --------------------------------------------------------------------------
# 4: Dobrushin estimate


def check_dobrushin(seed: int = 4, n_pairs: int = 20, T: float = 2.0, dt: float = 1e-2) -> tuple:
    rng = np.random.default_rng(seed)
    presets = {
        "kuramoto": preset_kuramoto(0.5, 1.0),
        "skardal": preset_skardal(0.3, 1.0, 0.5, -1.0),
        "bick": bick_example(),
    }
    out = {}
    total = 0
    for name, model in presets.items():
        violations, tightest = 0, 0.0
        for _ in range(n_pairs):
            mu = NetworkState(tuple(_random_atomic(rng, 8) for _ in range(model.M)))
            nu = NetworkState(tuple(_random_atomic(rng, 8) for _ in range(model.M)))
            rep = dobrushin_check(model, mu, nu, T, dt, stride=10)
            violations += rep.violations
            tightest = max(tightest, float(np.max(rep.w / rep.bound)))
        out[name] = {"violations": violations, "max_w_over_bound": tightest, "rate": model.L * (model.sbar_sum + 1)}
        total += violations
    return total == 0, {"pairs_per_preset": n_pairs, "presets": out, "violations": total}


# --------------------------------------------------------------------------
# 5: pairwise plus three-body sine example


def _example_initial_conditions(seed, N, count=5):
    rng = np.random.default_rng(seed)
    kappas = np.linspace(0.15, 0.9, count)
    out = []
    for kappa in kappas:
        while True:
            ph = wrap(rng.vonmises(0.0, kappa, N))
            r0 = order_parameter(PhaseState((ph,)), 0)[0]
            if 0.05 < r0 < 0.45:
                break
        out.append(ph)
    return out


def check_example_3_1(seed: int = 31, N: int = 1024, T: float = 200.0, dt: float = 0.05,
                      K1: float = 1.0, K3: float = -4.0, h_check: int = 40) -> tuple:
    model = preset_skardal(0.0, K1, 0.0, K3)
    tol_r, tol_mono, tol_rel, q_min = 1e-3, 1e-8, 1e-3, 1e-3
    runs = []
    ok = True
    for ph in _example_initial_conditions(seed, N):
        r0 = order_parameter(PhaseState((ph,)), 0)[0]
        full = integrate(model, PhaseState((ph,)), dt, T, rhs="fast", stride=int(round(T / dt)))
        r_full = order_parameter(full.final, 0)[0]
        times, states = integrate_reduced(fit_constants(ph), model, dt, T)
        r = np.array([order_parameter_ws(s) for s in states])
        H = np.array([potential_H(s) for s in states])
        q = K1 + K3 * r * r
        dH = np.diff(H) / np.diff(times)
        mask = (q[:-1] > q_min) & (q[1:] > q_min)
        mono = float(np.min(dH[mask])) if mask.any() else 0.0
        rel = 0.0
        for s in states[:: max(1, len(states) // h_check)]:
            lhs, rhs = dH_check(s, model)
            rr = order_parameter_ws(s)
            if abs(K1 + K3 * rr * rr) > q_min:
                rel = max(rel, abs(lhs - rhs) / abs(rhs))
        row = {"r0": r0, "r_full_T": r_full, "r_reduced_T": float(r[-1]), "min_dH": mono, "max_rel_dH": rel}
        row_ok = (abs(r_full - 0.5) < tol_r and abs(r[-1] - 0.5) < tol_r and mono >= -tol_mono
                  and rel < tol_rel)
        ok = ok and row_ok
        runs.append(row)
    return ok, {"runs": runs, "N": N, "T": T, "dt": dt}


# --------------------------------------------------------------------------
# 6: sync stability


def check_skardal_sync(T: float = 20.0, dt: float = 1e-2, epsilon: float = 0.1) -> tuple:
    out = {}
    ok = True
    for K1, K3, expect in ((2.0, -1.0, True), (1.0, -4.0, False)):
        model = preset_skardal(0.0, K1, 0.0, K3)
        a = sync_report(model).a[0]
        res = perturbation_experiment(model, "sync", {"kind": "bump", "epsilon": epsilon}, T, dt, stride=50)
        ratio = float(res.total[-1] / res.total[0])
        contracts = ratio < 1e-3
        ok = ok and abs(a - (K1 + K3)) < 1e-12 and contracts == expect
        out[f"K1={K1:g},K3={K3:g}"] = {"a": a, "initial": float(res.total[0]), "final": float(res.total[-1]),
                                       "ratio": ratio, "verdict": res.verdict, "expected_contracting": expect}
    return ok, out


# --------------------------------------------------------------------------
# 7: two-atom steady states


def check_steady_states(ns=(4, 8, 16), T: float = 10.0, dt: float = 1e-2) -> tuple:
    model = preset_kuramoto(0.0, 1.0)
    rows = []
    ok = True
    for n in ns:
        st = two_atom_steady_state(model, n)
        if not st.found:
            rows.append({"n": n, "psi0": None})
            ok = False
            continue
        mu = two_atom(n, st.psi0)
        _, samples = integrate_particles(model, [mu.positions], [mu.weights], dt, T)
        dev = max(float(circ_dist(wrap(a[0][1] - a[0][0]), st.psi0)) for a, _ in samples)
        rows.append({"n": n, "psi0": st.psi0, "residual": st.residual, "max_deviation": dev})
        ok = ok and st.residual < 1e-10 and dev < 1e-6
    gaps = [circ_dist(r["psi0"], np.pi) for r in rows if r.get("psi0") is not None]
    trend = len(gaps) == len(ns) and all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))
    return ok and trend, {"rows": rows, "distance_to_pi": gaps, "monotone_trend": trend}


# --------------------------------------------------------------------------
# 8: splay mode rates


def check_splay_rates(T: float = 10.0, dt: float = 1e-2, epsilon: float = 1e-3) -> tuple:
    km = preset_kuramoto(0.0, -1.0)
    pred1 = float(splay_report(km, 1).growth_rates[0, 0])
    meas1 = empirical_mode_rate(km, 0, 1, epsilon, T, dt)
    m2 = CouplingModel((0.0,), (FourierDifference((), {((), 1): 0.5j, ((), 2): 0.25j}),), name="kuramoto-2")
    pred2 = float(splay_report(m2, 2).growth_rates[0, 1])
    meas2 = empirical_mode_rate(m2, 0, 2, epsilon, T, dt)
    rel1 = abs(meas1 - pred1) / abs(pred1)
    rel2 = abs(meas2 - pred2) / abs(pred2)
    ok = abs(pred1 + 0.5) < 1e-14 and rel1 < 0.1 and rel2 < 0.1
    return ok, {"mode1": {"predicted": pred1, "measured": meas1, "rel_err": rel1},
                "mode2": {"predicted": pred2, "measured": meas2, "rel_err": rel2}}


# --------------------------------------------------------------------------
# 9: mean-field convergence


def check_convergence(N_list=(16, 32, 64, 128), T: float = 1.0, dt: float = 1e-3, n_cells: int = 256) -> tuple:
    model = preset_kuramoto(0.0, 1.0)
    tab = convergence_study(model, NetworkState((von_mises_density(2.0, 1.0, n_cells),)), N_list, T, dt)
    ratio = float(tab.w1[-1] / tab.floor[-1])
    ok = tab.strictly_decreasing and ratio < 2.0
    return ok, {"rows": [{"N": n, "w1": w, "floor": f} for n, w, f in tab.rows()],
                "strictly_decreasing": tab.strictly_decreasing, "final_over_floor": ratio}


# --------------------------------------------------------------------------
# 10: fast versus naive right-hand side


def check_performance(seed: int = 10, N_check: int = 32, N_speed: int = 256, subset: int = 4,
                      repeats: int = 5) -> tuple:
    rng = np.random.default_rng(seed)
    models = {"skardal": preset_skardal(0.3, 1.0, 0.5, -1.0), "skardal K2=0": preset_skardal(0.3, 1.0, 0.0, -4.0),
              "bick": bick_example()}
    agree = {}
    for name, model in models.items():
        st = PhaseState(tuple(rng.uniform(0, TWO_PI, N_check) for _ in range(model.M)))
        a, b = rhs_naive(model, st), rhs_fast(model, st)
        agree[name] = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
    model = models["skardal"]
    st = PhaseState((rng.uniform(0, TWO_PI, N_speed),))
    t0 = time.perf_counter()
    rhs_naive(model, st, subset=subset)
    naive = (time.perf_counter() - t0) * N_speed / subset
    fast = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        rhs_fast(model, st)
        fast.append(time.perf_counter() - t0)
    speedup = naive / float(np.median(fast))
    ok = all(v < 1e-12 for v in agree.values()) and speedup > 50
    return ok, {"max_abs_diff": agree, "naive_seconds_extrapolated": naive,
                "fast_seconds_median": float(np.median(fast)), "speedup": speedup}


# --------------------------------------------------------------------------
# 11: rotating frame


def check_rotating_frame(seed: int = 11, n_traj: int = 5, T: float = 2.0, dt: float = 1e-2) -> tuple:
    rng = np.random.default_rng(seed)
    models = [bick_example(), preset_skardal(0.4, 1.0, 0.5, 2.0)]
    worst = 0.0
    for i in range(n_traj):
        model = models[i % len(models)]
        measures = tuple(_random_atomic(rng, 12) for _ in range(model.M))
        ref = [float(rng.uniform(0, TWO_PI)) for _ in range(model.M)]
        _, states = trace_characteristics(model, NetworkState(measures), [[z] for z in ref], dt, T, stride=5)
        rot = to_rotating_frame(states, ref)
        for a, b in zip(states, rot):
            for s in range(model.M):
                worst = max(worst, abs(dist_to_sync(a.measures[s])[0] - dist_to_sync(b.measures[s])[0]))
    return worst < 1e-12, {"trajectories": n_traj, "max_abs_diff": worst, "tol": 1e-12}


# --------------------------------------------------------------------------
# Bick: first population free, the others pinned to splay


def check_bick_sdd(T: float = 2.0, dt: float = 1e-2, n_free: int = 64, n_splay: int = 512) -> tuple:
    model = bick_example()
    reduced = reduce_fixed_populations(model, ["free", "splay", "splay"])
    free = Atomic.equal_weights(wrap(np.sort(np.random.default_rng(7).vonmises(0.5, 2.0, n_free))))
    splay = equally_spaced(n_splay)
    _, full = trace_characteristics(model, NetworkState((free, splay, splay)), None, dt, T, stride=10)
    _, red = trace_characteristics(reduced, NetworkState((free,)), None, dt, T, stride=10)
    w = max(w1_circle(a.measures[0], b.measures[0]) for a, b in zip(full, red))
    splay_drift = max(abs(dist_to_splay(st.measures[s]) - dist_to_splay(splay)) for st in full for s in (1, 2))

    h2, h4 = model.meta["h2"], model.meta["h4"]
    dK = model.meta["K_plus"] - model.meta["K_minus"]
    rep = splay_report(model, 2)
    expected = [h2.get(k, 0) + dK * h4.get((0, k), 0) for k in (1, 2)]
    coeff_err = float(np.max(np.abs(rep.coefficients[0] - np.array(expected))))
    a_hat = sync_report(reduced).a[0]
    ok = w < 1e-6 and coeff_err < 1e-14
    return ok, {"max_w1_full_vs_reduced": w, "splay_distance_drift": splay_drift, "splay_coefficient_error": coeff_err,
                "splay_verdict": rep.verdict, "reduced_sync_a": a_hat,
                "sdd_stable_in_first_population": bool(a_hat > 0)}


# --------------------------------------------------------------------------


CRITERIA = {
    "w1-oracle": (1, "W1 matches the LP oracle on random atomic pairs", 5.0, check_w1_oracle),
    "pushforward-bound": (2, "triangle, rotation invariance and pushforward bound", 5.0, check_pushforward_bound),
    "invariant-subspaces": (3, "sync and splay sets are invariant", 60.0, check_invariant_subspaces),
    "dobrushin": (4, "W1 growth within the exponential bound", 60.0, check_dobrushin),
    "example-3-1": (5, "pairwise plus three-body sine example settles at r = 1/2", 120.0, check_example_3_1),
    "skardal-sync": (6, "sync stability follows the sign of K1 + K3", 60.0, check_skardal_sync),
    "steady-states": (7, "two-atom steady states", 10.0, check_steady_states),
    "splay-rates": (8, "splay mode decay matches the linear prediction", 60.0, check_splay_rates),
    "convergence": (9, "empirical measures converge to the density solution", 120.0, check_convergence),
    "performance": (10, "moment path equals nested sums and is faster", 120.0, check_performance),
    "rotating-frame": (11, "distance to sync is frame independent", 10.0, check_rotating_frame),
    "bick-sdd": (None, "three-population model with two splay populations reduces exactly", 60.0, check_bick_sdd),
}

REPRODUCE_NAMES = tuple(CRITERIA)


def run_criterion(key: str, **kwargs) -> CriterionResult:
    """Run one scenario and time it against its budget."""
    number, title, budget, fn = CRITERIA[key]
    t0 = time.perf_counter()
    passed, details = fn(**kwargs)
    runtime = time.perf_counter() - t0
    return CriterionResult(key, number, title, bool(passed), details, runtime, budget)
