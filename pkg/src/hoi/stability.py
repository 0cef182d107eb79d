"""Stability of the synchronized and splay sets.

For difference-form couplings the behaviour near the all-synchronized state is
governed by g_sigma(0, psi) (all pair differences zero), and near the splay
state by the Fourier coefficients a^sigma_{0,k} (terms without pair
dependence).  The linear splay analysis is a prediction only; it is paired
with an empirical mode-decay measurement on the density solver.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .circle import TWO_PI, circ_dist, wrap
from .coupling import (
    CouplingModel,
    DifferenceForm,
    DifferenceTerm,
    FourierDifference,
    VelocityField,
)
from .errors import ConfigurationError, PathologicalCouplingError
from .measures import (
    GridDensity,
    density_from_function,
    dirac,
    dist_to_splay,
    dist_to_sync,
    equally_spaced,
    quantile_sample,
    two_atom,
    uniform_density,
    von_mises_density,
)
from .meanfield import NetworkState, evolve_density, trace_characteristics

__all__ = [
    "RootInfo",
    "SyncStabilityReport",
    "SplayStabilityReport",
    "TwoAtomSteadyState",
    "PerturbationResult",
    "sync_report",
    "splay_report",
    "splay_coefficients",
    "empirical_mode_rate",
    "two_atom_rate",
    "two_atom_steady_state",
    "reduce_fixed_populations",
    "perturbation_experiment",
    "classify_trend",
]

SCAN_POINTS = 4096
ROOT_XTOL = 1e-10
MAX_ROOTS = 64
STATIONARY_SLOPE = 1e-3
DEGENERATE_DERIV = 1e-8


def _difference_interaction(model: CouplingModel, sigma: int) -> DifferenceForm:
    it = model.interactions[sigma]
    if not isinstance(it, DifferenceForm):
        raise ConfigurationError(f"population {sigma}: stability analysis needs a difference-form coupling")
    return it


# --------------------------------------------------------------------------
# synchronized state


@dataclass
class RootInfo:
    psi: float
    derivative: float
    degenerate: bool = False


@dataclass
class SyncStabilityReport:
    a: list
    zeros: list
    stable_condition: bool
    asymptotic_condition: bool
    per_population_asymptotic: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "a": [float(x) for x in self.a],
            "stable_condition": self.stable_condition,
            "asymptotic_condition": self.asymptotic_condition,
            "zeros": [[{"psi": z.psi, "derivative": z.derivative, "degenerate": z.degenerate} for z in zs]
                      for zs in self.zeros],
        }


def _ghat_zeros(ghat, dghat, n_scan=SCAN_POINTS):
    grid = np.arange(n_scan) * TWO_PI / n_scan
    vals = ghat(grid)
    vals[0] = 0.0
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    roots = [0.0]
    degenerate = set()
    nxt = np.roll(vals, -1)
    for j in range(n_scan):
        lo, hi = grid[j], grid[j] + TWO_PI / n_scan
        if j == n_scan - 1 or j == 0:
            continue
        if vals[j] == 0.0:
            roots.append(lo)
        elif vals[j] * nxt[j] < 0:
            r = optimize.brentq(lambda x: float(ghat(np.array([x]))[0]), lo, hi, xtol=ROOT_XTOL)
            roots.append(r)
    # tangential zeros: local minima of |ghat| that touch zero without a sign change
    absv = np.abs(vals)
    for j in range(1, n_scan - 1):
        if absv[j] <= absv[j - 1] and absv[j] <= absv[j + 1] and absv[j] < 1e-6 * scale:
            if vals[j - 1] * vals[j + 1] > 0:
                res = optimize.minimize_scalar(
                    lambda x: abs(float(ghat(np.array([x]))[0])), bounds=(grid[j - 1], grid[j + 1]),
                    method="bounded", options={"xatol": ROOT_XTOL},
                )
                if res.fun < 1e-9 * scale:
                    roots.append(float(res.x))
                    degenerate.add(len(roots) - 1)
    # the wrap-around cell [grid[-1], 2pi) only contains the root at 0
    out = []
    for i, r in enumerate(roots):
        if any(circ_dist(r, o.psi) < 1e-9 for o in out):
            continue
        d = float(dghat(np.array([r]))[0])
        out.append(RootInfo(float(wrap(r)), d, i in degenerate or abs(d) < DEGENERATE_DERIV * max(scale, 1.0)))
        if len(out) > MAX_ROOTS:
            raise PathologicalCouplingError(f"more than {MAX_ROOTS} zeros of g(0, psi) - g(0, 0)")
    return sorted(out, key=lambda z: z.psi)


def sync_report(model: CouplingModel) -> SyncStabilityReport:
    """a_sigma = d/dgamma g_sigma(0, 0) and the zeros of g_sigma(0, psi) - g_sigma(0, 0)."""
    a, zeros, asym = [], [], []
    for sigma in range(model.M):
        it = _difference_interaction(model, sigma)
        diffs = [0.0] * len(it.r)
        g00 = float(it.g(diffs, np.array([0.0]))[0])
        a.append(float(it.dg_dgamma(diffs, np.array([0.0]))[0]))
        zs = _ghat_zeros(lambda x: it.g(diffs, x) - g00, lambda x: it.dg_dgamma(diffs, x))
        zeros.append(zs)
        asym.append(len(zs) == 2 and not any(z.degenerate for z in zs))
    return SyncStabilityReport(a, zeros, all(x > 0 for x in a), all(asym), asym)


# --------------------------------------------------------------------------
# splay state


@dataclass
class SplayStabilityReport:
    omega: list
    coefficients: np.ndarray  # (M, k_max) complex, index k-1
    growth_rates: np.ndarray
    mode_factors: np.ndarray
    verdict: str
    measured_rates: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "omega": list(self.omega),
            "coefficients": [[[c.real, c.imag] for c in row] for row in self.coefficients],
            "growth_rates": self.growth_rates.tolist(),
            "mode_factors": [[[c.real, c.imag] for c in row] for row in self.mode_factors],
            "verdict": self.verdict,
            "measured_rates": {f"{s},{k}": v for (s, k), v in self.measured_rates.items()},
        }


def splay_coefficients(model: CouplingModel, sigma: int, k_max: int, n_alpha: int | None = None) -> np.ndarray:
    """a^sigma_{0,k} for k = 1..k_max.

    Fourier couplings read the coefficient directly; callables are averaged over
    the pair differences on a grid and analysed with an FFT in gamma.
    """
    it = _difference_interaction(model, sigma)
    if isinstance(it, FourierDifference):
        zero = (0,) * len(it.r)
        return np.array([it.coefficient(zero, k) for k in range(1, k_max + 1)], dtype=complex)
    L = len(it.r)
    n_alpha = n_alpha or (32 if L <= 2 else 16)
    n_gamma = max(64, 4 * k_max)
    gamma = np.arange(n_gamma) * TWO_PI / n_gamma
    pts = np.arange(n_alpha) * TWO_PI / n_alpha
    avg = np.zeros(n_gamma)
    count = 0
    for diffs in itertools.product(pts, repeat=L):
        avg += it.g(list(diffs), gamma)
        count += 1
    avg /= count
    c = np.fft.fft(avg) / n_gamma
    return c[1:k_max + 1]


def empirical_mode_rate(model: CouplingModel, sigma: int, k: int, epsilon: float = 1e-3, T: float = 10.0,
                        dt: float = 1e-2, n_cells: int = 256) -> float:
    """Measured growth rate of |c_k| for a perturbation (epsilon/pi) cos(k phi) of the splay state.

    Other populations stay exactly uniform.  The rate is the least-squares slope
    of log |c_k(t)| over [0, T].
    """
    measures = [uniform_density(n_cells) for _ in range(model.M)]
    measures[sigma] = density_from_function(lambda x: 1.0 / TWO_PI + epsilon / np.pi * np.cos(k * x), n_cells)
    states = evolve_density(model, NetworkState(tuple(measures)), dt, T)
    t = np.array([s.time for s in states])
    amp = np.array([abs(_cell_moment(s.measures[sigma], k)) for s in states])
    return float(np.polyfit(t, np.log(amp), 1)[0])


def _cell_moment(mu: GridDensity, k: int) -> complex:
    e = mu.edges
    w = (np.exp(1j * k * e[1:]) - np.exp(1j * k * e[:-1])) / (1j * k)
    return complex(w @ (mu.values / mu.mass))


def splay_report(model: CouplingModel, k_max: int = 4, *, measure: bool = False, epsilon: float = 1e-3,
                 T: float = 10.0, dt: float = 1e-2) -> SplayStabilityReport:
    """Linear growth rates -k Im(a^sigma_{0,k}) of the splay modes.

    Verdict is "stable" when every rate is negative, "unstable" when one is
    positive and "inconclusive" otherwise.  With ``measure=True`` modes with
    |rate| > 0.05 are also measured on the density solver.
    """
    coeffs = np.array([splay_coefficients(model, s, k_max) for s in range(model.M)]).reshape(model.M, k_max)
    ks = np.arange(1, k_max + 1)
    rates = -ks[None, :] * coeffs.imag
    omega = np.array(model.omega)[:, None]
    factors = -(np.conj(coeffs) + omega) * 1j * ks[None, :]
    tol = 1e-14
    if np.any(rates > tol):
        verdict = "unstable"
    elif np.all(rates < -tol):
        verdict = "stable"
    else:
        verdict = "inconclusive"
    measured = {}
    if measure:
        for s in range(model.M):
            for k in ks:
                if abs(rates[s, k - 1]) > 0.05:
                    measured[(s, int(k))] = empirical_mode_rate(model, s, int(k), epsilon, T, dt)
    return SplayStabilityReport(list(model.omega), coeffs, rates, factors, verdict, measured)


# --------------------------------------------------------------------------
# two-atom steady states


@dataclass
class TwoAtomSteadyState:
    n: int
    psi0: float | None
    residual: float | None
    roots: list

    @property
    def found(self) -> bool:
        return self.psi0 is not None


def two_atom_rate(model: CouplingModel, n: int, psi):
    """dPsi/dt for the measure (1 - 1/n) delta_0 + (1/n) delta_Psi (exact velocity evaluation)."""
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    out = np.empty(psi.size)
    w = np.array([1.0 - 1.0 / n, 1.0 / n])
    for i, p in enumerate(psi):
        f = VelocityField(model, [np.array([0.0, p])], [w])
        v = f(0, np.array([0.0, p]))
        out[i] = v[1] - v[0]
    return out


def two_atom_steady_state(model: CouplingModel, n: int, n_scan: int = 2048) -> TwoAtomSteadyState:
    """Nontrivial equilibrium Psi0_n of the two-atom phase difference.

    Sign changes of the exact rate on a grid are refined by bisection.  When
    several nontrivial roots exist the one nearest the limit -psi0 (psi0 the
    nontrivial zero of g(0, psi) - g(0, 0)) is returned.
    """
    if model.M != 1:
        raise ConfigurationError("two-atom steady states need a single population")
    _difference_interaction(model, 0)
    if n < 2:
        raise ConfigurationError("n must be >= 2")
    grid = (np.arange(n_scan) + 0.5) * TWO_PI / n_scan
    vals = two_atom_rate(model, n, grid)
    roots = []
    for j in range(n_scan - 1):
        if vals[j] == 0:
            roots.append(float(grid[j]))
        elif vals[j] * vals[j + 1] < 0:
            roots.append(optimize.bisect(lambda x: float(two_atom_rate(model, n, x)[0]), grid[j], grid[j + 1],
                                         xtol=1e-15))
    roots = [r for r in roots if circ_dist(r, 0.0) > 1e-8]
    if not roots:
        return TwoAtomSteadyState(n, None, None, [])
    limit = [wrap(-z.psi) for z in sync_report(model).zeros[0] if z.psi != 0.0]
    if len(limit) == 1:
        best = min(roots, key=lambda r: circ_dist(r, limit[0]))
    else:
        best = roots[0]
    res = abs(float(two_atom_rate(model, n, best)[0]))
    return TwoAtomSteadyState(n, float(best), res, roots)


# --------------------------------------------------------------------------
# reduction of fixed populations


def _reduce_fourier(it: FourierDifference, keep_slots, fixed_kind, new_index):
    coeffs = {}
    shift = 0.0
    for (b, l), a in it.coeffs.items():
        if any(b[j] != 0 and fixed_kind[j] == "splay" for j in range(len(b))):
            continue
        nb = tuple(b[j] for j in keep_slots)
        key = (nb, l)
        if all(x == 0 for x in nb) and l == 0:
            shift += 2.0 * a.real
            continue
        coeffs[key] = coeffs.get(key, 0) + a
    r = tuple(new_index[it.r[j]] for j in keep_slots)
    return FourierDifference(r, coeffs, L=it.L), shift


def _reduce_callable(it: DifferenceForm, keep_slots, fixed_kind, new_index, n_quad):
    L = len(it.r)
    splay_slots = [j for j in range(L) if fixed_kind[j] == "splay"]
    nodes = np.arange(n_quad) * TWO_PI / n_quad

    def g_red(*args):
        *free, gamma = args
        gamma = np.asarray(gamma, dtype=float)
        total = 0.0
        count = 0
        for combo in itertools.product(nodes, repeat=len(splay_slots)):
            diffs = [0.0] * L
            for j, x in zip(keep_slots, free):
                diffs[j] = x
            for j, x in zip(splay_slots, combo):
                diffs[j] = x
            total = total + it.g(diffs, gamma)
            count += 1
        return total / count

    r = tuple(new_index[it.r[j]] for j in keep_slots)
    return DifferenceForm(r, terms=[DifferenceTerm(g_red, tuple(range(len(r))))], L=it.L)


def reduce_fixed_populations(model: CouplingModel, fixed, n_quad: int = 64) -> CouplingModel:
    """Coupling model of the free populations with the others pinned to sync or splay.

    ``fixed`` holds "free", "sync" or "splay" per population.  Sync populations
    contribute zero pair differences; splay populations are averaged out
    (exactly for Fourier couplings, by an ``n_quad``-point rule for callables).
    """
    fixed = [str(f) for f in fixed]
    if len(fixed) != model.M:
        raise ConfigurationError(f"need a fixed/free flag per population ({model.M})")
    if any(f not in ("free", "sync", "splay") for f in fixed):
        raise ConfigurationError("flags must be 'free', 'sync' or 'splay'")
    free = [s for s in range(model.M) if fixed[s] == "free"]
    if len(free) == model.M:
        return model
    new_index = {s: i for i, s in enumerate(free)}
    omegas, inters = [], []
    for s in free:
        it = _difference_interaction(model, s)
        kind = [fixed[p] for p in it.r]
        keep = [j for j in range(len(it.r)) if kind[j] == "free"]
        if isinstance(it, FourierDifference):
            red, shift = _reduce_fourier(it, keep, kind, new_index)
        else:
            red, shift = _reduce_callable(it, keep, kind, new_index, n_quad), 0.0
        omegas.append(model.omega[s] + shift)
        inters.append(red)
    meta = dict(model.meta, reduced_from=model.name, fixed=fixed)
    return CouplingModel(tuple(omegas), tuple(inters), name=f"{model.name}-reduced", meta=meta)


# --------------------------------------------------------------------------
# perturbation experiments


@dataclass
class PerturbationResult:
    times: np.ndarray
    distances: np.ndarray  # (samples, M)
    slope: float
    verdict: str
    base: str

    @property
    def total(self) -> np.ndarray:
        return self.distances.sum(axis=1)

    def as_dict(self) -> dict:
        return {"base": self.base, "slope": self.slope, "verdict": self.verdict,
                "initial": float(self.total[0]), "final": float(self.total[-1])}


def classify_trend(times, dist, stationary_slope: float = STATIONARY_SLOPE):
    """(slope, verdict) from a least-squares fit of log-distance over the second half."""
    times = np.asarray(times, dtype=float)
    dist = np.asarray(dist, dtype=float)
    if dist[0] > 0 and dist[-1] < 1e-12 * dist[0]:
        return -np.inf, "contracting"
    half = times >= times[0] + 0.5 * (times[-1] - times[0])
    y = np.log(np.maximum(dist[half], 1e-300))
    slope = float(np.polyfit(times[half], y, 1)[0])
    if abs(slope) < stationary_slope:
        return slope, "stationary"
    return slope, "contracting" if slope < 0 else "expanding"


def _sync_bump(width: float, n_cells: int) -> GridDensity:
    return von_mises_density(1.0 / width ** 2, 0.0, n_cells)


def perturbation_experiment(model: CouplingModel, base: str, perturbation: dict, T: float, dt: float, *,
                            population: int = 0, stride: int = 10, n_cells: int = 256,
                            n_quantile: int = 512) -> PerturbationResult:
    """Evolve a perturbed sync or splay state and classify the distance trend.

    ``perturbation`` is ``{"kind": "bump", "epsilon": eps, "mode": k}`` or
    ``{"kind": "atom_split", "n": n, "psi": Psi}``.  A sync bump is a von Mises
    density of width eps (concentration 1/eps^2) traced by quantile atoms; a
    splay bump is the density (1 + 2 eps cos(k phi))/2pi on the grid solver.
    Unperturbed populations sit exactly at the base state.
    """
    if base not in ("sync", "splay"):
        raise ConfigurationError("base must be 'sync' or 'splay'")
    kind = perturbation.get("kind")
    dist = dist_to_sync if base == "sync" else (lambda mu: (dist_to_splay(mu), None))
    if kind == "atom_split":
        n, psi = int(perturbation["n"]), float(perturbation["psi"])
        measures = [dirac(0.0) if base == "sync" else equally_spaced(n_quantile) for _ in range(model.M)]
        measures[population] = two_atom(n, psi)
        _, states = trace_characteristics(model, NetworkState(tuple(measures)), None, dt, T, stride=stride)
    elif kind == "bump":
        eps = float(perturbation["epsilon"])
        if base == "sync":
            measures = [dirac(0.0) for _ in range(model.M)]
            measures[population] = quantile_sample(_sync_bump(eps, 4096), n_quantile)
            _, states = trace_characteristics(model, NetworkState(tuple(measures)), None, dt, T, stride=stride)
        else:
            k = int(perturbation.get("mode", 1))
            measures = [uniform_density(n_cells) for _ in range(model.M)]
            measures[population] = density_from_function(
                lambda x: 1.0 / TWO_PI + eps / np.pi * np.cos(k * x), n_cells)
            states = evolve_density(model, NetworkState(tuple(measures)), dt, T, stride=stride)
    else:
        raise ConfigurationError(f"unknown perturbation kind {kind!r}")
    times = np.array([s.time for s in states])
    d = np.array([[dist(mu)[0] for mu in s.measures] for s in states])
    slope, verdict = classify_trend(times, d.sum(axis=1))
    return PerturbationResult(times, d, slope, verdict, base)
