"""Mean-field transport of population measures.

Each population measure is carried by the velocity field it generates together
with the other populations:

    d/dt rho_sigma + d/dphi (V_sigma[rho] rho_sigma) = 0,   V_sigma[rho] = K_sigma mu_rho.

Grid densities are advanced by a conservative semi-Lagrangian scheme: cell edges
are traced backward along the velocity field and the new cell mass is the old
mass between the departure points, read off a periodic cubic spline of the
cumulative distribution.  Atoms (and passive tracers) ride the same field
forward.  ``trace_characteristics`` follows arbitrary measures as atoms.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from .circle import TWO_PI, CircleInterval, wrap
from .coupling import DEFAULT_MAX_OPS, CouplingModel, VelocityField
from .errors import AccuracyError, ConfigurationError, FlowFoldingError, ValidationError
from .measures import (
    Atomic,
    CircleMeasure,
    GridDensity,
    dist_to_sync,
    mass_in_interval,
    quantile_sample,
    w1_circle,
)
from .nbody import PhaseState, integrate, integrate_particles, time_grid

log = logging.getLogger(__name__)

__all__ = [
    "NetworkState",
    "CharacteristicFlow",
    "DobrushinReport",
    "ConvergenceTable",
    "evolve_density",
    "trace_characteristics",
    "dobrushin_check",
    "mass_conservation_check",
    "to_rotating_frame",
    "rotating_frame_velocity",
    "convergence_study",
    "weak_form_residual",
    "total_w1",
    "sync_distance_series",
]

MASS_TOL = 1e-4
CFL_CELLS = 5.0
CROSSING_TOL = 1e-9
DEFAULT_QUANTILE_ATOMS = 512


@dataclass(frozen=True, eq=False)
class NetworkState:
    """Per-population measures at a time, with optional passive tracer positions."""

    measures: tuple
    time: float = 0.0
    tracers: tuple | None = None

    def __post_init__(self):
        ms = tuple(self.measures)
        if not all(isinstance(m, CircleMeasure) for m in ms):
            raise ValidationError("NetworkState needs CircleMeasure entries")
        object.__setattr__(self, "measures", ms)
        if self.tracers is not None:
            tr = tuple(np.atleast_1d(np.asarray(x, dtype=float)) for x in self.tracers)
            if len(tr) != len(ms):
                raise ValidationError("one tracer array per population")
            object.__setattr__(self, "tracers", tr)

    @property
    def M(self) -> int:
        return len(self.measures)

    def __getitem__(self, sigma):
        return self.measures[sigma]


@dataclass
class CharacteristicFlow:
    """Positions Phi_sigma(t, xi) of the seeds ``seeds`` at the sample ``times``."""

    population: int
    seeds: np.ndarray
    times: np.ndarray
    positions: np.ndarray

    def at(self, index: int) -> np.ndarray:
        return self.positions[index]


def total_w1(a: NetworkState, b: NetworkState) -> float:
    """sum over populations of W1(a_sigma, b_sigma)."""
    if a.M != b.M:
        raise ConfigurationError("states have different population counts")
    return float(sum(w1_circle(x, y) for x, y in zip(a.measures, b.measures)))


# --------------------------------------------------------------------------
# density solver


def _lifted_cdf(density: GridDensity):
    """Monotone lift F of the cumulative mass with F(x + 2pi) = F(x) + mass.

    A periodic cubic spline of F - mass x / 2pi, replaced by linear
    interpolation in cells where the spline would decrease.  Any monotone lift
    keeps the remap conservative and positive.
    """
    e = density.edges
    h = density.cell_width
    F = density.cumulative()
    mass = F[-1]
    G = F - mass * e / TWO_PI
    G[-1] = G[0]
    c = CubicSpline(e, G, bc_type="periodic").c
    slope = mass / TWO_PI
    # derivative 3 c0 u^2 + 2 c1 u + c2 + slope on [0, h]: check ends and vertex
    with np.errstate(divide="ignore", invalid="ignore"):
        u_star = np.clip(-c[1] / (3 * c[0]), 0.0, h)
    u_star = np.where(np.isfinite(u_star), u_star, 0.0)
    cand = np.stack([np.zeros_like(u_star), np.full_like(u_star, h), u_star])
    deriv = 3 * c[0] * cand ** 2 + 2 * c[1] * cand + c[2] + slope
    smooth = deriv.min(axis=0) >= 0
    n = density.n_cells

    def lift(x):
        turns = np.floor(x / TWO_PI)
        r = x - TWO_PI * turns
        j = np.clip(np.floor(r / h).astype(int), 0, n - 1)
        u = r - e[j]
        cubic = ((c[0, j] * u + c[1, j]) * u + c[2, j]) * u + c[3, j] + slope * (e[j] + u)
        linear = F[j] + density.values[j] * u
        return turns * mass + np.where(smooth[j], cubic, linear)

    return lift


def _remap(density: GridDensity, departures: np.ndarray):
    """Cell values after moving the mass between departure points into each cell."""
    F = _lifted_cdf(density)
    masses = np.diff(F(departures))
    vals = masses / density.cell_width
    neg = vals < 0
    clamped = 0.0
    if np.any(neg):
        clamped = float(-vals[neg].sum() * density.cell_width)
        log.debug("clamped %d negative cells, mass %.3g", int(neg.sum()), clamped)
        vals = np.where(neg, 0.0, vals)
    return vals, clamped


class _TimeField:
    """Velocity linear in time between two frozen fields, V(theta, x), theta in [0, 1]."""

    def __init__(self, f0, f1=None):
        self.f0, self.f1 = f0, f1

    def __call__(self, sigma, theta, x):
        v0 = self.f0(sigma, x)
        if self.f1 is None or theta == 0:
            return v0
        v1 = self.f1(sigma, x)
        return (1 - theta) * v0 + theta * v1


def _step(model, measures, tracers, field, dt):
    """One RK2 (midpoint) step in the field: edges backward, atoms and tracers forward."""
    out, new_tr, clamped, vmax = [], [], 0.0, 0.0
    for s, mu in enumerate(measures):
        if isinstance(mu, GridDensity):
            e = mu.edges[:-1]
            k1 = field(s, 1.0, e)
            k2 = field(s, 0.5, e - 0.5 * dt * k1)
            vmax = max(vmax, float(np.max(np.abs(k1))))
            d = e - dt * k2
            d = np.concatenate([d, [d[0] + TWO_PI]])
            if np.any(np.diff(d) <= 0):
                raise FlowFoldingError(f"population {s}: backward characteristics crossed; reduce dt")
            vals, c = _remap(mu, d)
            clamped += c
            out.append(GridDensity.unchecked(vals))
        else:
            x = mu.positions
            k1 = field(s, 0.0, x)
            k2 = field(s, 0.5, x + 0.5 * dt * k1)
            out.append(Atomic(wrap(x + dt * k2), mu.weights))
        if tracers is not None and tracers[s].size:
            x = tracers[s]
            k1 = field(s, 0.0, x)
            k2 = field(s, 0.5, x + 0.5 * dt * k1)
            new_tr.append(np.atleast_1d(wrap(x + dt * k2)))
        elif tracers is not None:
            new_tr.append(tracers[s])
    return out, (tuple(new_tr) if tracers is not None else None), clamped, vmax


def evolve_density(model: CouplingModel, initial: NetworkState, dt: float, T: float, *, stride: int = 1,
                   order: int = 2, path: str = "auto", max_ops=DEFAULT_MAX_OPS, mass_tol: float = MASS_TOL,
                   on_sample=None) -> list:
    """Advance a state of grid densities (atoms allowed in other populations).

    ``order=1`` freezes the velocity field at the start of each step;
    ``order=2`` (default) adds a predictor and uses the field interpolated in
    time, which makes the scheme second order in dt.  Raises ``AccuracyError``
    when the mass of a density drifts by more than ``mass_tol`` or the step
    moves mass more than five cells.
    """
    if initial.M != model.M:
        raise ConfigurationError(f"state has {initial.M} populations, model has {model.M}")
    if order not in (1, 2):
        raise ConfigurationError("order must be 1 or 2")
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    grid = time_grid(dt, T)
    measures = list(initial.measures)
    tracers = initial.tracers
    mass0 = [mu.mass for mu in measures]
    cells = [mu.cell_width for mu in measures if isinstance(mu, GridDensity)]
    h_min = min(cells) if cells else np.inf

    def make_field(ms):
        return VelocityField.from_measures(model, ms, path=path, max_ops=max_ops)

    states = [NetworkState(tuple(measures), grid[0], tracers)]
    if on_sample is not None:
        on_sample(states[-1])
    for k in range(1, grid.size):
        h = grid[k] - grid[k - 1]
        f0 = make_field(measures)
        pred, pred_tr, clamped, vmax = _step(model, measures, tracers, _TimeField(f0), h)
        if h * vmax > CFL_CELLS * h_min:
            raise AccuracyError(
                f"dt*max|V| = {h * vmax:.3g} exceeds {CFL_CELLS:g} cells at t={grid[k - 1]:.6g}; reduce dt"
            )
        if order == 2:
            f1 = make_field(pred)
            pred, pred_tr, clamped, _ = _step(model, measures, tracers, _TimeField(f0, f1), h)
        measures, tracers = pred, pred_tr
        for s, mu in enumerate(measures):
            if isinstance(mu, GridDensity):
                drift = abs(mu.mass - mass0[s])
                if drift > mass_tol:
                    raise AccuracyError(
                        f"population {s}: mass drift {drift:.3g} at t={grid[k]:.6g} "
                        f"(clamped {clamped:.3g}); use a smaller dt or a finer grid"
                    )
        if k % stride == 0 or k == grid.size - 1:
            states.append(NetworkState(tuple(measures), initial.time + grid[k], tracers))
            if on_sample is not None:
                on_sample(states[-1])
    return states


# --------------------------------------------------------------------------
# characteristics


def _as_atoms(mu: CircleMeasure, n_quantile: int) -> Atomic:
    if isinstance(mu, GridDensity):
        return quantile_sample(mu, n_quantile)
    return mu


class _OrderGuard:
    """Checks that tracers keep their initial cyclic order."""

    def __init__(self, initial, tol=CROSSING_TOL):
        self.order = np.argsort(initial, kind="stable")
        self.tol = tol
        self.turns = self._turns(initial)

    def _turns(self, x):
        if x.size < 2:
            return 0
        y = x[self.order]
        gaps = wrap(np.roll(y, -1) - y)
        gaps = np.where(gaps > TWO_PI - self.tol, 0.0, gaps)
        return int(round(gaps.sum() / TWO_PI))

    def check(self, x, t, sigma):
        if self._turns(x) != self.turns:
            raise FlowFoldingError(f"population {sigma}: characteristics crossed before t={t:.6g}; reduce dt")


def trace_characteristics(model: CouplingModel, initial: NetworkState, seeds=None, dt: float = 1e-2,
                          T: float = 1.0, *, method: str = "rk4", n_quantile: int = DEFAULT_QUANTILE_ATOMS,
                          stride: int = 1, path: str = "auto", max_ops=DEFAULT_MAX_OPS):
    """Co-evolve seeds and the measures along the characteristic flow.

    Densities are represented by ``n_quantile`` quantile atoms.  ``seeds`` is a
    per-population list of angles (passive tracers).  Returns
    ``(flows, states)``: one ``CharacteristicFlow`` per population and the
    sampled ``NetworkState`` list (atomic measures, tracers attached).
    """
    if initial.M != model.M:
        raise ConfigurationError(f"state has {initial.M} populations, model has {model.M}")
    atoms = [_as_atoms(mu, n_quantile) for mu in initial.measures]
    if seeds is None:
        seeds = [np.zeros(0)] * model.M
    seeds = [np.atleast_1d(wrap(np.asarray(s, dtype=float))) if np.size(s) else np.zeros(0) for s in seeds]
    if len(seeds) != model.M:
        raise ConfigurationError("one seed array per population")
    guards = [_OrderGuard(np.concatenate([a.positions, s])) for a, s in zip(atoms, seeds)]

    def on_sample(t, a, b):
        for s in range(model.M):
            guards[s].check(np.concatenate([a[s], b[s]]), t, s)

    times, samples = integrate_particles(
        model, [a.positions for a in atoms], [a.weights for a in atoms], dt, T, seeds=seeds, method=method,
        path=path, stride=stride, max_ops=max_ops, on_sample=on_sample,
    )
    times = times + initial.time
    states = [
        NetworkState(tuple(Atomic(p, a.weights) for p, a in zip(pos, atoms)), t, tuple(sd))
        for t, (pos, sd) in zip(times, samples)
    ]
    flows = [
        CharacteristicFlow(s, seeds[s], times, np.array([sd[s] for _, sd in samples]).reshape(len(times), -1))
        for s in range(model.M)
    ]
    return flows, states


# --------------------------------------------------------------------------
# checks and studies


@dataclass
class DobrushinReport:
    times: np.ndarray
    w: np.ndarray
    bound: np.ndarray
    rate: float

    @property
    def w0(self) -> float:
        return float(self.w[0])

    @property
    def violations(self) -> int:
        return int(np.sum(self.w > self.bound * (1 + 1e-9) + 1e-14))

    @property
    def satisfied(self) -> bool:
        return self.violations == 0


def dobrushin_check(model: CouplingModel, mu_in: NetworkState, nu_in: NetworkState, T: float, dt: float,
                    *, stride: int = 1, method: str = "rk4", n_quantile: int = DEFAULT_QUANTILE_ATOMS):
    """Compare sum_sigma W1(mu_sigma(t), nu_sigma(t)) with exp(L (sum sbar + 1) t) * w(0)."""
    rate = model.L * (model.sbar_sum + 1)
    _, a = trace_characteristics(model, mu_in, None, dt, T, method=method, n_quantile=n_quantile, stride=stride)
    _, b = trace_characteristics(model, nu_in, None, dt, T, method=method, n_quantile=n_quantile, stride=stride)
    times = np.array([s.time for s in a]) - mu_in.time
    w = np.array([total_w1(x, y) for x, y in zip(a, b)])
    return DobrushinReport(times, w, np.exp(rate * times) * w[0], rate)


def mass_conservation_check(model: CouplingModel, initial: NetworkState, xi1: float, xi2: float, sigma: int,
                            T: float, dt: float, *, stride: int = 1) -> float:
    """max_t |mu_sigma(t)(arc(t)) - mu_sigma(0)(arc(0))| for the arc between two characteristics.

    The arc runs counterclockwise from Phi_sigma(t, xi1) to Phi_sigma(t, xi2).
    Atomic states move by characteristics, states with densities by the grid solver.
    """
    if circ_equal(xi1, xi2):
        raise ConfigurationError("xi1 and xi2 must differ")
    seeds = [np.zeros(0)] * model.M
    seeds[sigma] = np.array([xi1, xi2])
    if all(isinstance(mu, Atomic) for mu in initial.measures):
        _, states = trace_characteristics(model, initial, seeds, dt, T, stride=stride)
    else:
        start = NetworkState(initial.measures, initial.time, tuple(seeds))
        states = evolve_density(model, start, dt, T, stride=stride)
    masses = [
        mass_in_interval(st.measures[sigma], CircleInterval(st.tracers[sigma][0], st.tracers[sigma][1]))
        for st in states
    ]
    return float(np.max(np.abs(np.array(masses) - masses[0])))


def circ_equal(a, b, tol=1e-12) -> bool:
    d = wrap(a - b)
    return min(d, TWO_PI - d) <= tol


def _reference_index(state: NetworkState, sigma: int, seed: float) -> int:
    if state.tracers is None or state.tracers[sigma].size == 0:
        raise ConfigurationError(f"population {sigma}: trajectory carries no tracer for the reference seed")
    tr = state.tracers[sigma]
    d = np.minimum(wrap(tr - seed), TWO_PI - wrap(tr - seed))
    j = int(np.argmin(d))
    if d[j] > 1e-12:
        raise ConfigurationError(f"population {sigma}: reference seed {seed:.6g} was not traced")
    return j


def to_rotating_frame(states, reference_seeds) -> list:
    """Rotate population sigma by -Phi_sigma(t, zeta_sigma) at every sample.

    ``states`` must carry tracers (from ``trace_characteristics`` or
    ``evolve_density``) that include each reference seed ``zeta_sigma`` at the
    first sample.  Tracers are rotated as well.
    """
    states = list(states)
    if not states:
        return []
    idx = [_reference_index(states[0], s, z) for s, z in enumerate(reference_seeds)]
    out = []
    for st in states:
        if st.tracers is None:
            raise ConfigurationError("trajectory carries no tracers")
        ref = [st.tracers[s][j] for s, j in enumerate(idx)]
        ms = tuple(mu.rotate(-r) for mu, r in zip(st.measures, ref))
        tr = tuple(wrap(x - r) for x, r in zip(st.tracers, ref))
        out.append(NetworkState(ms, st.time, tr))
    return out


def rotating_frame_velocity(model: CouplingModel, state: NetworkState, sigma: int, y, reference) -> np.ndarray:
    """Velocity of a point ``y`` in the frame co-moving with ``reference`` (per-population angles).

    Equals (K_sigma mu)(y + ref_sigma) - (K_sigma mu)(ref_sigma) with ``mu`` the
    state in the fixed frame.
    """
    f = VelocityField.from_measures(model, state.measures)
    ref = reference[sigma]
    return f(sigma, np.asarray(y, dtype=float) + ref) - f(sigma, np.array([ref]))[0]


@dataclass
class ConvergenceTable:
    N: np.ndarray
    w1: np.ndarray
    floor: np.ndarray

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.w1) < 0))

    @property
    def non_increasing(self) -> bool:
        """Non-increasing up to a 10% noise allowance."""
        return bool(np.all(self.w1[1:] <= 1.1 * self.w1[:-1]))

    def rows(self):
        return list(zip(self.N.tolist(), self.w1.tolist(), self.floor.tolist()))


def convergence_study(model: CouplingModel, density_in: NetworkState, N_list, T: float, dt: float, *,
                      density_dt: float | None = None, method: str = "rk4") -> ConvergenceTable:
    """W1 at time T between N-oscillator empirical measures and the density solution.

    Initial oscillators are the (k + 1/2)/N quantiles of each density.  ``floor``
    holds the same distance at t = 0 (the quantile sampling error).
    """
    N_list = [int(n) for n in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigurationError("N_list must be ascending")
    if not all(isinstance(mu, GridDensity) for mu in density_in.measures):
        raise ConfigurationError("convergence study needs a density in every population")
    rho_T = evolve_density(model, density_in, density_dt or dt, T)[-1]
    w1, floor = [], []
    for N in N_list:
        samples = [quantile_sample(mu, N) for mu in density_in.measures]
        floor.append(sum(w1_circle(a, mu) for a, mu in zip(samples, density_in.measures)))
        tr = integrate(model, PhaseState(tuple(a.positions for a in samples)), dt, T, method=method)
        emp = [Atomic.equal_weights(p) for p in tr.final.phases]
        w1.append(sum(w1_circle(a, mu) for a, mu in zip(emp, rho_T.measures)))
    return ConvergenceTable(np.array(N_list), np.array(w1), np.array(floor))


def _pair(mu: CircleMeasure, f_cell, f_point):
    """<f, mu> using exact cell integrals for densities when available."""
    if isinstance(mu, GridDensity):
        return float(f_cell(mu.edges) @ (mu.values / mu.mass))
    return float(f_point(mu.positions) @ mu.weights)


def weak_form_residual(model: CouplingModel, states, k_max: int = 3) -> float:
    """Largest weak-form residual over the test functions chi(t) cos(k phi), chi(t) sin(k phi).

    With chi(t) = cos^2(pi t / 2T) (so chi(T) = chi'(T) = 0) the residual is

        int_0^T [chi'(t) <w, mu_t> + chi(t) <V_t w', mu_t>] dt + chi(0) <w, mu_0>

    which vanishes for weak solutions.  Time integrals use the trapezoid rule
    over the samples, so ``states`` should be recorded densely.
    """
    states = list(states)
    t = np.array([s.time for s in states]) - states[0].time
    T = t[-1]
    if T <= 0:
        raise ConfigurationError("need samples spanning a positive time")
    chi = np.cos(0.5 * np.pi * t / T) ** 2
    dchi = -0.5 * np.pi / T * np.sin(np.pi * t / T)
    fields = [VelocityField.from_measures(model, s.measures) for s in states]
    worst = 0.0
    for sigma in range(model.M):
        for k in range(1, k_max + 1):
            tests = [
                (lambda e: np.diff(np.sin(k * e)) / k, lambda x: np.cos(k * x), lambda x: -k * np.sin(k * x)),
                (lambda e: -np.diff(np.cos(k * e)) / k, lambda x: np.sin(k * x), lambda x: k * np.cos(k * x)),
            ]
            for cell, point, deriv in tests:
                a = np.array([_pair(s.measures[sigma], cell, point) for s in states])
                b = []
                for s, f in zip(states, fields):
                    mu = s.measures[sigma]
                    x = mu.midpoints if isinstance(mu, GridDensity) else mu.positions
                    w = mu.cell_masses / mu.mass if isinstance(mu, GridDensity) else mu.weights
                    b.append(float((f(sigma, x) * deriv(x)) @ w))
                integrand = dchi * a + chi * np.array(b)
                res = trapezoid(integrand, t) + chi[0] * a[0]
                worst = max(worst, abs(res))
    return worst


def sync_distance_series(states, sigma: int) -> np.ndarray:
    return np.array([dist_to_sync(s.measures[sigma])[0] for s in states])
