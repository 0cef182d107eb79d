"""Probability measures on the circle.

Two representations are supported:

``Atomic``
    finitely many weighted point masses.
``GridDensity``
    values of a density at the midpoints of ``n`` uniform cells; the measure
    is read as piecewise constant on cells, so its CDF is piecewise linear.

Wasserstein-1 distances are computed exactly for both representations from
the CDF difference ``D`` and its length-weighted median ``m``:
``W1 = min_m int |D(x) - m| dx`` (circle version of the 1D CDF formula).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .circle import TWO_PI, CircleInterval, circ_dist, interval_contains, wrap
from .errors import FlowFoldingError, SizeError, ValidationError

__all__ = [
    "CircleMeasure",
    "Atomic",
    "GridDensity",
    "dirac",
    "equally_spaced",
    "two_atom",
    "uniform",
    "uniform_density",
    "density_from_function",
    "von_mises_density",
    "w1_circle",
    "w1_bruteforce_oracle",
    "pushforward",
    "circular_moments",
    "dist_to_sync",
    "dist_to_splay",
    "quantile_sample",
    "mass_in_interval",
    "MERGE_TOL",
]

MERGE_TOL = 1e-12
ATOMIC_MASS_TOL = 1e-10
DENSITY_MASS_TOL = 1e-8


class CircleMeasure:
    """Common interface of ``Atomic`` and ``GridDensity``."""

    def cdf_lifted(self, x, left=False):
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        raise NotImplementedError

    def rotate(self, angle: float) -> "CircleMeasure":
        raise NotImplementedError

    @property
    def mass(self) -> float:
        raise NotImplementedError


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Atomic(CircleMeasure):
    """Weighted point masses ``sum_i w_i delta_{x_i}``."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.atleast_1d(np.asarray(self.positions, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pos.ndim != 1 or pos.shape != w.shape:
            raise ValidationError("positions and weights must be 1-d arrays of equal length")
        if pos.size == 0:
            raise ValidationError("atomic measure needs at least one atom")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(w))):
            raise ValidationError("atom positions and weights must be finite")
        if np.any(w < 0):
            raise ValidationError("atom weights must be nonnegative")
        if abs(w.sum() - 1.0) > ATOMIC_MASS_TOL:
            raise ValidationError(f"atom weights sum to {w.sum():.15g}, expected 1")
        object.__setattr__(self, "positions", _readonly(wrap(pos)))
        object.__setattr__(self, "weights", _readonly(w))

    @classmethod
    def equal_weights(cls, positions) -> "Atomic":
        pos = np.atleast_1d(np.asarray(positions, dtype=float))
        return cls(pos, np.full(pos.size, 1.0 / pos.size))

    def __len__(self):
        return self.positions.size

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def canonical(self) -> "Atomic":
        """Sorted copy with atoms closer than ``MERGE_TOL`` merged and empty atoms dropped."""
        order = np.argsort(self.positions, kind="stable")
        p = self.positions[order]
        w = self.weights[order]
        keep = w > 0
        p, w = p[keep], w[keep]
        if p.size == 0:
            return self
        groups = np.concatenate([[0], np.cumsum(np.diff(p) > MERGE_TOL)])
        # the last group may wrap around onto the first
        if groups[-1] > 0 and circ_dist(p[-1], p[0]) <= MERGE_TOL:
            groups[groups == groups[-1]] = 0
        n_groups = groups.max() + 1
        wsum = np.bincount(groups, weights=w, minlength=n_groups)
        first = np.full(n_groups, -1)
        for i, g in enumerate(groups):
            if first[g] < 0:
                first[g] = i
        return Atomic(p[first], wsum)

    def cdf_lifted(self, x, left=False):
        """Mass of [0, x] (or [0, x) if ``left``), extended by F(x + 2pi) = F(x) + mass."""
        x = np.asarray(x, dtype=float)
        order = np.argsort(self.positions, kind="stable")
        p = self.positions[order]
        cw = np.concatenate([[0.0], np.cumsum(self.weights[order])])
        turns = np.floor(x / TWO_PI)
        r = x - TWO_PI * turns
        side = "left" if left else "right"
        return turns * cw[-1] + cw[np.searchsorted(p, r, side=side)]

    def breakpoints(self) -> np.ndarray:
        return np.unique(self.positions)

    def rotate(self, angle: float) -> "Atomic":
        return Atomic(self.positions + angle, self.weights)


@dataclass(frozen=True, eq=False)
class GridDensity(CircleMeasure):
    """Density sampled at the midpoints ``(j + 1/2) * 2pi/n`` of ``n`` uniform cells."""

    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.ndim != 1 or v.size == 0:
            raise ValidationError("density values must be a non-empty 1-d array")
        if not np.all(np.isfinite(v)):
            raise ValidationError("density values must be finite")
        if np.any(v < 0):
            raise ValidationError("density values must be nonnegative")
        mass = TWO_PI / v.size * v.sum()
        if abs(mass - 1.0) > DENSITY_MASS_TOL:
            raise ValidationError(f"density integrates to {mass:.12g}, expected 1")
        object.__setattr__(self, "values", _readonly(v))

    @classmethod
    def unchecked(cls, values) -> "GridDensity":
        """Construct without the mass check (solver internals report drift themselves)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "values", _readonly(values))
        return obj

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def cell_width(self) -> float:
        return TWO_PI / self.values.size

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.cell_width

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.cell_width

    @property
    def cell_masses(self) -> np.ndarray:
        return self.values * self.cell_width

    @property
    def mass(self) -> float:
        return float(self.cell_masses.sum())

    def cumulative(self) -> np.ndarray:
        """Mass of [0, edge_j] for the n + 1 cell edges."""
        return np.concatenate([[0.0], np.cumsum(self.cell_masses)])

    def cdf_lifted(self, x, left=False):
        x = np.asarray(x, dtype=float)
        h = self.cell_width
        c = self.cumulative()
        turns = np.floor(x / TWO_PI)
        r = x - TWO_PI * turns
        j = np.clip(np.floor(r / h).astype(int), 0, self.n_cells - 1)
        return turns * c[-1] + c[j] + self.values[j] * (r - j * h)

    def breakpoints(self) -> np.ndarray:
        return self.edges[:-1]

    def to_atoms(self) -> Atomic:
        """Midpoint-rule atoms (the quadrature used for velocity evaluation)."""
        m = self.cell_masses
        return Atomic(self.midpoints, m / m.sum())

    def rotate(self, angle: float) -> "GridDensity":
        return pushforward(self, lambda x: x + angle)


def dirac(xi: float) -> Atomic:
    return Atomic([xi], [1.0])


def equally_spaced(N: int, offset: float = 0.0) -> Atomic:
    return Atomic.equal_weights(offset + TWO_PI * np.arange(N) / N)


def two_atom(n: int, psi: float, xi: float = 0.0) -> Atomic:
    """The measure (1 - 1/n) delta_xi + (1/n) delta_{xi + psi}."""
    return Atomic([xi, xi + psi], [1.0 - 1.0 / n, 1.0 / n])


def uniform() -> GridDensity:
    """Exact normalized Lebesgue measure (a single cell)."""
    return GridDensity([1.0 / TWO_PI])


def uniform_density(n_cells: int = 256) -> GridDensity:
    return GridDensity(np.full(n_cells, 1.0 / TWO_PI))


def density_from_function(f, n_cells: int = 256) -> GridDensity:
    """Sample a nonnegative function at cell midpoints and normalize."""
    mid = (np.arange(n_cells) + 0.5) * TWO_PI / n_cells
    v = np.asarray(f(mid), dtype=float) * np.ones(n_cells)
    v = np.maximum(v, 0.0)
    return GridDensity(v / (v.sum() * TWO_PI / n_cells))


def von_mises_density(kappa: float, loc: float = 0.0, n_cells: int = 256) -> GridDensity:
    return density_from_function(lambda x: np.exp(kappa * (np.cos(x - loc) - 1.0)), n_cells)


# --------------------------------------------------------------------------
# Wasserstein-1


def _as_measure(mu):
    if not isinstance(mu, CircleMeasure):
        raise ValidationError(f"expected a CircleMeasure, got {type(mu).__name__}")
    return mu


def _segment_median(d0, d1, lengths):
    """A median of the values of a piecewise linear function under Lebesgue measure.

    Segment i carries mass ``lengths[i]`` spread uniformly over the values between
    ``d0[i]`` and ``d1[i]`` (a point mass when they coincide).
    """
    lo = np.minimum(d0, d1)
    hi = np.maximum(d0, d1)
    point = (hi - lo) <= 1e-15
    lin = ~point
    slope = np.zeros_like(lengths)
    slope[lin] = lengths[lin] / (hi[lin] - lo[lin])

    vals = np.concatenate([lo[point], lo[lin], hi[lin]])
    jumps = np.concatenate([lengths[point], np.zeros(lin.sum() * 2)])
    dslope = np.concatenate([np.zeros(point.sum()), slope[lin], -slope[lin]])
    order = np.argsort(vals, kind="stable")
    vals, jumps, dslope = vals[order], jumps[order], dslope[order]

    s_after = np.cumsum(dslope)
    gaps = np.diff(vals)
    ramp = np.concatenate([[0.0], np.cumsum(s_after[:-1] * gaps)])
    c_after = np.cumsum(jumps) + ramp
    c_before = c_after - jumps
    half = 0.5 * lengths.sum()

    k = int(np.searchsorted(c_after, half, side="left"))
    k = min(k, vals.size - 1)
    if c_before[k] >= half and k > 0:
        # crossing on the open ramp before vals[k]
        s = s_after[k - 1]
        if s > 0:
            return vals[k - 1] + (half - c_after[k - 1]) / s
    return vals[k]


def _abs_integral(u0, u1, lengths):
    """Exact integral of |linear function| with end values u0, u1 over each segment."""
    same = u0 * u1 >= 0
    out = np.empty_like(lengths)
    out[same] = lengths[same] * np.abs(u0[same] + u1[same]) / 2.0
    a, b, ln = u0[~same], u1[~same], lengths[~same]
    out[~same] = ln * (a * a + b * b) / (2.0 * np.abs(b - a))
    return out


def w1_circle(mu: CircleMeasure, nu: CircleMeasure) -> float:
    """Exact Wasserstein-1 distance on the circle with cost |x - y|_S.

    Both arguments are read as measures with piecewise-linear CDFs (atoms give
    jumps, grid densities give linear pieces), so the result is exact for both.
    """
    mu, nu = _as_measure(mu), _as_measure(nu)
    knots = np.unique(np.concatenate([[0.0, TWO_PI], mu.breakpoints(), nu.breakpoints()]))
    a, b = knots[:-1], knots[1:]
    ma, na = mu.mass, nu.mass
    d0 = mu.cdf_lifted(a) / ma - nu.cdf_lifted(a) / na
    d1 = mu.cdf_lifted(b, left=True) / ma - nu.cdf_lifted(b, left=True) / na
    lengths = b - a
    m = _segment_median(d0, d1, lengths)
    val = float(_abs_integral(d0 - m, d1 - m, lengths).sum())
    return max(val, 0.0)


def w1_bruteforce_oracle(mu: Atomic, nu: Atomic) -> float:
    """Discrete optimal transport by linear programming (test oracle, <= 8 atoms each)."""
    if len(mu) > 8 or len(nu) > 8:
        raise SizeError("oracle limited to 8 atoms per measure")
    n, k = len(mu), len(nu)
    cost = circ_dist(mu.positions[:, None], nu.positions[None, :]).ravel()
    a_eq = np.zeros((n + k, n * k))
    for i in range(n):
        a_eq[i, i * k:(i + 1) * k] = 1.0
    for j in range(k):
        a_eq[n + j, j::k] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights])
    res = optimize.linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


# --------------------------------------------------------------------------
# push-forward and moments


def _sample_lift(fmap, n):
    x = np.arange(n + 1) * TWO_PI / n
    y = np.unwrap(np.asarray(fmap(x), dtype=float) * np.ones(n + 1))
    return x, y


def pushforward(mu: CircleMeasure, fmap, n_sample: int | None = None) -> CircleMeasure:
    """Image measure of ``mu`` under an orientation preserving circle homeomorphism.

    ``fmap`` acts on arrays of angles.  Atoms are moved positionwise.  For a grid
    density the output cell masses are ``F_in(map^-1(edge_{j+1})) - F_in(map^-1(edge_j))``,
    i.e. the density ``rho_in(map^-1) |d map^-1/dphi|`` integrated over each cell, so
    mass is conserved exactly.  The inverse is obtained from a monotone sampling of
    the lift of ``fmap``; a non-monotone sample raises ``FlowFoldingError``.
    """
    if isinstance(mu, Atomic):
        return Atomic(np.asarray(fmap(mu.positions), dtype=float) * np.ones(len(mu)), mu.weights)
    n = mu.n_cells
    n_sample = n_sample or max(16 * n, 1024)
    x, y = _sample_lift(fmap, n_sample)
    if np.any(np.diff(y) <= 0) or abs(y[-1] - y[0] - TWO_PI) > 1e-6:
        raise FlowFoldingError("map is not an orientation preserving circle homeomorphism")
    y[-1] = y[0] + TWO_PI
    t = mu.edges
    turns = np.floor((t - y[0]) / TWO_PI)
    r = t - TWO_PI * turns
    inv = np.interp(r, y, x) + TWO_PI * turns
    masses = np.diff(mu.cdf_lifted(inv))
    return GridDensity(masses / (masses.sum() * mu.cell_width))


def circular_moments(mu: CircleMeasure, k_max: int) -> np.ndarray:
    """Moments Z_k = int e^{ik phi} dmu for k = 0..k_max (index k holds Z_k, Z_0 = 1).

    Atoms are summed directly; densities use midpoint quadrature.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    if isinstance(mu, GridDensity):
        pos, w = mu.midpoints, mu.cell_masses / mu.mass
    else:
        pos, w = mu.positions, mu.weights
    k = np.arange(k_max + 1)
    z = np.exp(1j * np.outer(k, pos)) @ w
    z[0] = 1.0
    return z


# --------------------------------------------------------------------------
# distances to the sync and splay sets


def _atomic_sync_profile(mu: Atomic):
    """f(p_k) = sum_i w_i |p_k - p_i|_S at every atom, via prefix sums."""
    order = np.argsort(mu.positions, kind="stable")
    p = mu.positions[order]
    w = mu.weights[order]
    n = p.size
    P = np.concatenate([p, p + TWO_PI])
    W = np.concatenate([w, w])
    sw = np.concatenate([[0.0], np.cumsum(W)])
    swp = np.concatenate([[0.0], np.cumsum(W * P)])
    k = np.arange(n)
    m = np.searchsorted(P, p + np.pi, side="right")
    m = np.clip(m, k, k + n)
    near = (swp[m] - swp[k]) - p * (sw[m] - sw[k])
    far = (TWO_PI + p) * (sw[k + n] - sw[m]) - (swp[k + n] - swp[m])
    return p, near + far


def _tri_antiderivative(u):
    """Antiderivative of the 2pi-periodic triangle wave |u|_S, zero at u = -pi."""
    turns = np.floor((u + np.pi) / TWO_PI)
    r = u - TWO_PI * turns
    return turns * np.pi ** 2 + 0.5 * np.pi ** 2 + 0.5 * r * np.abs(r)


def _density_sync_cost(mu: GridDensity, xi):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    e = mu.edges
    rho = mu.values / mu.mass
    hi = _tri_antiderivative(e[None, 1:] - xi[:, None])
    lo = _tri_antiderivative(e[None, :-1] - xi[:, None])
    return (hi - lo) @ rho


def dist_to_sync(mu: CircleMeasure):
    """min over xi of int |xi - beta|_S dmu(beta), with a minimizer.

    Returns ``(distance, argmin)``.  For atoms the minimum is attained at an atom
    and found exactly; ties go to the smallest angle.  For grid densities the
    minimizer is located on a fine scan and refined by bounded Brent search.
    """
    if isinstance(mu, Atomic):
        p, f = _atomic_sync_profile(mu)
        fmin = f.min()
        ties = np.flatnonzero(f <= fmin + 1e-13)
        best = ties[np.argmin(p[ties])]
        return float(max(f[best], 0.0)), float(p[best])
    n_scan = 4 * mu.n_cells
    grid = np.arange(n_scan) * TWO_PI / n_scan
    vals = _density_sync_cost(mu, grid)
    j = int(np.flatnonzero(vals <= vals.min() + 1e-13)[0])
    step = TWO_PI / n_scan
    res = optimize.minimize_scalar(
        lambda x: float(_density_sync_cost(mu, x)[0]),
        bounds=(grid[j] - step, grid[j] + step),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if res.fun <= vals[j]:
        return float(max(res.fun, 0.0)), wrap(res.x)
    return float(max(vals[j], 0.0)), float(grid[j])


def dist_to_splay(mu: CircleMeasure) -> float:
    """W1 distance to the normalized Lebesgue measure."""
    return w1_circle(mu, uniform())


def quantile_sample(density: GridDensity, N: int) -> Atomic:
    """N equal atoms at the (k + 1/2)/N quantiles of the density's CDF (k = 0..N-1)."""
    if N < 1:
        raise ValueError("N must be positive")
    c = density.cumulative() / density.mass
    q = (np.arange(N) + 0.5) / N
    j = np.clip(np.searchsorted(c, q, side="right") - 1, 0, density.n_cells - 1)
    rho = density.values[j] / density.mass
    h = density.cell_width
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(rho > 0, (q - c[j]) / (rho * h), 0.5)
    x = (j + np.clip(frac, 0.0, 1.0)) * h
    return Atomic.equal_weights(x)


def mass_in_interval(mu: CircleMeasure, iv: CircleInterval) -> float:
    """Mass of the open arc; atoms on the boundary are excluded."""
    if isinstance(mu, Atomic):
        inside = interval_contains(iv, mu.positions)
        return float(mu.weights[np.atleast_1d(inside)].sum())
    start = iv.start
    end = start + iv.length
    m = mu.cdf_lifted(end) - mu.cdf_lifted(start)
    return float(np.clip(m / mu.mass, 0.0, 1.0))
