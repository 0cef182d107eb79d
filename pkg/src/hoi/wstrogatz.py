"""Watanabe-Strogatz reduction for one population with sinusoidal coupling.

Phases are written as

    tan((phi_k - Theta)/2) = sqrt((1 + gamma)/(1 - gamma)) tan((psi_k - Psi)/2)

with constants psi_k normalized so that their mean of cos, mean of sin and
mean (representatives in (-pi, pi]) vanish.  For the pairwise plus
three-body sine model

    dphi_k/dt = omega + (K1 + K3 r^2) Im(Z e^{-i phi_k}),   Z = r e^{i alpha},

only (gamma, Psi, Theta) evolve.  Internally the map psi -> phi is the Moebius
map e^{iy} = (e^{ix} - p)/(1 - p e^{ix}) with gamma = 2p/(1 + p^2), so fitting
the constants amounts to finding the conformal barycenter of the phases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circle import TWO_PI, signed_diff, wrap
from .coupling import CouplingModel, FourierDifference
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    DomainError,
    NearSingularError,
    ReductionInapplicableError,
    ValidationError,
)
from .nbody import time_grid

__all__ = [
    "WSState",
    "fit_constants",
    "ws_transform",
    "ws_inverse",
    "order_parameter_ws",
    "ws_reduced_rhs",
    "integrate_reduced",
    "potential_H",
    "dH_check",
    "sine_coupling_constants",
    "has_majority_cluster",
    "constraint_residuals",
]

CONSTRAINT_TOL = 1e-9
CLUSTER_TOL = 1e-9
SINGULAR_GAMMA = 1e-8
CHART_SWITCH_GAMMA = 1e-3


@dataclass(frozen=True, eq=False)
class WSState:
    """Reduced variables plus the constants of motion psi_k (stored in (-pi, pi])."""

    gamma: float
    Psi: float
    Theta: float
    psi_constants: np.ndarray

    def __post_init__(self):
        g = float(self.gamma)
        if not (0.0 <= g < 1.0):
            raise ValidationError(f"gamma must lie in [0, 1), got {g}")
        psi = np.atleast_1d(signed_diff(np.asarray(self.psi_constants, dtype=float), 0.0))
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "Psi", wrap(self.Psi))
        object.__setattr__(self, "Theta", wrap(self.Theta))
        res = constraint_residuals(psi)
        if max(res) > CONSTRAINT_TOL:
            raise ValidationError(f"psi constants violate the normalization: residuals {res}")
        psi.setflags(write=False)
        object.__setattr__(self, "psi_constants", psi)

    @property
    def N(self) -> int:
        return self.psi_constants.size

    def replace(self, gamma=None, Psi=None, Theta=None) -> "WSState":
        return WSState(
            self.gamma if gamma is None else gamma,
            self.Psi if Psi is None else Psi,
            self.Theta if Theta is None else Theta,
            self.psi_constants,
        )


def constraint_residuals(psi) -> tuple:
    psi = np.asarray(psi, dtype=float)
    return (abs(np.cos(psi).mean()), abs(np.sin(psi).mean()), abs(psi.mean()))


def has_majority_cluster(phases, tol: float = CLUSTER_TOL) -> bool:
    """True when at least half of the phases lie within ``tol`` of one of them."""
    p = np.sort(wrap(np.asarray(phases, dtype=float)))
    n = p.size
    ext = np.concatenate([p, p + TWO_PI])
    hi = np.searchsorted(ext, ext[:n] + tol, side="right")
    return bool(np.max(hi - np.arange(n)) * 2 >= n)


def _gamma_from_p(p):
    return 2 * p / (1 + p * p)


def _p_from_gamma(gamma):
    if gamma == 0:
        return 0.0
    return (1 - np.sqrt(1 - gamma * gamma)) / gamma


def _barycenter(z, max_iter=100, tol=1e-13):
    """Point a of the unit disk with mean (z - a)/(1 - conj(a) z) = 0 (damped Newton)."""
    a = complex(z.mean())

    def F(a):
        return complex(np.mean((z - a) / (1 - np.conj(a) * z)))

    f = F(a)
    for _ in range(max_iter):
        if abs(f) < tol:
            return a, abs(f)
        den = 1 - np.conj(a) * z
        A = complex(np.mean(-1 / den))
        B = complex(np.mean((z - a) * z / den ** 2))
        # F + A da + B conj(da) = 0 as a real 2x2 system
        J = np.array([[A.real + B.real, -A.imag + B.imag], [A.imag + B.imag, A.real - B.real]])
        try:
            d = np.linalg.solve(J, [-f.real, -f.imag])
        except np.linalg.LinAlgError:
            break
        da = complex(d[0], d[1])
        step = 1.0
        while step > 1e-12:
            trial = a + step * da
            if abs(trial) < 1 and abs(F(trial)) < abs(f):
                break
            step *= 0.5
        else:
            break
        a = a + step * da
        f = F(a)
    if abs(f) < 1e-10:
        return a, abs(f)
    raise ConvergenceError(f"constant fit stalled with residual {abs(f):.3g}")


def _sawtooth_root(x):
    """Psi nearest 0 with mean of the (-pi, pi] representatives of x + Psi equal to zero."""
    jumps = np.sort(np.atleast_1d(signed_diff(np.pi - x, 0.0)))
    edges = np.concatenate([[-np.pi], jumps, [np.pi]])
    best = None
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 0:
            continue
        mid = 0.5 * (lo + hi)
        r = mid - np.mean(signed_diff(x + mid, 0.0))
        if lo - 1e-14 <= r <= hi + 1e-14 and (best is None or abs(r) < abs(best)):
            best = r
    if best is None:
        raise ConvergenceError("no normalization of the psi constants found")
    return best


def fit_constants(phases) -> WSState:
    """(gamma, Psi, Theta) and constants psi_k reproducing ``phases``.

    The disk point solving the two trigonometric constraints is unique when no
    majority cluster exists; Psi is the root of the mean-representative
    constraint closest to zero.
    """
    phi = wrap(np.asarray(phases, dtype=float)) * np.ones(1)
    if phi.size < 3:
        raise ReductionInapplicableError("need at least three oscillators")
    if has_majority_cluster(phi):
        raise ReductionInapplicableError("at least half of the phases coincide (majority cluster)")
    z = np.exp(1j * phi)
    a, _ = _barycenter(z)
    p = abs(a)
    Theta = float(np.angle(a)) + np.pi if p > 0 else 0.0
    w = np.exp(-1j * Theta) * (z - a) / (1 - np.conj(a) * z)
    x = np.angle(w)
    Psi = _sawtooth_root(x)
    psi = signed_diff(x + Psi, 0.0)
    return WSState(min(_gamma_from_p(p), np.nextafter(1.0, 0.0)), Psi, Theta, psi)


def _half_angle_map(x, gamma):
    return 2.0 * np.arctan2(np.sqrt(1 + gamma) * np.sin(0.5 * x), np.sqrt(1 - gamma) * np.cos(0.5 * x))


def ws_transform(state: WSState) -> np.ndarray:
    """Phases phi_k in [0, 2pi) for the given reduced state."""
    if not state.gamma < 1:
        raise DomainError("gamma must be < 1")
    x = state.psi_constants - state.Psi
    return wrap(state.Theta + _half_angle_map(x, state.gamma))


def ws_inverse(phases, gamma: float, Psi: float, Theta: float) -> np.ndarray:
    """psi_k = Psi + the inverse map applied to phi_k - Theta (values in (-pi, pi])."""
    y = np.asarray(phases, dtype=float) - Theta
    x = 2.0 * np.arctan2(np.sqrt(1 - gamma) * np.sin(0.5 * y), np.sqrt(1 + gamma) * np.cos(0.5 * y))
    return signed_diff(x + Psi, 0.0)


def _trig(state: WSState, Psi=None):
    x = state.psi_constants - (state.Psi if Psi is None else Psi)
    return np.cos(x), np.sin(x)


def order_parameter_ws(state: WSState) -> float:
    """r from (gamma, Psi) in closed form."""
    g = state.gamma
    c, s = _trig(state)
    den = 1 - g * c
    re = np.mean((c - g) / den)
    im = np.mean(np.sqrt(1 - g * g) * s / den)
    return float(min(np.hypot(re, im), 1.0))


def sine_coupling_constants(model: CouplingModel) -> tuple:
    """(omega, K1, K3) for a one-population pairwise (+ three-body) sine model."""
    if model.M != 1:
        raise ConfigurationError("the reduction needs a single population")
    it = model.interactions[0]
    if not isinstance(it, FourierDifference):
        raise ConfigurationError("the reduction needs a Fourier difference-form sine coupling")
    n = len(it.r)
    allowed = {((0,) * n, 1): "K1"}
    if n == 1:
        allowed[((1,), 1)] = "K3"
    K = {"K1": 0.0, "K3": 0.0}
    for key, a in it.coeffs.items():
        if key not in allowed or abs(a.real) > 1e-15:
            raise ConfigurationError(f"coefficient {key} = {a} is not of pure sine type")
        K[allowed[key]] = -2.0 * a.imag
    return model.omega[0], K["K1"], K["K3"]


def _sums(state: WSState, Psi=None):
    g = state.gamma
    c, s = _trig(state, Psi)
    den = 1 - g * c
    S1 = np.mean((g - c) / den)
    S2 = np.mean(s / den)
    S2_over_g = np.mean(s * c / den) + (np.mean(s) / g if g >= CHART_SWITCH_GAMMA else 0.0)
    return S1, S2, S2_over_g


def ws_reduced_rhs(state: WSState, model: CouplingModel) -> tuple:
    """(dgamma/dt, dPsi/dt, dTheta/dt) of the reduced dynamics."""
    if state.gamma < SINGULAR_GAMMA:
        raise NearSingularError(f"gamma = {state.gamma:.3g} too close to the coordinate singularity")
    omega, K1, K3 = sine_coupling_constants(model)
    g = state.gamma
    r = order_parameter_ws(state)
    q = K1 + K3 * r * r
    S1, S2, S2g = _sums(state)
    dgamma = (1 - g * g) * q * S1
    if g >= CHART_SWITCH_GAMMA:
        dPsi = -(1 - g * g) * q * S2 / g
        dTheta = omega - q * np.sqrt(1 - g * g) * S2 / g
    else:
        dPsi = -(1 - g * g) * q * S2g
        dTheta = omega - q * np.sqrt(1 - g * g) * S2g
    return float(dgamma), float(dPsi), float(dTheta)


def _cartesian_rhs(u, v, Theta, psi, omega, K1, K3):
    g = float(np.hypot(u, v))
    Psi = float(np.arctan2(v, u)) if g > 0 else 0.0
    x = psi - Psi
    c, s = np.cos(x), np.sin(x)
    den = 1 - g * c
    re = np.mean((c - g) / den)
    im = np.mean(np.sqrt(1 - g * g) * s / den)
    q = K1 + K3 * (re * re + im * im)
    S1 = np.mean((g - c) / den)
    S2 = np.mean(s / den)
    S2g = np.mean(s * c / den)
    du = (1 - g * g) * q * (S1 * np.cos(Psi) + S2 * np.sin(Psi))
    dv = (1 - g * g) * q * (S1 * np.sin(Psi) - S2 * np.cos(Psi))
    dT = omega - q * np.sqrt(1 - g * g) * S2g
    return np.array([du, dv, dT])


def integrate_reduced(state: WSState, model: CouplingModel, dt: float, T: float, stride: int = 1):
    """RK4 on the reduced system; returns (times, states).

    Steps starting with gamma < 1e-3 run in the chart (gamma cos Psi, gamma sin Psi, Theta),
    which is regular at gamma = 0.
    """
    omega, K1, K3 = sine_coupling_constants(model)
    psi = state.psi_constants
    grid = time_grid(dt, T)
    times, out = [grid[0]], [state]
    cur = state

    def polar_rhs(y):
        s = cur.replace(gamma=y[0], Psi=y[1], Theta=y[2])
        return np.array(ws_reduced_rhs(s, model))

    for k in range(1, grid.size):
        h = grid[k] - grid[k - 1]
        if cur.gamma < CHART_SWITCH_GAMMA:
            y = np.array([cur.gamma * np.cos(cur.Psi), cur.gamma * np.sin(cur.Psi), cur.Theta])
            f = lambda y: _cartesian_rhs(y[0], y[1], y[2], psi, omega, K1, K3)  # noqa: E731
        else:
            y = np.array([cur.gamma, cur.Psi, cur.Theta])
            f = polar_rhs
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"reduced system diverged after t={grid[k - 1]:.6g}", grid[k - 1])
        if cur.gamma < CHART_SWITCH_GAMMA:
            g, P = float(np.hypot(y[0], y[1])), float(np.arctan2(y[1], y[0]))
        else:
            g, P = float(y[0]), float(y[1])
        if not 0 <= g < 1:
            raise DivergenceError(f"gamma left [0, 1) after t={grid[k - 1]:.6g}", grid[k - 1])
        cur = cur.replace(gamma=g, Psi=P, Theta=y[2])
        if k % stride == 0 or k == grid.size - 1:
            times.append(grid[k])
            out.append(cur)
    return np.array(times), out


def potential_H(state: WSState) -> float:
    """H = mean log((1 - gamma cos(psi_k - Psi)) / sqrt(1 - gamma^2))."""
    g = state.gamma
    if g >= 1:
        raise DivergenceError("H diverges as gamma -> 1")
    c, _ = _trig(state)
    return float(np.mean(np.log1p(-g * c)) - 0.5 * np.log1p(-g * g))


def dH_check(state: WSState, model: CouplingModel, h: float = 1e-4) -> tuple:
    """(central difference of H along the reduced flow, r^2 (K1 + K3 r^2))."""
    _, K1, K3 = sine_coupling_constants(model)
    fwd = integrate_reduced(state, model, h, h)[1][-1]
    bwd = integrate_reduced(state, _reversed(model), h, h)[1][-1]
    lhs = (potential_H(fwd) - potential_H(bwd)) / (2 * h)
    r = order_parameter_ws(state)
    return float(lhs), float(r * r * (K1 + K3 * r * r))


def _reversed(model: CouplingModel) -> CouplingModel:
    """The same model with time reversed (all rates negated)."""
    it = model.interactions[0]
    neg = FourierDifference(it.r, {k: -v for k, v in it.coeffs.items()}, L=it.L)
    return CouplingModel(tuple(-w for w in model.omega), (neg,), name=model.name + "-reversed")
