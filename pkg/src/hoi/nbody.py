"""Finite-N generalized Kuramoto networks.

Oscillator k of population sigma obeys

    dphi_{sigma,k}/dt = omega_sigma + N^{-|s|} sum_{i in [N]^{|s|}} G_sigma(phi_i, phi_{sigma,k})

which is the velocity operator applied to the empirical measures (diagonal
index tuples included).  Populations may carry non-uniform atom weights, so
the same integrator also moves arbitrary atomic measures.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .circle import TWO_PI, wrap
from .coupling import DEFAULT_MAX_OPS, CouplingModel, VelocityField
from .errors import CapabilityError, ConfigurationError, DivergenceError, ValidationError
from .measures import Atomic

__all__ = [
    "PhaseState",
    "Trajectory",
    "rhs_naive",
    "rhs_fast",
    "integrate",
    "integrate_particles",
    "order_parameter",
    "time_grid",
]

_PATHS = {"naive": "quadrature", "fast": "moments", "auto": "auto"}


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Phases per population (wrapped to [0, 2pi)) at a given time.

    ``weights`` is optional; by default every oscillator of a population has
    weight 1/N_sigma.
    """

    phases: tuple
    time: float = 0.0
    weights: tuple | None = None

    def __post_init__(self):
        ph = tuple(np.atleast_1d(wrap(np.asarray(p, dtype=float))) for p in self.phases)
        if any(p.ndim != 1 or p.size == 0 for p in ph):
            raise ValidationError("each population needs a non-empty 1-d phase array")
        object.__setattr__(self, "phases", ph)
        if self.weights is not None:
            w = tuple(np.asarray(x, dtype=float) for x in self.weights)
            if len(w) != len(ph) or any(a.shape != p.shape for a, p in zip(w, ph)):
                raise ValidationError("weights must match phases population by population")
            if any(np.any(a < 0) or abs(a.sum() - 1) > 1e-10 for a in w):
                raise ValidationError("weights must be nonnegative and sum to 1 per population")
            object.__setattr__(self, "weights", w)

    @property
    def M(self) -> int:
        return len(self.phases)

    def weight_arrays(self) -> list:
        if self.weights is not None:
            return list(self.weights)
        return [np.full(p.size, 1.0 / p.size) for p in self.phases]

    def to_measures(self) -> list:
        return [Atomic(p, w) for p, w in zip(self.phases, self.weight_arrays())]

    @classmethod
    def from_measures(cls, measures, time=0.0) -> "PhaseState":
        return cls(tuple(m.positions for m in measures), time, tuple(m.weights for m in measures))


@dataclass
class Trajectory:
    """Time-ordered samples plus run metadata."""

    times: np.ndarray
    states: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size != len(self.states):
            raise ValidationError("one state per sample time required")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("sample times must be strictly increasing")

    def __len__(self):
        return len(self.states)

    @property
    def samples(self):
        return list(zip(self.times, self.states))

    @property
    def final(self):
        return self.states[-1]


def _check_state(model: CouplingModel, state: PhaseState):
    if state.M != model.M:
        raise ConfigurationError(f"state has {state.M} populations, model has {model.M}")


def rhs_naive(model: CouplingModel, state: PhaseState, max_ops=DEFAULT_MAX_OPS, subset: int | None = None):
    """Rates by exact nested sums over atoms.

    ``subset`` restricts the evaluation to the first ``subset`` oscillators of
    each population (used to time the kernel without paying for all targets).
    """
    _check_state(model, state)
    f = VelocityField(model, state.phases, state.weight_arrays(), path="quadrature", max_ops=max_ops)
    return [f(s, p if subset is None else p[:subset]) for s, p in enumerate(state.phases)]


def rhs_fast(model: CouplingModel, state: PhaseState):
    """Rates through circular moments (Fourier-representable couplings only)."""
    _check_state(model, state)
    if not model.is_factorizable:
        raise CapabilityError("model does not admit moment factorization")
    f = VelocityField(model, state.phases, state.weight_arrays(), path="moments")
    return [f(s, p) for s, p in enumerate(state.phases)]


def order_parameter(state: PhaseState, sigma: int):
    """(r, alpha) with r e^{i alpha} the weighted mean of e^{i phi} over population sigma."""
    z = np.exp(1j * state.phases[sigma]) @ state.weight_arrays()[sigma]
    return float(min(abs(z), 1.0)), wrap(np.angle(z))


def time_grid(dt: float, T: float) -> np.ndarray:
    """Step end times k*dt up to T; the last step is shortened to land on T."""
    if not (dt > 0 and np.isfinite(dt)):
        raise ConfigurationError("dt must be positive and finite")
    if not (T >= 0 and np.isfinite(T)):
        raise ConfigurationError("T must be nonnegative and finite")
    n = int(np.ceil(T / dt - 1e-9))
    t = np.arange(n + 1) * dt
    t[-1] = T
    if n > 0 and t[-1] <= t[-2]:
        t = np.delete(t, -2)
    return t


def integrate_particles(model: CouplingModel, positions, weights, dt, T, *, seeds=None, method="rk4",
                        path="auto", stride=1, max_ops=DEFAULT_MAX_OPS, on_sample=None):
    """Move atoms (and optional passive seeds) with the velocity field they generate.

    Returns ``(times, samples)`` with ``samples[i] = (atoms, seeds)`` as lists of
    wrapped arrays.  ``on_sample(t, atoms, seeds)`` is called at every record.
    """
    if method not in ("rk4", "heun"):
        raise ConfigurationError(f"unknown method {method!r}")
    if stride < 1:
        raise ConfigurationError("stride must be >= 1")
    M = model.M
    weights = [np.asarray(w, dtype=float) for w in weights]
    atoms = [wrap(np.asarray(p, dtype=float)) * np.ones(1) for p in positions]
    if seeds is None:
        seeds = [np.zeros(0) for _ in range(M)]
    else:
        seeds = [np.zeros(0) if np.size(b) == 0 else wrap(np.asarray(b, dtype=float)) * np.ones(1) for b in seeds]
    n_atoms = [a.size for a in atoms]
    sizes = [a.size + b.size for a, b in zip(atoms, seeds)]
    cuts = np.cumsum([0] + sizes)

    def split(y):
        parts = [y[cuts[s]:cuts[s + 1]] for s in range(M)]
        return [p[:n_atoms[s]] for s, p in enumerate(parts)], [p[n_atoms[s]:] for s, p in enumerate(parts)]

    def f(y):
        a, _ = split(y)
        field_ = VelocityField(model, a, weights, path=path, max_ops=max_ops)
        return np.concatenate([field_(s, y[cuts[s]:cuts[s + 1]]) for s in range(M)])

    y = np.concatenate([np.concatenate([a, b]) for a, b in zip(atoms, seeds)])
    grid = time_grid(dt, T)
    times, samples = [grid[0]], [split(y)]
    if on_sample is not None:
        on_sample(grid[0], *samples[-1])
    for k in range(1, grid.size):
        h = grid[k] - grid[k - 1]
        if method == "rk4":
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y_new = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            k1 = f(y)
            k2 = f(y + h * k1)
            y_new = y + 0.5 * h * (k1 + k2)
        if not np.all(np.isfinite(y_new)):
            raise DivergenceError(f"non-finite phases after t={grid[k - 1]:.6g}", last_valid_time=grid[k - 1])
        y = np.mod(y_new, TWO_PI)
        y[y >= TWO_PI] = 0.0
        if k % stride == 0 or k == grid.size - 1:
            times.append(grid[k])
            samples.append(split(y))
            if on_sample is not None:
                on_sample(grid[k], *samples[-1])
    return np.asarray(times), samples


def integrate(model: CouplingModel, initial: PhaseState, dt: float, T: float, method: str = "rk4",
              rhs: str = "auto", stride: int = 1, max_ops=DEFAULT_MAX_OPS) -> Trajectory:
    """Fixed-step integration of the finite network (RK4 or Heun), phases wrapped each step."""
    _check_state(model, initial)
    if rhs not in _PATHS:
        raise ConfigurationError(f"unknown rhs {rhs!r}")
    if rhs == "fast" and not model.is_factorizable:
        raise CapabilityError("model does not admit moment factorization")
    weights = initial.weight_arrays()
    times, samples = integrate_particles(
        model, initial.phases, weights, dt, T, method=method, path=_PATHS[rhs], stride=stride,
        max_ops=max_ops,
    )
    times = times + initial.time
    states = [PhaseState(tuple(a), t, initial.weights) for t, (a, _) in zip(times, samples)]
    meta = {
        "model": model.name,
        "model_hash": model.fingerprint(),
        "method": method,
        "rhs": rhs,
        "dt": dt,
        "T": T,
        "stride": stride,
    }
    return Trajectory(times, states, meta)
