"""Coupling models and the velocity operator.

A network has ``M`` populations (indexed from 0).  Population ``sigma`` moves
with the velocity field

    K_sigma mu (phi) = omega_sigma + int G_sigma(alpha, phi) d mu^(s)(alpha)

where ``s`` is a multi-index of populations and ``mu^(s)`` the product of the
corresponding measures.  Four interaction types are provided:

``GeneralG``
    arbitrary callable G in "general coordinates" (alpha_1..alpha_|s|, phi).
``FourierGeneral``
    G = sum a_{c,l} exp(i(<alpha, c> + l phi)) + c.c.
``DifferenceForm``
    G depends on pair differences and gamma - phi only:
    g(alpha_1 - beta_1, ..., alpha_L - beta_L, gamma - phi), with
    s = (r_1, r_1, ..., r_L, r_L, sigma).
``FourierDifference``
    g(a, gamma) = sum a_{b,l} exp(i<a, b>) exp(i l gamma) + c.c. with l >= 0.

Callables may be given as a sum of terms, each declaring the argument slots
it depends on.  Nested sums then only run over those slots, which keeps the
exact (naive) evaluation affordable for structured couplings.

Fourier interactions evaluate through circular moments: every term factorizes
into a product of moments Z_k = int e^{ik x} dmu, so the cost per target phase
is independent of the number of atoms.
"""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from functools import reduce
from math import prod
from typing import Callable, Sequence

import numpy as np

from .errors import CapabilityError, ConfigurationError, NaiveTooExpensiveError
from .measures import Atomic, CircleMeasure, GridDensity, uniform_density
from .parallel import pmap

__all__ = [
    "MultiIndex",
    "Term",
    "DifferenceTerm",
    "GeneralG",
    "FourierGeneral",
    "DifferenceForm",
    "FourierDifference",
    "CouplingModel",
    "VelocityField",
    "eval_velocity",
    "eval_velocity_moments",
    "sync_velocity_check",
    "estimate_lipschitz",
    "preset_kuramoto",
    "preset_skardal",
    "preset_bick3",
    "preset_phase_reduction",
    "DEFAULT_MAX_OPS",
    "MAX_QUADRATURE_DEPTH",
]

DEFAULT_MAX_OPS = 1e9
MAX_QUADRATURE_DEPTH = 3
_CHUNK = 1 << 21


@dataclass(frozen=True)
class MultiIndex:
    """Sequence of population indices; ``max_multiplicity`` is the largest repeat count."""

    entries: tuple = ()

    def __post_init__(self):
        e = tuple(int(x) for x in self.entries)
        if any(x < 0 for x in e):
            raise ConfigurationError(f"negative population index in {e}")
        object.__setattr__(self, "entries", e)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    @property
    def max_multiplicity(self) -> int:
        return max(Counter(self.entries).values(), default=0)

    def check(self, M: int):
        bad = [x for x in self.entries if x >= M]
        if bad:
            raise ConfigurationError(f"population index {bad[0]} out of range for M={M}")


@dataclass(frozen=True)
class Term:
    """Additive piece ``func(*alpha[slots], phi)`` of a general coupling."""

    func: Callable
    slots: tuple = ()


@dataclass(frozen=True)
class DifferenceTerm:
    """Additive piece ``func(*(alpha_j - beta_j for j in pairs), gamma - phi)``."""

    func: Callable
    pairs: tuple = ()


# --------------------------------------------------------------------------
# Fourier tables in general coordinates


@dataclass(frozen=True)
class FourierTable:
    """G(alpha, phi) = sum_t a_t exp(i(<c_t, alpha> + l_t phi)) + c.c."""

    s: tuple
    c: np.ndarray
    l: np.ndarray
    a: np.ndarray

    @property
    def n_terms(self) -> int:
        return self.a.size

    def orders(self) -> dict:
        """Highest moment order needed per population."""
        need = {}
        for i, p in enumerate(self.s):
            k = int(np.abs(self.c[:, i]).max()) if self.n_terms else 0
            need[p] = max(need.get(p, 0), k)
        return need

    def lipschitz_bound(self) -> float:
        """Sup-norm of the gradient bound, i.e. a Lipschitz constant for the sum metric."""
        if self.n_terms == 0:
            return 0.0
        amp = 2.0 * np.abs(self.a)
        per_coord = list(amp @ np.abs(self.c)) + [float(amp @ np.abs(self.l))]
        return float(max(per_coord))

    def mode_amplitudes(self, moments: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Collapse the table to sum_l A_l e^{i l phi} given per-population moments."""
        prodz = self.a.astype(complex).copy()
        for i, p in enumerate(self.s):
            z = moments[p]
            ci = self.c[:, i]
            k = np.abs(ci)
            if k.max(initial=0) >= z.size:
                raise ConfigurationError(
                    f"moments of population {p} needed to order {k.max()}, have {z.size - 1}"
                )
            zi = z[k]
            prodz *= np.where(ci >= 0, zi, np.conj(zi))
        ls, inv = np.unique(self.l, return_inverse=True)
        amps = np.zeros(ls.size, dtype=complex)
        np.add.at(amps, inv, prodz)
        return ls, amps

    def naive_terms(self) -> list:
        groups = {}
        for t in range(self.n_terms):
            slots = tuple(int(i) for i in np.flatnonzero(self.c[t]))
            groups.setdefault(slots, []).append(t)
        out = []
        for slots, idx in groups.items():
            out.append(Term(_fourier_group(self.c[np.ix_(idx, slots)], self.l[idx], self.a[idx]), slots))
        return out


def _fourier_group(c_sub, l_sub, a_sub):
    c_sub = np.asarray(c_sub)

    def func(*args):
        *alphas, phi = args
        total = 0.0
        for t in range(a_sub.size):
            theta = l_sub[t] * phi
            for i, x in enumerate(alphas):
                theta = theta + c_sub[t, i] * x
            total = total + 2.0 * (a_sub[t].real * np.cos(theta) - a_sub[t].imag * np.sin(theta))
        return total

    return func


def _coeff_dict(coeffs, key_len, what):
    out = {}
    for key, val in dict(coeffs).items():
        vec, l = key
        vec = tuple(int(v) for v in vec)
        if len(vec) != key_len:
            raise ConfigurationError(f"{what}: index {vec} has length {len(vec)}, expected {key_len}")
        a = complex(val)
        if a != 0:
            out[(vec, int(l))] = out.get((vec, int(l)), 0) + a
    return out


# --------------------------------------------------------------------------
# interaction types


class Interaction:
    """Per-population interaction; subclasses fill in the general-coordinate view."""

    L: float | None = None

    def general_index(self, sigma: int) -> MultiIndex:
        raise NotImplementedError

    def naive_terms(self, sigma: int) -> list:
        raise NotImplementedError

    def fourier_table(self, sigma: int) -> FourierTable | None:
        return None

    def referenced(self, sigma: int) -> set:
        return set(self.general_index(sigma))

    def describe(self) -> str:
        return repr(self)


class GeneralG(Interaction):
    """Callable coupling ``G(alpha_1, ..., alpha_|s|, phi)``.

    Either pass ``G`` (depends on every slot) or ``terms`` (a list of ``Term``).
    """

    def __init__(self, s, G: Callable | None = None, *, terms=None, L: float | None = None):
        self.s = MultiIndex(tuple(s))
        if (G is None) == (terms is None):
            raise ConfigurationError("give exactly one of G or terms")
        if G is not None:
            terms = [Term(G, tuple(range(len(self.s))))]
        self.terms = [Term(t.func, tuple(sorted(int(i) for i in t.slots))) for t in terms]
        for t in self.terms:
            if any(i >= len(self.s) for i in t.slots):
                raise ConfigurationError(f"term slot out of range for |s|={len(self.s)}")
        self.L = L

    def general_index(self, sigma):
        return self.s

    def naive_terms(self, sigma):
        return list(self.terms)

    def describe(self):
        names = ",".join(getattr(t.func, "__qualname__", "?") for t in self.terms)
        return f"GeneralG(s={self.s.entries}, terms=[{names}], L={self.L})"


class FourierGeneral(Interaction):
    """Fourier series in general coordinates, keys ``(c, l)`` with ``len(c) == |s|``."""

    def __init__(self, s, coeffs, L: float | None = None):
        self.s = MultiIndex(tuple(s))
        self.coeffs = _coeff_dict(coeffs, len(self.s), "FourierGeneral")
        keys = list(self.coeffs)
        n = len(self.s)
        self._table = FourierTable(
            self.s.entries,
            np.array([k[0] for k in keys], dtype=int).reshape(len(keys), n),
            np.array([k[1] for k in keys], dtype=int),
            np.array([self.coeffs[k] for k in keys], dtype=complex),
        )
        self.L = self._table.lipschitz_bound() if L is None else L

    def general_index(self, sigma):
        return self.s

    def naive_terms(self, sigma):
        return self._table.naive_terms()

    def fourier_table(self, sigma):
        return self._table

    def describe(self):
        items = sorted((k, (v.real, v.imag)) for k, v in self.coeffs.items())
        return f"FourierGeneral(s={self.s.entries}, coeffs={items}, L={self.L})"


class DifferenceForm(Interaction):
    """Coupling depending only on pair differences and gamma - phi.

    ``g(a_1, ..., a_L, gamma)`` with ``L = len(r)``; pass ``g`` or ``terms``
    (a list of ``DifferenceTerm``).
    """

    def __init__(self, r, g: Callable | None = None, *, terms=None, L: float | None = None):
        self.r = MultiIndex(tuple(r))
        if (g is None) == (terms is None):
            raise ConfigurationError("give exactly one of g or terms")
        if g is not None:
            terms = [DifferenceTerm(g, tuple(range(len(self.r))))]
        self.terms = [DifferenceTerm(t.func, tuple(sorted(int(j) for j in t.pairs))) for t in terms]
        for t in self.terms:
            if any(j >= len(self.r) for j in t.pairs):
                raise ConfigurationError(f"term pair out of range for |r|={len(self.r)}")
        self.L = L

    def general_index(self, sigma):
        return MultiIndex(tuple(x for p in self.r for x in (p, p)) + (sigma,))

    def naive_terms(self, sigma):
        n_pairs = len(self.r)
        out = []
        for t in self.terms:
            slots = tuple(x for j in t.pairs for x in (2 * j, 2 * j + 1)) + (2 * n_pairs,)
            out.append(Term(_difference_wrapper(t.func, len(t.pairs)), slots))
        return out

    def g(self, diffs, gamma):
        """Evaluate g at pair differences ``diffs`` (length |r|) and ``gamma``."""
        gamma = np.asarray(gamma, dtype=float)
        total = 0.0
        for t in self.terms:
            total = total + t.func(*[diffs[j] for j in t.pairs], gamma)
        return total * np.ones_like(gamma)

    def dg_dgamma(self, diffs, gamma, step: float = 1e-6):
        gamma = np.asarray(gamma, dtype=float)
        return (self.g(diffs, gamma + step) - self.g(diffs, gamma - step)) / (2 * step)

    def describe(self):
        names = ",".join(getattr(t.func, "__qualname__", "?") for t in self.terms)
        return f"DifferenceForm(r={self.r.entries}, terms=[{names}], L={self.L})"


def _difference_wrapper(func, n_pairs):
    def wrapped(*args):
        diffs = [args[2 * i] - args[2 * i + 1] for i in range(n_pairs)]
        gamma, phi = args[2 * n_pairs], args[2 * n_pairs + 1]
        return func(*diffs, gamma - phi)

    return wrapped


class FourierDifference(DifferenceForm):
    """Difference-form coupling given by Fourier coefficients ``{(b, l): a}`` with l >= 0."""

    def __init__(self, r, coeffs, L: float | None = None):
        self.r = MultiIndex(tuple(r))
        self.coeffs = _coeff_dict(coeffs, len(self.r), "FourierDifference")
        zero = (tuple([0] * len(self.r)), 0)
        if zero in self.coeffs:
            raise ConfigurationError("the constant coefficient a_{0,0} must vanish (absorb it into omega)")
        if any(l < 0 for _, l in self.coeffs):
            raise ConfigurationError("FourierDifference keys need l >= 0")
        keys = list(self.coeffs)
        self._b = np.array([k[0] for k in keys], dtype=int).reshape(len(keys), len(self.r))
        self._l = np.array([k[1] for k in keys], dtype=int)
        self._a = np.array([self.coeffs[k] for k in keys], dtype=complex)
        self.terms = None
        self.L = self.fourier_table(0).lipschitz_bound() if L is None else L

    def fourier_table(self, sigma):
        n = len(self.r)
        c = np.zeros((self._a.size, 2 * n + 1), dtype=int)
        c[:, 0:2 * n:2] = self._b
        c[:, 1:2 * n:2] = -self._b
        c[:, 2 * n] = self._l
        return FourierTable(self.general_index(sigma).entries, c, -self._l, self._a)

    def naive_terms(self, sigma):
        return self.fourier_table(sigma).naive_terms()

    def g(self, diffs, gamma):
        gamma = np.asarray(gamma, dtype=float)
        total = np.zeros(np.shape(gamma))
        for b, l, a in zip(self._b, self._l, self._a):
            theta = l * gamma
            for j, bj in enumerate(b):
                if bj:
                    theta = theta + bj * np.asarray(diffs[j], dtype=float)
            total = total + 2.0 * (a.real * np.cos(theta) - a.imag * np.sin(theta))
        return total

    def dg_dgamma(self, diffs, gamma, step=None):
        gamma = np.asarray(gamma, dtype=float)
        total = np.zeros(np.shape(gamma))
        for b, l, a in zip(self._b, self._l, self._a):
            if l == 0:
                continue
            theta = l * gamma
            for j, bj in enumerate(b):
                if bj:
                    theta = theta + bj * np.asarray(diffs[j], dtype=float)
            total = total - 2.0 * l * (a.real * np.sin(theta) + a.imag * np.cos(theta))
        return total

    def coefficient(self, b, l) -> complex:
        return self.coeffs.get((tuple(int(x) for x in b), int(l)), 0j)

    def describe(self):
        items = sorted((k, (v.real, v.imag)) for k, v in self.coeffs.items())
        return f"FourierDifference(r={self.r.entries}, coeffs={items}, L={self.L})"


# --------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class CouplingModel:
    omega: tuple
    interactions: tuple
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        om = tuple(float(w) for w in np.atleast_1d(self.omega))
        inter = tuple(self.interactions)
        if len(om) != len(inter):
            raise ConfigurationError(f"{len(om)} frequencies for {len(inter)} populations")
        for sigma, it in enumerate(inter):
            if not isinstance(it, Interaction):
                raise ConfigurationError(f"population {sigma}: not an Interaction")
            it.general_index(sigma).check(len(om))
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "interactions", inter)

    @property
    def M(self) -> int:
        return len(self.omega)

    @property
    def L(self) -> float:
        Ls = [it.L for it in self.interactions]
        if any(x is None for x in Ls):
            raise ConfigurationError("model has no Lipschitz constant for every population")
        return float(max(Ls, default=0.0))

    def general_index(self, sigma: int) -> MultiIndex:
        return self.interactions[sigma].general_index(sigma)

    def sbar(self, sigma: int) -> int:
        return self.general_index(sigma).max_multiplicity

    @property
    def sbar_sum(self) -> int:
        return sum(self.sbar(s) for s in range(self.M))

    @property
    def is_factorizable(self) -> bool:
        return all(it.fourier_table(s) is not None for s, it in enumerate(self.interactions))

    @property
    def is_difference_form(self) -> bool:
        return all(isinstance(it, DifferenceForm) for it in self.interactions)

    def fingerprint(self) -> str:
        text = repr((self.omega, [it.describe() for it in self.interactions]))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# evaluation


def _nested_sum(func, pos_list, w_list, phi):
    """sum over atoms of prod(w) * func(*atoms, phi) for every entry of ``phi``."""
    phi = np.asarray(phi, dtype=float).ravel()
    k = len(pos_list)
    if k == 0:
        return np.broadcast_to(np.asarray(func(phi), dtype=float), phi.shape).copy()
    sizes = [p.size for p in pos_list]
    inner = prod(sizes[1:])
    per_phi = prod(sizes)
    w_rest = reduce(np.multiply.outer, w_list[1:]) if k > 1 else np.array(1.0)
    a_chunk = sizes[0] if per_phi <= _CHUNK else max(1, _CHUNK // inner)
    phi_chunk = max(1, _CHUNK // per_phi)
    rest = [pos_list[i].reshape((1,) * i + (-1,) + (1,) * (k - i)) for i in range(1, k)]

    def run(sl):
        ph = phi[sl].reshape((1,) * k + (-1,))
        acc = np.zeros(ph.size)
        for a0 in range(0, sizes[0], a_chunk):
            first = pos_list[0][a0:a0 + a_chunk].reshape((-1,) + (1,) * k)
            vals = np.asarray(func(first, *rest, ph), dtype=float)
            shape = (first.shape[0],) + tuple(sizes[1:]) + (ph.size,)
            vals = np.broadcast_to(vals, shape)
            W = np.multiply.outer(w_list[0][a0:a0 + a_chunk], w_rest)
            acc += np.tensordot(W, vals, axes=k)
        return acc

    chunks = [slice(i, i + phi_chunk) for i in range(0, phi.size, phi_chunk)]
    return np.concatenate(pmap(run, chunks))


def _moments(pos, w, k_max):
    z1 = np.exp(1j * pos)
    out = np.empty(k_max + 1, dtype=complex)
    out[0] = 1.0
    zk = np.ones_like(z1)
    for k in range(1, k_max + 1):
        zk = zk * z1
        out[k] = zk @ w
    return out


class VelocityField:
    """Velocity fields of all populations for a frozen network state.

    Parameters
    ----------
    model : CouplingModel
    positions, weights : per-population arrays of atom positions and weights
    from_density : per-population flags; densities enter as midpoint atoms
    path : ``"auto"`` (moments when available), ``"moments"`` or ``"quadrature"``
    max_ops : guard on the estimated number of kernel evaluations per call
    """

    def __init__(self, model: CouplingModel, positions, weights, from_density=None, path="auto",
                 max_ops=DEFAULT_MAX_OPS):
        if len(positions) != model.M or len(weights) != model.M:
            raise ConfigurationError(f"state has {len(positions)} populations, model has {model.M}")
        if path not in ("auto", "moments", "quadrature", "naive"):
            raise ConfigurationError(f"unknown evaluation path {path!r}")
        self.model = model
        self.positions = [np.asarray(p, dtype=float) for p in positions]
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.from_density = list(from_density) if from_density is not None else [False] * model.M
        self.path = "quadrature" if path == "naive" else path
        self.max_ops = max_ops
        self._moments = {}
        self._modes = {}

    @classmethod
    def from_measures(cls, model, measures: Sequence[CircleMeasure], **kw):
        pos, w, dens = [], [], []
        for mu in measures:
            if isinstance(mu, GridDensity):
                m = mu.cell_masses
                pos.append(mu.midpoints)
                w.append(m / m.sum())
                dens.append(True)
            elif isinstance(mu, Atomic):
                pos.append(mu.positions)
                w.append(mu.weights)
                dens.append(False)
            else:
                raise ConfigurationError(f"unsupported measure type {type(mu).__name__}")
        return cls(model, pos, w, dens, **kw)

    def moments(self, p: int, k_max: int) -> np.ndarray:
        have = self._moments.get(p)
        if have is None or have.size <= k_max:
            have = _moments(self.positions[p], self.weights[p], k_max)
            self._moments[p] = have
        return have

    def uses_moments(self, sigma: int) -> bool:
        table = self.model.interactions[sigma].fourier_table(sigma)
        if self.path == "moments":
            if table is None:
                raise CapabilityError(f"population {sigma}: coupling has no Fourier representation")
            return True
        return self.path == "auto" and table is not None

    def modes(self, sigma: int):
        """(l values, amplitudes A_l) with velocity = omega + 2 Re sum_l A_l e^{i l phi}."""
        if sigma not in self._modes:
            table = self.model.interactions[sigma].fourier_table(sigma)
            orders = table.orders()
            moments = [self.moments(p, orders.get(p, 0)) for p in range(self.model.M)]
            self._modes[sigma] = table.mode_amplitudes(moments)
        return self._modes[sigma]

    def estimate_ops(self, sigma: int, n_targets: int) -> float:
        s = self.model.general_index(sigma)
        total = 0.0
        for t in self.model.interactions[sigma].naive_terms(sigma):
            total += prod(self.positions[s[i]].size for i in t.slots) * n_targets
        return total

    def __call__(self, sigma: int, phi):
        phi = np.asarray(phi, dtype=float)
        omega = self.model.omega[sigma]
        if self.uses_moments(sigma):
            ls, amps = self.modes(sigma)
            flat = phi.ravel()
            acc = np.zeros(flat.size, dtype=complex)
            for l, A in zip(ls, amps):
                acc += A * np.exp(1j * l * flat)
            return (omega + 2.0 * acc.real).reshape(phi.shape)
        return omega + self._quadrature(sigma, phi.ravel()).reshape(phi.shape)

    def _quadrature(self, sigma, phi):
        s = self.model.general_index(sigma)
        terms = self.model.interactions[sigma].naive_terms(sigma)
        for t in terms:
            if len(t.slots) > MAX_QUADRATURE_DEPTH and any(self.from_density[s[i]] for i in t.slots):
                raise CapabilityError(
                    f"population {sigma}: nested quadrature over {len(t.slots)} density arguments; "
                    "use Fourier path"
                )
        if self.max_ops is not None:
            ops = self.estimate_ops(sigma, phi.size)
            if ops > self.max_ops:
                raise NaiveTooExpensiveError(
                    f"population {sigma}: nested sum needs ~{ops:.3g} evaluations (limit {self.max_ops:.3g})"
                )
        out = np.zeros(phi.size)
        for t in terms:
            out += _nested_sum(
                t.func,
                [self.positions[s[i]] for i in t.slots],
                [self.weights[s[i]] for i in t.slots],
                phi,
            )
        return out


def eval_velocity(model: CouplingModel, sigma: int, state: Sequence[CircleMeasure], phi, path="auto",
                  max_ops=DEFAULT_MAX_OPS):
    """(K_sigma mu)(phi) for a sequence of measures ``state``."""
    field_ = VelocityField.from_measures(model, state, path=path, max_ops=max_ops)
    out = field_(sigma, phi)
    return float(out) if np.ndim(out) == 0 else out


def eval_velocity_moments(model: CouplingModel, sigma: int, moments: Sequence[np.ndarray], phi):
    """Velocity from per-population moment vectors (index k holds Z_k, Z_0 = 1)."""
    table = model.interactions[sigma].fourier_table(sigma)
    if table is None:
        raise CapabilityError(f"population {sigma}: coupling has no Fourier representation")
    moments = [np.asarray(z, dtype=complex) for z in moments]
    if len(moments) != model.M:
        raise ConfigurationError(f"{len(moments)} moment vectors for {model.M} populations")
    ls, amps = table.mode_amplitudes(moments)
    phi = np.asarray(phi, dtype=float)
    acc = np.zeros(phi.shape, dtype=complex)
    for l, A in zip(ls, amps):
        acc = acc + A * np.exp(1j * l * phi)
    out = model.omega[sigma] + 2.0 * acc.real
    return float(out) if np.ndim(out) == 0 else out


def sync_velocity_check(model: CouplingModel, sigma: int, n_grid: int = 256) -> float:
    """sup over a phase grid of |K_sigma(phi) - mean| with every population uniform."""
    state = [uniform_density(n_grid)] * model.M
    phi = np.arange(n_grid) * 2 * np.pi / n_grid + 0.123
    v = eval_velocity(model, sigma, state, phi)
    return float(np.max(np.abs(v - v.mean())))


def estimate_lipschitz(model: CouplingModel, sigma: int, n_samples: int = 2000, seed: int = 0,
                       safety: float = 1.5, step: float = 1e-6) -> float:
    """Sampled sup-norm of the gradient of G in general coordinates, times ``safety``.

    Informational only: the model's own ``L`` is never replaced by this value.
    """
    rng = np.random.default_rng(seed)
    s = model.general_index(sigma)
    n = len(s) + 1
    terms = model.interactions[sigma].naive_terms(sigma)
    x = rng.uniform(0, 2 * np.pi, size=(n_samples, n))

    def G(pts):
        total = np.zeros(pts.shape[0])
        for t in terms:
            total += t.func(*[pts[:, i] for i in t.slots], pts[:, -1])
        return total

    best = 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        best = max(best, float(np.max(np.abs(G(x + e) - G(x - e)) / (2 * step))))
    return safety * best


# --------------------------------------------------------------------------
# presets


def _omegas(omega, M):
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    if om.size == 1:
        om = np.repeat(om, M)
    if om.size != M:
        raise ConfigurationError(f"omega needs 1 or {M} entries, got {om.size}")
    return tuple(om)


def preset_kuramoto(omega=0.0, K=1.0) -> CouplingModel:
    """Classical Kuramoto coupling G(alpha, phi) = K sin(alpha - phi)."""
    inter = FourierDifference((), {((), 1): -0.5j * K}, L=abs(K))
    return CouplingModel(_omegas(omega, 1), (inter,), name="kuramoto", meta={"K": K})


def preset_skardal(omega=0.0, K1=1.0, K2=0.0, K3=0.0) -> CouplingModel:
    """Pairwise plus two- and three-body sine coupling of a single population.

    With K2 = 0 the model is returned in difference form with
    g(a, gamma) = K1 sin(gamma) + K3 sin(a + gamma); otherwise as a general
    Fourier coupling over s = (0, 0, 0).
    """
    meta = {"K1": K1, "K2": K2, "K3": K3}
    if K2 == 0:
        coeffs = {((0,), 1): -0.5j * K1, ((1,), 1): -0.5j * K3}
        inter = FourierDifference((0,), coeffs, L=abs(K1) + abs(K3))
    else:
        coeffs = {
            ((1, 0, 0), -1): -0.5j * K1,
            ((2, -1, 0), -1): -0.5j * K2,
            ((1, -1, 1), -1): -0.5j * K3,
        }
        inter = FourierGeneral((0, 0, 0), coeffs)
    return CouplingModel(_omegas(omega, 1), (inter,), name="skardal", meta=meta)


def preset_bick3(omega, h2_coeffs, h4_coeffs, K_plus, K_minus) -> CouplingModel:
    """Three populations with h2 intra coupling and h4 coupling to the neighbours.

    ``h2_coeffs`` maps k >= 1 to xi_k, h2(gamma) = sum xi_k e^{ik gamma} + c.c.;
    ``h4_coeffs`` maps (l, k), k >= 0, to zeta_{l,k},
    h4(a, gamma) = sum zeta_{l,k} e^{i a l} e^{i gamma k} + c.c.
    Population sigma couples to sigma - 1 with -K_minus and to sigma + 1 with
    +K_plus (indices mod 3).
    """
    h2 = {int(k): complex(v) for k, v in dict(h2_coeffs).items()}
    h4 = {}
    for key, v in dict(h4_coeffs).items():
        try:
            l, k = key
        except (TypeError, ValueError):
            raise ConfigurationError(f"h4 coefficient key {key!r} must be a pair (l, k)") from None
        h4[(int(l), int(k))] = complex(v)
    if any(k < 1 for k in h2):
        raise ConfigurationError("h2 coefficients need k >= 1")
    if any(k < 0 for _, k in h4):
        raise ConfigurationError("h4 coefficients need k >= 0")
    coeffs = {}

    def add(key, val):
        if val != 0:
            coeffs[key] = coeffs.get(key, 0) + val

    for k, xi in h2.items():
        add(((0, 0), k), xi)
    for (l, k), zeta in h4.items():
        add(((l, 0), k), -K_minus * zeta)
        add(((0, l), k), K_plus * zeta)
    if abs(coeffs.pop(((0, 0), 0), 0)) > 0:
        raise ConfigurationError("h4 constant term zeta_{0,0} does not cancel; absorb it into omega")
    inters = []
    for sigma in range(3):
        r = ((sigma - 1) % 3, (sigma + 1) % 3)
        inters.append(FourierDifference(r, coeffs))
    meta = {"h2": h2, "h4": h4, "K_plus": K_plus, "K_minus": K_minus}
    return CouplingModel(_omegas(omega, 3), tuple(inters), name="bick3", meta=meta)


def preset_phase_reduction(lam, epsilon, xi_params, chi_params, omega=0.0) -> CouplingModel:
    """Truncated phase model of globally coupled oscillators near a Hopf bifurcation.

    ``xi_params`` = (xi0_1, xi_1, xi_2, xi_3, xi_4, xi_5) and ``chi_params`` =
    (chi_1, ..., chi_5) define
    g2(x) = xi0_1 cos(x + chi_1) + lam xi_1 cos(x + chi_1) + lam xi_2 cos(2x + chi_2),
    g3, g4, g5(x) = lam xi_i cos(x + chi_i), entering as
    eps g2(a1 - phi) + eps g3(a1 + a2 - 2 phi) + eps g4(2 a1 - a2 - phi)
    + eps g5(a1 + a2 - a3 - phi).
    """
    xi = np.asarray(xi_params, dtype=float).ravel()
    chi = np.asarray(chi_params, dtype=float).ravel()
    if xi.size != 6 or chi.size != 5:
        raise ConfigurationError("phase reduction needs 6 xi parameters and 5 chi parameters")
    half = 0.5 * epsilon
    coeffs = {
        ((1, 0, 0), -1): half * (xi[0] + lam * xi[1]) * np.exp(1j * chi[0]),
        ((2, 0, 0), -2): half * lam * xi[2] * np.exp(1j * chi[1]),
        ((1, 1, 0), -2): half * lam * xi[3] * np.exp(1j * chi[2]),
        ((2, -1, 0), -1): half * lam * xi[4] * np.exp(1j * chi[3]),
        ((1, 1, -1), -1): half * lam * xi[5] * np.exp(1j * chi[4]),
    }
    inter = FourierGeneral((0, 0, 0), coeffs)
    meta = {"lambda": lam, "epsilon": epsilon, "xi": xi.tolist(), "chi": chi.tolist()}
    return CouplingModel(_omegas(omega, 1), (inter,), name="phase_reduction", meta=meta)
