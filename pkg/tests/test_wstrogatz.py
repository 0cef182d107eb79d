import numpy as np
import pytest
from scipy.optimize import brentq

from hoi.circle import TWO_PI, circ_dist
from hoi.coupling import preset_kuramoto, preset_skardal
from hoi.errors import ConfigurationError, DomainError, NearSingularError, ReductionInapplicableError, ValidationError
from hoi.nbody import PhaseState, integrate, order_parameter
from hoi.wstrogatz import (
    WSState,
    constraint_residuals,
    dH_check,
    fit_constants,
    has_majority_cluster,
    integrate_reduced,
    order_parameter_ws,
    potential_H,
    sine_coupling_constants,
    ws_reduced_rhs,
    ws_transform,
)

EXAMPLE = preset_skardal(0.0, 1.0, 0.0, -4.0)


def von_mises_phases(rng, N, kappa):
    return rng.vonmises(0.7, kappa, N) % TWO_PI


def test_equally_spaced_gives_gamma_zero():
    phi = np.arange(12) * TWO_PI / 12 + 0.4
    st = fit_constants(phi)
    assert st.gamma < 1e-12
    gaps = np.diff(np.sort(st.psi_constants))
    assert np.allclose(gaps, TWO_PI / 12)


def test_roundtrip_and_constraints(rng):
    for _ in range(50):
        N = int(rng.integers(3, 40))
        phi = von_mises_phases(rng, N, rng.uniform(0, 3))
        st = fit_constants(phi)
        assert max(constraint_residuals(st.psi_constants)) < 1e-10
        assert np.max(circ_dist(ws_transform(st), phi)) < 1e-9


def test_majority_cluster_refused():
    phi = np.array([1.0, 1.0, 1.0, 2.0, 3.0, 4.0])
    assert has_majority_cluster(phi)
    with pytest.raises(ReductionInapplicableError):
        fit_constants(phi)
    assert not has_majority_cluster([1.0, 1.0, 2.0, 3.0, 4.0])


def test_state_validation():
    with pytest.raises(ValidationError):
        WSState(1.0, 0.0, 0.0, np.arange(4) * TWO_PI / 4 - 3 * np.pi / 4)
    with pytest.raises(ValidationError):
        WSState(0.2, 0.0, 0.0, np.array([0.1, 0.2, 0.3]))


def test_transform_identity_and_shift():
    psi = (np.arange(5) - 2) * TWO_PI / 5
    st = WSState(0.0, 0.0, 0.0, psi)
    assert np.max(circ_dist(ws_transform(st), psi)) < 1e-14
    st = WSState(0.0, 1.1, 2.5, psi)
    assert np.max(circ_dist(ws_transform(st), psi - 1.1 + 2.5)) < 1e-14


def test_gamma_one_rejected():
    st = WSState(0.5, 0.0, 0.0, (np.arange(4) - 1.5) * TWO_PI / 4)
    object.__setattr__(st, "gamma", 1.0)
    with pytest.raises(DomainError):
        ws_transform(st)


def test_transform_preserves_cyclic_order(rng):
    for _ in range(100):
        st = fit_constants(von_mises_phases(rng, 9, 1.0))
        st = st.replace(gamma=rng.uniform(0, 0.99), Psi=rng.uniform(0, TWO_PI), Theta=rng.uniform(0, TWO_PI))
        order_in = np.argsort(np.mod(st.psi_constants - st.Psi, TWO_PI))
        out = ws_transform(st)
        order_out = np.argsort(np.mod(out - st.Theta, TWO_PI))
        assert np.array_equal(order_in, order_out)


def test_order_parameter_closed_form(rng):
    for _ in range(20):
        phi = von_mises_phases(rng, 30, 2.0)
        st = fit_constants(phi).replace(gamma=rng.uniform(0, 0.95), Psi=rng.uniform(0, TWO_PI))
        z = np.mean(np.exp(1j * ws_transform(st)))
        assert order_parameter_ws(st) == pytest.approx(abs(z), abs=1e-10)


def test_zero_effective_coupling_freezes_gamma(rng):
    st = fit_constants(von_mises_phases(rng, 20, 1.0))
    r = order_parameter_ws(st)
    model = preset_skardal(0.0, -4.0 * r * r, 0.0, 4.0)
    assert ws_reduced_rhs(st, model)[0] == 0.0


def test_near_singular_refused():
    st = fit_constants(np.arange(8) * TWO_PI / 8)
    with pytest.raises(NearSingularError):
        ws_reduced_rhs(st, EXAMPLE)


def test_non_sine_model_refused():
    with pytest.raises(ConfigurationError):
        sine_coupling_constants(preset_skardal(0.0, 1.0, 1.0, 1.0))
    assert sine_coupling_constants(preset_kuramoto(0.3, 2.0)) == (0.3, 2.0, 0.0)


def test_reduced_matches_full(rng):
    phi = von_mises_phases(rng, 64, 0.5)
    model = preset_skardal(0.5, 1.0, 0.0, -4.0)
    times, red = integrate_reduced(fit_constants(phi), model, 0.01, 10.0, stride=100)
    full = integrate(model, PhaseState((phi,)), 0.01, 10.0, stride=100)
    r_red = np.array([order_parameter_ws(s) for s in red])
    r_full = np.array([order_parameter(s, 0)[0] for s in full.states])
    assert np.max(np.abs(r_red - r_full)) < 1e-4


def test_reduced_passes_through_gamma_zero(rng):
    phi = np.arange(16) * TWO_PI / 16 + 1e-4 * rng.standard_normal(16)
    _, states = integrate_reduced(fit_constants(phi), preset_kuramoto(0.0, 1.0), 0.01, 5.0)
    assert states[-1].gamma > states[0].gamma


def test_potential_at_zero_gamma():
    st = WSState(0.0, 0.3, 0.0, (np.arange(6) - 2.5) * TWO_PI / 6)
    assert potential_H(st) == pytest.approx(0.0, abs=1e-15)


def test_potential_increases_below_half(rng):
    for _ in range(10):
        st = fit_constants(von_mises_phases(rng, 40, rng.uniform(0.05, 0.6)))
        r = order_parameter_ws(st)
        if r >= 0.5 or st.gamma < 1e-3:
            continue
        lhs, rhs = dH_check(st, EXAMPLE)
        assert lhs > 0 and rhs > 0
        assert abs(lhs - rhs) / abs(rhs) < 1e-3


def test_half_is_invariant(rng):
    st = fit_constants(von_mises_phases(rng, 50, 0.5))
    gamma = brentq(lambda g: order_parameter_ws(st.replace(gamma=g)) - 0.5, 1e-6, 0.999, xtol=1e-15)
    st = st.replace(gamma=gamma)
    _, states = integrate_reduced(st, EXAMPLE, 0.01, 50.0, stride=100)
    assert max(abs(order_parameter_ws(s) - 0.5) for s in states) < 1e-6
