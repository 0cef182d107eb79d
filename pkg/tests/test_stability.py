import numpy as np
import pytest

from hoi.circle import TWO_PI, circ_dist, wrap
from hoi.coupling import (
    CouplingModel,
    DifferenceForm,
    FourierDifference,
    GeneralG,
    eval_velocity,
    preset_bick3,
    preset_kuramoto,
    preset_skardal,
)
from hoi.errors import ConfigurationError, PathologicalCouplingError
from hoi.meanfield import NetworkState, trace_characteristics
from hoi.measures import Atomic, equally_spaced, w1_circle
from hoi.stability import (
    classify_trend,
    perturbation_experiment,
    reduce_fixed_populations,
    splay_report,
    sync_report,
    two_atom_rate,
    two_atom_steady_state,
)

H2 = {1: 0.2 - 0.4j, 2: 0.05j}
H4 = {(0, 1): 0.1 - 0.3j, (1, 1): 0.15 + 0.1j, (-1, 1): -0.05j, (1, 0): 0.1}
BICK = preset_bick3(1.0, H2, H4, 0.8, 0.4)


def sakaguchi(lag=0.6, omega=0.3):
    return CouplingModel((omega,), (FourierDifference((), {((), 1): -0.5j * np.exp(1j * lag)}),))


# synchronized state


def test_kuramoto_sync_report():
    rep = sync_report(preset_kuramoto(0.0, 1.5))
    assert rep.a == pytest.approx([1.5])
    psis = sorted(z.psi for z in rep.zeros[0])
    assert psis == pytest.approx([0.0, np.pi], abs=1e-10)
    at_pi = [z for z in rep.zeros[0] if abs(z.psi - np.pi) < 1e-6][0]
    assert at_pi.derivative == pytest.approx(-1.5, abs=1e-8)
    assert rep.stable_condition and rep.asymptotic_condition


def test_skardal_sync_coefficient():
    assert sync_report(preset_skardal(0, 0.7, 0, 0.4)).a == pytest.approx([1.1])
    rep = sync_report(preset_skardal(0, 1.0, 0, -4.0))
    assert rep.a == pytest.approx([-3.0]) and not rep.stable_condition


def test_finite_difference_coefficient_matches_exact():
    K1, K3 = 0.7, -1.9
    callable_model = CouplingModel(
        (0.0,), (DifferenceForm((0,), lambda a, g: K1 * np.sin(g) + K3 * np.sin(a + g), L=2.6),))
    fd = sync_report(callable_model).a[0]
    exact = sync_report(preset_skardal(0, K1, 0, K3)).a[0]
    assert abs(fd - exact) < 1e-6


def test_degenerate_zero_fails_asymptotic_condition():
    # g(psi) = sin(psi) + sin(2 psi)/2 has a double zero at pi
    model = CouplingModel((0.0,), (FourierDifference((), {((), 1): -0.5j, ((), 2): -0.25j}),))
    rep = sync_report(model)
    assert rep.stable_condition and not rep.asymptotic_condition


def test_pathological_coupling():
    model = CouplingModel((0.0,), (FourierDifference((), {((), 100): -0.5j}),))
    with pytest.raises(PathologicalCouplingError):
        sync_report(model)


def test_general_form_refused():
    with pytest.raises(ConfigurationError):
        sync_report(preset_skardal(0, 1, 1, 1))
    with pytest.raises(ConfigurationError):
        sync_report(CouplingModel((0.0,), (GeneralG((0,), lambda a, p: np.sin(a - p), L=1.0),)))


# splay state


def test_splay_rates_kuramoto():
    rep = splay_report(preset_kuramoto(0.0, -1.0), 3)
    assert rep.coefficients[0, 0] == pytest.approx(0.5j)
    assert rep.growth_rates[0, 0] == pytest.approx(-0.5)
    assert rep.verdict == "inconclusive"  # higher modes of a pure sine are marginal
    assert np.allclose(rep.growth_rates, rep.mode_factors.real, atol=1e-14)
    assert splay_report(preset_kuramoto(0.0, -1.0), 1).verdict == "stable"
    assert splay_report(preset_kuramoto(0.0, 1.0), 1).verdict == "unstable"


def test_cosine_coupling_is_inconclusive():
    model = CouplingModel((0.0,), (FourierDifference((), {((), 1): 0.5}),))
    rep = splay_report(model, 1)
    assert rep.growth_rates[0, 0] == 0.0 and rep.verdict == "inconclusive"


def test_bick_splay_criterion():
    rep = splay_report(BICK, 2)
    for k in (1, 2):
        coef = H2.get(k, 0) + (0.8 - 0.4) * H4.get((0, k), 0)
        for sigma in range(3):
            assert rep.coefficients[sigma, k - 1] == pytest.approx(coef, abs=1e-15)
            assert rep.growth_rates[sigma, k - 1] == pytest.approx(-k * coef.imag)


def test_callable_splay_coefficients():
    callable_model = CouplingModel((0.0,), (DifferenceForm((0,), lambda a, g: np.sin(g) + 0.3 * np.cos(a + 2 * g), L=2),))
    rep = splay_report(callable_model, 2)
    assert rep.coefficients[0] == pytest.approx([-0.5j, 0.0], abs=1e-12)


@pytest.mark.slow
def test_measured_splay_rate():
    rep = splay_report(preset_kuramoto(0.0, -1.0), 1, measure=True)
    assert rep.measured_rates[(0, 1)] == pytest.approx(-0.5, rel=0.1)


# two-atom family


def test_two_atom_kuramoto_equal_masses():
    ss = two_atom_steady_state(preset_kuramoto(0.0, 1.0), 2)
    assert ss.psi0 == pytest.approx(np.pi, abs=1e-10)
    psi = np.linspace(0.1, 6.0, 9)
    assert np.allclose(two_atom_rate(preset_kuramoto(0.0, 1.0), 2, psi), -np.sin(psi), atol=1e-14)


def test_two_atom_limit():
    model = sakaguchi()
    psi0 = [z.psi for z in sync_report(model).zeros[0] if z.psi != 0.0][0]
    limit = wrap(-psi0)
    errors = [circ_dist(two_atom_steady_state(model, n).psi0, limit) for n in (4, 8, 16, 32)]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 0.1


def test_two_atom_residuals():
    for model in (sakaguchi(), preset_skardal(0, 1, 0, -4)):
        for n in (2, 4, 8, 16):
            ss = two_atom_steady_state(model, n)
            assert ss.found and ss.residual < 1e-10


def test_two_atom_validation():
    with pytest.raises(ConfigurationError):
        two_atom_steady_state(BICK, 4)
    with pytest.raises(ConfigurationError):
        two_atom_steady_state(preset_kuramoto(), 1)


# reduction


def test_reduce_nothing_and_everything():
    assert reduce_fixed_populations(BICK, ["free"] * 3) is BICK
    empty = reduce_fixed_populations(BICK, ["splay", "sync", "splay"])
    assert empty.M == 0
    with pytest.raises(ConfigurationError):
        reduce_fixed_populations(BICK, ["free", "splay"])


def test_bick_reduction_to_single_coupling():
    red = reduce_fixed_populations(BICK, ["free", "splay", "splay"])
    assert red.M == 1
    it = red.interactions[0]
    for k in (1, 2):
        assert it.coefficient((), k) == pytest.approx(H2.get(k, 0) + (0.8 - 0.4) * H4.get((0, k), 0))


def test_reduction_commutes_with_dynamics(rng):
    free = Atomic(rng.uniform(0, TWO_PI, 24), rng.dirichlet(np.ones(24)))
    full0 = NetworkState((free, Atomic.equal_weights([2.0] * 1), equally_spaced(64, 0.3)))
    red = reduce_fixed_populations(BICK, ["free", "sync", "splay"])
    _, full = trace_characteristics(BICK, full0, None, 0.01, 2.0, stride=50)
    _, reduced = trace_characteristics(red, NetworkState((free,)), None, 0.01, 2.0, stride=50)
    for a, b in zip(full, reduced):
        assert w1_circle(a.measures[0], b.measures[0]) < 1e-6


def test_callable_reduction_matches_fourier(rng):
    g = lambda a, b, gam: np.sin(gam) + 0.5 * np.sin(a + gam) - 0.3 * np.cos(b - gam)  # noqa: E731
    callable_model = CouplingModel((0.0, 0.0, 0.0), tuple(
        DifferenceForm(((s + 1) % 3, (s + 2) % 3), g, L=2.0) for s in range(3)))
    fixed = ["free", "sync", "splay"]
    red = reduce_fixed_populations(callable_model, fixed)
    mu = Atomic.equal_weights(rng.uniform(0, TWO_PI, 7))
    phi = np.linspace(0, 6, 5)
    expected = eval_velocity(callable_model, 0, [mu, Atomic.equal_weights([1.0]), equally_spaced(64)], phi)
    assert np.allclose(eval_velocity(red, 0, [mu], phi), expected, atol=1e-10)


# perturbation experiments


def test_trend_classifier():
    t = np.linspace(0, 10, 101)
    assert classify_trend(t, np.exp(-0.5 * t))[1] == "contracting"
    assert classify_trend(t, np.exp(0.2 * t))[1] == "expanding"
    assert classify_trend(t, np.full(t.size, 0.3))[1] == "stationary"


def test_sync_bump_contracts():
    res = perturbation_experiment(preset_kuramoto(0.0, 1.0), "sync", {"kind": "bump", "epsilon": 0.1}, 5.0, 0.01)
    assert res.verdict == "contracting"
    assert res.total[0] < 0.2


def test_atom_split_is_stationary():
    res = perturbation_experiment(preset_kuramoto(0.0, 1.0), "sync",
                                  {"kind": "atom_split", "n": 16, "psi": np.pi}, 10.0, 0.01)
    assert res.verdict == "stationary"
    assert res.total[0] == pytest.approx(np.pi / 16)


@pytest.mark.slow
def test_splay_bump_contracts_at_predicted_rate():
    res = perturbation_experiment(preset_kuramoto(0.0, -1.0), "splay",
                                  {"kind": "bump", "epsilon": 1e-3, "mode": 1}, 8.0, 0.01)
    assert res.verdict == "contracting"
    assert res.slope == pytest.approx(-0.5, rel=0.1)


def test_unknown_perturbation():
    with pytest.raises(ConfigurationError):
        perturbation_experiment(preset_kuramoto(), "sync", {"kind": "kick"}, 1.0, 0.1)
    with pytest.raises(ConfigurationError):
        perturbation_experiment(preset_kuramoto(), "middle", {"kind": "bump", "epsilon": 0.1}, 1.0, 0.1)
