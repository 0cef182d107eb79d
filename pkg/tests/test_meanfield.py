import numpy as np
import pytest

from hoi.circle import TWO_PI, circ_dist
from hoi.coupling import CouplingModel, FourierDifference, eval_velocity, preset_bick3, preset_kuramoto, preset_skardal
from hoi.errors import AccuracyError, ConfigurationError, FlowFoldingError
from hoi.meanfield import (
    NetworkState,
    convergence_study,
    dobrushin_check,
    evolve_density,
    mass_conservation_check,
    rotating_frame_velocity,
    sync_distance_series,
    to_rotating_frame,
    total_w1,
    trace_characteristics,
    weak_form_residual,
)
from hoi.measures import Atomic, dirac, dist_to_sync, uniform_density, von_mises_density
from hoi.nbody import PhaseState, integrate

BICK = preset_bick3(1.0, {1: 0.2 - 0.4j, 2: 0.05j},
                    {(0, 1): 0.1 - 0.3j, (1, 1): 0.15 + 0.1j, (-1, 1): -0.05j, (1, 0): 0.1}, 0.8, 0.4)
DRIFT = CouplingModel((1.0,), (FourierDifference((), {}),))


def state(*measures):
    return NetworkState(tuple(measures))


def test_pure_drift_returns_after_full_turn():
    rho = von_mises_density(3.0, 1.0, 256)
    out = evolve_density(DRIFT, state(rho), 1e-2, TWO_PI)
    final = out[-1].measures[0]
    assert np.sum(np.abs(final.values - rho.values)) * rho.cell_width < 2e-3
    assert out[-1].time == pytest.approx(TWO_PI)


@pytest.mark.parametrize("model", [preset_kuramoto(0.2, 1.0), preset_skardal(0.2, 1, 0, -4), BICK],
                         ids=["kuramoto", "skardal", "bick"])
def test_uniform_is_invariant(model):
    init = state(*[uniform_density(128)] * model.M)
    for st in evolve_density(model, init, 1e-2, 2.0, stride=50):
        for mu in st.measures:
            assert np.max(np.abs(mu.values - 1 / TWO_PI)) < 1e-8


def test_kuramoto_bump_contracts():
    out = evolve_density(preset_kuramoto(0.0, 1.0), state(von_mises_density(2.0, 1.0, 256)), 1e-2, 5.0, stride=10)
    d = sync_distance_series(out, 0)
    assert np.all(np.diff(d) < 0)


def test_first_order_scheme_available():
    rho = von_mises_density(1.0, 0.0, 128)
    a = evolve_density(preset_kuramoto(0.0, 1.0), state(rho), 1e-2, 1.0, order=1)[-1].measures[0]
    b = evolve_density(preset_kuramoto(0.0, 1.0), state(rho), 1e-2, 1.0, order=2)[-1].measures[0]
    assert np.max(np.abs(a.values - b.values)) < 1e-2
    with pytest.raises(ConfigurationError):
        evolve_density(preset_kuramoto(), state(rho), 1e-2, 1.0, order=3)


def test_large_step_refused():
    with pytest.raises(AccuracyError):
        evolve_density(CouplingModel((50.0,), (FourierDifference((), {}),)), state(uniform_density(64)), 1.0, 2.0)


def test_trace_matches_nbody(rng):
    for model in (preset_skardal(0.3, 1, 0, -4), BICK):
        phases = [rng.uniform(0, TWO_PI, 12) for _ in range(model.M)]
        _, states = trace_characteristics(model, state(*[Atomic.equal_weights(p) for p in phases]), None, 0.01, 2.0)
        tr = integrate(model, PhaseState(tuple(phases)), 0.01, 2.0)
        for mu, p in zip(states[-1].measures, tr.final.phases):
            assert np.max(circ_dist(mu.positions, p)) < 1e-9


def test_seed_on_single_atom_follows_it():
    model = preset_kuramoto(0.5, 1.0)
    flows, states = trace_characteristics(model, state(dirac(1.0)), [np.array([1.0])], 0.01, 3.0)
    assert np.max(circ_dist(flows[0].positions[:, 0], np.array([s.measures[0].positions[0] for s in states]))) < 1e-12
    assert flows[0].positions[-1, 0] == pytest.approx(1.0 + 0.5 * 3.0, abs=1e-12)


def test_seed_in_uniform_population_moves_at_constant_speed():
    model = preset_skardal(0.7, 1.0, 0.0, 2.0)
    flows, _ = trace_characteristics(model, state(uniform_density(64)), [np.array([0.3, 2.0])], 0.01, 2.0)
    assert np.max(circ_dist(flows[0].positions[-1], np.array([0.3, 2.0]) + 1.4)) < 1e-12


def test_crossing_detected():
    model = preset_kuramoto(0.0, -40.0)
    mu = Atomic.equal_weights([0.0, 0.05, 0.1, 3.0])
    with pytest.raises(FlowFoldingError):
        trace_characteristics(model, state(mu), None, 0.5, 5.0, method="heun")


def test_dobrushin_identical_inputs():
    mu = state(Atomic.equal_weights([0.1, 1.0, 2.5]))
    rep = dobrushin_check(preset_kuramoto(0.2, 1.0), mu, mu, 2.0, 0.01, stride=20)
    assert np.all(rep.w == 0) and rep.satisfied


def test_dobrushin_bounds(rng):
    cases = [(preset_kuramoto(0.5, 1.0), 2.0), (preset_skardal(0.3, 1, 0, 0.5), 4 * 1.5)]
    for model, rate in cases:
        for _ in range(5):
            a = state(Atomic(rng.uniform(0, TWO_PI, 6), rng.dirichlet(np.ones(6))))
            b = state(Atomic(rng.uniform(0, TWO_PI, 4), rng.dirichlet(np.ones(4))))
            rep = dobrushin_check(model, a, b, 2.0, 0.01, stride=10)
            assert rep.rate == pytest.approx(rate)
            assert rep.satisfied


def test_total_w1():
    a = state(dirac(0.0), dirac(1.0))
    b = state(dirac(0.5), dirac(1.0))
    assert total_w1(a, b) == pytest.approx(0.5)


def test_mass_conservation_atomic_exact(rng):
    mu = Atomic.equal_weights(np.sort(rng.uniform(0, TWO_PI, 8)))
    p = mu.positions
    xi1, xi2 = 0.5 * (p[0] + p[1]), 0.5 * (p[3] + p[4])
    dev = mass_conservation_check(preset_skardal(0.2, 1, 0, -4), state(mu), xi1, xi2, 0, 5.0, 0.01)
    assert dev == 0.0


def test_mass_conservation_density():
    rho = von_mises_density(1.0, 0.5, 256)
    dev = mass_conservation_check(preset_kuramoto(0.0, -1.0), state(rho), 0.2, 2.5, 0, 5.0, 1e-2)
    assert dev < 1e-4


def test_mass_conservation_uniform():
    dev = mass_conservation_check(preset_kuramoto(0.3, 1.0), state(uniform_density(128)), 1.0, 3.0, 0, 3.0, 1e-2)
    assert dev < 1e-6


def test_mass_check_needs_distinct_points():
    with pytest.raises(ConfigurationError):
        mass_conservation_check(preset_kuramoto(), state(dirac(0)), 1.0, 1.0, 0, 1.0, 0.1)


def test_rotating_frame_sync_population():
    model = preset_skardal(0.4, 1.0, 0.0, -2.0)
    _, states = trace_characteristics(model, state(dirac(2.0)), [np.array([2.0])], 0.01, 2.0, stride=20)
    for st in to_rotating_frame(states, [2.0]):
        assert st.measures[0].positions[0] == pytest.approx(0.0, abs=1e-12)


def test_rotating_frame_preserves_sync_distance(rng):
    model = BICK
    init = state(*[Atomic(rng.uniform(0, TWO_PI, 7), rng.dirichlet(np.ones(7))) for _ in range(3)])
    refs = [float(m.positions[0]) for m in init.measures]
    _, states = trace_characteristics(model, init, [np.array([r]) for r in refs], 0.01, 3.0, stride=30)
    for a, b in zip(states, to_rotating_frame(states, refs)):
        for ma, mb in zip(a.measures, b.measures):
            assert abs(dist_to_sync(ma)[0] - dist_to_sync(mb)[0]) < 1e-12


def test_rotating_frame_velocity_identity(rng):
    model = preset_skardal(0.4, 1.0, 0.0, -2.0)
    mu = Atomic.equal_weights(rng.uniform(0, TWO_PI, 9))
    seeds = np.array([mu.positions[0], 1.0])
    dt = 1e-3
    _, states = trace_characteristics(model, state(mu), [seeds], dt, 2 * dt)
    rot = to_rotating_frame(states, [seeds[0]])
    y = rot[1].tracers[0][1]
    fd = ((rot[2].tracers[0][1] - rot[0].tracers[0][1] + np.pi) % TWO_PI - np.pi) / (2 * dt)
    v = rotating_frame_velocity(model, states[1], 0, np.array([y]), [states[1].tracers[0][0]])[0]
    assert fd == pytest.approx(v, abs=1e-6)
    direct = eval_velocity(model, 0, states[1].measures, y + states[1].tracers[0][0]) - eval_velocity(
        model, 0, states[1].measures, states[1].tracers[0][0])
    assert v == pytest.approx(direct, abs=1e-12)


def test_rotating_frame_needs_tracers():
    with pytest.raises(ConfigurationError):
        to_rotating_frame([state(dirac(0.0))], [0.0])


def test_convergence_uniform():
    table = convergence_study(preset_kuramoto(0.0, 1.0), state(uniform_density(128)), [8, 16, 32], 1.0, 1e-2)
    # both stay splay: nothing is added to the quantile sampling floor pi/(2N)
    assert np.all(np.abs(table.w1 - table.floor) < 1e-6)
    assert table.floor == pytest.approx(np.pi / (2 * table.N))


def test_convergence_monotone_skardal():
    table = convergence_study(preset_skardal(0.0, 1, 0, -1), state(von_mises_density(1.0, 0.5, 256)),
                              [16, 32, 64, 128], 1.0, 1e-2)
    assert table.strictly_decreasing and table.non_increasing
    with pytest.raises(ConfigurationError):
        convergence_study(preset_kuramoto(), state(uniform_density(16)), [32, 16], 1.0, 0.1)


def test_weak_form_residual():
    out = evolve_density(preset_kuramoto(0.3, 1.0), state(von_mises_density(1.5, 1.0, 256)), 1e-2, 3.0)
    assert weak_form_residual(preset_kuramoto(0.3, 1.0), out) < 1e-3
