import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icrl.counterexample import theorem1_pair
from icrl.errors import NotFullSupport, NotInImage
from icrl.mixing import LinearMixer, compose, cube_tail, identity, random_flow
from icrl.risk import (
    ComposedPredictor,
    Predictor,
    decomposition_diagnostics,
    empirical_risk,
    empirical_risk_stderr,
    exact_do_risk,
    image_restricted_equality,
    worst_case_risk,
)
from icrl.scm import (
    EnvironmentSet,
    Intervention,
    Term,
    apply_intervention,
    make_env_grid,
    make_env_random_box,
    sample,
    sample_environment,
)
from models import chain2

SUM = Predictor.linear([1.0, 1.0])


def test_predictor_forms():
    assert SUM([1.0, 2.0]) == 3.0
    p = Predictor.basis(2, [Term(1.0, ((0, 3),)), Term(0.5)])
    assert np.array_equal(p(np.array([[2.0, 9.0], [-1.0, 0.0]])), [8.5, -0.5])
    with pytest.raises(ValueError):
        Predictor.linear([])
    assert np.array_equal(Predictor.from_scm(chain2()).theta, [1.0, 2.0])


def test_empirical_risk_exact_fit():
    scm = chain2(1.0, 1.0, 0.0)
    data = sample(scm, 1000, 3)
    assert empirical_risk(Predictor.from_scm(scm), data) == 0.0


def test_empirical_risk_monte_carlo_against_closed_form(chain):
    data = sample(apply_intervention(chain, Intervention.full([1.0, 1.0])), 10**5, 12)
    r, se = empirical_risk_stderr(SUM, data)
    # (f_c(a) - f(a))^2 + Var(eps_Y) = (3 - 2)^2 + 0.25
    assert abs(r - 1.25) <= 3 * se
    assert r >= 0


def test_identity_mixer_collapses_bit_for_bit(chain):
    data = sample(chain, 5000, 4)
    h = ComposedPredictor(SUM, identity(2))
    assert empirical_risk(h, data, data.z) == empirical_risk(SUM, data)


def test_composed_predictor_needs_observations(chain):
    data = sample(chain, 10, 0)
    with pytest.raises(ValueError):
        empirical_risk(ComposedPredictor(SUM, identity(2)), data)


def test_composed_predictor_off_image():
    h = ComposedPredictor(SUM, LinearMixer([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(NotInImage):
        h(np.array([[1.0, 2.0, 4.0]]))


@pytest.mark.parametrize("a", [(0.0, 0.0), (1.0, -2.0), (3.5, 7.0)])
def test_exact_do_risk_causal_is_noise_floor(chain, a):
    assert exact_do_risk(Predictor.from_scm(chain), chain, a) == 0.25


def test_exact_do_risk_by_hand(chain):
    assert exact_do_risk(SUM, chain, [1.0, 1.0]) == pytest.approx(1.25, abs=1e-15)
    noiseless = chain2(1.0, 1.0, 0.0)
    assert exact_do_risk(Predictor.from_scm(noiseless), noiseless, [2.0, -1.0]) == 0.0


def test_exact_do_risk_requires_full_do(chain):
    with pytest.raises(NotFullSupport):
        exact_do_risk(SUM, chain, Intervention((1,), (1.0,)))


def test_worst_case_causal_on_grid(chain):
    rep = worst_case_risk(Predictor.from_scm(chain), chain, make_env_grid(2, 2.0, 3))
    assert rep.worst_case == 0.25
    assert set(rep.per_env_risk) == {0.25}
    assert rep.argmax_env == 0
    assert rep.noise_floor == 0.25 and rep.a_max == 2.0


def test_worst_case_against_enumeration(chain):
    envs = make_env_grid(2, 2.0, 3)
    rep = worst_case_risk(SUM, chain, envs)
    # oracle: enumerate the nine grid points by hand
    vals = [(a1 + 2 * a2 - (a1 + a2)) ** 2 + 0.25 for a1, a2 in itertools.product([-2, 0, 2], repeat=2)]
    assert rep.worst_case == pytest.approx(4.25, abs=1e-12)
    assert rep.worst_case == max(vals)
    assert rep.argmax_env == vals.index(max(vals)) == 0
    assert rep.labels[rep.argmax_env] == "grid0"


def test_finite_set_can_miss_the_witness(chain):
    bump = Predictor.basis(2, [Term(1.0, ((0, 1),)), Term(2.0, ((1, 1),)), Term(5.0, ((0, 4), (1, 4)))])
    assert bump([1.0, 1.0]) != chain.f_causal(np.array([[1.0, 1.0]]))[0]
    envs = EnvironmentSet(2, (Intervention.full([0.0, 0.0]),))
    assert worst_case_risk(bump, chain, envs).worst_case == 0.25


def test_worst_case_exact_needs_full_support(chain):
    envs = EnvironmentSet(2, (Intervention((0,), (1.0,)),))
    with pytest.raises(NotFullSupport):
        worst_case_risk(SUM, chain, envs)
    rep = worst_case_risk(SUM, chain, envs, n=100, seed=1, mode="monte_carlo")
    assert len(rep.stderr) == 1 and rep.n == 100


def test_risk_report_serialization(chain):
    rep = worst_case_risk(SUM, chain, make_env_grid(2, 1.0, 2))
    lines = rep.csv_lines()
    assert lines[0] == "env_label,risk" and lines[-1].startswith("worst_case,")
    assert len(lines) == 6
    assert rep.to_dict()["argmax_label"] == rep.labels[rep.argmax_env]


def test_decomposition_causal(chain):
    rep = decomposition_diagnostics(Predictor.from_scm(chain), chain, Intervention.full([1.0, -1.0]), 10**4, 3)
    assert rep.bias_sq == 0.0 and rep.cross == 0.0
    assert rep.total == pytest.approx(0.25, rel=0.05)


def test_decomposition_by_hand(chain):
    n = 10**5
    rep = decomposition_diagnostics(SUM, chain, Intervention.full([1.0, 1.0]), n, 5)
    assert rep.bias_sq == 1.0
    assert abs(rep.cross) <= 0.02
    assert abs(rep.cross) <= 6 * np.sqrt(4 * 1.0 * 0.25 / n)
    assert abs(rep.noise - 0.25) <= 4 * 0.25 * np.sqrt(2 / n)


def test_decomposition_noiseless():
    scm = chain2(1.0, 1.0, 0.0)
    rep = decomposition_diagnostics(SUM, scm, Intervention.full([1.0, 1.0]), 100, 0)
    assert rep.noise == 0.0 and rep.cross == 0.0
    assert rep.total == rep.direct_risk == 1.0


def test_decomposition_requires_full_do(chain):
    with pytest.raises(NotFullSupport):
        decomposition_diagnostics(SUM, chain, Intervention((0,), (1.0,)), 10, 0)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    st.integers(0, 2**31),
)
def test_decomposition_consistency(theta, a, seed):
    chain = chain2()
    rep = decomposition_diagnostics(Predictor.linear(theta), chain, Intervention.full(a), 4000, seed)
    assert abs(rep.total - rep.direct_risk) <= 5 * rep.direct_stderr + 1e-12


def test_image_restricted_equality_self():
    g = random_flow(2, np.random.default_rng(0), p=3)
    h = ComposedPredictor(SUM, g)
    assert image_restricted_equality(h, h, g, (-2, 2), 1000, 0) == 0.0


def test_image_restricted_equality_theorem1_pair(chain):
    g = random_flow(2, np.random.default_rng(1), p=4)
    h_c = ComposedPredictor(Predictor.from_scm(chain), g)
    for psi in [cube_tail(2), random_flow(2, np.random.default_rng(2))]:
        pair = theorem1_pair(chain, g, psi)
        assert image_restricted_equality(h_c, pair.composed(), g, (-2, 2), 10**4, 3) <= 1e-8


def test_image_restricted_equality_gamma2_flow(chain):
    from icrl.mixing import OrthogonalLayer, ReparamMap, ShiftLayer, SignedPowerLayer, random_orthogonal

    rng = np.random.default_rng(9)
    psi = ReparamMap(2, (OrthogonalLayer(random_orthogonal(2, rng)), SignedPowerLayer([2.0, 2.0]), ShiftLayer([0.3, -0.7])))
    g = identity(2)
    pair = theorem1_pair(chain, g, psi)
    h_c = ComposedPredictor(Predictor.from_scm(chain), g)
    assert image_restricted_equality(h_c, pair.composed(), g, (-2, 2), 10**4, 4) <= 1e-8


def test_image_restricted_equality_detects_perturbation(chain):
    g = LinearMixer([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    h1 = ComposedPredictor(Predictor.linear([1.0, 2.0]), g)
    h2 = ComposedPredictor(Predictor.linear([1.1, 2.0]), g)
    half = 2.0
    assert image_restricted_equality(h1, h2, g, (-half, half), 1000, 0) >= 0.1 * half * (1 - 1e-6)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    st.floats(0.5, 3.0),
    st.integers(2, 5),
)
def test_floor_and_strictness(theta, a_max, k):
    chain = chain2()
    envs = make_env_grid(2, a_max, k)
    f = Predictor.linear(theta)
    rep = worst_case_risk(f, chain, envs)
    pts = envs.points()
    gaps = (chain.f_causal(pts) - f(pts)) ** 2
    assert rep.worst_case >= chain.noise_variance
    assert (rep.worst_case == chain.noise_variance) == bool(np.all(gaps == 0))
    # the oracle evaluates all points at once; f_c - f cancels, so rounding
    # scales with the function values rather than with the gap
    slack = 1e-14 * (1 + np.max(np.abs(chain.f_causal(pts))) + np.max(np.abs(f(pts)))) ** 2
    assert rep.worst_case >= chain.noise_variance + gaps.max() - slack


def test_monte_carlo_agrees_with_exact(chain):
    envs = make_env_random_box(2, 2.0, 4, 3)
    f = Predictor.linear([0.5, 1.5])
    exact = worst_case_risk(f, chain, envs)
    mc = worst_case_risk(f, chain, envs, n=10**5, seed=8, mode="monte_carlo")
    for r_e, r_m, se in zip(exact.per_env_risk, mc.per_env_risk, mc.stderr):
        assert abs(r_e - r_m) <= 4 * se


def test_parallel_matches_sequential(chain, monkeypatch):
    envs = make_env_grid(2, 2.0, 3)
    g = random_flow(2, np.random.default_rng(5), p=3)
    h = ComposedPredictor(SUM, g)
    monkeypatch.setenv("ICRL_THREADS", "1")
    seq = worst_case_risk(h, chain, envs, n=2000, seed=6, mode="monte_carlo", g_causal=g)
    monkeypatch.setenv("ICRL_THREADS", "4")
    par = worst_case_risk(h, chain, envs, n=2000, seed=6, mode="monte_carlo", g_causal=g)
    assert seq == par


def test_composed_exact_risk_matches_predictor(chain):
    g = compose(random_flow(2, np.random.default_rng(7), p=3), cube_tail(2))
    envs = make_env_grid(2, 1.5, 3)
    r_h = worst_case_risk(ComposedPredictor(SUM, g), chain, envs, g_causal=g)
    r_f = worst_case_risk(SUM, chain, envs)
    assert np.allclose(r_h.per_env_risk, r_f.per_env_risk, atol=1e-9)
    data = sample_environment(chain, envs, 0, 10, 0)
    assert data.n == 10
