import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from icrl.errors import DimensionMismatch, DimensionTooSmall, NotInImage, ZeroVector
from icrl.mixing import (
    FlowMixer,
    LinearMixer,
    OrthogonalLayer,
    ReparamMap,
    ShiftLayer,
    SignedPowerLayer,
    compose,
    cube_tail,
    householder_to_e1,
    identity,
    mix,
    mixer_from_dict,
    mixer_to_dict,
    random_flow,
    random_orthogonal,
    unmix,
)

G3 = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]


def test_identity_flow():
    z = np.array([[1.5, -2.0], [0.0, 3.0]])
    assert np.array_equal(mix(identity(2), z), z)
    assert np.array_equal(unmix(identity(2), z), z)


def test_linear_mixer_by_hand():
    g = LinearMixer(G3)
    assert np.array_equal(g.mix([1.0, 2.0]), [1.0, 2.0, 3.0])
    assert np.allclose(g.unmix([1.0, 2.0, 3.0]), [1.0, 2.0], atol=1e-12)


def test_linear_mixer_off_image():
    g = LinearMixer(G3)
    x = np.array([1.0, 2.0, 4.0])
    # least-squares oracle: nonzero residual means x is off the column space
    coef, *_ = np.linalg.lstsq(np.array(G3), x, rcond=None)
    assert np.linalg.norm(np.array(G3) @ coef - x) > 0.5
    with pytest.raises(NotInImage):
        g.unmix(x)


def test_linear_mixer_invariants():
    with pytest.raises(DimensionMismatch):
        LinearMixer([[1.0, 2.0]])
    with pytest.raises(ValueError):
        LinearMixer([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
    g = LinearMixer(np.random.default_rng(0).normal(size=(5, 3)))
    assert np.max(np.abs(g.left_inverse @ g.matrix - np.eye(3))) <= 1e-9


def test_signed_power_examples():
    layer = ReparamMap(2, (SignedPowerLayer([1.0, 3.0]),))
    assert np.array_equal(layer.mix([1.0, 2.0]), [1.0, 8.0])
    assert np.array_equal(layer.unmix([1.0, 8.0]), [1.0, 2.0])
    full = ReparamMap(2, (SignedPowerLayer([3.0, 3.0]),))
    assert np.array_equal(full.mix([1.0, 2.0]), [1.0, 8.0])
    assert np.array_equal(full.mix([-1.0, -2.0]), [-1.0, -8.0])


def test_layer_invariants():
    with pytest.raises(ValueError):
        SignedPowerLayer([1.0, 0.0])
    with pytest.raises(ValueError):
        OrthogonalLayer([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        FlowMixer(2, (ShiftLayer([1.0, 2.0, 3.0]),))
    with pytest.raises(DimensionMismatch):
        identity(2).mix(np.ones((4, 3)))


def test_compose_with_identity_is_pointwise_equal():
    rng = np.random.default_rng(1)
    g = random_flow(3, rng, p=5)
    z = rng.uniform(-3, 3, size=(100, 3))
    assert np.array_equal(compose(g, identity(3)).mix(z), g.mix(z))


def test_compose_identity_with_cube_tail():
    m = compose(identity(2), cube_tail(2))
    assert np.array_equal(m.unmix([1.0, 8.0]), [1.0, 2.0])


def test_compose_random_round_trip():
    rng = np.random.default_rng(2)
    g = random_flow(2, rng, n_blocks=2)
    psi = random_flow(2, rng, n_blocks=1)
    m = compose(g, psi)
    z = rng.uniform(-10, 10, size=(1000, 2))
    assert np.max(np.abs(m.unmix(m.mix(z)) - z)) <= 1e-9
    # g(psi(z)) evaluated by hand
    assert np.allclose(m.mix(z), g.mix(psi.mix(z)), rtol=1e-13, atol=1e-12)
    assert len(m.layers) == len(g.layers) + len(psi.layers)
    assert m.layers[: len(psi.layers)] == psi.layers


def test_compose_associativity():
    rng = np.random.default_rng(3)
    g = random_flow(3, rng, p=4)
    p1, p2 = random_flow(3, rng, n_blocks=1), random_flow(3, rng, n_blocks=1)
    z = rng.uniform(-2, 2, size=(500, 3))
    lhs = compose(compose(g, p1), p2).mix(z)
    rhs = g.mix(p1.mix(p2.mix(z)))
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


def test_compose_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        compose(identity(3), cube_tail(2))


def test_householder_examples():
    assert np.array_equal(householder_to_e1([1.0, 0.0]), np.eye(2))
    a = householder_to_e1([3.0, 4.0])
    assert np.allclose(a @ [3.0, 4.0], [5.0, 0.0], atol=1e-10)
    assert np.max(np.abs(a.T @ a - np.eye(2))) <= 1e-12
    with pytest.raises(ZeroVector):
        householder_to_e1([0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(
    arrays(np.float64, st.integers(2, 8), elements=st.floats(-100, 100, allow_subnormal=False)).filter(
        lambda t: np.linalg.norm(t) > 1e-3
    )
)
def test_householder_property(theta):
    a = householder_to_e1(theta)
    norm = np.linalg.norm(theta)
    assert np.max(np.abs(a.T @ a - np.eye(len(theta)))) <= 1e-12
    target = np.zeros(len(theta))
    target[0] = norm
    assert np.max(np.abs(a @ theta - target)) <= 1e-10 * max(1.0, norm)


def test_householder_negative_direction():
    a = householder_to_e1([-2.0, 0.0, 0.0])
    assert np.allclose(a @ [-2.0, 0.0, 0.0], [2.0, 0.0, 0.0], atol=1e-12)


def test_cube_tail_examples():
    psi = cube_tail(2)
    assert np.array_equal(psi.mix([1.0, 2.0]), [1.0, 8.0])
    z = np.array([-1.5, 0.3])
    assert np.allclose(psi.unmix(psi.mix(z)), z, atol=1e-15)
    assert np.array_equal(cube_tail(3).mix([2.0, -1.0, 2.0]), [2.0, -1.0, 8.0])
    with pytest.raises(DimensionTooSmall):
        cube_tail(1)


def test_injectivity_witness():
    rng = np.random.default_rng(4)
    g = random_flow(3, rng, p=5)
    z1 = rng.uniform(-5, 5, size=(10**4, 3))
    z2 = rng.uniform(-5, 5, size=(10**4, 3))
    assert np.all(np.any(z1 != z2, axis=1))
    assert np.min(np.linalg.norm(g.mix(z1) - g.mix(z2), axis=1)) > 0


@pytest.mark.parametrize("p", [None, 3, 6])
def test_inverse_exactness(p):
    rng = np.random.default_rng(5)
    g = random_flow(3, rng, p=p)
    z = rng.uniform(-10, 10, size=(10**4, 3))
    assert np.max(np.abs(g.unmix(g.mix(z)) - z)) <= 1e-9


def test_reparam_inverse():
    rng = np.random.default_rng(6)
    psi = random_flow(4, rng)
    z = rng.uniform(-3, 3, size=(1000, 4))
    assert np.max(np.abs(psi.inverse().mix(psi.mix(z)) - z)) <= 1e-9
    assert np.max(np.abs(psi.inverse().unmix(z) - psi.mix(z))) <= 1e-9 * np.max(np.abs(psi.mix(z)))
    with pytest.raises(DimensionMismatch):
        ReparamMap(2, (), LinearMixer(G3))


def test_serialization_round_trip_keeps_orthogonality():
    rng = np.random.default_rng(7)
    for m in [random_flow(3, rng, p=5), random_flow(4, rng), LinearMixer(G3), identity(2)]:
        doc = json.loads(json.dumps(mixer_to_dict(m)))
        back = mixer_from_dict(doc)
        assert type(back) is type(m)
        for layer in getattr(back, "layers", ()):
            if isinstance(layer, OrthogonalLayer):
                assert np.max(np.abs(layer.q.T @ layer.q - np.eye(layer.d))) <= 1e-9
        z = rng.normal(size=(20, m.d))
        assert np.array_equal(back.mix(z), m.mix(z))


def test_random_orthogonal_is_orthogonal():
    q = random_orthogonal(6, np.random.default_rng(8))
    assert np.max(np.abs(q.T @ q - np.eye(6))) <= 1e-12
