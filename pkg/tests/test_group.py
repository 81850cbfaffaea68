import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfpharnack.errors import DimensionMismatchError, ValidationError
from kfpharnack.group import (
    BoxKind,
    BoxSpec,
    GroupPoint,
    HarnackConstants,
    box_corners,
    box_membership,
    compose,
    compose_array,
    dilate,
    dilate_array,
    inverse,
    inverse_array,
    origin,
    unit_box,
)

coord = st.floats(-50, 50, allow_nan=False)
radius = st.floats(0.05, 20)


@st.composite
def points(draw, n=None):
    n = n or draw(st.integers(1, 3))
    v = draw(st.lists(coord, min_size=n, max_size=n))
    x = draw(st.lists(coord, min_size=n, max_size=n))
    return GroupPoint(v, x, draw(coord))


def P(*c):
    return GroupPoint.from_array(c)


def test_compose_example():
    assert compose(P(1, 2, 3), P(4, 5, 6)).allclose(P(5, 13, 9))


def test_inverse_examples():
    assert inverse(P(1, 2, 3)).allclose(P(-1, 1, -3))
    assert inverse(origin()).allclose(origin())
    assert inverse(P(2, 5, 0)).allclose(P(-2, -5, 0))


def test_dilate_examples():
    assert dilate(2, P(1, 1, -1)).allclose(P(2, 8, -4))
    z = P(0.3, -1.2, 0.7)
    assert dilate(1, z).allclose(z)


def test_dilate_rejects_nonpositive():
    with pytest.raises(ValidationError):
        dilate(0.0, P(1, 1, 1))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        compose(P(1, 2, 3), P(1, 2, 3, 4, 5))
    with pytest.raises(DimensionMismatchError):
        GroupPoint([1, 2], [1], 0)
    with pytest.raises(DimensionMismatchError):
        GroupPoint.parse("1,2")


def test_parse_roundtrip():
    z = GroupPoint.parse("1, -2.5,3,4,0.5")
    assert z.n == 2
    assert np.array_equal(z.as_array(), [1, -2.5, 3, 4, 0.5])


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_group_laws(data):
    n = data.draw(st.integers(1, 3))
    a, b, c = (data.draw(points(n)) for _ in range(3))
    lhs = compose(compose(a, b), c).as_array()
    rhs = compose(a, compose(b, c)).as_array()
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-9)
    assert compose(origin(n), a).allclose(a)
    assert compose(a, origin(n)).allclose(a)
    assert compose(a, inverse(a)).allclose(origin(n), atol=1e-9)
    assert compose(inverse(a), a).allclose(origin(n), atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(points(), points(), radius, radius)
def test_dilation_laws(a, b, r, s):
    if a.n != b.n:
        b = GroupPoint(np.resize(b.v, a.n), np.resize(b.x, a.n), b.t)
    scale = 1 + np.abs(np.concatenate([a.as_array(), b.as_array()])).max() ** 2 * max(r, 1) ** 6
    d = dilate(r, compose(a, b)).as_array()
    e = compose(dilate(r, a), dilate(r, b)).as_array()
    assert np.allclose(d, e, rtol=1e-12, atol=1e-12 * scale)
    assert np.allclose(dilate(r, dilate(s, a)).as_array(), dilate(r * s, a).as_array(),
                       rtol=1e-12, atol=1e-12 * scale)
    assert dilate(r, dilate(1 / r, a)).allclose(a, atol=1e-10 * scale)


def test_array_forms_vectorise():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(50, 5))
    b = rng.normal(size=(50, 5))
    out = compose_array(a, b)
    for i in range(50):
        assert np.allclose(out[i], compose(GroupPoint.from_array(a[i]),
                                           GroupPoint.from_array(b[i])).as_array())
    assert np.allclose(compose_array(a, inverse_array(a)), 0, atol=1e-12)
    assert np.allclose(dilate_array(0.5, dilate_array(2.0, a)), a)


def test_box_membership_examples():
    q2 = BoxSpec(origin(), 2.0, BoxKind.UNIT_Q)
    assert box_membership(q2, P(1.9, -7.9, -3.9))
    assert not box_membership(q2, P(2.1, 0, -1))
    assert not box_membership(unit_box(), origin())
    c = HarnackConstants(M=2, R=0.5, Delta=0.5, S=0.25, h=1e-3)
    k = BoxSpec(origin(), 1.0, BoxKind.K_MINUS, c)
    assert box_membership(k, P(0, 0, -0.5 - 0.125))
    assert not box_membership(k, P(0, 0, -0.6))


def test_box_membership_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    box = BoxSpec(P(0.3, -0.2, 0.1), 0.7, BoxKind.UNIT_Q)
    pts = rng.uniform(-1.5, 1.5, size=(500, 3))
    vec = box_membership(box, pts)
    assert vec.dtype == bool
    assert list(vec) == [box_membership(box, GroupPoint.from_array(p)) for p in pts]
    assert 0 < vec.sum() < 500


def test_box_kinds_bounds():
    c = HarnackConstants(M=2, R=0.5, Delta=0.5, S=0.25, h=1e-3)
    z = origin()
    assert BoxSpec(z, 1, BoxKind.Q_PLUS, c).bounds() == (0.5, 0.125, -0.25, 0.0)
    assert BoxSpec(z, 1, BoxKind.Q_MINUS, c).bounds() == (0.5, 0.125, -0.75, -0.5)
    assert BoxSpec(z, 2, BoxKind.SYMMETRIC_Q).bounds() == (2, 8, -4, 4)
    with pytest.raises(ValidationError):
        BoxSpec(z, 1, BoxKind.Q_PLUS)


def test_box_corners():
    corners = box_corners(unit_box())
    arr = np.array([c.as_array() for c in corners])
    assert len(corners) == 8
    assert any(np.allclose(a, [1, 1, 0]) for a in arr)
    assert any(np.allclose(a, [-1, -1, -1]) for a in arr)
    r = 0.6
    arr = np.array([c.as_array() for c in box_corners(BoxSpec(origin(), r, BoxKind.UNIT_Q))])
    assert set(map(tuple, np.round(np.abs(arr[:, :2]), 12))) == {(r, round(r ** 3, 12))}
    assert set(np.round(arr[:, 2], 12)) == {-round(r * r, 12), 0.0}
    shifted = np.array([c.as_array() for c in box_corners(BoxSpec(P(1, 0, 0), 1, BoxKind.UNIT_Q))])
    assert any(np.allclose(a, [2, 0, -1]) for a in shifted)


def test_box_json_roundtrip():
    c = HarnackConstants(M=3, h=2e-3)
    b = BoxSpec(P(1, 2, 3), 0.5, BoxKind.Q_MINUS, c)
    b2 = BoxSpec.from_json(b.to_json())
    assert b2.to_json() == b.to_json()


def test_constants_validation():
    with pytest.raises(ValidationError):
        HarnackConstants(M=0.5)
    with pytest.raises(ValidationError):
        HarnackConstants(M=2, R=-1)
