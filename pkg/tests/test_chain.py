import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfpharnack.chain import (
    HarnackChain,
    build_chain,
    calibrate_h,
    choose_delta0,
    cover_compact,
    default_constants,
    geometric_sum,
    lemma22_step_box,
    log_geometric_sum,
    min_reach_radius,
    reach_radius,
    sufficient_energy_bound,
)
from kfpharnack.controllability import integrate_curve, minimal_energy_curve
from kfpharnack.errors import CurveEscapeError, DomainError, IntervalError
from kfpharnack.group import (
    BoxKind,
    BoxSpec,
    GroupPoint,
    HarnackConstants,
    box_membership,
    unit_box,
)


def P(*c):
    return GroupPoint.from_array(c)


@pytest.fixture(scope="module")
def consts():
    return default_constants(M=3.0)


def test_reach_radius_examples():
    q = unit_box()
    assert reach_radius(q, P(0, 0, -0.5)) == pytest.approx(math.sqrt(0.5), rel=1e-7)
    with pytest.raises(DomainError):
        reach_radius(q, P(0, 0, 0))
    with pytest.raises(DomainError):
        reach_radius(q, P(1, 0, -0.5))


def test_reach_radius_monotone_towards_midline():
    q = unit_box()
    ts = [-0.05, -0.15, -0.3, -0.45, -0.5]
    radii = [reach_radius(q, P(0, 0, t)) for t in ts]
    assert all(a < b for a, b in zip(radii, radii[1:]))


def test_reach_radius_brute_force():
    # bisection result agrees with a dense scan of symmetric-box containment
    q = unit_box()
    z = P(0.3, -0.1, -0.4)
    r = reach_radius(q, z)
    sym = BoxSpec(z, r * 0.999, BoxKind.SYMMETRIC_Q)
    from kfpharnack.group import corner_array
    assert np.all(box_membership(q, corner_array(sym), closed=True))
    sym = BoxSpec(z, r * 1.001, BoxKind.SYMMETRIC_Q)
    assert not np.all(box_membership(q, corner_array(sym), closed=True))


def test_min_reach_radius():
    q = unit_box()
    c = integrate_curve(P(0, 0, -0.1), np.zeros(801), 0.8)
    assert min_reach_radius(q, c) == pytest.approx(0.99 * math.sqrt(0.1), rel=1e-6)
    one = integrate_curve(P(0, 0, -0.5), np.zeros(2), 1e-9)
    assert min_reach_radius(q, one) <= 0.99 * reach_radius(q, P(0, 0, -0.5)) + 1e-12
    bad = integrate_curve(P(0.9, 0, -0.1), np.ones(101) * 5, 0.5)
    with pytest.raises(CurveEscapeError) as info:
        min_reach_radius(q, bad)
    assert info.value.index > 0


def test_choose_delta0(consts):
    c = integrate_curve(P(0, 0, -0.1), np.zeros(101), 0.8)
    r0 = 0.2
    assert choose_delta0(c, consts, r0) == pytest.approx(consts.kminus_depth * r0 ** 2)
    big = 50.0
    c = integrate_curve(P(0, 0, -0.1), np.full(10_001, big), 0.8)
    d = choose_delta0(c, consts, r0)
    assert d == pytest.approx(consts.h / big ** 2, rel=1e-2)
    c = minimal_energy_curve(P(0, 0, -0.05), P(0.2, 0, -0.8))
    d1 = choose_delta0(c, consts, r0)
    d2 = choose_delta0(c, consts.replace(h=consts.h / 2), r0)
    assert d2 <= d1


def test_step_box_radius(consts):
    c = consts.replace(Delta=0.5)
    z = P(0, 0, 0)
    assert lemma22_step_box(z, 0, c.Delta + 0.5, c).radius == pytest.approx(1.0)
    assert lemma22_step_box(z, 0, 0.5, c).radius == pytest.approx(math.sqrt(0.5))
    r1 = lemma22_step_box(z, 1, 1.1, c).radius
    r2 = lemma22_step_box(z, 1, 1.4, c).radius
    assert r2 == pytest.approx(2 * r1)
    b = lemma22_step_box(z, 0, 0.3, c, time_consistent=True)
    assert b.kind is BoxKind.K_MINUS
    assert b.bounds()[2] == pytest.approx(-0.3)
    with pytest.raises(IntervalError):
        lemma22_step_box(z, 1, 1, c)


def test_calibrated_h_below_analytic_bound():
    cal = calibrate_h()
    assert 0 < cal["h"] < cal["min_failing"]
    assert cal["h"] <= sufficient_energy_bound()
    assert calibrate_h() is cal
    # the analytic bound is sufficient: random controls below it all land
    c = HarnackConstants(M=2, h=sufficient_energy_bound())
    rng = np.random.default_rng(7)
    for _ in range(200):
        w = rng.normal(size=65) * rng.uniform(0.01, 3)
        cur = integrate_curve(P(0, 0, 0), w, 1.0)
        if cur.energy > 0:
            cur = integrate_curve(P(0, 0, 0), w * math.sqrt(c.h / cur.energy) * 0.999, 1.0)
        k = lemma22_step_box(P(0, 0, 0), 0, 1.0, c, time_consistent=True)
        assert box_membership(k, cur.end)


def test_geometric_sums():
    assert geometric_sum(2, 3) == pytest.approx(14)
    assert geometric_sum(1.0, 5) == pytest.approx(5)
    assert math.isinf(geometric_sum(10.0, 400))
    assert log_geometric_sum(10.0, 400) == pytest.approx(400 * math.log(10) + math.log(10 / 9))


def test_chain_example(consts):
    q = unit_box()
    c = minimal_energy_curve(P(0, 0, -0.05), P(0.2, 0, -0.8))
    ch = build_chain(q, c, consts)
    check = ch.verify(q)
    assert check["ok"], check
    assert check["constant_error"] < 1e-9
    assert ch.nodes[0].allclose(P(0, 0, -0.05))
    assert ch.nodes[-1].allclose(P(0.2, 0, -0.8), atol=1e-9)
    for j, box in enumerate(ch.step_boxes):
        assert box.kind is BoxKind.Q_MINUS
        assert box_membership(box, ch.nodes[j + 1])
    assert isinstance(ch.to_json(), dict)


def test_verify_detects_tampering(consts):
    q = unit_box()
    ch = build_chain(q, minimal_energy_curve(P(0, 0, -0.05), P(0.1, 0, -0.4)), consts)
    ch.radii[3] *= 0.5
    assert ch.verify(q)["membership_failures"] == [3]
    ch.radii[3] = 2.0
    assert 3 in ch.verify(q)["containment_failures"]


def test_chain_small_constant(consts):
    q = unit_box()
    c2 = consts.replace(M=2.0)
    c = integrate_curve(P(0, 0, -0.3), np.zeros(65), 0.2)
    r0 = min_reach_radius(q, c)
    d0 = choose_delta0(c, c2, r0)
    k_expected = math.ceil(0.2 / d0 - 1e-12)
    ch = build_chain(q, c, c2)
    assert ch.k == k_expected
    if ch.k == 3:
        assert ch.total_constant == pytest.approx(14)
    assert ch.total_constant == pytest.approx(geometric_sum(2.0, ch.k))


def test_single_step_chain(consts):
    q = unit_box()
    z = P(0, 0, -0.5)
    r0 = 0.99 * reach_radius(q, z)
    T = 0.5 * consts.kminus_depth * r0 ** 2
    c = integrate_curve(z, np.zeros(33), T)
    ch = build_chain(q, c, consts)
    assert ch.k == 1
    assert ch.total_constant == pytest.approx(consts.M)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.3, 0.3), st.floats(0.1, 0.8))
def test_random_chains_verify(v, xf, depth):
    q = unit_box()
    z0 = P(0, 0, -0.05)
    t = -0.05 - depth
    z1 = P(v, xf * depth, t)
    c = minimal_energy_curve(z0, z1, 512)
    if not np.all(box_membership(q, c.states)):
        return
    ch = build_chain(q, c, default_constants(M=2.5))
    assert ch.verify(q)["ok"]


def test_cover_compact(consts):
    q = unit_box()
    z0 = P(0, 0, -0.05)
    single = [P(0.1, 0.0, -0.6)]
    cover, lck = cover_compact(q, z0, single, consts)
    assert len(cover) == 1 and lck == cover[0].chain.log_total_constant
    pts = [P(0.1, 0.02, -0.6), P(-0.2, 0.0, -0.4)]
    c1, _ = cover_compact(q, z0, pts, consts)
    c2, _ = cover_compact(q, z0, pts + pts, consts)
    assert len(c1) == len(c2)
    seg = [P(0, 0, t) for t in np.linspace(-0.3, -0.7, 10)]
    cover, _ = cover_compact(q, z0, seg, consts)
    assert len(cover) <= 10
    covered = set()
    for e in cover:
        for j in e.covers:
            assert j == e.covers[0] or box_membership(e.neighborhood, seg[j])
            covered.add(j)
    assert covered == set(range(10))


def test_chain_json_is_serialisable(consts):
    from kfpharnack.io import dumps
    c = minimal_energy_curve(P(0, 0, -0.05), P(0.1, 0, -0.4))
    ch = build_chain(unit_box(), c, consts)
    assert isinstance(ch, HarnackChain)
    text = dumps(ch)
    assert '"total_constant"' in text
