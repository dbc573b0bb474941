import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brute import (box_projection, cvxpy_intersection_distance, cvxpy_projection, grid_projection_2d,
                   halfspace_projection)
from mopo.errors import DomainError
from mopo.geometry import (NEG_INF, AggregationSpec, MultiGroupSpec, aggregate, assess, contains,
                           direction_consensus, direction_malfare, distance, malfare_value,
                           project, project_intersection, restricted_set_distance, spec_from_json)

P_VALUES = [NEG_INF, -2.0, -0.5, 0.0, 0.5, 1.0]


def spec(alpha, p, c=1.0):
    return AggregationSpec(alpha, p, c)


# ---------------------------------------------------------------- types

def test_spec_validation():
    with pytest.raises(DomainError):
        spec([0.5, 0.6], 1)
    with pytest.raises(DomainError):
        spec([1.2, -0.2], 1)
    with pytest.raises(DomainError):
        spec([0.5, 0.5], 1.5)
    with pytest.raises(DomainError):
        spec([0.5, 0.5], 1, -1)
    assert spec([0.5, 0.5], "neg_inf").p == NEG_INF


def test_spec_json_round_trip():
    for p in P_VALUES:
        s = spec([0.25, 0.75], p, 1.3)
        text = json.dumps(s.to_json())
        assert AggregationSpec.from_json(json.loads(text)) == s
    assert json.loads(json.dumps(spec([0.5, 0.5], NEG_INF).to_json()))["p"] == "neg_inf"
    mg = MultiGroupSpec((spec([0.5, 0.5], 1), spec([0.2, 0.8], 0.5)), [0.4, 0.6], 2)
    assert spec_from_json(json.loads(json.dumps(mg.to_json()))) == mg


def test_spec_json_rejects_unknown_keys():
    with pytest.raises(DomainError):
        AggregationSpec.from_json({"alpha": [1.0], "p": 1, "c": 1, "extra": 0})


def test_multigroup_validation():
    a = spec([0.5, 0.5], 1)
    with pytest.raises(DomainError):
        MultiGroupSpec((a, a), [0.5, 0.6], 1)
    with pytest.raises(DomainError):
        MultiGroupSpec((a,), [1.0], 0)
    with pytest.raises(DomainError):
        MultiGroupSpec((a, spec([1 / 3] * 3, 1)), [0.5, 0.5], 1)


# ---------------------------------------------------------------- aggregate / contains

def test_aggregate_examples():
    assert aggregate(spec([0.5, 0.5], 1), [2, 4]) == pytest.approx(3)
    assert aggregate(spec([0.5, 0.5], NEG_INF), [2, 4]) == 2
    assert aggregate(spec([0.3, 0.7], 0.5), [1, 4]) == pytest.approx(2.89, abs=1e-12)


def test_aggregate_limits():
    assert aggregate(spec([0.5, 0.5], 0), [4, 9]) == pytest.approx(6)
    assert aggregate(spec([0.5, 0.5], -1), [0, 3]) == 0
    # zero weight coordinates are ignored by the minimum
    assert aggregate(spec([1.0, 0.0], NEG_INF), [2, 0]) == 2
    with pytest.raises(DomainError):
        aggregate(spec([0.5, 0.5], 1), [-1, 2])


def test_aggregate_p_near_zero_is_continuous():
    z = [0.7, 2.3]
    g = aggregate(spec([0.4, 0.6], 0), z)
    for p in (1e-6, -1e-6):
        assert aggregate(spec([0.4, 0.6], p), z) == pytest.approx(g, rel=1e-5)


def test_contains_examples():
    assert contains(spec([0.5, 0.5], 1, 1), [1, 1])
    assert not contains(spec([0.5, 0.5], NEG_INF, 1), [0.5, 3])
    assert not contains(spec([0.5, 0.5], 0.5, 0.5), [0.25, 0.25])
    assert not contains(spec([0.5, 0.5], 1, 0.0), [-0.1, 5])


# ---------------------------------------------------------------- projection examples

def test_project_examples():
    np.testing.assert_allclose(project(spec([0.5, 0.5], NEG_INF), [0.2, 3]), [1, 3])
    np.testing.assert_allclose(project(spec([0.5, 0.5], 1), [0, 0]), [1, 1])
    z = project(spec([0.5, 0.5], 0.5, 0.5), [0.1, 0.1])
    np.testing.assert_allclose(z, grid_projection_2d([0.5, 0.5], 0.5, 0.5, [0.1, 0.1]), atol=1e-3)
    np.testing.assert_allclose(z, [0.5, 0.5], atol=1e-9)


def test_project_inside_is_identity():
    v = np.array([2.0, 3.0])
    for p in P_VALUES:
        np.testing.assert_array_equal(project(spec([0.4, 0.6], p), v), v)


def test_project_batched_matches_single():
    rng = np.random.default_rng(3)
    V = rng.uniform(-1, 2, (40, 3))
    for p in P_VALUES:
        s = spec([0.2, 0.3, 0.5], p, 1.1)
        batch = project(s, V)
        rows = np.array([project(s, v) for v in V])
        np.testing.assert_allclose(batch, rows, atol=1e-12)


def test_project_rejects_wrong_dimension():
    with pytest.raises(DomainError):
        project(spec([0.5, 0.5], 1), [1, 2, 3])


def test_distance_examples():
    assert distance(spec([0.5, 0.5], 1), [0, 0]) == pytest.approx(math.sqrt(2))
    assert distance(spec([0.5, 0.5], 0.5), [3, 3]) == 0


def test_p1_distance_closed_form():
    rng = np.random.default_rng(11)
    alpha = np.array([0.3, 0.7])
    s = spec(alpha, 1, 1.5)
    checked = 0
    for _ in range(100):
        v = rng.uniform(0, 1.5, 2)
        z = project(s, v)
        if alpha @ v < 1.5 and np.all(z > 0):
            checked += 1
            assert distance(s, v) == pytest.approx((1.5 - alpha @ v) / np.linalg.norm(alpha), abs=1e-12)
    assert checked > 50


@pytest.mark.parametrize("p", [-2.0, -0.5, 0.0, 0.5])
def test_general_p_matches_grid(p):
    rng = np.random.default_rng(int(10 * p) + 100)
    for _ in range(6):
        alpha = rng.dirichlet([1, 1])
        c = rng.uniform(0.3, 2.0)
        v = rng.uniform(-1.0, 2.5, 2)
        np.testing.assert_allclose(project(spec(alpha, p, c), v),
                                   grid_projection_2d(alpha, p, c, v), atol=1e-3)


@pytest.mark.parametrize("p", P_VALUES)
def test_three_objectives_match_conic_solver(p):
    rng = np.random.default_rng(int(abs(p)) if np.isfinite(p) else 99)
    for _ in range(5):
        alpha = rng.dirichlet([1, 1, 1])
        c = rng.uniform(0.3, 2.0)
        v = rng.uniform(-1.0, 2.5, 3)
        np.testing.assert_allclose(project(spec(alpha, p, c), v),
                                   cvxpy_projection(alpha, p, c, v), atol=1e-4)


def test_exact_cases_match_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(50):
        alpha = rng.dirichlet([1, 1, 1, 1])
        c = rng.uniform(0.1, 3)
        v = rng.uniform(-2, 3, 4)
        np.testing.assert_allclose(project(spec(alpha, 1, c), v), halfspace_projection(alpha, c, v),
                                   atol=1e-9)
        np.testing.assert_allclose(project(spec(alpha, NEG_INF, c), v), box_projection(c, v),
                                   atol=1e-9)


def test_projection_lands_on_boundary_for_every_p():
    rng = np.random.default_rng(8)
    for p in P_VALUES:
        s = spec([0.2, 0.3, 0.5], p, 1.0)
        V = rng.uniform(-2, 0.9, (500, 3))
        Z = project(s, V)
        assert np.all(Z >= 0)
        assert np.all(np.abs(aggregate(s, Z) - 1.0) <= 1e-9)


def test_zero_weight_coordinate():
    s = spec([1.0, 0.0], 0.5, 2.0)
    np.testing.assert_allclose(project(s, [0.5, -1.0]), [2.0, 0.0])


# ---------------------------------------------------------------- properties

def _spec_and_point(draw, m):
    p = draw(st.sampled_from(P_VALUES))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=m, max_size=m))
    alpha = np.array(raw) / sum(raw)
    c = draw(st.floats(0.1, 3.0))
    v = np.array(draw(st.lists(st.floats(-3.0, 4.0), min_size=m, max_size=m)))
    return AggregationSpec(alpha, p, c), v


@st.composite
def spec_point(draw):
    return _spec_and_point(draw, draw(st.integers(2, 4)))


def _tol(s):
    return 1e-9 if s.p in (1.0, NEG_INF) else 1e-7


@settings(max_examples=150, deadline=None)
@given(spec_point())
def test_idempotence(sp):
    s, v = sp
    z = project(s, v)
    np.testing.assert_allclose(project(s, z), z, atol=2 * _tol(s) * max(1.0, np.abs(z).max()))


@settings(max_examples=100, deadline=None)
@given(spec_point(), st.integers(0, 2**31))
def test_obtuse_angle(sp, seed):
    s, v = sp
    z = project(s, v)
    rng = np.random.default_rng(seed)
    # points of W: boundary points (projections of random points) pushed upward
    W = project(s, rng.uniform(-1, 5, (200, s.m))) + rng.uniform(0, 2, (200, s.m)) * (rng.random((200, 1)) < 0.5)
    assert np.all(contains(s, W))
    assert np.max((W - z) @ (v - z)) <= _tol(s) * max(1.0, np.abs(W).max() ** 2)


@settings(max_examples=100, deadline=None)
@given(spec_point(), st.lists(st.floats(-3.0, 4.0), min_size=4, max_size=4))
def test_nonexpansive(sp, other):
    s, v1 = sp
    v2 = np.array(other[: s.m])
    z1, z2 = project(s, v1), project(s, v2)
    assert np.linalg.norm(z1 - z2) <= np.linalg.norm(v1 - v2) + 2 * _tol(s) * 10


@settings(max_examples=100, deadline=None)
@given(spec_point())
def test_direction_nonnegative_and_normalized(sp):
    s, v = sp
    d = direction_consensus([s], v)
    assert np.all(d.d >= -1e-12)
    if d.is_zero:
        assert contains(s, v) or distance(s, v) < 1e-8
    else:
        assert np.linalg.norm(d.d) == pytest.approx(1, abs=1e-9)
        assert d.l1().d.sum() == pytest.approx(1, abs=1e-9)


# ---------------------------------------------------------------- intersections

def test_intersection_single_spec_and_inside():
    s = spec([0.3, 0.7], 0.5, 1.2)
    v = np.array([0.2, 0.1])
    np.testing.assert_array_equal(project_intersection([s], v), project(s, v))
    inside = np.array([3.0, 3.0])
    np.testing.assert_array_equal(project_intersection([s, spec([0.5, 0.5], 1)], inside), inside)


def test_intersection_two_halfspaces_closed_form():
    # both constraints active: z solves a1.z = c1, a2.z = c2
    a1, a2 = np.array([0.8, 0.2]), np.array([0.2, 0.8])
    s1, s2 = spec(a1, 1, 1.0), spec(a2, 1, 1.0)
    v = np.array([0.1, 0.1])
    z = project_intersection([s1, s2], v)
    np.testing.assert_allclose(z, np.linalg.solve(np.stack([a1, a2]), [1.0, 1.0]), atol=1e-6)
    # only the first active: projection onto its hyperplane, which satisfies the second
    v = np.array([0.0, 3.0])
    expected = v + (1.0 - a1 @ v) / (a1 @ a1) * a1
    assert a2 @ expected >= 1
    np.testing.assert_allclose(project_intersection([s1, s2], v), expected, atol=1e-6)


def test_intersection_mixed_p_is_feasible_and_optimal():
    rng = np.random.default_rng(4)
    specs = [spec([0.3, 0.7], 0.5, 1.0), spec([0.6, 0.4], -1.0, 0.8), spec([0.5, 0.5], NEG_INF, 0.6)]
    for _ in range(10):
        v = rng.uniform(-0.5, 1.0, 2)
        z = project_intersection(specs, v)
        assert all(distance(s, z) <= 1e-7 for s in specs)
        # no sampled feasible point is closer
        W = z + rng.uniform(-0.3, 0.3, (2000, 2))
        ok = np.all([contains(s, W) for s in specs], axis=0)
        assert np.linalg.norm(W[ok] - v, axis=1).min() >= np.linalg.norm(z - v) - 1e-7


def test_intersection_when_iterate_stalls():
    # the Dykstra iterate stands still for dozens of sweeps while the increments move
    specs = [spec([0.28401036494309134, 0.0016248287980088314, 0.7143648062588996], NEG_INF, 1.9305932922173952),
             spec([0.37593943521172074, 0.3330269471637212, 0.29103361762455815], 1.0, 1.9669627983486524)]
    v = np.array([0.45534527709232586, -1.7629110267975876, 1.588450827645202])
    z = project_intersection(specs, v)
    assert np.linalg.norm(z - v) == pytest.approx(cvxpy_intersection_distance(specs, v), abs=1e-6)


def test_intersection_with_nearly_flat_boundary():
    # plain Dykstra needs ~1e5 sweeps here; the certified KKT polish finishes it
    specs = [spec([0.430041109650314, 0.525141220487963, 0.04481766986172308], 1.0, 0.8098290903069826),
             spec([0.039114257485802925, 0.9354541904806145, 0.025431552033582494], 0.0, 0.34915868668835426),
             spec([0.005427992645632655, 0.9407291586711243, 0.05384284868324295], 0.5, 1.9635186873149986)]
    v = np.array([-1.9335740955740799, 0.7516007684700958, 1.3747653140852734])
    z = project_intersection(specs, v)
    assert all(contains(s, z) for s in specs)
    np.testing.assert_allclose(z, [2.87836296e-05, 2.01741017, 1.45993062], rtol=1e-6)


def test_intersection_random_against_conic_solver():
    rng = np.random.default_rng(11)
    for _ in range(60):
        specs = [spec(rng.dirichlet(np.ones(3) * rng.choice([0.3, 1.0, 3.0])), rng.choice(P_VALUES),
                      rng.uniform(0.1, 2.0)) for _ in range(int(rng.integers(2, 4)))]
        v = rng.uniform(-2.0, 2.5, 3)
        z = project_intersection(specs, v)
        assert all(contains(s, z, tol=1e-7) for s in specs)
        assert np.linalg.norm(z - v) <= cvxpy_intersection_distance(specs, v) + 1e-6


def test_projection_with_underflowing_coordinate():
    # the exact z_0 is about exp(-1840); anything below 1e-150 is as good
    s = spec([0.0007614544284264573, 0.5517474240825776, 0.447491121488996], 0.0, 0.44519726503317103)
    v = np.array([0.0, 1.785685471127009, 1.831442311824139])
    z = project(s, v)
    assert contains(s, z) and np.linalg.norm(z - v) < 1e-150


# ---------------------------------------------------------------- directions

def test_direction_far_below_p1_set():
    alpha = np.array([0.3, 0.7])
    d = direction_consensus([spec(alpha, 1, 50.0)], [0.5, 0.5])
    np.testing.assert_allclose(d.d, alpha / np.linalg.norm(alpha), atol=1e-12)
    np.testing.assert_allclose(d.l1().d, alpha, atol=1e-12)


def test_direction_inside_is_zero():
    d = direction_consensus([spec([0.5, 0.5], 0.5, 1.0)], [2.0, 2.0])
    assert d.is_zero and np.all(d.d == 0)


def test_malfare_single_group_collapses():
    s = spec([0.3, 0.7], 0.5, 1.4)
    v = np.array([0.2, 0.6])
    for q in (1, 2, 3):
        d = direction_malfare(MultiGroupSpec((s,), [1.0], q), v)
        np.testing.assert_allclose(d.d, direction_consensus([s], v).l1().d, atol=1e-12)


def test_malfare_symmetric():
    mg = MultiGroupSpec((spec([0.2, 0.8], 1, 1.0), spec([0.8, 0.2], 1, 1.0)), [0.5, 0.5], 1)
    d = direction_malfare(mg, [0.3, 0.3])
    assert d.d[0] == pytest.approx(d.d[1], abs=1e-12)


def test_malfare_matches_hand_formula():
    a1, a2 = np.array([0.2, 0.8]), np.array([0.6, 0.4])
    mg = MultiGroupSpec((spec(a1, 1, 1.0), spec(a2, 1, 2.0)), [0.5, 0.5], 1)
    v = np.array([0.3, 0.4])
    dist1 = (1.0 - a1 @ v) / np.linalg.norm(a1)
    dist2 = (2.0 - a2 @ v) / np.linalg.norm(a2)
    u1, u2 = a1 / np.linalg.norm(a1), a2 / np.linalg.norm(a2)
    raw = (0.5 * dist1 * u1 + 0.5 * dist2 * u2) / math.sqrt(0.5 * dist1**2 + 0.5 * dist2**2)
    d = direction_malfare(mg, v)
    np.testing.assert_allclose(d.raw, raw, atol=1e-9)
    np.testing.assert_allclose(d.d, raw / raw.sum(), atol=1e-9)
    assert malfare_value(mg, v) == pytest.approx(math.sqrt(0.5 * dist1**2 + 0.5 * dist2**2), abs=1e-12)


def test_assess_agrees_with_separate_calls():
    specs = [spec([0.3, 0.7], 0.5, 1.0), spec([0.6, 0.4], 0.0, 0.9)]
    mg = MultiGroupSpec(tuple(specs), [0.3, 0.7], 2)
    v = np.array([0.2, 0.4])
    value, group, d = assess("consensus", specs, v)
    assert value == pytest.approx(np.linalg.norm(project_intersection(specs, v) - v), abs=1e-12)
    np.testing.assert_allclose(group, [distance(s, v) for s in specs], atol=1e-12)
    np.testing.assert_allclose(d.d, direction_consensus(specs, v).d, atol=1e-12)
    value, _, d = assess("malfare", mg, v)
    assert value == pytest.approx(malfare_value(mg, v), abs=1e-12)
    np.testing.assert_allclose(d.d, direction_malfare(mg, v).d, atol=1e-12)


# ---------------------------------------------------------------- restricted set distance

def test_restricted_distance_identical_sets():
    s = spec([0.4, 0.6], 0.5, 1.0)
    assert restricted_set_distance(s, s, 4.0, 500, 0).value == 0


def test_restricted_distance_boxes():
    est = restricted_set_distance(spec([0.5, 0.5], NEG_INF, 1.0), spec([0.5, 0.5], NEG_INF, 1.5),
                                  4.0, 10_000, 0)
    exact = 0.5 * math.sqrt(2)
    assert exact * 0.9 <= est.value <= exact + 1e-12
    assert est.value <= 2 * math.sqrt(2) * est.B1


def test_restricted_distance_deterministic():
    a, b = spec([0.4, 0.6], 0.5, 1.0), spec([0.5, 0.5], 0.5, 1.0)
    assert restricted_set_distance(a, b, 3.0, 300, 7) == restricted_set_distance(a, b, 3.0, 300, 7)
