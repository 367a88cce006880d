from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from capreq.errors import CapreqError, NotADensity, NotInHull
from capreq.instances import feasible_instance
from capreq.market import binomial_market, is_martingale, make_market
from capreq.scenarios import (
    HullEvaluator,
    ScenarioSet,
    f_tilde,
    martingale_polytope,
    scenarios_from_dict,
    sup_f_tilde_over_Z,
)

from oracles import exact_lp_vertices, independent_rows

HALF = np.array([0.5, 0.5])


def b1_scenarios(floors=(1.0, 0.0)):
    return ScenarioSet(HALF, [[2.0, 0.0], [0.0, 2.0]], list(floors))


@pytest.mark.parametrize("Y, expected", [((1.0, 1.0), 0.5), ((2.0, 0.0), 1.0), ((0.0, 2.0), 0.0), ((1.5, 0.5), 0.75)])
def test_f_tilde_b1(Y, expected):
    assert f_tilde(Y, b1_scenarios()) == pytest.approx(expected, abs=1e-12)


def test_f_tilde_duplicate_generator_takes_larger_floor():
    scen = ScenarioSet(HALF, [[2.0, 0.0], [2.0, 0.0]], [1.0, 2.0])
    assert f_tilde([2.0, 0.0], scen) == pytest.approx(2.0)


def test_f_tilde_outside_hull():
    with pytest.raises(NotInHull):
        f_tilde([3.0, -1.0], b1_scenarios())
    single = ScenarioSet(HALF, [[2.0, 0.0]], [1.0])
    with pytest.raises(NotInHull):
        f_tilde([1.0, 1.0], single)


def test_batch_marks_points_outside_with_nan():
    ev = HullEvaluator(b1_scenarios())
    out = ev.batch([[1.0, 1.0], [3.0, -1.0], [2.0, 0.0]])
    assert out[0] == pytest.approx(0.5) and np.isnan(out[1]) and out[2] == pytest.approx(1.0)


def test_scenario_validation():
    with pytest.raises(NotADensity):
        ScenarioSet(HALF, [[3.0, 0.0]], [0.0])
    with pytest.raises(NotADensity):
        ScenarioSet(HALF, [[2.5, -0.5]], [0.0])
    with pytest.raises(CapreqError):
        ScenarioSet(HALF, [[2.0, 0.0]], [0.0, 1.0])
    with pytest.raises(CapreqError):
        ScenarioSet(HALF, [[2.0, 0.0]], [np.inf])
    with pytest.raises(CapreqError):
        ScenarioSet(HALF, [[2.0, 0.0]], [0.0], norm_cap=1.2)
    ScenarioSet(HALF, [[2.0, 0.0]], [0.0], norm_cap=np.sqrt(2))


def test_scenario_dict_round_trip():
    scen = ScenarioSet(HALF, [[2.0, 0.0], [0.0, 2.0]], [1.0, 0.0], norm_cap=5.0)
    again = scenarios_from_dict(scen.to_dict(), HALF)
    np.testing.assert_array_equal(again.densities, scen.densities)
    np.testing.assert_array_equal(again.floors, scen.floors)
    assert again.norm_cap == 5.0
    with pytest.raises(CapreqError):
        scenarios_from_dict({"generators": [{"density": [2.0, 0.0]}]}, HALF)


def test_polytope_b1_examples():
    G = binomial_market().subspace
    poly = martingale_polytope(b1_scenarios(), G)
    assert not poly.is_empty()
    lam = poly.feasible_point()
    np.testing.assert_allclose(poly.density(lam), [1.0, 1.0], atol=1e-12)

    assert martingale_polytope(ScenarioSet(HALF, [[2.0, 0.0]], [1.0]), G).is_empty()

    with_p = ScenarioSet(HALF, [[2.0, 0.0], [1.0, 1.0]], [0.0, 0.0])
    np.testing.assert_allclose(martingale_polytope(with_p, G).feasible_point(), [0.0, 1.0], atol=1e-12)


def test_sup_f_tilde_b1_examples():
    G = binomial_market().subspace
    res = sup_f_tilde_over_Z(martingale_polytope(b1_scenarios(), G))
    assert not res.empty
    assert res.value == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(res.weights, [0.5, 0.5], atol=1e-12)
    assert sup_f_tilde_over_Z(martingale_polytope(ScenarioSet(HALF, [[2.0, 0.0]], [1.0]), G)).empty
    assert sup_f_tilde_over_Z(martingale_polytope(ScenarioSet(HALF, [[1.0, 1.0]], [3.0]), G)).value == pytest.approx(3.0)


# two-step tree on four equally likely outcomes; the first step is flat so
# the attainable gains are spanned by (1,-1,0,0) and (0,0,1,-1)
TREE = [[["a", "b", "c", "d"]], [["a", "b"], ["c", "d"]], [["a"], ["b"], ["c"], ["d"]]]
GAINS = [[1, -1, 0, 0], [0, 0, 1, -1]]


def flat_first_step_market():
    return make_market([0.25] * 4, TREE, [[0.0], [0.0, 0.0], [1.0, -1.0, 1.0, -1.0]])


# four nonnegative integers summing to 4, from three sorted cut points
integer_density = st.lists(st.integers(0, 4), min_size=3, max_size=3).map(
    lambda c: [b - a for a, b in zip([0] + sorted(c), sorted(c) + [4])]
)


@given(st.lists(integer_density, min_size=1, max_size=3), st.lists(st.integers(-5, 5), min_size=3, max_size=3))
def test_sup_matches_exact_vertex_enumeration(dens, floors):
    floors = floors[: len(dens)]
    market = flat_first_step_market()
    assert market.subspace.dimension == 2
    scen = ScenarioSet(market.probs, np.array(dens, float), np.array(floors, float))
    res = sup_f_tilde_over_Z(martingale_polytope(scen, market.subspace))

    # exact system: sum l = 1 and E[(sum l_i Z_i) g] = 0 for each gain g
    A = [[1] * len(dens)] + [[Fraction(sum(z * g for z, g in zip(Z, gain)), 4) for Z in dens] for gain in GAINS]
    reduced = independent_rows(A, [1, 0, 0])
    verts = [] if reduced is None else exact_lp_vertices(*reduced)
    if not verts:
        assert res.empty
        return
    best = max(sum(l * f for l, f in zip(v, floors)) for v in verts)
    assert not res.empty
    assert res.value == pytest.approx(float(best), abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_polytope_points_are_martingale_densities(seed):
    inst = feasible_instance(seed)
    poly = martingale_polytope(inst.scenarios, inst.market.subspace)
    rng = np.random.default_rng(seed)
    lam = poly.feasible_point()
    assert lam is not None
    assert is_martingale(inst.market.price, poly.density(lam), tol=1e-10)
    # vertices of the LP slice are feasible points as well
    res = sup_f_tilde_over_Z(poly)
    assert is_martingale(inst.market.price, poly.density(res.weights), tol=1e-10)
    # so is any convex combination of the two
    t = rng.uniform()
    assert is_martingale(inst.market.price, poly.density(t * lam + (1 - t) * res.weights), tol=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_f_tilde_concave_and_above_floors(seed):
    inst = feasible_instance(seed)
    scen = inst.scenarios
    ev = HullEvaluator(scen)
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(scen.n_generators), size=(20, 2))
    lam = rng.uniform(size=20)
    Y1, Y2 = w[:, 0] @ scen.densities, w[:, 1] @ scen.densities
    mid = lam[:, None] * Y1 + (1 - lam[:, None]) * Y2
    f1, f2, fm = ev.batch(Y1), ev.batch(Y2), ev.batch(mid)
    assert np.all(fm >= lam * f1 + (1 - lam) * f2 - 1e-8)
    # batch agrees with one-off evaluation, and generators sit at or above their floors
    assert ev(Y1[0]) == pytest.approx(f1[0], abs=1e-9)
    for Z, phi in zip(scen.densities, scen.floors):
        assert ev(Z) >= phi - 1e-9
