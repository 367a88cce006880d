import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capreq.errors import CapreqError, Infeasible, NegativeDensity, StepPositivityViolated
from capreq.geometry import weighted_norm
from capreq.hedging import (
    HedgeProblem,
    TwoFactorModel,
    alpha_sweep,
    build_two_factor_tree,
    call_payoff,
    cap_sweep,
    efficient_hedge,
    efficient_hedge_price,
    girsanov_density,
    hedging_functional,
    martingale_vertices,
    superhedge,
    superhedge_price,
)
from capreq.market import binomial_market, is_martingale
from capreq.selftest import random_two_factor_model, random_y_process

MODEL = TwoFactorModel(0.1, 0.3, 0.4)
TREE = build_two_factor_tree(MODEL)
B1 = binomial_market()


def uu_claim(market):
    return np.array([1.0 if lab.startswith("UU") else 0.0 for lab in market.space.outcomes])


def test_one_step_tree():
    assert MODEL.sigma_star == pytest.approx(0.5)
    assert TREE.n_outcomes == 4
    np.testing.assert_allclose(TREE.price.paths[-1], [1.6, 1.6, 0.6, 0.6])
    assert TREE.space.outcomes == ("UU", "UD", "DU", "DD")


def test_zero_drift_reference_measure_is_martingale():
    m = build_two_factor_tree(TwoFactorModel(0.0, 0.3, 0.4, steps=2))
    assert is_martingale(m.price, np.ones(m.n_outcomes))


def test_two_step_tree_depends_on_first_driver_only():
    m = build_two_factor_tree(TwoFactorModel(0.1, 0.3, 0.4, steps=2, horizon=1.0))
    assert m.n_outcomes == 16
    final = m.price.paths[-1]
    for lab, s in zip(m.space.outcomes, final):
        key = "".join(code[0] for code in lab.split("."))
        same = [v for other, v in zip(m.space.outcomes, final) if "".join(c[0] for c in other.split(".")) == key]
        assert np.allclose(same, s)
    # attainable claims span only the first-driver directions
    assert m.subspace.dimension == 5


def test_positivity_guard():
    with pytest.raises(StepPositivityViolated):
        TwoFactorModel(3.0, 0.3, 0.4)
    with pytest.raises(StepPositivityViolated):
        TwoFactorModel(0.0, 0.9, 0.9)
    with pytest.raises(CapreqError):
        TwoFactorModel(0.1, 0.0, 0.4)
    with pytest.raises(CapreqError):
        TwoFactorModel(0.1, 0.3, 0.4, steps=0)


def test_girsanov_examples():
    assert MODEL.market_price_of_risk == pytest.approx(-0.2)
    Z = girsanov_density(MODEL, TREE)
    np.testing.assert_allclose(Z, [0.8, 0.8, 1.2, 1.2], atol=1e-15)
    assert is_martingale(TREE.price, Z, tol=1e-10)
    flat = TwoFactorModel(0.0, 0.3, 0.4)
    np.testing.assert_allclose(girsanov_density(flat, build_two_factor_tree(flat)), 1.0)
    with pytest.raises(NegativeDensity):
        girsanov_density(MODEL, TREE, 0.9)
    with pytest.raises(CapreqError):
        girsanov_density(MODEL, TREE, [np.zeros(2)])


def test_girsanov_with_y_changes_second_driver_only():
    Z = girsanov_density(MODEL, TREE, 0.5)
    np.testing.assert_allclose(Z, [0.8 + 0.5, 0.8 - 0.5, 1.2 + 0.5, 1.2 - 0.5])
    assert is_martingale(TREE.price, Z, tol=1e-10)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_girsanov_always_martingale(seed):
    rng = np.random.default_rng(seed)
    model = random_two_factor_model(rng)
    market = build_two_factor_tree(model)
    Z = girsanov_density(model, market, random_y_process(model, market, rng))
    assert Z.min() >= -1e-12
    assert market.probs @ Z == pytest.approx(1.0, abs=1e-10)
    assert is_martingale(market.price, Z, tol=1e-10)


def test_vertex_counts():
    assert martingale_vertices(TREE).shape == (4, 4)
    two = build_two_factor_tree(TwoFactorModel(0.1, 0.3, 0.4, steps=2))
    V = martingale_vertices(two)
    assert V.shape == (64, 16)
    for Z in V:
        assert is_martingale(two.price, Z, tol=1e-10)
    np.testing.assert_allclose(martingale_vertices(B1), [[1.0, 1.0]])
    with pytest.raises(CapreqError):
        martingale_vertices(two, max_vertices=10)


def test_superhedge_examples():
    call = call_payoff(TREE, 1.0)
    sh = superhedge(call, TREE)
    assert sh.price == pytest.approx(0.24, abs=1e-9)
    assert sh.primal == pytest.approx(0.24, abs=1e-9)
    assert superhedge_price(np.full(4, 0.7), TREE) == pytest.approx(0.7, abs=1e-12)
    forward = TREE.price.paths[-1] - 1.0
    assert superhedge_price(forward, TREE) == pytest.approx(0.0, abs=1e-12)


def test_efficient_hedge_b1_closed_form():
    for alpha in (0.0, 0.02, 0.08):
        price = efficient_hedge_price(HedgeProblem([1.0, 0.0], alpha=alpha), B1)
        assert price == pytest.approx(0.5 - math.sqrt(2 * alpha), abs=1e-9)


def test_efficient_hedge_two_factor_closed_form():
    call = call_payoff(TREE, 1.0)
    sol = efficient_hedge(HedgeProblem(call, alpha=0.02), TREE)
    assert sol.price == pytest.approx(0.24 - math.sqrt(0.04) * math.sqrt(1.04), abs=1e-8)
    np.testing.assert_allclose(sol.density, [0.8, 0.8, 1.2, 1.2], atol=1e-6)
    assert efficient_hedge_price(HedgeProblem(call), TREE) == pytest.approx(0.24, abs=1e-9)
    assert not sol.q_above_two


def test_q_three_against_sampled_weights():
    C = uu_claim(TREE)
    prob = HedgeProblem(C, q=3.0, alpha=0.05)
    sol = efficient_hedge(prob, TREE)
    assert sol.q_above_two
    V = martingale_vertices(TREE)
    W = np.random.default_rng(0).dirichlet(np.ones(4), size=20000)
    vals = np.array([hedging_functional(w @ V, prob, TREE.probs) for w in W])
    assert sol.price >= vals.max() - 1e-9
    # the price is attained by a feasible density, so it is not an overestimate
    assert is_martingale(TREE.price, sol.density, tol=1e-10)
    assert sol.price == pytest.approx(hedging_functional(sol.density, prob, TREE.probs), abs=1e-12)


def test_cap_infeasible_and_binding():
    C = uu_claim(TREE)
    with pytest.raises(Infeasible):
        efficient_hedge(HedgeProblem(C, alpha=0.02, cap=1.0), TREE)
    free = efficient_hedge(HedgeProblem(C, alpha=0.0), TREE)
    capped = efficient_hedge(HedgeProblem(C, alpha=0.0, cap=1.1), TREE)
    assert free.norm2 > 1.1
    assert capped.cap_binding
    assert 1.1 - 1e-6 <= capped.norm2 <= 1.1
    assert capped.price <= free.price + 1e-12
    huge = efficient_hedge(HedgeProblem(C, alpha=0.0, cap=100.0), TREE)
    assert not huge.cap_binding and huge.price == pytest.approx(free.price, abs=1e-12)


def test_replicable_claim_cap_does_not_bind():
    call = call_payoff(TREE, 1.0)
    sol = efficient_hedge(HedgeProblem(call, alpha=0.0, cap=1.05), TREE)
    assert sol.price == pytest.approx(0.24, abs=1e-9)
    assert sol.norm2 <= 1.05


def test_cap_at_smallest_norm():
    # on the two-step tree the call is replicable and the cap equals the
    # smallest density norm up to rounding
    m = build_two_factor_tree(TwoFactorModel(0.1, 0.3, 0.4, 2, 1.0, 1.0))
    call = call_payoff(m, 1.0)
    free = efficient_hedge(HedgeProblem(call), m)
    sol = efficient_hedge(HedgeProblem(call, cap=1.02), m)
    assert sol.norm2 == pytest.approx(1.02, abs=1e-12)
    assert sol.price == pytest.approx(free.price, abs=1e-12)


def test_monotone_in_alpha_claim_and_cap():
    C = uu_claim(TREE)
    prices = [r.price for r in alpha_sweep(HedgeProblem(C), TREE, [0.0, 0.01, 0.05, 0.2])]
    assert all(b <= a + 1e-10 for a, b in zip(prices, prices[1:]))
    assert prices[0] == pytest.approx(superhedge_price(C, TREE), abs=1e-9)
    bigger = efficient_hedge_price(HedgeProblem(C + 0.3 * TREE.price.paths[-1] ** 2, alpha=0.02), TREE)
    assert bigger >= efficient_hedge_price(HedgeProblem(C, alpha=0.02), TREE) - 1e-10
    rows = cap_sweep(HedgeProblem(C, alpha=0.02), TREE, [1.0, 1.03, 1.1, 1.5, 3.0])
    assert rows[0].status == "infeasible" and math.isnan(rows[0].price)
    ok = [r.price for r in rows if r.status == "ok"]
    assert len(ok) == 4 and all(b >= a - 1e-9 for a, b in zip(ok, ok[1:]))


def test_sweep_edge_cases():
    prob = HedgeProblem([1.0, 0.0])
    assert alpha_sweep(prob, B1, []) == []
    rows = alpha_sweep(prob, B1, [0.02, 0.02, 0.08])
    assert rows[0].price == rows[1].price
    assert [r.status for r in rows] == ["ok"] * 3
    np.testing.assert_allclose([r.price for r in rows], [0.3, 0.3, 0.1], atol=1e-9)
    with pytest.raises(CapreqError):
        alpha_sweep(prob, B1, [0.1, 0.0])
    with pytest.raises(CapreqError):
        cap_sweep(prob, B1, [2.0, 1.0])


def test_problem_validation():
    with pytest.raises(CapreqError):
        HedgeProblem([1.0], q=0.5)
    with pytest.raises(CapreqError):
        HedgeProblem([1.0], alpha=-1.0)
    with pytest.raises(CapreqError):
        HedgeProblem([1.0], cap=0.0)
    assert math.isinf(HedgeProblem([1.0], q=1.0).p)
    assert HedgeProblem([1.0], q=3.0).p == pytest.approx(1.5)
    assert HedgeProblem([1.0], q=2.0, alpha=0.02).penalty_weight == pytest.approx(0.2)
    with pytest.raises(CapreqError):
        efficient_hedge(HedgeProblem([1.0, 0.0, 0.0]), B1)


def test_q_one_uses_sup_norm():
    C = uu_claim(TREE)
    prob = HedgeProblem(C, q=1.0, alpha=0.01)
    sol = efficient_hedge(prob, TREE)
    assert sol.price == pytest.approx(hedging_functional(sol.density, prob, TREE.probs))
    V = martingale_vertices(TREE)
    W = np.random.default_rng(1).dirichlet(np.ones(4), size=5000)
    vals = [C @ (TREE.probs * (w @ V)) - 0.01 * (w @ V).max() for w in W]
    assert sol.price >= max(vals) - 1e-9


@given(st.integers(0, 2**32 - 1), st.sampled_from([1.5, 2.0, 3.0, 5.0]), st.floats(0.0, 0.5))
def test_lipschitz_bound(seed, q, alpha):
    rng = np.random.default_rng(seed)
    p = TREE.probs
    C = rng.normal(size=4)
    prob = HedgeProblem(C, q=q, alpha=alpha)
    X, Y = rng.dirichlet(np.ones(4), size=2) / p
    L = weighted_norm(C, q, p) + prob.penalty_weight
    diff = abs(hedging_functional(X, prob, p) - hedging_functional(Y, prob, p))
    assert diff <= L * weighted_norm(X - Y, prob.p, p) + 1e-8
