"""Acceptance gate: one test per criterion at the stated tolerance.

Run alone with ``pytest tests/test_acceptance.py``; the terminal summary
prints one pass/fail line per criterion.
"""
import math
import time

import numpy as np
import pytest

from capreq.acceptability import (
    Status,
    capital_report,
    check_certificate,
    classify,
    is_acceptable,
    min_capital_dual,
    min_capital_primal,
)
from capreq.geometry import ConvexPolytope, ProjectionOperator, inner, nearest_point, sunny_defect
from capreq.hedging import (
    HedgeProblem,
    TwoFactorModel,
    build_two_factor_tree,
    call_payoff,
    efficient_hedge_price,
    girsanov_density,
    martingale_vertices,
    superhedge_price,
)
from capreq.instances import empty_instance, feasible_instance, random_market, risk_instance
from capreq.market import binomial_market, martingale_violation
from capreq.risk import capital_identity_check
from capreq.scenarios import HullEvaluator, ScenarioSet
from capreq.selftest import random_two_factor_model, random_y_process

from oracles import qp_simplex_oracle

N_DUALITY = 500
DUALITY_SEEDS = range(1000, 1000 + N_DUALITY)
ALPHAS = (0.0, 0.02, 0.08)


@pytest.fixture(scope="module")
def duality_instances():
    return [feasible_instance(s) for s in DUALITY_SEEDS]


@pytest.fixture(scope="module")
def duality_results(duality_instances):
    out = []
    t0 = time.perf_counter()
    for inst in duality_instances:
        primal = min_capital_primal(inst.scenarios, inst.market)
        dual = min_capital_dual(inst.scenarios, inst.market)
        out.append((primal, dual))
    return out, time.perf_counter() - t0


@pytest.mark.criterion(1, "strong duality on 500 random instances, gap <= 1e-8, runtime <= 60 s")
def test_criterion_1_strong_duality(duality_instances, duality_results):
    results, elapsed = duality_results
    assert len(results) == N_DUALITY
    for inst in duality_instances:
        m = inst.market
        assert m.n_outcomes <= 12 and m.space.horizon <= 3 and inst.scenarios.n_generators <= 8
    gaps = []
    for primal, dual in results:
        assert primal.status is Status.FINITE
        assert not dual.empty
        gaps.append(abs(primal.value - dual.value))
    print(f"max gap {max(gaps):.3e}, {elapsed:.2f} s")
    assert max(gaps) <= 1e-8
    assert elapsed <= 60.0


@pytest.mark.criterion(2, "no martingale density: primal unbounded below and classify agrees on 100 instances")
def test_criterion_2_empty_polytope_unbounded():
    for s in range(2000, 2100):
        inst = empty_instance(s)
        primal = min_capital_primal(inst.scenarios, inst.market)
        assert primal.status is Status.UNBOUNDED_BELOW, s
        assert classify(inst.scenarios, inst.market) is Status.UNBOUNDED_BELOW, s
        assert min_capital_dual(inst.scenarios, inst.market).empty


@pytest.mark.criterion(3, "certificate M from the witness: zero violations beyond 1e-8 on 1e4 hull points per instance")
def test_criterion_3_certificate(duality_instances, duality_results):
    results, _ = duality_results
    total = 0
    for inst, (primal, _) in zip(duality_instances, results):
        gains = primal.witness.flat @ inst.market.subspace.generators
        M = math.sqrt(inst.market.probs @ gains**2)
        chk = check_certificate(M, primal.value, inst.scenarios, inst.market, n_samples=10_000, seed=inst.seed, tol=1e-8)
        assert chk.samples == 10_000
        total += chk.violations
    assert total == 0


@pytest.mark.criterion(4, "risk identity min capital = rho_G on 200 instances within 1e-8")
def test_criterion_4_risk_identity():
    worst = 0.0
    for s in range(3000, 3200):
        inst = risk_instance(s)
        chk = capital_identity_check(inst.spec, inst.market, tol=1e-8)
        assert math.isfinite(chk.lhs) and math.isfinite(chk.rhs)
        worst = max(worst, abs(chk.lhs - chk.rhs))
        assert chk.passed, s
    print(f"worst identity gap {worst:.3e}")


@pytest.mark.criterion(5, "worked binomial: capital 0.5, witness 0.5, M = 0.5 within 1e-10")
def test_criterion_5_worked_binomial():
    b1 = binomial_market()
    scen = ScenarioSet(b1.probs, [[2.0, 0.0], [0.0, 2.0]], [1.0, 0.0])
    rep = capital_report(scen, b1)
    assert rep.status is Status.FINITE
    assert abs(rep.primal_value - 0.5) <= 1e-10
    assert abs(rep.dual_value - 0.5) <= 1e-10
    assert abs(rep.witness.positions[0][0] - 0.5) <= 1e-10
    assert abs(rep.certificate_M - 0.5) <= 1e-10
    ok, _ = is_acceptable(0.5, scen, b1)
    assert ok
    assert not is_acceptable(0.5 - 1e-6, scen, b1)[0]


def _two_factor_oracle(alpha: float, C, n: int = 2001) -> float:
    """Brute-force grid over the whole one-step martingale polytope.

    Martingale laws put mass 0.4 on the W1~ up pair (S1 = 1.6) and 0.6 on the
    down pair (S1 = 0.6).  The weight a splits the up pair and b the down pair;
    the Girsanov y-family is the line 0.4 a = 0.2 + y/4, 0.6 b = 0.3 + y/4.
    """
    a = np.linspace(0.0, 1.0, n)[:, None]
    b = np.linspace(0.0, 1.0, n)[None, :]
    Z = [4 * 0.4 * a, 4 * 0.4 * (1 - a), 4 * 0.6 * b, 4 * 0.6 * (1 - b)]
    gain = sum(0.25 * z * c for z, c in zip(Z, C))
    norm = np.sqrt(sum(0.25 * z**2 for z in Z))
    return float(np.max(gain - math.sqrt(2 * alpha) * norm))


@pytest.mark.criterion(6, "efficient hedging closed forms: B1 within 1e-6, two-factor superhedge 1e-9, efficient price 1e-4 vs grid")
def test_criterion_6_hedging_closed_forms():
    b1 = binomial_market()
    for a in ALPHAS:
        price = efficient_hedge_price(HedgeProblem([1.0, 0.0], 2.0, a), b1)
        assert abs(price - (0.5 - math.sqrt(2 * a))) <= 1e-6

    model = TwoFactorModel(0.1, 0.3, 0.4, steps=1, horizon=1.0, s0=1.0)
    assert model.sigma_star == pytest.approx(0.5, abs=1e-15)
    market = build_two_factor_tree(model)
    C = call_payoff(market, 1.0)
    assert abs(superhedge_price(C, market) - 0.24) <= 1e-9
    for a in ALPHAS:
        closed = 0.24 - math.sqrt(2 * a) * math.sqrt(1.04)
        oracle = _two_factor_oracle(a, (0.6, 0.6, 0.0, 0.0))
        price = efficient_hedge_price(HedgeProblem(C, 2.0, a, cap=10.0), market)
        assert abs(oracle - closed) <= 1e-4
        assert abs(price - oracle) <= 1e-4
        assert abs(price - closed) <= 1e-4
        # along the Girsanov y-family the best y is 0
        ys = np.linspace(-0.8, 0.8, 16001)
        line = 0.24 - math.sqrt(2 * a) * np.sqrt(0.25 * ((0.8 + ys) ** 2 + (0.8 - ys) ** 2 + (1.2 + ys) ** 2 + (1.2 - ys) ** 2))
        assert abs(line.max() - oracle) <= 1e-4
        assert abs(ys[np.argmax(line)]) <= 1e-3 or a == 0.0


@pytest.mark.criterion(7, "Girsanov densities with z = -mu/sigma* are martingale densities, violation <= 1e-10")
def test_criterion_7_girsanov():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        model = random_two_factor_model(rng, max_steps=3)
        market = build_two_factor_tree(model)
        y = random_y_process(model, market, rng)
        Z = girsanov_density(model, market, y)
        v = martingale_violation(market.price, Z)
        worst = max(worst, v)
        assert v <= 1e-10
    print(f"worst violation {worst:.3e}")


@pytest.mark.criterion(8, "geometry: projection identities 1e-10, nearest point 1e-8, sunny 1e-6, f~ concavity 1e-8")
def test_criterion_8_geometry():
    rng = np.random.default_rng(8)
    rm = random_market(rng, n_outcomes=12, horizon=3)
    T = ProjectionOperator.of(rm.market)
    p = rm.market.probs
    for _ in range(1000):
        X, Y = rng.normal(size=(2, p.size))
        TX = T(X)
        assert np.abs(T(TX) - TX).max() <= 1e-10
        assert abs(inner(X, X, p) - inner(TX, TX, p) - inner(X - TX, X - TX, p)) <= 1e-10
        assert abs(inner(TX, Y, p) - inner(X, T(Y), p)) <= 1e-10

    for _ in range(50):
        k = int(rng.integers(2, 5))
        G = rng.normal(size=(k, p.size))
        X = rng.normal(size=p.size)
        oracle = qp_simplex_oracle(X, G, p)
        assert np.abs(nearest_point(X, ConvexPolytope(G), 2.0, p) - oracle).max() <= 1e-8

    for _ in range(20):
        k = int(rng.integers(2, 5))
        G = rng.normal(size=(k, p.size))
        X = rng.normal(size=p.size)
        pexp = float(rng.uniform(1.2, 2.0))
        for a in (0.0, 0.3, 0.7, 1.0):
            assert sunny_defect(X, ConvexPolytope(G), pexp, p, a) <= 1e-6

    inst = feasible_instance(8, n_generators=6)
    scen = inst.scenarios
    ev = HullEvaluator(scen)
    w = rng.dirichlet(np.ones(scen.n_generators), size=(1000, 2))
    lam = rng.uniform(size=(1000, 1))
    Y1, Y2 = w[:, 0] @ scen.densities, w[:, 1] @ scen.densities
    f1, f2, fm = ev.batch(Y1), ev.batch(Y2), ev.batch(lam * Y1 + (1 - lam) * Y2)
    viol = lam[:, 0] * f1 + (1 - lam[:, 0]) * f2 - fm
    assert not np.any(np.isnan(viol))
    assert viol.max() <= 1e-8


def _hedge_cases():
    b1 = binomial_market()
    model = TwoFactorModel(0.1, 0.3, 0.4)
    tf = build_two_factor_tree(model)
    # UU-only payoff depends on the second driver, so caps actually bind
    return [(b1, np.array([1.0, 0.0])), (tf, call_payoff(tf, 1.0)), (tf, np.array([1.0, 0.0, 0.0, 0.0]))]


@pytest.mark.criterion(9, "monotonicity: capital in floors and translation-exact; hedge price in alpha, C and k")
def test_criterion_9_monotonicity(duality_instances, duality_results):
    results, _ = duality_results
    rng = np.random.default_rng(9)
    for inst, (primal, _) in zip(duality_instances, results):
        scen, m = inst.scenarios, inst.market
        raised = scen.with_floors(scen.floors + rng.uniform(0, 1, size=scen.n_generators))
        assert min_capital_primal(raised, m).value >= primal.value - 1e-10
        c = float(rng.normal())
        shifted = min_capital_primal(scen.with_floors(scen.floors + c), m).value
        assert abs(shifted - (primal.value + c)) <= 1e-10

    alphas = np.linspace(0.0, 0.1, 6)
    caps = [1.05, 1.1, 1.2, 1.5, 2.0, 5.0]
    for market, C in _hedge_cases():
        V = martingale_vertices(market)
        prices = [efficient_hedge_price(HedgeProblem(C, 2.0, a), market, V) for a in alphas]
        assert all(b <= a + 1e-9 for a, b in zip(prices, prices[1:]))
        bumped = C + rng.uniform(0, 0.5, size=C.size)
        for a in ALPHAS:
            assert efficient_hedge_price(HedgeProblem(bumped, 2.0, a), market, V) >= efficient_hedge_price(
                HedgeProblem(C, 2.0, a), market, V
            ) - 1e-9
        if market.n_outcomes == 4:
            for a in ALPHAS:
                by_cap = [efficient_hedge_price(HedgeProblem(C, 2.0, a, k), market, V) for k in caps]
                assert all(b >= x - 1e-9 for x, b in zip(by_cap, by_cap[1:]))
