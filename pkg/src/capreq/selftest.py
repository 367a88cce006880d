"""Seeded randomized suites used by the ``selftest`` command.

Each suite returns (passed, total).  Instance seeds are drawn from one
generator seeded by the user seed, so a run is reproducible from its seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .acceptability import Status, capital_report, classify, min_capital_primal
from .geometry import ConvexPolytope, ProjectionOperator, inner, nearest_point
from .hedging import (
    HedgeProblem,
    TwoFactorModel,
    build_two_factor_tree,
    call_payoff,
    efficient_hedge_price,
    girsanov_density,
    superhedge_price,
)
from .instances import empty_instance, feasible_instance, random_market, risk_instance
from .market import binomial_market, martingale_violation
from .risk import capital_identity_check

DEFAULT_TOL = 1e-8


@dataclass
class SuiteResult:
    name: str
    passed: int
    total: int
    worst: float = 0.0

    @property
    def ok(self) -> bool:
        return self.passed == self.total


@dataclass
class SelftestConfig:
    seed: int = 42
    tol: float = DEFAULT_TOL
    n_duality: int = 100
    n_empty: int = 50
    n_certificate: int = 20
    certificate_samples: int = 1000
    n_risk: int = 50
    n_girsanov: int = 20
    n_geometry: int = 200


def _seeds(rng: np.random.Generator, n: int) -> list:
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=n)]


def suite_duality(cfg: SelftestConfig, rng) -> SuiteResult:
    worst, ok = 0.0, 0
    seeds = _seeds(rng, cfg.n_duality)
    for s in seeds:
        inst = feasible_instance(s)
        rep = capital_report(inst.scenarios, inst.market)
        gap = rep.gap if rep.gap is not None else math.inf
        worst = max(worst, gap)
        ok += gap <= cfg.tol
    return SuiteResult("duality", ok, len(seeds), worst)


def suite_empty(cfg: SelftestConfig, rng) -> SuiteResult:
    ok = 0
    seeds = _seeds(rng, cfg.n_empty)
    for s in seeds:
        inst = empty_instance(s)
        primal = min_capital_primal(inst.scenarios, inst.market)
        ok += primal.status is Status.UNBOUNDED_BELOW and classify(inst.scenarios, inst.market) is primal.status
    return SuiteResult("no_martingale_density", ok, len(seeds))


def suite_certificate(cfg: SelftestConfig, rng) -> SuiteResult:
    ok, worst = 0, -math.inf
    seeds = _seeds(rng, cfg.n_certificate)
    for s in seeds:
        inst = feasible_instance(s)
        rep = capital_report(inst.scenarios, inst.market, seed=s % 2**32, certificate_samples=cfg.certificate_samples)
        chk = rep.certificate_check
        worst = max(worst, chk.worst_excess)
        ok += chk.worst_excess <= cfg.tol
    return SuiteResult("certificate", ok, len(seeds), worst)


def suite_risk(cfg: SelftestConfig, rng) -> SuiteResult:
    ok, worst = 0, 0.0
    seeds = _seeds(rng, cfg.n_risk)
    for s in seeds:
        inst = risk_instance(s)
        chk = capital_identity_check(inst.spec, inst.market, tol=cfg.tol)
        worst = max(worst, abs(chk.lhs - chk.rhs))
        ok += chk.passed
    return SuiteResult("risk_identity", ok, len(seeds), worst)


def suite_girsanov(cfg: SelftestConfig, rng) -> SuiteResult:
    ok, worst = 0, 0.0
    for _ in range(cfg.n_girsanov):
        model = random_two_factor_model(rng)
        market = build_two_factor_tree(model)
        y = random_y_process(model, market, rng)
        v = martingale_violation(market.price, girsanov_density(model, market, y))
        worst = max(worst, v)
        ok += v <= min(cfg.tol, 1e-10)
    return SuiteResult("girsanov", ok, cfg.n_girsanov, worst)


def suite_geometry(cfg: SelftestConfig, rng) -> SuiteResult:
    rm = random_market(rng, n_outcomes=10, horizon=3)
    T = ProjectionOperator.of(rm.market)
    p = rm.market.probs
    ok, worst = 0, 0.0
    for _ in range(cfg.n_geometry):
        X, Y = rng.normal(size=(2, p.size))
        TX = T(X)
        errs = (
            np.abs(T(TX) - TX).max(),
            abs(inner(X, X, p) - inner(TX, TX, p) - inner(X - TX, X - TX, p)),
            abs(inner(TX, Y, p) - inner(X, T(Y), p)),
        )
        e = max(errs)
        worst = max(worst, e)
        ok += bool(e <= cfg.tol)
    # nearest point against the L^2 projection oracle on the simplex of two points
    G = rng.normal(size=(2, p.size))
    X = rng.normal(size=p.size)
    d = G[1] - G[0]
    t = np.clip(inner(X - G[0], d, p) / inner(d, d, p), 0, 1)
    e = np.abs(nearest_point(X, ConvexPolytope(G), 2.0, p) - (G[0] + t * d)).max()
    worst = max(worst, e)
    ok += bool(e <= cfg.tol)
    return SuiteResult("geometry", ok, cfg.n_geometry + 1, float(worst))


def suite_hedging(cfg: SelftestConfig, rng) -> SuiteResult:
    checks = []
    b1 = binomial_market()
    for a in (0.0, 0.02, 0.08):
        checks.append(abs(efficient_hedge_price(HedgeProblem([1.0, 0.0], 2.0, a), b1) - (0.5 - math.sqrt(2 * a))))
    model = TwoFactorModel(0.1, 0.3, 0.4)
    market = build_two_factor_tree(model)
    C = call_payoff(market, 1.0)
    checks.append(abs(superhedge_price(C, market) - 0.24))
    checks.append(abs(efficient_hedge_price(HedgeProblem(C, 2.0, 0.02), market) - (0.24 - 0.2 * math.sqrt(1.04))))
    tol = min(1e-6, 100 * cfg.tol)
    ok = sum(bool(c <= tol) for c in checks)
    return SuiteResult("hedging", ok, len(checks), float(max(checks)))


SUITES: dict = {
    "duality": suite_duality,
    "no_martingale_density": suite_empty,
    "certificate": suite_certificate,
    "risk_identity": suite_risk,
    "girsanov": suite_girsanov,
    "geometry": suite_geometry,
    "hedging": suite_hedging,
}


def random_two_factor_model(rng: np.random.Generator, max_steps: int = 3) -> TwoFactorModel:
    steps = int(rng.integers(1, max_steps + 1))
    horizon = float(rng.uniform(0.25, 1.0))
    s1, s2 = rng.uniform(0.1, 0.4, size=2)
    sigma = math.hypot(s1, s2)
    dt = horizon / steps
    # |mu/sigma*| sqrt(dt) <= 1/2, and 1.5 sigma* sqrt(dt) < 1 keeps the down move positive
    bound = 0.5 * sigma / math.sqrt(dt)
    mu = float(rng.uniform(-bound, bound))
    return TwoFactorModel(mu, float(s1), float(s2), steps, horizon, float(rng.uniform(0.5, 2.0)))


def random_y_process(model: TwoFactorModel, market, rng: np.random.Generator) -> list:
    """Per-node y values within the nonnegativity bound."""
    root = math.sqrt(model.dt)
    room = 1.0 / root - abs(model.market_price_of_risk)
    return [rng.uniform(-room, room, size=market.space.n_atoms(t)) for t in range(model.steps)]


def run_selftest(cfg: Optional[SelftestConfig] = None, report: Optional[Callable[[SuiteResult], None]] = None) -> list:
    cfg = cfg or SelftestConfig()
    master = np.random.default_rng(cfg.seed)
    results = []
    for name, suite in SUITES.items():
        res = suite(cfg, np.random.default_rng(master.integers(0, 2**63 - 1)))
        results.append(res)
        if report is not None:
            report(res)
    return results
