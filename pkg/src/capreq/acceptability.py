"""Minimal acceptable capital: primal LP over strategies, dual LP over the
martingale polytope, and the norm certificate read off the primal witness.

In finite dimension the attainable subspace is closed, so acceptability and
weak acceptability coincide and the minimal capital is attained whenever it is
finite.  Continuity-type assumptions on the floor extension hold automatically
for finitely generated hulls and are not represented.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CapreqError, NoWitness, NumericalBreakdown
from .geometry import ProjectionOperator, norm
from .market import Market, TradingStrategy, terminal_wealth
from .optim import LinearProgram, LPStatus, solve_lp
from .scenarios import (
    DualValue,
    HullEvaluator,
    ScenarioSet,
    martingale_polytope,
    sup_f_tilde_over_Z,
)

DUALITY_TOL = 1e-8
WITNESS_TOL = 1e-9
CERTIFICATE_TOL = 1e-8

CLOSURE_NOTE = (
    "finite space: the attainable subspace is closed, so weak acceptability "
    "equals acceptability and the infimum is attained by the witness"
)


class Status(str, enum.Enum):
    FINITE = "finite"
    UNBOUNDED_BELOW = "unbounded_below"
    SCENARIOS_EMPTY = "scenarios_empty"


def _check_dims(scen: ScenarioSet, market: Market) -> None:
    if scen.probs.size != market.n_outcomes or not np.allclose(scen.probs, market.probs, rtol=0, atol=1e-15):
        raise CapreqError("scenario set and market use different reference measures")


def _constraint_block(scen: ScenarioSet, market: Market) -> np.ndarray:
    """<Z_i, g_j> for generator i and raw strategy generator g_j."""
    return (scen.densities * scen.probs) @ market.subspace.generators.T


def _strategy_lp(scen: ScenarioSet, market: Market, x: Optional[float]) -> LinearProgram:
    # columns: [x (free, only when minimizing)] + positions (free) + slacks (>= 0)
    n = scen.n_generators
    C = _constraint_block(scen, market)
    m = C.shape[1]
    slack = -np.eye(n)
    if x is None:
        A = np.hstack([np.ones((n, 1)), C, slack])
        c = np.zeros(1 + m + n)
        c[0] = 1.0
        return LinearProgram.build(c, A, scen.floors, free=range(1 + m))
    A = np.hstack([C, slack])
    return LinearProgram.build(np.zeros(m + n), A, scen.floors - x, free=range(m))


@dataclass(frozen=True)
class PrimalResult:
    status: Status
    value: float
    witness: Optional[TradingStrategy] = None


def is_acceptable(x: float, scen: ScenarioSet, market: Market):
    """(True, strategy) when some strategy lifts x into the acceptable set,
    else (False, None)."""
    _check_dims(scen, market)
    if scen.n_generators == 0:
        return True, TradingStrategy.zero(market.space)
    res = solve_lp(_strategy_lp(scen, market, float(x)))
    if not res.optimal:
        return False, None
    m = market.subspace.generators.shape[0]
    return True, TradingStrategy.from_flat(market.space, res.x[:m])


def min_capital_primal(scen: ScenarioSet, market: Market) -> PrimalResult:
    _check_dims(scen, market)
    if scen.n_generators == 0:
        return PrimalResult(Status.SCENARIOS_EMPTY, -np.inf)
    res = solve_lp(_strategy_lp(scen, market, None))
    if res.status is LPStatus.UNBOUNDED:
        return PrimalResult(Status.UNBOUNDED_BELOW, -np.inf)
    if res.status is LPStatus.INFEASIBLE:  # pragma: no cover - x is free, always feasible
        raise NumericalBreakdown("capital LP reported infeasible")
    m = market.subspace.generators.shape[0]
    return PrimalResult(Status.FINITE, float(res.x[0]), TradingStrategy.from_flat(market.space, res.x[1:1 + m]))


def min_capital_dual(scen: ScenarioSet, market: Market) -> DualValue:
    """sup of f~ over martingale densities in the hull (an independent LP over
    generator weights, not the primal's multipliers)."""
    _check_dims(scen, market)
    return sup_f_tilde_over_Z(martingale_polytope(scen, market.subspace))


def classify(scen: ScenarioSet, market: Market) -> Status:
    _check_dims(scen, market)
    if scen.n_generators == 0:
        return Status.SCENARIOS_EMPTY
    if martingale_polytope(scen, market.subspace).is_empty():
        return Status.UNBOUNDED_BELOW
    return Status.FINITE


@dataclass
class CertificateCheck:
    samples: int
    violations: int
    worst_excess: float
    x: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


@dataclass
class CapitalReport:
    status: Status
    primal_value: float
    dual_value: Optional[float]
    dual_empty: bool
    witness: Optional[TradingStrategy] = None
    certificate_M: Optional[float] = None
    gap: Optional[float] = None
    seed: Optional[int] = None
    certificate_check: Optional[CertificateCheck] = None
    dual_weights: Optional[np.ndarray] = field(default=None, repr=False)
    note: str = CLOSURE_NOTE

    def to_dict(self) -> dict:
        def num(v, flag):
            return flag if v is None or not np.isfinite(v) else float(v)

        out = {
            "status": self.status.value,
            "primal": num(self.primal_value, "unbounded"),
            "dual": "empty" if self.dual_empty else num(self.dual_value, "empty"),
            "gap": num(self.gap, "undefined"),
            "certificate_M": num(self.certificate_M, "undefined"),
            "witness": self.witness.to_dict() if self.witness is not None else None,
            "seed": self.seed,
            "note": self.note,
        }
        if self.certificate_check is not None:
            chk = self.certificate_check
            out["certificate_check"] = {
                "samples": chk.samples,
                "violations": chk.violations,
                "worst_excess": float(chk.worst_excess),
            }
        return out


def witness_gains(witness: TradingStrategy, market: Market) -> np.ndarray:
    return terminal_wealth(0.0, witness, market.price)


def certificate_M(report: CapitalReport, market: Market) -> float:
    """L^2 norm of the witness gains; bounds f~(Y) - x by M ||T(Y)|| on the hull."""
    if report.status is not Status.FINITE or report.witness is None:
        raise NoWitness(f"no witness strategy for status {report.status.value}")
    return norm(witness_gains(report.witness, market), market.space)


def sample_hull_weights(rng: np.random.Generator, n_generators: int, n_samples: int) -> np.ndarray:
    """Dirichlet weights; half flat, half sparse so faces of the hull get hit too."""
    flat = rng.dirichlet(np.ones(n_generators), size=(n_samples + 1) // 2)
    sparse = rng.dirichlet(np.full(n_generators, 0.2), size=n_samples // 2)
    return np.vstack([flat, sparse])


def check_certificate(
    M: float,
    x: float,
    scen: ScenarioSet,
    market: Market,
    n_samples: int = 10_000,
    seed: int = 0,
    tol: float = CERTIFICATE_TOL,
    evaluator: Optional[HullEvaluator] = None,
) -> CertificateCheck:
    """Count hull points Y with f~(Y) - x > M ||T(Y)|| + tol."""
    rng = np.random.default_rng(seed)
    weights = sample_hull_weights(rng, scen.n_generators, n_samples)
    Ys = weights @ scen.densities
    ft = (evaluator or HullEvaluator(scen)).batch(Ys)
    if np.any(np.isnan(ft)):
        raise NumericalBreakdown("sampled hull point rejected by the hull LP")
    excess = ft - x - M * ProjectionOperator.of(market).norm_of_projection(Ys)
    return CertificateCheck(n_samples, int(np.sum(excess > tol)), float(excess.max()), float(x))


def capital_report(
    scen: ScenarioSet,
    market: Market,
    seed: Optional[int] = None,
    certificate_samples: int = 0,
) -> CapitalReport:
    """Primal and dual minimal capital with cross-checks between them."""
    status = classify(scen, market)
    primal = min_capital_primal(scen, market)
    if primal.status is not status:
        raise NumericalBreakdown(
            f"primal LP says {primal.status.value} but the martingale polytope says {status.value}"
        )
    dual = min_capital_dual(scen, market) if scen.n_generators else DualValue(True)
    report = CapitalReport(status, primal.value, dual.value, dual.empty, primal.witness, seed=seed, dual_weights=dual.weights)
    if status is Status.FINITE:
        report.gap = abs(primal.value - dual.value)
        report.certificate_M = certificate_M(report, market)
        if certificate_samples:
            report.certificate_check = check_certificate(
                report.certificate_M, primal.value, scen, market, certificate_samples, seed or 0
            )
    return report
