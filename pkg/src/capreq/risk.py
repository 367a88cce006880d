"""Penalized worst-case risk measures and their hedged version."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .acceptability import Status, min_capital_primal
from .errors import CapreqError, EmptySpec
from .market import Market
from .optim import LinearProgram, LPStatus, solve_lp
from .scenarios import ScenarioSet, generator_inner

IDENTITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RiskSpec:
    """rho(X) = max_i ( E_i[-X] + h_i ) over scenario densities Z_i, with an
    optional claim that the capital identity is checked against."""

    probs: np.ndarray
    densities: np.ndarray
    penalties: np.ndarray
    claim: Optional[np.ndarray] = None

    def __post_init__(self):
        # reuse the density validation of ScenarioSet
        scen = ScenarioSet(self.probs, self.densities, self.penalties)
        object.__setattr__(self, "probs", scen.probs)
        object.__setattr__(self, "densities", scen.densities)
        object.__setattr__(self, "penalties", scen.floors)
        if self.claim is not None:
            claim = np.asarray(self.claim, dtype=float)
            if claim.shape != scen.probs.shape:
                raise CapreqError("claim needs one value per outcome")
            object.__setattr__(self, "claim", claim)

    @property
    def n_scenarios(self) -> int:
        return self.densities.shape[0]

    def as_scenarios(self, floors) -> ScenarioSet:
        return ScenarioSet(self.probs, self.densities, floors)


def rho(X, spec: RiskSpec) -> float:
    if spec.n_scenarios == 0:
        raise EmptySpec("risk measure needs at least one scenario")
    X = np.asarray(X, dtype=float)
    losses = spec.densities @ (spec.probs * -X) + spec.penalties
    return float(losses.max())


@dataclass(frozen=True)
class HedgedRisk:
    value: float
    hedge: Optional[np.ndarray] = None

    @property
    def unbounded(self) -> bool:
        return not np.isfinite(self.value)


def rho_G_solution(X, spec: RiskSpec, market: Market) -> HedgedRisk:
    """inf over attainable H of rho(X - H), via the LP
    min t  s.t.  t >= <Z_i, H - X> + h_i, with H in frame coordinates."""
    if spec.n_scenarios == 0:
        raise EmptySpec("risk measure needs at least one scenario")
    X = np.asarray(X, dtype=float)
    frame = market.subspace.frame
    r = frame.shape[0]
    n = spec.n_scenarios
    ZE = (spec.densities * spec.probs) @ frame.T
    # t - <Z_i, H> - s_i = h_i - <Z_i, X>
    A = np.hstack([np.ones((n, 1)), -ZE, -np.eye(n)])
    rhs = spec.penalties - generator_inner(spec.as_scenarios(spec.penalties), X)
    c = np.zeros(1 + r + n)
    c[0] = 1.0
    res = solve_lp(LinearProgram.build(c, A, rhs, free=range(1 + r)))
    if res.status is LPStatus.UNBOUNDED:
        return HedgedRisk(-np.inf)
    if not res.optimal:  # pragma: no cover
        raise CapreqError("hedged risk LP infeasible")
    return HedgedRisk(float(res.x[0]), res.x[1:1 + r] @ frame)


def rho_G(X, spec: RiskSpec, market: Market) -> float:
    return rho_G_solution(X, spec, market).value


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    rhs: float
    passed: bool


def capital_identity_check(spec: RiskSpec, market: Market, claim=None, tol: float = IDENTITY_TOL) -> IdentityCheck:
    """Compare the minimal capital for floors h_i - E_i[claim] with rho_G(claim)."""
    claim = spec.claim if claim is None else claim
    if claim is None:
        raise CapreqError("no claim given")
    claim = np.asarray(claim, dtype=float)
    floors = spec.penalties - spec.densities @ (spec.probs * claim)
    primal = min_capital_primal(spec.as_scenarios(floors), market)
    lhs = primal.value
    rhs = rho_G(claim, spec, market)
    if primal.status is Status.UNBOUNDED_BELOW or not np.isfinite(rhs):
        return IdentityCheck(lhs, rhs, lhs == rhs)
    return IdentityCheck(lhs, rhs, abs(lhs - rhs) <= tol)
