"""Seller's price of a claim when the q-th moment of the hedging shortfall is
allowed up to a level alpha.

The price is the maximum over martingale densities Z with ||Z||_2 <= k of

    E[Z C] - (q alpha)^(1/q) ||Z||_p,        1/p + 1/q = 1,

where the scenario family is every density on the space.  The martingale
densities form a polytope; its vertices (extreme martingale measures of the
tree) are enumerated and the concave objective is maximized over their convex
weights.

The two-factor model discretizes dS = S (mu dt + s1 dW1 + s2 dW2) on the
rotated drivers W1~ = (s1 W1 + s2 W2)/s*, W2~ = (-s2 W1 + s1 W2)/s*: each step
moves (W1~, W2~) by (+-sqrt(dt), +-sqrt(dt)) with probability 1/4 and
S_{t+1} = S_t (1 + mu dt + s* dW1~).  The price depends on W1~ only, while the
filtration carries both drivers, which makes the market incomplete.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .acceptability import Status, min_capital_primal
from .errors import (
    CapreqError,
    Infeasible,
    NegativeDensity,
    NoConvergence,
    StepPositivityViolated,
)
from .geometry import ConvexPolytope, nearest_point_solution, weighted_norm
from .market import Market, make_market
from .optim import maximize_concave
from .scenarios import ScenarioSet, martingale_polytope, sup_f_tilde_over_Z

log = logging.getLogger(__name__)

BRANCHES = ((1, 1), (1, -1), (-1, 1), (-1, -1))  # (sign dW1~, sign dW2~), W1~ up first
BRANCH_CODES = ("UU", "UD", "DU", "DD")
CAP_TOL = 1e-6
MULTIPLIER_FLOOR = 1e-10
VALUE_TOL = 1e-10
MAX_VERTICES = 50_000


@dataclass(frozen=True)
class TwoFactorModel:
    mu: float
    sigma1: float
    sigma2: float
    steps: int = 1
    horizon: float = 1.0
    s0: float = 1.0

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise CapreqError("volatilities must be positive")
        if self.steps < 1 or int(self.steps) != self.steps:
            raise CapreqError("steps must be a positive integer")
        if self.horizon <= 0 or self.s0 <= 0:
            raise CapreqError("horizon and s0 must be positive")
        root = math.sqrt(self.dt)
        if abs(self.mu / self.sigma_star) * root >= 1:
            raise StepPositivityViolated(
                f"|mu/sigma*| sqrt(dt) = {abs(self.mu / self.sigma_star) * root:.4g} must be < 1"
            )
        if 1 + self.mu * self.dt - self.sigma_star * root <= 0:
            raise StepPositivityViolated("down move would make the price nonpositive")

    @property
    def sigma_star(self) -> float:
        return math.hypot(self.sigma1, self.sigma2)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def market_price_of_risk(self) -> float:
        """The drift z = -mu / sigma* of the unique martingale tilt on W1~."""
        return -self.mu / self.sigma_star


def build_two_factor_tree(model: TwoFactorModel) -> Market:
    n = model.steps
    root = math.sqrt(model.dt)
    paths = list(itertools.product(range(4), repeat=n))
    labels = [".".join(BRANCH_CODES[b] for b in path) for path in paths]
    filtration = []
    prices = []
    for t in range(n + 1):
        prefixes = sorted({path[:t] for path in paths})
        filtration.append([[lab for lab, path in zip(labels, paths) if path[:t] == pre] for pre in prefixes])
        prices.append([
            model.s0 * math.prod(1 + model.mu * model.dt + model.sigma_star * BRANCHES[b][0] * root for b in pre)
            for pre in prefixes
        ])
    K = len(paths)
    return make_market(np.full(K, 1.0 / K), filtration, prices, outcomes=labels)


def girsanov_density(model: TwoFactorModel, market: Market, y_process=None) -> np.ndarray:
    """Product over steps of 1 + z dW1~ + y_t dW2~ with z = -mu/sigma*.

    ``y_process`` gives y per node (a sequence over dates of per-atom values),
    a scalar for a constant y, or None for y = 0.
    """
    space = market.space
    n = model.steps
    if space.horizon != n or space.n_outcomes != 4**n:
        raise CapreqError("market was not built from this model")
    root = math.sqrt(model.dt)
    z = model.market_price_of_risk
    if y_process is None:
        y_process = 0.0
    if np.isscalar(y_process):
        y_process = [np.full(space.n_atoms(t), float(y_process)) for t in range(n)]
    ys = [np.asarray(y, dtype=float) for y in y_process]
    if len(ys) != n or any(y.shape != (space.n_atoms(t),) for t, y in enumerate(ys)):
        raise CapreqError("y_process needs one value per atom per trading date")
    worst = max(float(np.abs(y).max()) for y in ys)
    if (abs(z) + worst) * root > 1 + 1e-12:
        raise NegativeDensity(f"(|z| + max|y|) sqrt(dt) = {(abs(z) + worst) * root:.4g} exceeds 1")

    density = np.ones(space.n_outcomes)
    branch = np.array([[int(c) for c in np.base_repr(k, 4).zfill(n)] for k in range(4**n)]).reshape(-1, n)
    for t in range(n):
        signs = np.array(BRANCHES)[branch[:, t]]
        y_node = ys[t][space.atom_index[t]]
        density *= 1 + z * signs[:, 0] * root + y_node * signs[:, 1] * root
    return density


# --------------------------------------------------------------------------
# extreme martingale measures and superhedging


def all_densities(market: Market) -> ScenarioSet:
    """Point-mass densities 1_{k} / p_k: their hull is every density."""
    p = market.probs
    return ScenarioSet(p, np.diag(1.0 / p), np.zeros(p.size))


def _conditional_vertices(increments: dict, scale: float) -> list:
    zero = [c for c, d in increments.items() if abs(d) <= 1e-14 * scale]
    pos = [c for c, d in increments.items() if d > 1e-14 * scale]
    neg = [c for c, d in increments.items() if d < -1e-14 * scale]
    verts = [{c: 1.0} for c in zero]
    for a in pos:
        for b in neg:
            da, db = increments[a], increments[b]
            verts.append({a: -db / (da - db), b: da / (da - db)})
    return verts


def martingale_vertices(market: Market, max_vertices: int = MAX_VERTICES) -> np.ndarray:
    """Densities of the extreme martingale measures, one per row.

    Each extreme measure picks an extreme one-step martingale law at every node
    it charges; nodes it does not charge are not branched on.
    """
    space, S = market.space, market.price
    T = space.horizon
    scale = max(1.0, float(np.abs(S.paths).max()))

    def measures(t: int, atom: int) -> list:
        if t == T:
            (k,) = space.filtration[t][atom]
            e = np.zeros(space.n_outcomes)
            e[k] = 1.0
            return [e]
        base = S.values[t][atom]
        incs = {c: S.values[t + 1][c] - base for c in space.children(t, atom)}
        out = []
        for v in _conditional_vertices(incs, scale):
            subtrees = [[(w, m) for m in measures(t + 1, c)] for c, w in v.items()]
            for combo in itertools.product(*subtrees):
                out.append(sum(w * m for w, m in combo))
                if len(out) > max_vertices:
                    raise CapreqError(f"more than {max_vertices} extreme martingale measures")
        return out

    qs = measures(0, 0)
    if not qs:
        return np.zeros((0, space.n_outcomes))
    return np.array(qs) / space.probs


@dataclass(frozen=True)
class Superhedge:
    price: float
    primal: float
    status: Status


def superhedge(claim, market: Market) -> Superhedge:
    """Sup of E_Q[C] over martingale measures, with the minimal superhedging
    capital from the strategy LP as a cross-check."""
    claim = np.asarray(claim, dtype=float)
    scen = all_densities(market).with_floors(claim)
    dual = sup_f_tilde_over_Z(martingale_polytope(scen, market.subspace))
    primal = min_capital_primal(scen, market)
    if dual.empty:
        return Superhedge(np.inf, primal.value, primal.status)
    return Superhedge(dual.value, primal.value, primal.status)


def superhedge_price(claim, market: Market) -> float:
    return superhedge(claim, market).price


# --------------------------------------------------------------------------
# efficient hedging


@dataclass(frozen=True)
class HedgeProblem:
    claim: np.ndarray
    q: float = 2.0
    alpha: float = 0.0
    cap: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "claim", np.asarray(self.claim, dtype=float))
        if self.q < 1:
            raise CapreqError("shortfall order q must be >= 1")
        if self.alpha < 0:
            raise CapreqError("alpha must be nonnegative")
        if self.cap is not None and self.cap <= 0:
            raise CapreqError("norm cap must be positive")
        p = self.p
        if not math.isinf(p) and abs(1 / p + 1 / self.q - 1) > 1e-12:  # pragma: no cover
            raise CapreqError("conjugate exponent mismatch")

    @property
    def p(self) -> float:
        return math.inf if self.q == 1 else self.q / (self.q - 1)

    @property
    def penalty_weight(self) -> float:
        return (self.q * self.alpha) ** (1 / self.q)

    @property
    def q_above_two(self) -> bool:
        """Whether q lies in the range (q > 2) where p < 2 and the norm is
        uniformly convex and smooth; smaller q is computed but flagged."""
        return self.q > 2

    def with_alpha(self, alpha: float) -> "HedgeProblem":
        return HedgeProblem(self.claim, self.q, alpha, self.cap)

    def with_cap(self, cap: Optional[float]) -> "HedgeProblem":
        return HedgeProblem(self.claim, self.q, self.alpha, cap)

    def with_claim(self, claim) -> "HedgeProblem":
        return HedgeProblem(claim, self.q, self.alpha, self.cap)


def hedging_functional(Z, prob: HedgeProblem, probs) -> float:
    """E[Z C] - (q alpha)^(1/q) ||Z||_p."""
    Z = np.asarray(Z, dtype=float)
    return float(np.sum(probs * Z * prob.claim) - prob.penalty_weight * weighted_norm(Z, prob.p, probs))


def _objective(V: np.ndarray, prob: HedgeProblem, probs: np.ndarray, ridge: float = 0.0):
    """Value and supergradient in vertex weights of the hedging functional,
    minus ridge * ||Z||_2^2."""
    gain = V @ (probs * prob.claim)
    c = prob.penalty_weight
    p = prob.p

    def f(w):
        Z = w @ V
        val = gain @ w
        grad = gain.copy()
        if c:
            if math.isinf(p):
                k = int(np.argmax(Z))
                val -= c * Z[k]
                grad -= c * V[:, k]
            else:
                nrm = weighted_norm(Z, p, probs)
                val -= c * nrm
                if nrm > 0:
                    grad -= c * (V @ (probs * Z ** (p - 1))) * nrm ** (1 - p)
        if ridge:
            val -= ridge * np.sum(probs * Z * Z)
            grad -= 2 * ridge * (V @ (probs * Z))
        return val, grad

    return f


@dataclass
class HedgeSolution:
    price: float
    density: np.ndarray
    weights: np.ndarray
    norm2: float
    cap_binding: bool = False
    ridge: float = 0.0
    q_above_two: bool = False
    iterations: int = 0
    diagnostics: dict = field(default_factory=dict)


def _maximize(V, prob, probs, ridge, seed):
    # a positive ridge makes the optimal density unique, so one start is enough
    restarts = 1 if ridge > 0 else 5
    res = maximize_concave(_objective(V, prob, probs, ridge), V.shape[0], restarts=restarts, seed=seed)
    Z = res.weights @ V
    return res, Z, weighted_norm(Z, 2.0, probs)


def efficient_hedge(
    prob: HedgeProblem,
    market: Market,
    vertices: Optional[np.ndarray] = None,
    seed: int = 0,
) -> HedgeSolution:
    """Maximize the hedging functional over martingale densities within the
    L^2 ball of radius ``prob.cap``.

    A binding cap is handled by maximizing f - beta ||Z||_2^2 and bisecting
    beta until the optimizer's norm sits within CAP_TOL below the cap.
    """
    probs = market.probs
    if prob.claim.shape != probs.shape:
        raise CapreqError("claim needs one value per outcome")
    V = martingale_vertices(market) if vertices is None else np.asarray(vertices, dtype=float)
    if V.shape[0] == 0:
        raise Infeasible("the market admits no martingale measure")
    diag = {"vertices": int(V.shape[0]), "p": prob.p, "q": prob.q}

    res, Z, n2 = _maximize(V, prob, probs, 0.0, seed)
    ridge = 0.0
    binding = False
    if prob.cap is not None and n2 > prob.cap:
        smallest = nearest_point_solution(np.zeros(probs.size), ConvexPolytope(V), 2.0, probs).distance
        diag["min_norm"] = smallest
        slack = 1e-12 * max(1.0, prob.cap)
        if smallest > prob.cap + slack:
            raise Infeasible(f"every martingale density has L2 norm >= {smallest:.6g} > cap {prob.cap}")
        binding = True
        # a feasible point reaching the unpenalized optimum means the cap does not bind
        target = hedging_functional(Z, prob, probs) - VALUE_TOL * max(1.0, abs(res.value))
        lo, hi = 0.0, 1.0
        while True:
            res, Z, n2 = _maximize(V, prob, probs, hi, seed)
            # rounding slack: the cap may equal the smallest norm exactly
            if n2 <= prob.cap + slack:
                break
            lo, hi = hi, 2 * hi
            if hi > 1e12:
                raise NoConvergence("could not bracket the cap multiplier")
        best = (res, Z, n2)
        for _ in range(200):
            if prob.cap - best[2] <= CAP_TOL:
                break
            if hi <= MULTIPLIER_FLOOR or hedging_functional(best[1], prob, probs) >= target:
                binding = False
                break
            mid = 0.5 * (lo + hi)
            trial = _maximize(V, prob, probs, mid, seed)
            if trial[2] <= prob.cap + slack:
                hi, best = mid, trial
            else:
                lo = mid
        else:
            raise NoConvergence("cap bisection did not reach tolerance")
        res, Z, n2 = best
        ridge = hi
        log.debug("cap %.6g, binding %s, multiplier %.6g", prob.cap, binding, ridge)

    price = hedging_functional(Z, prob, probs)
    return HedgeSolution(
        price, Z, res.weights, n2, binding, ridge, prob.q_above_two, res.iterations, diag
    )


def efficient_hedge_price(prob: HedgeProblem, market: Market, vertices=None, seed: int = 0) -> float:
    return efficient_hedge(prob, market, vertices, seed).price


@dataclass(frozen=True)
class SweepRow:
    param: float
    price: float
    status: str
    solution: Optional[HedgeSolution] = field(default=None, repr=False, compare=False)


def _sweep(problems: Sequence, values, market: Market, seed: int) -> list:
    V = martingale_vertices(market)
    rows = []
    for value, prob in zip(values, problems):
        try:
            sol = efficient_hedge(prob, market, V, seed)
            rows.append(SweepRow(value, sol.price, "ok", sol))
        except Infeasible:
            rows.append(SweepRow(value, math.nan, "infeasible"))
        except NoConvergence:
            rows.append(SweepRow(value, math.nan, "no_convergence"))
    return rows


def alpha_sweep(prob: HedgeProblem, market: Market, alphas: Sequence[float], seed: int = 0) -> list:
    """Price for each shortfall level, alphas sorted ascending."""
    alphas = [float(a) for a in alphas]
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise CapreqError("alphas must be sorted ascending")
    return _sweep([prob.with_alpha(a) for a in alphas], alphas, market, seed)


def cap_sweep(prob: HedgeProblem, market: Market, caps: Sequence[float], seed: int = 0) -> list:
    """Price for each L2 cap on the densities, caps sorted ascending."""
    caps = [float(k) for k in caps]
    if any(b < a for a, b in zip(caps, caps[1:])):
        raise CapreqError("caps must be sorted ascending")
    return _sweep([prob.with_cap(k) for k in caps], caps, market, seed)


def call_payoff(market: Market, strike: float) -> np.ndarray:
    return np.maximum(market.price.paths[-1] - strike, 0.0)
