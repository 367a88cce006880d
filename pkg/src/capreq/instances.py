"""Seeded random markets and scenario families for the randomized suites.

Markets are built on random refining partitions.  Every atom with two or more
children gets increments centered under a random positive conditional law, so
the product of those laws is a strictly positive martingale measure Z*.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .market import Market, make_market
from .risk import RiskSpec
from .scenarios import ScenarioSet

MAX_OUTCOMES = 12
MAX_HORIZON = 3
MAX_GENERATORS = 8


@dataclass(frozen=True, eq=False)
class RandomMarket:
    market: Market
    martingale: np.ndarray  # a strictly positive martingale density
    seed: Optional[int] = None


@dataclass(frozen=True, eq=False)
class Instance:
    market: Market
    scenarios: ScenarioSet
    martingale: np.ndarray
    seed: Optional[int] = None


def _split(block: list, rng: np.random.Generator, force: bool) -> list:
    n = len(block)
    if n == 1:
        return [block]
    lo = 2 if force else 1
    k = int(rng.integers(lo, min(n, 4) + 1))
    cuts = np.sort(rng.choice(np.arange(1, n), size=k - 1, replace=False))
    return [list(b) for b in np.split(np.array(block), cuts)]


def random_tree(rng: np.random.Generator, n_outcomes: int, horizon: int) -> list:
    """Refining partitions of range(n_outcomes): trivial first, singletons last,
    and the root always splits."""
    order = [int(i) for i in rng.permutation(n_outcomes)]
    parts = [[order]]
    for t in range(1, horizon):
        parts.append([b for atom in parts[-1] for b in _split(atom, rng, force=(t == 1))])
    parts.append([[k] for k in range(n_outcomes)])
    if horizon == 1:
        parts[0] = [list(range(n_outcomes))]
        return parts
    # the root must split: refine t=1 if random splitting left it whole
    if len(parts[1]) == 1:
        parts[1] = _split(order, rng, force=True)
        for t in range(2, horizon):
            parts[t] = [b for atom in parts[t - 1] for b in _split(atom, rng, force=False)]
    # outcome labels are read off the trivial partition, so list it in index order
    parts[0] = [list(range(n_outcomes))]
    return parts


def random_market(rng: np.random.Generator, n_outcomes: Optional[int] = None, horizon: Optional[int] = None) -> RandomMarket:
    K = int(rng.integers(2, MAX_OUTCOMES + 1)) if n_outcomes is None else n_outcomes
    T = int(rng.integers(1, MAX_HORIZON + 1)) if horizon is None else horizon
    parts = random_tree(rng, K, T)
    probs = rng.dirichlet(np.ones(K))
    labels = [f"w{k}" for k in range(K)]

    # per-atom children as indices into the next partition
    Q = np.ones(K)
    prices = [np.array([rng.normal()])]
    for t in range(T):
        nxt = parts[t + 1]
        owner = {k: j for j, atom in enumerate(nxt) for k in atom}
        vals = np.zeros(len(nxt))
        for a, atom in enumerate(parts[t]):
            kids = sorted({owner[k] for k in atom})
            if len(kids) == 1:
                vals[kids[0]] = prices[t][a]
                continue
            q = rng.dirichlet(np.full(len(kids), 2.0))
            d = rng.normal(size=len(kids))
            d -= q @ d
            for j, c in enumerate(kids):
                vals[c] = prices[t][a] + d[j]
                for k in nxt[c]:
                    Q[k] *= q[j]
        prices.append(vals)
    filtration = [[[labels[k] for k in atom] for atom in part] for part in parts]
    market = make_market(probs, filtration, prices)
    return RandomMarket(market, Q / probs)


def random_martingale_density(rm: RandomMarket, rng: np.random.Generator) -> np.ndarray:
    """A random strictly positive martingale density on the same tree.

    At each branching node a random law on the up-children and one on the
    down-children are mixed so the conditional mean increment vanishes, then
    blended with the conditional law of Z* to keep every child charged.
    """
    market = rm.market
    space, S = market.space, market.price
    Q = np.ones(space.n_outcomes)
    for t in range(space.horizon):
        idx = space.atom_index[t + 1]
        for a in range(space.n_atoms(t)):
            kids = space.children(t, a)
            if len(kids) == 1:
                continue
            d = S.values[t + 1][kids] - S.values[t][a]
            up, dn = d > 0, d < 0
            q = np.zeros(len(kids))
            if up.any() and dn.any():
                u = np.zeros(len(kids))
                u[up] = rng.dirichlet(np.ones(up.sum()))
                v = np.zeros(len(kids))
                v[dn] = rng.dirichlet(np.ones(dn.sum()))
                mu, mv = u @ d, v @ d
                theta = -mv / (mu - mv)
                q = theta * u + (1 - theta) * v
            w = rng.uniform(0.2, 0.9) if q.any() else 0.0
            q = w * q + (1 - w) * _conditional_law(rm, t, a, kids)
            for j, c in enumerate(kids):
                Q[idx == c] *= q[j]
    return Q / space.probs


def _conditional_law(rm: RandomMarket, t: int, a: int, kids: list) -> np.ndarray:
    space = rm.market.space
    w = space.probs * rm.martingale
    idx = space.atom_index[t + 1]
    mass = np.array([w[idx == c].sum() for c in kids])
    return mass / mass.sum()


def _random_density(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    return rng.dirichlet(np.full(probs.size, 0.7)) / probs


def feasible_instance(seed: int, n_generators: Optional[int] = None) -> Instance:
    """Scenario hull that contains a martingale density."""
    rng = np.random.default_rng(seed)
    rm = random_market(rng)
    probs = rm.market.probs
    n = int(rng.integers(1, MAX_GENERATORS + 1)) if n_generators is None else n_generators
    target = 0.5 * rm.martingale + 0.5 * random_martingale_density(rm, rng)
    if n == 1:
        dens = target[None, :]
    else:
        others = np.array([_random_density(rng, probs) for _ in range(n - 1)])
        # reflect target through the mean of the others so it lies in the hull
        mean = others.mean(axis=0)
        dirn = target - mean
        neg = dirn < 0
        room = np.min(target[neg] / -dirn[neg]) if np.any(neg) else np.inf
        beta = min(1.0, 0.5 * room)
        last = target + beta * dirn
        dens = np.vstack([others, last])
        dens = dens[rng.permutation(n)]
    floors = rng.normal(size=n)
    return Instance(rm.market, ScenarioSet(probs, dens, floors), rm.martingale, seed)


def empty_instance(seed: int, n_generators: Optional[int] = None) -> Instance:
    """Scenario hull with no martingale density.

    Each generator is a positive martingale density pushed along g - E[g] for
    one fixed nonconstant attainable g, so <Z_i, g> = delta_i Var(g) > 0 for
    every generator and no hull point is orthogonal to g.
    """
    rng = np.random.default_rng(seed)
    rm = random_market(rng)
    market = rm.market
    probs = market.probs
    n = int(rng.integers(1, MAX_GENERATORS + 1)) if n_generators is None else n_generators
    gens = market.subspace.generators
    g = rng.normal(size=gens.shape[0]) @ gens
    h = g - probs @ g
    dens = []
    for _ in range(n):
        w = rng.uniform(0.2, 0.8)
        M = w * rm.martingale + (1 - w) * random_martingale_density(rm, rng)
        neg = h < 0
        room = np.min(M[neg] / -h[neg]) if np.any(neg) else np.inf
        delta = rng.uniform(0.1, 0.9) * min(room, 10.0 / max(np.abs(h).max(), 1e-12))
        dens.append(M + delta * h)
    floors = rng.normal(size=n)
    return Instance(market, ScenarioSet(probs, np.array(dens), floors), rm.martingale, seed)


@dataclass(frozen=True, eq=False)
class RiskInstance:
    market: Market
    spec: RiskSpec
    seed: Optional[int] = None


def risk_instance(seed: int) -> RiskInstance:
    """Random claim and penalties over a scenario family containing a martingale density."""
    inst = feasible_instance(seed)
    rng = np.random.default_rng([seed, 1])
    probs = inst.market.probs
    n = inst.scenarios.n_generators
    spec = RiskSpec(probs, inst.scenarios.densities, rng.normal(size=n), rng.normal(size=probs.size))
    return RiskInstance(inst.market, spec, seed)
