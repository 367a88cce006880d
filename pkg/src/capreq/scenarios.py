"""Scenario families, the concave hull extension of the floors, and the
polytope of martingale densities inside the scenario hull."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CapreqError, NotADensity, NotInHull
from .market import AttainableSubspace, Market, check_density
from .optim import LinearProgram, LPStatus, solve_lp

HULL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Generator densities (one per row) with their floors.

    The hull of the generators is the scenario family; generators need not be
    extreme points and may repeat.
    """

    probs: np.ndarray
    densities: np.ndarray
    floors: np.ndarray
    norm_cap: Optional[float] = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        dens = np.asarray(self.densities, dtype=float).reshape(-1, probs.size)
        floors = np.asarray(self.floors, dtype=float).ravel()
        if floors.size != dens.shape[0]:
            raise CapreqError("need one floor per generator")
        if not np.all(np.isfinite(floors)):
            raise CapreqError("floors must be finite")
        for i, z in enumerate(dens):
            try:
                check_density(z, probs)
            except NotADensity as exc:
                raise NotADensity(f"generator {i}: {exc}") from None
        if self.norm_cap is not None:
            if self.norm_cap <= 0:
                raise CapreqError("norm_cap must be positive")
            norms = np.sqrt((dens**2) @ probs)
            if np.any(norms > self.norm_cap * (1 + 1e-12)):
                raise CapreqError(f"generator norm {norms.max()} exceeds cap {self.norm_cap}")
        for name, val in (("probs", probs), ("densities", dens), ("floors", floors)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_generators(self) -> int:
        return self.densities.shape[0]

    def with_floors(self, floors) -> "ScenarioSet":
        return ScenarioSet(self.probs, self.densities, floors, self.norm_cap)

    def add(self, density, floor: float) -> "ScenarioSet":
        return ScenarioSet(
            self.probs,
            np.vstack([self.densities, density]),
            np.append(self.floors, floor),
            self.norm_cap,
        )

    def to_dict(self) -> dict:
        out = {
            "generators": [
                {"density": [float(v) for v in z], "floor": float(f)}
                for z, f in zip(self.densities, self.floors)
            ]
        }
        if self.norm_cap is not None:
            out["norm_cap"] = float(self.norm_cap)
        return out


def scenarios_from_dict(d: dict, probs, floor_key: str = "floor") -> ScenarioSet:
    try:
        gens = d["generators"]
        dens = [g["density"] for g in gens]
        floors = [g.get(floor_key, g.get("floor")) for g in gens]
    except (KeyError, TypeError) as exc:
        raise CapreqError(f"scenario file is malformed: {exc}") from None
    if any(f is None for f in floors):
        raise CapreqError(f"every generator needs a '{floor_key}'")
    probs = np.asarray(probs, dtype=float)
    return ScenarioSet(probs, np.reshape(dens, (-1, probs.size)), floors, d.get("norm_cap"))


def load_scenarios(path, probs, floor_key: str = "floor") -> ScenarioSet:
    with open(path, encoding="utf-8") as fh:
        return scenarios_from_dict(json.load(fh), probs, floor_key)


# --------------------------------------------------------------------------
# concave hull extension


class HullEvaluator:
    """Evaluates f~(Y) = sup { sum l_i phi_i : l >= 0, sum l = 1, sum l_i Z_i = Y }.

    The equality system is reduced once to orthonormal rows spanning its row
    space.  Every optimal basis found is cached: a basis that was optimal for
    one target stays dual feasible for every target (only the right-hand side
    moves), so it is optimal wherever its primal solution is nonnegative.  Batch
    evaluation tries cached bases first and only solves fresh LPs for targets
    no cached basis covers.
    """

    def __init__(self, scen: ScenarioSet):
        self.scen = scen
        A = np.vstack([scen.densities.T, np.ones(scen.n_generators)])
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        r = int(np.sum(s > 1e-12 * s[0])) if s.size else 0
        self._U = U[:, :r]
        self._s = s[:r]
        self._rows = Vt[:r]
        self._bases: list = []

    def _rhs(self, Y: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(Y)
        b = np.hstack([Y, np.ones((Y.shape[0], 1))])
        coef = b @ self._U
        resid = np.linalg.norm(b - coef @ self._U.T, axis=1)
        return coef / self._s, resid

    def _solve_one(self, rhs: np.ndarray) -> Optional[float]:
        lp = LinearProgram.build(-self.scen.floors, self._rows, rhs)
        res = solve_lp(lp)
        if res.status is LPStatus.INFEASIBLE:
            return None
        basis = list(res.basis)
        B = self._rows[:, basis]
        self._bases.append((basis, np.linalg.inv(B)))
        return -res.value

    def __call__(self, Y) -> float:
        rhs, resid = self._rhs(np.asarray(Y, dtype=float))
        if resid[0] > HULL_TOL:
            raise NotInHull("target lies outside the affine hull of the generators")
        val = self._solve_one(rhs[0])
        if val is None:
            raise NotInHull("target lies outside the convex hull of the generators")
        return val

    def batch(self, Ys) -> np.ndarray:
        """f~ for each row of Ys; NaN marks rows outside the hull."""
        Ys = np.atleast_2d(np.asarray(Ys, dtype=float))
        rhs, resid = self._rhs(Ys)
        out = np.full(Ys.shape[0], np.nan)
        todo = np.flatnonzero(resid <= HULL_TOL)
        phi = self.scen.floors
        i = 0
        while todo.size:
            if i == len(self._bases):
                j, todo = todo[0], todo[1:]
                out[j] = np.nan if (val := self._solve_one(rhs[j])) is None else val
                if val is None:
                    continue
            basis, Binv = self._bases[i]
            lam = rhs[todo] @ Binv.T
            ok = lam.min(axis=1, initial=0.0) >= -1e-11
            out[todo[ok]] = np.clip(lam[ok], 0.0, None) @ phi[basis]
            todo = todo[~ok]
            i += 1
        return out


def f_tilde(Y, scen: ScenarioSet) -> float:
    return HullEvaluator(scen)(Y)


# --------------------------------------------------------------------------
# martingale densities in the hull


@dataclass(frozen=True, eq=False)
class MartingalePolytope:
    """Weights l >= 0 with sum 1 whose density sum l_i Z_i is orthogonal to G.

    ``constraints[j, i] = <e_j, Z_i>`` for the P-orthonormal frame e_j of G.
    """

    scen: ScenarioSet
    subspace: AttainableSubspace
    constraints: np.ndarray = field(repr=False)

    def lp(self, objective) -> LinearProgram:
        n = self.scen.n_generators
        A = np.vstack([np.ones(n), self.constraints])
        b = np.zeros(A.shape[0])
        b[0] = 1.0
        return LinearProgram.build(objective, A, b)

    def density(self, weights) -> np.ndarray:
        return np.asarray(weights, dtype=float) @ self.scen.densities

    def feasible_point(self) -> Optional[np.ndarray]:
        res = solve_lp(self.lp(np.zeros(self.scen.n_generators)))
        return res.x if res.optimal else None

    def is_empty(self) -> bool:
        return self.scen.n_generators == 0 or self.feasible_point() is None

    def vertices(self, max_bases: int = 200_000) -> np.ndarray:
        """Vertex weight vectors, by enumerating bases of the equality system."""
        n = self.scen.n_generators
        A = np.vstack([np.ones(n), self.constraints])
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        r = int(np.sum(s > 1e-12 * s[0]))
        rows = Vt[:r]
        rhs = U[0, :r] / s[:r]
        if _n_choose(n, r) > max_bases:
            raise CapreqError(f"too many candidate bases ({n} choose {r})")
        found = []
        for cols in itertools.combinations(range(n), r):
            B = rows[:, cols]
            if abs(np.linalg.det(B)) < 1e-12:
                continue
            lam_b = np.linalg.solve(B, rhs)
            if lam_b.min() < -1e-11:
                continue
            lam = np.zeros(n)
            lam[list(cols)] = np.clip(lam_b, 0, None)
            if not any(np.abs(lam - v).max() < 1e-9 for v in found):
                found.append(lam)
        return np.array(found).reshape(-1, n)


def _n_choose(n: int, r: int) -> int:
    from math import comb

    return comb(n, r)


def martingale_polytope(scen: ScenarioSet, G: AttainableSubspace) -> MartingalePolytope:
    if G.space.n_outcomes != scen.probs.size:
        raise CapreqError("scenario densities and market have different outcome counts")
    B = (G.frame * scen.probs) @ scen.densities.T
    B.setflags(write=False)
    return MartingalePolytope(scen, G, B)


@dataclass(frozen=True)
class DualValue:
    """Outcome of sup f~ over the martingale polytope."""

    empty: bool
    value: Optional[float] = None
    weights: Optional[np.ndarray] = None


def sup_f_tilde_over_Z(poly: MartingalePolytope) -> DualValue:
    """Maximize sum l_i phi_i over the martingale polytope.  The feasible set is
    a compact slice of the simplex, so the answer is a value or 'empty'."""
    if poly.scen.n_generators == 0:
        return DualValue(True)
    res = solve_lp(poly.lp(-poly.scen.floors))
    if res.status is LPStatus.INFEASIBLE:
        return DualValue(True)
    if res.status is LPStatus.UNBOUNDED:  # pragma: no cover - the simplex is bounded
        raise CapreqError("martingale polytope LP reported unbounded")
    return DualValue(False, -res.value, res.x)


def generator_inner(scen: ScenarioSet, X) -> np.ndarray:
    """<Z_i, X> for every generator."""
    return scen.densities @ (scen.probs * np.asarray(X, dtype=float))
