"""Finite filtered probability spaces, adapted prices, predictable strategies
and the subspace of attainable gains.

Random variables are plain float arrays with one entry per outcome.  In a
finite space every adapted process is square integrable and every predictable
strategy is admissible, so no integrability bookkeeping is carried.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    CapreqError,
    FinalPartitionNotSingletons,
    NonRefiningFiltration,
    NotADensity,
    SpaceMismatch,
    ZeroProbabilityOutcome,
)

PROB_TOL = 1e-12
DENSITY_TOL = 1e-10
MARTINGALE_TOL = 1e-10
RANK_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteFilteredSpace:
    """Outcomes, a strictly positive reference measure and a filtration given
    as a refining sequence of partitions (atoms are tuples of outcome indices).
    """

    outcomes: tuple
    probs: np.ndarray
    filtration: tuple
    # atom_index[t][k] is the atom of partition t containing outcome k
    atom_index: tuple = field(repr=False)

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    @property
    def horizon(self) -> int:
        return len(self.filtration) - 1

    def n_atoms(self, t: int) -> int:
        return len(self.filtration[t])

    def children(self, t: int, atom: int) -> list:
        """Atoms of partition t+1 contained in the given atom of partition t."""
        members = self.filtration[t][atom]
        return sorted({int(self.atom_index[t + 1][k]) for k in members})

    def _key(self):
        return (self.outcomes, self.probs.tobytes(), self.filtration)

    def same_as(self, other: "FiniteFilteredSpace") -> bool:
        return self is other or self._key() == other._key()


def build_space(
    probs: Sequence[float],
    filtration: Sequence[Sequence[Sequence[Hashable]]],
    outcomes: Optional[Sequence[Hashable]] = None,
) -> FiniteFilteredSpace:
    """Validate and assemble a finite filtered space.

    Atoms may name outcomes by label (when ``outcomes`` is given, or labels are
    read off the trivial first partition) or by integer index.
    """
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise CapreqError("probs must be a non-empty vector")
    if np.any(probs <= 0):
        raise ZeroProbabilityOutcome(f"outcome {int(np.argmin(probs))} has probability {probs.min()}")
    if abs(probs.sum() - 1.0) > PROB_TOL:
        raise CapreqError(f"probabilities sum to {probs.sum()!r}, not 1")
    if len(filtration) == 0:
        raise NonRefiningFiltration("filtration needs at least the trivial partition")
    K = probs.size

    if outcomes is None:
        if len(filtration[0]) != 1:
            raise NonRefiningFiltration("first partition must be trivial")
        outcomes = list(filtration[0][0])
    outcomes = tuple(outcomes)
    if len(outcomes) != K or len(set(outcomes)) != K:
        raise CapreqError(f"need {K} distinct outcome labels, got {outcomes!r}")
    lookup = {lab: i for i, lab in enumerate(outcomes)}

    parts = []
    atom_index = []
    for t, partition in enumerate(filtration):
        idx = np.full(K, -1, dtype=int)
        atoms = []
        for a, atom in enumerate(partition):
            try:
                members = tuple(sorted(lookup[lab] for lab in atom))
            except KeyError as exc:
                raise CapreqError(f"partition {t} names unknown outcome {exc.args[0]!r}") from None
            if not members:
                raise NonRefiningFiltration(f"partition {t} has an empty atom")
            if np.any(idx[list(members)] >= 0):
                raise NonRefiningFiltration(f"partition {t} has overlapping atoms")
            idx[list(members)] = a
            atoms.append(members)
        if np.any(idx < 0):
            raise NonRefiningFiltration(f"partition {t} does not cover every outcome")
        parts.append(tuple(atoms))
        idx.setflags(write=False)
        atom_index.append(idx)

    if len(parts[0]) != 1:
        raise NonRefiningFiltration("first partition must be trivial")
    for t in range(len(parts) - 1):
        coarse = atom_index[t]
        for atom in parts[t + 1]:
            if len({int(coarse[k]) for k in atom}) != 1:
                raise NonRefiningFiltration(f"partition {t + 1} does not refine partition {t}")
    if any(len(atom) != 1 for atom in parts[-1]):
        raise FinalPartitionNotSingletons("last partition must consist of singletons")

    return FiniteFilteredSpace(outcomes, _frozen(probs), tuple(parts), tuple(atom_index))


def _check_same(a: FiniteFilteredSpace, b: FiniteFilteredSpace) -> None:
    if not a.same_as(b):
        raise SpaceMismatch("objects live on different spaces")


@dataclass(frozen=True, eq=False)
class PriceProcess:
    """One price per atom per date.  ``normalized`` asserts a zero initial price."""

    space: FiniteFilteredSpace
    values: tuple
    normalized: bool = False

    def __post_init__(self):
        vals = tuple(_frozen(v) for v in self.values)
        if len(vals) != self.space.horizon + 1:
            raise CapreqError(f"need {self.space.horizon + 1} price dates, got {len(vals)}")
        for t, v in enumerate(vals):
            if v.shape != (self.space.n_atoms(t),):
                raise CapreqError(f"date {t} needs {self.space.n_atoms(t)} prices, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise CapreqError("prices must be finite")
        if self.normalized and vals[0][0] != 0.0:
            raise CapreqError("normalized price process must start at 0")
        object.__setattr__(self, "values", vals)

    @property
    def paths(self) -> np.ndarray:
        """(T+1, K) array: price at each date along each outcome."""
        return np.array([v[idx] for v, idx in zip(self.values, self.space.atom_index)])

    def increments(self) -> np.ndarray:
        """(T, K) array of one-step price changes along each outcome."""
        return np.diff(self.paths, axis=0)


@dataclass(frozen=True, eq=False)
class TradingStrategy:
    """Shares held over (t, t+1], one number per atom of partition t."""

    space: FiniteFilteredSpace
    positions: tuple

    def __post_init__(self):
        pos = tuple(_frozen(v) for v in self.positions)
        if len(pos) != self.space.horizon:
            raise CapreqError(f"need {self.space.horizon} trading dates, got {len(pos)}")
        for t, v in enumerate(pos):
            if v.shape != (self.space.n_atoms(t),):
                raise CapreqError(f"date {t} needs {self.space.n_atoms(t)} positions, got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise CapreqError("positions must be finite")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def zero(cls, space: FiniteFilteredSpace) -> "TradingStrategy":
        return cls(space, [np.zeros(space.n_atoms(t)) for t in range(space.horizon)])

    @classmethod
    def from_flat(cls, space: FiniteFilteredSpace, flat) -> "TradingStrategy":
        """Inverse of ``flat``: positions concatenated date by date."""
        flat = np.asarray(flat, dtype=float)
        sizes = [space.n_atoms(t) for t in range(space.horizon)]
        return cls(space, np.split(flat, np.cumsum(sizes)[:-1]) if sizes else [])

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.positions) if self.positions else np.zeros(0)

    def to_dict(self) -> dict:
        return {f"t{t}": [float(v) for v in p] for t, p in enumerate(self.positions)}


def terminal_wealth(x: float, strategy: TradingStrategy, S: PriceProcess) -> np.ndarray:
    """x plus the discrete stochastic integral of the strategy against S."""
    _check_same(strategy.space, S.space)
    space = S.space
    wealth = np.full(space.n_outcomes, float(x))
    for t, dS in enumerate(S.increments()):
        wealth += strategy.positions[t][space.atom_index[t]] * dS
    return wealth


@dataclass(frozen=True, eq=False)
class AttainableSubspace:
    """Gains reachable from zero capital.

    ``generators`` are the raw vectors 1_A * (S_{t+1} - S_t), one per
    (t, atom) in strategy order; ``basis`` is the independent subset picked by
    pivoted QR, ``gram`` its Gram matrix and ``frame`` a P-orthonormal basis of
    the same span.
    """

    space: FiniteFilteredSpace
    generators: np.ndarray
    basis: np.ndarray
    basis_index: tuple
    gram: np.ndarray
    frame: np.ndarray

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]


def raw_generators(S: PriceProcess) -> np.ndarray:
    space = S.space
    rows = []
    for t, dS in enumerate(S.increments()):
        idx = space.atom_index[t]
        for a in range(space.n_atoms(t)):
            rows.append(np.where(idx == a, dS, 0.0))
    return np.array(rows).reshape(-1, space.n_outcomes)


def attainable_basis(space: FiniteFilteredSpace, S: PriceProcess) -> AttainableSubspace:
    _check_same(space, S.space)
    gens = raw_generators(S)
    sw = np.sqrt(space.probs)
    r = 0
    piv = np.zeros(0, dtype=int)
    Q = np.zeros((space.n_outcomes, 0))
    if gens.shape[0] and np.any(gens):
        Q, R, piv = scipy.linalg.qr((gens * sw).T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        r = int(np.sum(diag > RANK_TOL * diag[0]))
    basis = gens[piv[:r]]
    gram = (basis * space.probs) @ basis.T
    frame = Q[:, :r].T / sw
    return AttainableSubspace(
        space, _frozen(gens), _frozen(basis), tuple(int(i) for i in piv[:r]), _frozen(gram), _frozen(frame)
    )


def check_density(Z, probs: np.ndarray, tol: float = DENSITY_TOL) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.shape != probs.shape:
        raise NotADensity(f"density has shape {Z.shape}, expected {probs.shape}")
    if np.any(Z < -tol):
        raise NotADensity("density has negative entries")
    mass = probs @ Z
    if abs(mass - 1.0) > tol:
        raise NotADensity(f"density integrates to {mass!r}")
    return Z


def martingale_violation(S: PriceProcess, Z) -> float:
    """Largest |E[Z (S_{t+1} - S_t) 1_A]| over dates t and atoms A of F_t."""
    space = S.space
    Z = check_density(Z, space.probs)
    worst = 0.0
    w = space.probs * Z
    for t, dS in enumerate(S.increments()):
        sums = np.bincount(space.atom_index[t], weights=w * dS, minlength=space.n_atoms(t))
        worst = max(worst, float(np.abs(sums).max(initial=0.0)))
    return worst


def is_martingale(S: PriceProcess, Z, space: Optional[FiniteFilteredSpace] = None, tol: float = MARTINGALE_TOL) -> bool:
    if space is not None:
        _check_same(space, S.space)
    return martingale_violation(S, Z) <= tol


@dataclass(frozen=True, eq=False)
class Market:
    """A space, the traded price and its attainable subspace, bundled."""

    space: FiniteFilteredSpace
    price: PriceProcess
    subspace: AttainableSubspace = field(init=False, repr=False)

    def __post_init__(self):
        _check_same(self.space, self.price.space)
        object.__setattr__(self, "subspace", attainable_basis(self.space, self.price))

    @property
    def probs(self) -> np.ndarray:
        return self.space.probs

    @property
    def n_outcomes(self) -> int:
        return self.space.n_outcomes


def make_market(probs, filtration, prices, outcomes=None, normalized: bool = False) -> Market:
    space = build_space(probs, filtration, outcomes)
    return Market(space, PriceProcess(space, prices, normalized))


def market_from_dict(d: dict) -> Market:
    """Parse the market file layout: probs, filtration (atoms of labels), and
    prices keyed "t0", "t1", ... in atom order."""
    try:
        probs = d["probs"]
        filtration = d["filtration"]
        price = d["price"]
    except (KeyError, TypeError) as exc:
        raise CapreqError(f"market file is missing field {exc}") from None
    space = build_space(probs, filtration, d.get("outcomes"))
    try:
        values = [price[f"t{t}"] for t in range(space.horizon + 1)]
    except KeyError as exc:
        raise CapreqError(f"market file has no prices for {exc.args[0]}") from None
    return Market(space, PriceProcess(space, values, bool(d.get("normalized", False))))


def market_to_dict(m: Market) -> dict:
    sp = m.space
    return {
        "probs": [float(p) for p in sp.probs],
        "filtration": [[[sp.outcomes[k] for k in atom] for atom in part] for part in sp.filtration],
        "price": {f"t{t}": [float(v) for v in vals] for t, vals in enumerate(m.price.values)},
    }


def load_market(path) -> Market:
    with open(path, encoding="utf-8") as fh:
        return market_from_dict(json.load(fh))


def binomial_market(up: float = 1.0, down: float = -1.0, p_up: float = 0.5) -> Market:
    """One-period two-outcome market starting at 0."""
    return make_market(
        [p_up, 1.0 - p_up],
        [[["u", "d"]], [["u"], ["d"]]],
        [[0.0], [up, down]],
        normalized=True,
    )
