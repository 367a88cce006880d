"""Optimization primitives: a dense two-phase simplex solver and projected
ascent for concave functions of simplex weights.

Both are small and dependency-free on purpose; the problems solved here have
at most a few hundred columns.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NoConvergence, NumericalBreakdown

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_PIVOTS = 100_000


class LPStatus(enum.Enum):
    OPTIMAL = "optimal"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class LinearProgram:
    """minimize c @ x  subject to  A_eq @ x == b_eq,  x >= lower.

    ``lower`` holds 0.0 (nonnegative variable) or -inf (free variable).
    """

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        b = np.asarray(self.b_eq, dtype=float).ravel()
        lower = np.asarray(self.lower, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError(f"A_eq has {A.shape[0]} rows but b_eq has {b.size}")
        if lower.size != n:
            raise ValueError("lower must have one entry per variable")
        if not np.all((lower == 0.0) | (lower == -np.inf)):
            raise ValueError("lower bounds must be 0 or -inf")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("LP coefficients must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_eq", A)
        object.__setattr__(self, "b_eq", b)
        object.__setattr__(self, "lower", lower)

    @classmethod
    def build(cls, c, A_eq=None, b_eq=None, free: Sequence[int] = ()) -> "LinearProgram":
        c = np.asarray(c, dtype=float).ravel()
        if A_eq is None:
            A_eq = np.zeros((0, c.size))
            b_eq = np.zeros(0)
        lower = np.zeros(c.size)
        lower[list(free)] = -np.inf
        return cls(c, A_eq, b_eq, lower)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.lower == -np.inf)


@dataclass(frozen=True)
class LPResult:
    status: LPStatus
    value: Optional[float] = None
    x: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    # Basic columns of the standard form: original variables keep their index,
    # the negative part of free variable j lives at n_vars + rank of j in `free`.
    basis: Optional[tuple] = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LPStatus.OPTIMAL


def _pivot(T: np.ndarray, i: int, j: int) -> None:
    T[i] /= T[i, j]
    col = T[:, j].copy()
    col[i] = 0.0
    nz = np.flatnonzero(col)
    if nz.size:
        T[nz] -= np.outer(col[nz], T[i])


def _simplex_loop(T, basis, ncols, iters, max_iter):
    """Bland's rule on a tableau whose last row holds reduced costs."""
    m = T.shape[0] - 1
    while True:
        d = T[-1, :ncols]
        entering = np.flatnonzero(d < -PIVOT_TOL)
        if entering.size == 0:
            return LPStatus.OPTIMAL, iters
        j = entering[0]
        col = T[:m, j]
        pos = np.flatnonzero(col > PIVOT_TOL)
        if pos.size == 0:
            return LPStatus.UNBOUNDED, iters
        ratios = T[pos, -1] / col[pos]
        rmin = ratios.min()
        ties = pos[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
        i = ties[np.argmin(basis[ties])]
        _pivot(T, i, j)
        basis[i] = j
        iters += 1
        if iters >= max_iter:
            raise NumericalBreakdown(f"simplex exceeded {max_iter} pivots")


def solve_lp(lp: LinearProgram, max_iter: int = MAX_PIVOTS) -> LPResult:
    """Two-phase primal simplex with Bland's anti-cycling rule.

    The optimal primal and dual vectors are recomputed from the final basis
    with a direct solve, so their accuracy does not depend on the length of
    the pivot path.
    """
    n = lp.n_vars
    free = lp.free
    A = np.hstack([lp.A_eq, -lp.A_eq[:, free]])
    c = np.concatenate([lp.c, -lp.c[free]])
    b = lp.b_eq.copy()
    m, N = A.shape

    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    # phase I: artificials form the starting basis
    T = np.zeros((m + 1, N + m + 1))
    T[:m, :N] = A
    T[:m, N:N + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :N] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(N, N + m)
    status, iters = _simplex_loop(T, basis, N + m, 0, max_iter)
    if -T[-1, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        return LPResult(LPStatus.INFEASIBLE, iterations=iters)

    # drive remaining artificials out; rows where that is impossible are redundant
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] < N:
            continue
        row = np.abs(T[i, :N])
        j = int(np.argmax(row)) if N else -1
        if N and row[j] > PIVOT_TOL:
            _pivot(T, i, j)
            basis[i] = j
        else:
            keep[i] = False
    rows = np.flatnonzero(keep)
    T = np.vstack([T[rows][:, list(range(N)) + [-1]], np.zeros((1, N + 1))])
    basis = basis[rows]
    A_kept, b_kept = A[rows], b[rows]

    # phase II
    cB = c[basis]
    T[-1, :N] = c - cB @ T[:-1, :N]
    T[-1, -1] = -cB @ T[:-1, -1]
    status, iters = _simplex_loop(T, basis, N, iters, max_iter)
    if status is LPStatus.UNBOUNDED:
        return LPResult(LPStatus.UNBOUNDED, iterations=iters)

    xs = np.zeros(N)
    B = A_kept[:, basis]
    try:
        xB = np.linalg.solve(B, b_kept)
        y_kept = np.linalg.solve(B.T, c[basis])
    except np.linalg.LinAlgError:
        raise NumericalBreakdown("final basis is singular") from None
    scale = max(1.0, np.abs(b_kept).max(initial=0.0))
    if xB.size and xB.min() < -1e-7 * scale:
        raise NumericalBreakdown("final basis lost primal feasibility")
    xs[basis] = np.maximum(xB, 0.0)
    x = xs[:n].copy()
    x[free] -= xs[n:]
    y = np.zeros(m)
    y[rows] = y_kept
    y *= sign
    return LPResult(
        LPStatus.OPTIMAL,
        value=float(lp.c @ x),
        x=x,
        dual=y,
        basis=tuple(int(j) for j in basis),
        iterations=iters,
    )


# --------------------------------------------------------------------------
# simplex-constrained ascent


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum(w) = 1} (sort-based, exact)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = idx[u - css / idx > 0][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


Objective = Callable[[np.ndarray], tuple]


@dataclass
class AscentResult:
    value: float
    weights: np.ndarray
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)


def projected_ascent(
    func: Objective,
    w0: np.ndarray,
    max_iter: int = 10_000,
    step0: float = 1.0,
    ftol: float = 1e-12,
    xtol: float = 1e-10,
    armijo: float = 1e-4,
    patience: int = 100,
    gain: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
) -> AscentResult:
    """Projected (super)gradient ascent over the probability simplex.

    Steps are found by backtracking along the projection arc.  When
    backtracking cannot certify ascent (a kink, or the rounding floor of a
    smooth objective) the iterate takes a diminishing step ``step0 / (1 + k)``
    instead.  The run ends once the best value has been flat for
    ``patience`` iterations.  The best point seen is what gets reported.

    ``gain(w, w_new)``, when given, returns f(w_new) - f(w) computed without
    cancellation; the line search then keeps working after the objective
    values themselves stop resolving the difference.
    """
    w = project_simplex(w0)
    val, g = func(w)
    best_val, best_w = val, w
    history = [best_val]
    step = step0
    last_gain = 0
    for k in range(max_iter):
        s = 2.0 * step
        first = True
        stalled = False
        while True:
            w_new = project_simplex(w + s * g)
            d = w_new - w
            move = np.abs(d).max()
            if move <= xtol:
                if first:
                    return AscentResult(best_val, best_w, k, True, history)
                stalled = True
                break
            v_new, g_new = func(w_new)
            up = gain(w, w_new) if gain is not None else v_new - val
            if up >= armijo * (g @ d):
                step = s
                break
            s *= 0.5
            first = False
        if stalled:
            if k - last_gain >= patience:
                return AscentResult(best_val, best_w, k, True, history)
            w_new = project_simplex(w + step0 / (1.0 + k) * g)
            d = w_new - w
            move = np.abs(d).max()
            v_new, g_new = func(w_new)
        improvement = gain(w, w_new) if gain is not None else v_new - val
        w, val, g = w_new, val + improvement, g_new
        if val > best_val + ftol:
            last_gain = k
        if val > best_val:
            best_val, best_w = val, w
        history.append(best_val)
        if not stalled and abs(improvement) < ftol and move < xtol:
            return AscentResult(best_val, best_w, k + 1, True, history)
        # accepted steps on a flat objective can keep moving without gaining
        if k - last_gain >= patience:
            return AscentResult(best_val, best_w, k + 1, True, history)
    return AscentResult(best_val, best_w, max_iter, False, history)


def maximize_concave(
    func: Objective,
    n_weights: int,
    restarts: int = 5,
    seed: int = 0,
    max_iter: int = 10_000,
    step0: float = 1.0,
) -> AscentResult:
    """Maximize a concave function of simplex weights, keeping the best of
    several starts (barycenter first, then Dirichlet draws).

    ``func(w)`` must return ``(value, supergradient)``.
    """
    if n_weights < 1:
        raise ValueError("need at least one weight")
    rng = np.random.default_rng(seed)
    starts = [np.full(n_weights, 1.0 / n_weights)]
    starts += [rng.dirichlet(np.ones(n_weights)) for _ in range(restarts - 1)]
    results = [
        projected_ascent(func, w0, max_iter=max_iter, step0=step0) for w0 in starts
    ]
    if not any(r.converged for r in results):
        raise NoConvergence(f"no start converged within {max_iter} iterations")
    return max(results, key=lambda r: r.value)
