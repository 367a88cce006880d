"""P-weighted L^2 geometry on a finite space, plus L^p nearest points onto
convex hulls of finitely many generators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptySet, InvalidExponent, NoConvergence
from .market import AttainableSubspace, FiniteFilteredSpace, Market
from .optim import projected_ascent

NEAREST_ASCENT_ITER = 2_000
GAP_RTOL = 1e-12
POLISH_MAX_FACE = 500


def weights_of(space) -> np.ndarray:
    """Accept a space, a market or a bare probability vector."""
    if isinstance(space, (FiniteFilteredSpace, Market)):
        return space.probs
    return np.asarray(space, dtype=float)


def _same_len(*arrays) -> None:
    n = arrays[0].shape[-1]
    if any(a.shape[-1] != n for a in arrays):
        raise DimensionMismatch(f"length mismatch: {[a.shape for a in arrays]}")


def inner(X, Y, space) -> float:
    p = weights_of(space)
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    _same_len(X, Y, p)
    return float(np.sum(p * X * Y))


def norm(X, space) -> float:
    return float(np.sqrt(inner(X, X, space)))


def weighted_norm(X, p_exp: float, probs) -> float:
    """(E|X|^p)^(1/p) for any p >= 1, with p = inf meaning the max over outcomes."""
    X = np.abs(np.asarray(X, dtype=float))
    if np.isinf(p_exp):
        return float(X.max())
    return float(np.sum(probs * X**p_exp) ** (1.0 / p_exp))


def lp_norm(X, p: float, space) -> float:
    if not 1.0 <= p <= 2.0:
        raise InvalidExponent(f"p must lie in [1, 2], got {p}")
    probs = weights_of(space)
    X = np.asarray(X, dtype=float)
    _same_len(X, probs)
    return weighted_norm(X, p, probs)


@dataclass(frozen=True, eq=False)
class ProjectionOperator:
    """Orthogonal projection T onto the attainable subspace.

    Uses the P-orthonormal frame from the pivoted QR of the generators, so
    T(X) = sum_j <X, e_j> e_j without forming normal equations.
    """

    subspace: AttainableSubspace

    @classmethod
    def of(cls, market: Market) -> "ProjectionOperator":
        return cls(market.subspace)

    @property
    def probs(self) -> np.ndarray:
        return self.subspace.space.probs

    def coefficients(self, X) -> np.ndarray:
        """Frame coordinates of T(X); rows of a 2-d input are projected independently."""
        X = np.asarray(X, dtype=float)
        _same_len(X, self.probs)
        return (X * self.probs) @ self.subspace.frame.T

    def __call__(self, X) -> np.ndarray:
        return self.coefficients(X) @ self.subspace.frame

    def complement(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) - self(X)

    def norm_of_projection(self, X) -> np.ndarray:
        """||T(X)|| (an array when X holds one vector per row)."""
        return np.linalg.norm(self.coefficients(X), axis=-1)


def project(X, T: ProjectionOperator) -> np.ndarray:
    return T(X)


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """Convex hull of finitely many generator vectors (one per row)."""

    generators: np.ndarray

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if g.size == 0 or g.shape[0] == 0:
            raise EmptySet("polytope needs at least one generator")
        g.setflags(write=False)
        object.__setattr__(self, "generators", g)

    @property
    def n_generators(self) -> int:
        return self.generators.shape[0]

    def point(self, weights) -> np.ndarray:
        return np.asarray(weights, dtype=float) @ self.generators


@dataclass
class NearestPoint:
    point: np.ndarray
    weights: np.ndarray
    distance: float
    iterations: int


def _check_exponent(p: float) -> None:
    if not 1.0 < p <= 2.0:
        raise InvalidExponent(f"p must lie in (1, 2], got {p}")


def _pow_change(r: np.ndarray, delta: np.ndarray, p: float) -> np.ndarray:
    """|r - delta|^p - |r|^p, accurate when delta is small relative to r."""
    new = r - delta
    out = np.abs(new) ** p - np.abs(r) ** p
    same = (np.sign(new) == np.sign(r)) & (r != 0)
    if np.any(same):
        u = np.abs(r[same])
        du = -np.sign(r[same]) * delta[same]
        out[same] = u**p * np.expm1(p * np.log1p(du / u))
    return out


def _conjugate(u, probs, p):
    """Convex conjugate of r -> E|r|^p, with its gradient and diagonal Hessian."""
    z = np.abs(u) / (p * probs)
    # trial steps may overflow for p near 1; the line searches reject them
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.sum((p - 1) * probs * z ** (p / (p - 1)))
        grad = np.sign(u) * z ** (1 / (p - 1))
        hess = z ** ((2 - p) / (p - 1)) / ((p - 1) * p * probs)
    return val, grad, hess


def duality_gap(w, u, X, G, probs, p):
    """Gap between E|X - wG|^p and the dual bound u.X - max_i (Gu)_i - h*(u).

    Returns (gap, primal value, magnitude of the terms) so that callers can
    judge the gap against rounding in its ingredients.
    """
    f = float(probs @ np.abs(X - w @ G) ** p)
    Gu = G @ u
    h = float(_conjugate(u, probs, p)[0])
    dual = float(u @ X) - float(Gu.max()) - h
    return f - dual, f, f + abs(float(u @ X)) + float(np.abs(Gu).max()) + h


def _certified(w, u, X, G, probs, p, rtol: float = GAP_RTOL) -> tuple[bool, float]:
    gap, f, size = duality_gap(w, u, X, G, probs, p)
    spread = max(float(np.abs(G - X).max()), 1e-300) ** p
    return gap <= rtol * size + 1e-15 * spread, f


def _kkt_newton(u, wa, s, X, Ga, probs, p, steps: int = 100):
    # X - grad h*(u) - w_A G_A = 0,  G_A u = s,  sum w_A = 1
    n, m = X.size, wa.size

    def residual(u, wa, s):
        return np.concatenate([X - _conjugate(u, probs, p)[1] - wa @ Ga, Ga @ u - s, [wa.sum() - 1.0]])

    res = residual(u, wa, s)
    nr = np.linalg.norm(res)
    floor = 1e-14 * max(1.0, np.abs(X).max())
    for _ in range(steps):
        if nr <= floor:
            return True, u, wa, s
        jac = np.zeros((n + m + 1, n + m + 1))
        jac[:n, :n] = -np.diag(_conjugate(u, probs, p)[2])
        jac[:n, n : n + m] = -Ga.T
        jac[n : n + m, :n] = Ga
        jac[n : n + m, -1] = -1.0
        jac[-1, n : n + m] = 1.0
        step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        t = 1.0
        while t > 1e-12:
            cand = (u + t * step[:n], wa + t * step[n : n + m], s + t * step[-1])
            rc = residual(*cand)
            nc = np.linalg.norm(rc)
            if nc < (1.0 - 1e-4 * t) * nr:
                break
            t *= 0.5
        else:
            break
        (u, wa, s), res, nr = cand, rc, nc
    return nr <= 1e-10 * max(1.0, np.abs(X).max()), u, wa, s


def _crossover(active, u, s, wa, X, G, probs, p, rounds: int = 4):
    """Solve the optimality system exactly on a guessed active set.

    The unknowns are the dual variable u (the gradient of E|r|^p at the
    residual), the weights on the active generators and the common value s
    of (Gu)_i there.  A few add/drop corrections are allowed; returns
    (weights, u) or None.
    """
    k = G.shape[0]
    for _ in range(rounds):
        if active.size == 0 or active.size > POLISH_MAX_FACE:
            return None
        ok, u, wa, s = _kkt_newton(u, wa, s, X, G[active], probs, p)
        if not ok:
            return None
        if wa.min() < -1e-13:
            keep = wa > 0
            active, wa = active[keep], wa[keep] / wa[keep].sum()
            continue
        slack = G @ u - s
        slack[active] = -np.inf
        if slack.max() > 1e-12 * max(1.0, np.abs(G @ u).max()):
            active, wa = np.append(active, int(np.argmax(slack))), np.append(wa, 0.0)
            continue
        out = np.zeros(k)
        out[active] = np.maximum(wa, 0.0)
        return out / out.sum(), u
    return None


def _gradient_dual(w, X, G, probs, p):
    r = X - w @ G
    return p * probs * np.abs(r) ** (p - 1) * np.sign(r)


def _interior_point(X, G, probs, p, w0, max_iter: int = 200):
    """Primal-dual interior point on the optimality system.

    Keeps w > 0 and z = s - Gu > 0 while driving w * z to zero; the
    (n+1)-dimensional reduced Newton system does not grow with the number
    of generators.  Returns (w, u, s, z) at the first certified iterate.
    """
    k, n = G.shape
    w = 0.9 * w0 + 0.1 / k
    u = _gradient_dual(w, X, G, probs, p)
    s = float((G @ u).max()) + 1.0
    z = s - G @ u
    sigma = 0.1
    for _ in range(max_iter):
        _, hg, hh = _conjugate(u, probs, p)
        if _certified(w / w.sum(), u, X, G, probs, p)[0]:
            return w / w.sum(), u, s, z
        mu = w @ z / k
        r1 = X - hg - w @ G
        r2 = 1.0 - w.sum()
        r3 = s - G @ u - z
        r4 = w * z - sigma * mu
        dinv = w / z
        c = r3 + r4 / w
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = np.diag(hh) + (G.T * dinv) @ G
        M[:n, n] = -(G.T @ dinv)
        M[n, :n] = dinv @ G
        M[n, n] = -dinv.sum()
        rhs = np.concatenate([r1 + G.T @ (dinv * c), [r2 + dinv @ c]])
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
        du, ds = sol[:n], sol[n]
        dw = dinv * (G @ du - ds - c)
        dz = (-r4 - z * dw) / w
        t = 1.0
        for v, dv in ((w, dw), (z, dz)):
            neg = dv < 0
            if neg.any():
                t = min(t, 0.99 * float(np.min(-v[neg] / dv[neg])))

        def merit(t):
            uu, ww, zz, ss = u + t * du, w + t * dw, z + t * dz, s + t * ds
            g = _conjugate(uu, probs, p)[1]
            return np.linalg.norm(
                np.concatenate([X - g - ww @ G, [1.0 - ww.sum()], ss - G @ uu - zz, ww * zz - sigma * mu])
            )

        base = np.linalg.norm(np.concatenate([r1, [r2], r3, r4]))
        while t > 1e-12 and not merit(t) <= (1.0 - 1e-4 * t) * base:
            t *= 0.5
        if t <= 1e-12:
            return None
        u, w, z, s = u + t * du, w + t * dw, z + t * dz, s + t * ds
    return None


def nearest_point_solution(X, Pi: ConvexPolytope, p: float, space, max_iter: int = NEAREST_ASCENT_ITER) -> NearestPoint:
    """Minimize ||X - sum_i w_i g_i||_p^p over simplex weights w.

    Projected gradient ascent runs first.  Its answer is only accepted once
    a dual point certifies it; for p near 1 the ascent can crawl along a
    kink of the objective, and an interior-point solve takes over.
    """
    _check_exponent(p)
    probs = weights_of(space)
    X = np.asarray(X, dtype=float)
    G = Pi.generators
    _same_len(X, G, probs)
    n = Pi.n_generators
    if n == 1:
        w = np.ones(1)
        return NearestPoint(G[0].copy(), w, weighted_norm(X - G[0], p, probs), 0)

    # normalizing by the generator spread keeps the first trial step sensible
    scale = max(float(np.max(np.abs(G - X))), 1e-300) ** p

    def neg_objective(w):
        r = X - w @ G
        a = np.abs(r)
        val = -np.sum(probs * a**p) / scale
        grad = p * (G @ (probs * a ** (p - 1) * np.sign(r))) / scale
        return val, grad

    def gain(w, w_new):
        r = X - w @ G
        delta = (w_new - w) @ G
        return -np.sum(probs * _pow_change(r, delta, p)) / scale

    res = projected_ascent(neg_objective, np.full(n, 1.0 / n), max_iter=max_iter, gain=gain)
    w = res.weights
    candidates = []
    u = _gradient_dual(w, X, G, probs, p)
    # u = 0 is the right dual point when X lies in the hull
    if any(_certified(w, v, X, G, probs, p)[0] for v in (u, np.zeros_like(u))):
        candidates.append(w)
    active = np.flatnonzero(w > 1e-12)
    Gu = G[active] @ u
    found = _crossover(active, u, float(Gu.mean()), w[active] / w[active].sum(), X, G, probs, p)
    if found is not None and _certified(*found, X, G, probs, p)[0]:
        candidates.append(found[0])
    if not candidates:
        ip = _interior_point(X, G, probs, p, w)
        if ip is None:
            raise NoConvergence("nearest point could not be certified")
        wi, ui, si, zi = ip
        candidates.append(wi)
        active = np.flatnonzero(wi > zi)
        if active.size:
            found = _crossover(active, ui, si, wi[active] / wi[active].sum(), X, G, probs, p)
            if found is not None and _certified(*found, X, G, probs, p)[0]:
                candidates.append(found[0])
    values = [np.sum(probs * np.abs(X - c @ G) ** p) for c in candidates]
    w = candidates[int(np.argmin(values))]
    y = w @ G
    return NearestPoint(y, w, weighted_norm(X - y, p, probs), res.iterations)


def nearest_point(X, Pi: ConvexPolytope, p: float, space) -> np.ndarray:
    return nearest_point_solution(X, Pi, p, space).point


def dp_distance(X, Pi: ConvexPolytope, p: float, space) -> float:
    return nearest_point_solution(X, Pi, p, space).distance


def sunny_defect(X, Pi: ConvexPolytope, p: float, space, alpha: float) -> float:
    """max |S(aX + (1-a)S(X)) - S(X)| for the nearest-point map S."""
    s = nearest_point(X, Pi, p, space)
    moved = alpha * np.asarray(X, dtype=float) + (1.0 - alpha) * s
    return float(np.abs(nearest_point(moved, Pi, p, space) - s).max())
