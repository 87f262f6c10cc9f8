"""Exact solver for weighted check-loss (quantile) regression.

Solves ``min_b sum_i w_i * rho_tau(y_i - x_i'b)`` in two stages:

1. A Frisch-Newton primal-dual interior point method on the bounded dual LP
   ``max y'a  s.t.  X'a = (1 - tau) X'w,  0 <= a <= w``.  It lands close to the
   optimum in a few dozen iterations, almost independently of ``n``.
2. A vertex crossover.  The interior solution is snapped onto an interpolating
   basis (``p`` observations with zero residual) and the piecewise-linear
   objective is descended along the edges of that vertex, exactly as in the
   Barrodale-Roberts simplex, until no edge descends.  The returned point is a
   basic solution together with a dual certificate, so accuracy does not
   depend on the interior point tolerance.

When the minimiser is not unique the optimal face is walked toward the
lexicographically smallest coefficient vector, which makes degenerate fits
(e.g. an intercept-only median with an even sample) deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from ..errors import RankDeficiencyError, SolverError

_STEP_DAMPING = 0.9995
_ZERO_RTOL = 1e-11
_SLOPE_RTOL = 1e-11
_MAX_EDGE_SUBSETS = 4000


@dataclass(frozen=True)
class SolverResult:
    coef: np.ndarray
    objective: float
    gap: float
    iterations: int
    pivots: int
    status: str
    basis: tuple


def check_loss(u, tau):
    """Check (pinball) loss ``u * (tau - 1{u < 0})``, elementwise."""
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def _max_step(v, dv):
    neg = dv < 0
    if not neg.any():
        return 1e20
    return float(np.min(-v[neg] / dv[neg]))


def _solve_small(M, rhs):
    try:
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(M, rhs, rcond=None)[0]


def interior_point(X, y, w, tau, tol=1e-9, max_iter=100):
    """Frisch-Newton interior point iterate for the check-loss LP.

    Returns ``(coef, iterations)``.  The coefficients are only approximately
    optimal; :func:`solve_check_loss` polishes them to a vertex.
    """
    n, p = X.shape
    A = X.T
    c = -y
    x = (1.0 - tau) * w
    s = w - x
    b = A @ x
    lam = np.linalg.lstsq(X, c, rcond=None)[0]
    r = c - X @ lam
    r = np.where(r == 0.0, 1e-3 * (np.abs(y).mean() + 1e-300), r)
    z = np.maximum(r, 0.0)
    v = z - r
    gap = c @ x - lam @ b + w @ v
    scale = float(w @ np.abs(y)) + 1e-300
    it = 0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        coef, it = _ip_loop(X, y, w, tau, A, b, c, x, s, lam, z, v, gap, tol * scale, max_iter)
    if not np.all(np.isfinite(coef)):
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
    return coef, it


def _ip_loop(X, y, w, tau, A, b, c, x, s, lam, z, v, gap, target, max_iter):
    n = X.shape[0]
    it = 0
    while gap > target and it < max_iter:
        it += 1
        q = 1.0 / (z / x + v / s)
        r = z - v
        M = (A * q) @ X
        dlam = _solve_small(M, A @ (q * r))
        dx = q * (X @ dlam - r)
        ds = -dx
        dz = -z * (dx / x + 1.0)
        dv = -v * (ds / s + 1.0)
        fp = min(_STEP_DAMPING * min(_max_step(x, dx), _max_step(s, ds)), 1.0)
        fd = min(_STEP_DAMPING * min(_max_step(v, dv), _max_step(z, dz)), 1.0)
        if min(fp, fd) < 1.0:
            # Mehrotra-style centring correction
            mu = z @ x + v @ s
            g = (z + fd * dz) @ (x + fp * dx) + (v + fd * dv) @ (s + fp * ds)
            mu = mu * (g / mu) ** 3 / (2 * n)
            dxdz = dx * dz
            dsdv = ds * dv
            xinv = 1.0 / x
            sinv = 1.0 / s
            xi = mu * (xinv - sinv)
            dlam = _solve_small(M, A @ (q * (r + dxdz - dsdv - xi)))
            dx = q * (X @ dlam + xi - r - dxdz + dsdv)
            ds = -dx
            dz = mu * xinv - z - xinv * z * dx - dxdz
            dv = mu * sinv - v - sinv * v * ds - dsdv
            fp = min(_STEP_DAMPING * min(_max_step(x, dx), _max_step(s, ds)), 1.0)
            fd = min(_STEP_DAMPING * min(_max_step(v, dv), _max_step(z, dz)), 1.0)
        x_new, s_new = x + fp * dx, s + fp * ds
        lam_new = lam + fd * dlam
        if not (np.all(x_new > 0) and np.all(s_new > 0) and np.all(np.isfinite(lam_new))):
            # iterate hit the boundary in floating point; the crossover takes over
            break
        x, s, lam = x_new, s_new, lam_new
        v = v + fd * dv
        z = z + fd * dz
        gap = c @ x - lam @ b + w @ v
        if not np.isfinite(gap):
            break
    return -lam, it


def pick_basis(X, order):
    """Greedily choose ``p`` linearly independent rows of ``X`` following ``order``."""
    p = X.shape[1]
    basis = []
    Q = np.zeros((p, 0))
    for i in order:
        row = X[i]
        norm0 = np.linalg.norm(row)
        if norm0 == 0.0:
            continue
        v = row.copy()
        for _ in range(2):
            v = v - Q @ (Q.T @ v)
        nv = np.linalg.norm(v)
        if nv > 1e-9 * norm0:
            Q = np.column_stack([Q, v / nv])
            basis.append(int(i))
            if len(basis) == p:
                return basis
    raise SolverError("could not find a nonsingular basis")


def _edge_directions(X, basis, zero_idx):
    """Extreme rays of the objective's linearity cones at a vertex.

    Each ray keeps ``p - 1`` independent zero residuals at zero.  Returns the
    direction matrix (``p x m``) and the retained subsets.
    """
    p = X.shape[1]
    if p == 1:
        return np.array([[1.0, -1.0]]), [(), ()]
    if len(zero_idx) == p:
        Binv = np.linalg.inv(X[basis])
        subsets = [tuple(b for k, b in enumerate(basis) if k != j) for j in range(p)]
        return np.hstack([Binv, -Binv]), subsets + subsets
    combos = itertools.combinations(zero_idx, p - 1)
    n_combos = _n_choose_k(len(zero_idx), p - 1)
    if n_combos > _MAX_EDGE_SUBSETS:
        rng = np.random.default_rng(len(zero_idx))
        picks = [tuple(sorted(rng.choice(zero_idx, p - 1, replace=False)))
                 for _ in range(_MAX_EDGE_SUBSETS)]
        # always include the current basis' own edges
        picks += [tuple(b for k, b in enumerate(basis) if k != j) for j in range(p)]
        combos = picks
    subsets = np.array(list(combos), dtype=int)
    _, sv, vt = np.linalg.svd(X[subsets], full_matrices=True)
    rel = sv[:, -1] / np.maximum(sv[:, 0], 1e-300)
    keep = rel > 1e-9
    dirs = vt[keep, -1, :].T
    kept = [tuple(s) for s in subsets[keep]]
    return np.hstack([dirs, -dirs]), kept + kept


def _n_choose_k(n, k):
    from math import comb
    return comb(n, k)


def _slopes(r, G, w, tau):
    """One-sided directional derivatives of the objective along each column of -G."""
    rpos = (r > 0)[:, None]
    rzero = (r == 0)[:, None]
    up = rpos | (rzero & (G > 0))
    return (w[:, None] * np.where(up, tau * G, (tau - 1.0) * G)).sum(axis=0)


def _line_search(r, g, w, slope0, tol, flat):
    """Step to the first breakpoint where the slope stops being negative.

    With ``flat=True`` the walk follows a zero-slope segment and stops where
    the slope turns positive.
    """
    cand = np.flatnonzero(r * g < 0)
    if cand.size == 0:
        return None
    t = -r[cand] / g[cand]
    order = np.argsort(t, kind="stable")
    cum = slope0 + np.cumsum(w[cand[order]] * np.abs(g[cand[order]]))
    hit = np.flatnonzero(cum > tol) if flat else np.flatnonzero(cum >= -tol)
    if hit.size == 0:
        return None
    k = order[hit[0]]
    return float(t[k]), int(cand[k])


def _lex_negative(d):
    big = np.abs(d) > 1e-12 * np.max(np.abs(d))
    first = np.flatnonzero(big)[0]
    return d[first] < 0


def _vertex(X, y, basis):
    coef = np.linalg.solve(X[basis], y[basis])
    r = y - X @ coef
    scale = np.abs(y) + np.abs(X) @ np.abs(coef)
    zero = np.abs(r) <= _ZERO_RTOL * (scale + 1e-300)
    zero[basis] = True
    r[zero] = 0.0
    return coef, r, np.flatnonzero(zero)


def _certificate(X, y, w, tau, r, zero_idx):
    """Dual-feasible point and the duality gap at a vertex."""
    d = w * np.where(r > 0, tau, tau - 1.0)
    mask = np.zeros(len(y), dtype=bool)
    mask[zero_idx] = True
    target = -(X[~mask].T @ d[~mask])
    XZ = X[zero_idx].T
    lo = (tau - 1.0) * w[zero_idx]
    hi = tau * w[zero_idx]
    if len(zero_idx) == X.shape[1]:
        dz = _solve_small(XZ, target)
    else:
        dz = lsq_linear(XZ, target, bounds=(lo, hi), method="bvls").x
    d[zero_idx] = np.clip(dz, lo, hi)
    dual = float(d @ y)
    primal = float(w @ check_loss(r, tau))
    return primal - dual


def solve_check_loss(X, y, tau, weights=None, *, max_pivots=None,
                     lexicographic=True, ip_tol=1e-9):
    """Minimise the weighted check loss exactly.

    Parameters
    ----------
    X : (n, p) array
        Design matrix with full column rank.
    y : (n,) array
        Response.
    tau : float
        Quantile level in (0, 1).
    weights : (n,) array, optional
        Non-negative observation weights (e.g. bootstrap multiplicities).
    max_pivots : int, optional
        Cap on vertex pivots; defaults to ``50 * (n + p)``.
    lexicographic : bool
        Walk the optimal face to its lexicographically smallest vertex.

    Returns
    -------
    SolverResult
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, p) and y must be (n,)")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    keep = np.flatnonzero(w > 0)
    rows = keep
    X, y, w = X[keep], y[keep], w[keep]
    n, p = X.shape
    if n < p:
        raise SolverError(f"{n} weighted observations for {p} parameters")
    if max_pivots is None:
        max_pivots = 50 * (n + p)

    coef0, iters = interior_point(X, y, w, tau, tol=ip_tol)
    r0 = y - X @ coef0
    rownorm = np.abs(X).sum(axis=1) + 1e-300
    basis = pick_basis(X, np.argsort(np.abs(r0) / rownorm, kind="stable"))

    pivots = 0
    lex_moves = 0
    while True:
        coef, r, zero_idx = _vertex(X, y, basis)
        dirs, subsets = _edge_directions(X, basis, zero_idx)
        G = -(X @ dirs)
        slope = _slopes(r, G, w, tau)
        scale = w @ np.abs(G)
        tol = _SLOPE_RTOL * (scale + 1e-300)
        descent = np.flatnonzero(slope < -tol)
        if descent.size:
            j = descent[np.argmin(slope[descent] / scale[descent])]
            step = _line_search(r, G[:, j], w, slope[j], tol[j], flat=False)
            if step is None:
                raise SolverError("objective unbounded along an edge")
            _, entering = step
            basis = list(subsets[j]) + [entering]
            pivots += 1
            if pivots > max_pivots:
                raise SolverError(f"no convergence after {max_pivots} pivots")
            continue
        if lexicographic and lex_moves < 10 * (p + 10):
            moved = False
            flat = np.flatnonzero(np.abs(slope) <= tol)
            for j in flat:
                if not _lex_negative(dirs[:, j]):
                    continue
                step = _line_search(r, G[:, j], w, slope[j], tol[j], flat=True)
                if step is None or step[0] <= 0.0:
                    continue
                basis = list(subsets[j]) + [step[1]]
                lex_moves += 1
                moved = True
                break
            if moved:
                continue
        break

    objective = float(w @ check_loss(r, tau))
    gap = _certificate(X, y, w, tau, r, zero_idx)
    return SolverResult(
        coef=coef,
        objective=objective,
        gap=float(max(gap, 0.0)),
        iterations=int(iters),
        pivots=int(pivots + lex_moves),
        status="optimal",
        basis=tuple(int(rows[b]) for b in sorted(basis)),
    )


def column_rank_check(X, names):
    """Raise :class:`RankDeficiencyError` naming the first collinear column."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise SolverError("empty design")
    rank = 0
    for j in range(X.shape[1]):
        new_rank = np.linalg.matrix_rank(X[:, : j + 1])
        if new_rank <= rank:
            raise RankDeficiencyError(names[j])
        rank = new_rank
