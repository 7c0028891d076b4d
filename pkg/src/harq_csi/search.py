"""Derivative-free search primitives shared by the capacity and protocol optimizers.

Everything here maximizes.  Multi-start simplex search is backed by scipy's
Nelder-Mead; scalar problems use a dense scan to bracket the global maximum
followed by bounded Brent refinement, so unimodality is never assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

__all__ = ["SearchSpec", "SearchResult", "maximize_scalar", "multistart_maximize"]


@dataclass(frozen=True)
class SearchSpec:
    """Settings for a multi-start simplex search.

    ``bounds`` are in the transformed (log / gap) coordinates the caller
    optimizes over; ``None`` lets the caller pick defaults.
    """

    dims: int | None = None
    bounds: tuple[tuple[float, float], ...] | None = None
    restarts: int = 8
    tol: float = 1e-10
    seed: int = 0
    max_evals: int = 4000

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.bounds is not None:
            for lo, hi in self.bounds:
                if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                    raise ValueError("bounds must be finite with lo < hi")
            if self.dims is not None and len(self.bounds) != self.dims:
                raise ValueError("bounds length must equal dims")


@dataclass
class SearchResult:
    x: np.ndarray
    value: float
    evaluations: int
    restart_values: list[float] = field(default_factory=list)


def maximize_scalar(
    fun: Callable[[float], float],
    lo: float,
    hi: float,
    n_scan: int = 1024,
    log: bool = False,
    xtol: float = 1e-12,
) -> tuple[float, float]:
    """Global-ish maximum of ``fun`` on ``[lo, hi]``.

    A coarse scan of ``n_scan`` points brackets the best cell, then bounded
    Brent refines inside the two neighbouring cells.  With ``log=True`` the
    scan and refinement run in ``log(x)``.
    """
    if log:
        a, b = math.log(lo), math.log(hi)
        g = lambda u: fun(math.exp(u))  # noqa: E731
    else:
        a, b = lo, hi
        g = fun
    grid = np.linspace(a, b, n_scan)
    vals = np.array([g(u) for u in grid])
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    k = int(np.argmax(vals))
    left = grid[max(k - 1, 0)]
    right = grid[min(k + 1, n_scan - 1)]
    best_u, best_v = grid[k], vals[k]
    if right > left:
        res = optimize.minimize_scalar(
            lambda u: -g(u), bounds=(left, right), method="bounded",
            options={"xatol": xtol * max(1.0, abs(grid[k]))},
        )
        if np.isfinite(res.fun) and -res.fun >= best_v:
            best_u, best_v = float(res.x), float(-res.fun)
    x = math.exp(best_u) if log else float(best_u)
    return x, float(best_v)


def multistart_maximize(
    fun: Callable[[np.ndarray], float],
    starts: Sequence[np.ndarray],
    bounds: Sequence[tuple[float, float]] | None = None,
    tol: float = 1e-10,
    max_evals: int = 4000,
) -> SearchResult:
    """Run Nelder-Mead from every start and keep the best.

    Ties are broken by restart index, so the result is a deterministic
    function of ``starts``.
    """
    if len(starts) == 0:
        raise ValueError("need at least one start")
    count = 0

    def neg(x):
        nonlocal count
        count += 1
        v = fun(np.asarray(x, dtype=float))
        return -v if np.isfinite(v) else np.inf

    best_x, best_v = None, -np.inf
    per_restart = []
    for x0 in starts:
        x0 = np.asarray(x0, dtype=float)
        if bounds is not None:
            x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = optimize.minimize(
            neg, x0, method="Nelder-Mead", bounds=bounds,
            options={"xatol": 1e-9, "fatol": tol, "maxfev": max_evals, "adaptive": len(x0) > 3},
        )
        # the simplex may end on a vertex worse than its start
        cand = [(res.x, -res.fun), (x0, -neg(x0))]
        for x, v in cand:
            if v > best_v:
                best_x, best_v = np.array(x, dtype=float), float(v)
        per_restart.append(max(v for _, v in cand))
    return SearchResult(best_x, best_v, count, per_restart)
