"""Law of ``a*max + b*sum`` of independent exponentials and the INR bounds built on it.

Sorting K independent exponentials turns the spacings into fresh independent
exponentials, so conditional on the ordering permutation the variable is a
linear combination ``sum_l v_l Z_l`` of iid unit exponentials.  Its CDF
follows from a partial-fraction expansion of the Laplace transform.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, UnsupportedError
from .fading import rayleigh_model

__all__ = [
    "MaxSumLaw",
    "maxsum_ccdf",
    "maxsum_cdf",
    "pm_alo",
    "pm_rtd",
    "pm_inr_bounds",
    "pm_inr_quadrature",
]

MAX_K = 8
_TIE_RTOL = 1e-7


@dataclass(frozen=True)
class MaxSumLaw:
    """``X = a * max_k Y_k + b * sum_k Y_k`` with ``Y_k ~ Exp(mean=means[k])``.

    With ``extreme="min"`` the first term uses the minimum instead.
    """

    a: float
    b: float
    means: tuple[float, ...]
    extreme: str = "max"

    def __post_init__(self):
        means = tuple(float(m) for m in np.atleast_1d(self.means))
        object.__setattr__(self, "means", means)
        if len(means) == 0:
            raise DomainError("need at least one exponential")
        if any(not (m > 0) or not math.isfinite(m) for m in means):
            raise DomainError("means must be positive and finite")
        if self.extreme not in ("max", "min"):
            raise DomainError("extreme must be 'max' or 'min'")
        if len(means) > MAX_K:
            raise UnsupportedError(f"permutation expansion limited to K <= {MAX_K}")

    @property
    def K(self) -> int:
        return len(self.means)

    def mixture(self) -> list[tuple[float, np.ndarray]]:
        """``(probability, v)`` for every distinct ordering of the means.

        ``v[l]`` is the coefficient of the l-th spacing exponential.  Orderings
        that only swap equal means are merged.
        """
        rates = [1.0 / m for m in self.means]
        counts = Counter(rates)
        mult = math.prod(math.factorial(c) for c in counts.values())
        out = []
        for seq in sorted(set(itertools.permutations(rates))):
            c = np.cumsum(seq)
            prob = mult * math.prod(r / cl for r, cl in zip(seq, c))
            ell = np.arange(1, self.K + 1)
            # spacing l has l survivors: the max collects every spacing, the
            # min only the last one (all K still alive)
            if self.extreme == "max":
                v = (self.a + self.b * ell) / c
            else:
                v = (self.b * ell + self.a * (ell == self.K)) / c
            out.append((prob, v))
        return out


def _group(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge coefficients closer than the tie tolerance; returns values and multiplicities."""
    vals, mults = [], []
    for x in sorted(v, key=lambda t: (t > 0, abs(t))):
        if vals and math.copysign(1, x) == math.copysign(1, vals[-1]) and abs(x - vals[-1]) <= _TIE_RTOL * max(abs(x), abs(vals[-1])):
            n = mults[-1]
            vals[-1] = (vals[-1] * n + x) / (n + 1)
            mults[-1] = n + 1
        else:
            vals.append(x)
            mults.append(1)
    return np.array(vals), np.array(mults)


def _partial_fractions(vals: np.ndarray, mults: np.ndarray) -> list[list[float]]:
    """Weights ``w[i][k-1]`` with ``sum_l v_l Z_l = mixture of v_i * Gamma(k)``.

    Uses the repeated-pole formula on the Laplace transform
    ``prod_j (lam_j / (p + lam_j))^{n_j}``, ``lam_j = 1/v_j``.  The product at
    the pole is formed in log-magnitude plus sign.
    """
    lam = 1.0 / vals
    weights = []
    for i, (li, ni) in enumerate(zip(lam, mults)):
        others = [j for j in range(len(lam)) if j != i]
        # Phi_i(-lam_i) = prod_j (1 / (1 - lam_i/lam_j))^{n_j}
        log_mag, sign = 0.0, 1.0
        for j in others:
            t = 1.0 - li / lam[j]
            log_mag -= mults[j] * math.log(abs(t))
            if t < 0 and mults[j] % 2:
                sign = -sign
        phi = sign * math.exp(log_mag)
        # scaled log-derivatives: lam_i^r h^(r)(-lam_i) / r!
        def dh(r):
            return ((-1) ** r) / r * sum(mults[j] * (li / (lam[j] - li)) ** r for j in others)

        # D[r] = lam_i^r Phi^(r)(-lam_i) / (r! Phi); exp-of-series recurrence
        D = [1.0]
        for r in range(1, ni):
            D.append(sum(k * dh(k) * D[r - k] for k in range(1, r + 1)) / r)
        # weight of Gamma(k) is lam^{n-k} Phi^{(n-k)} / (n-k)!
        weights.append([phi * D[ni - k] for k in range(1, ni + 1)])
    return weights


def _combo_cdf(v: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``Pr[sum v_l Z_l <= x]`` for iid unit exponentials ``Z_l``."""
    v = v[v != 0.0]
    if v.size == 0:
        return (x >= 0).astype(float)
    vals, mults = _group(v)
    weights = _partial_fractions(vals, mults)
    terms = []
    for vi, wi in zip(vals, weights):
        for k, w in enumerate(wi, start=1):
            if vi > 0:
                g = np.where(x > 0, special.gammainc(k, np.maximum(x, 0) / vi), 0.0)
            else:
                g = np.where(x >= 0, 1.0, special.gammaincc(k, np.maximum(x / vi, 0)))
            terms.append(w * g)
    return np.sum(terms, axis=0)


def maxsum_cdf(law: MaxSumLaw, x):
    """``Pr[X <= x]``, vectorized over ``x``."""
    xs = np.asarray(x, dtype=float)
    flat = np.atleast_1d(xs)
    parts = np.array([p * _combo_cdf(v, flat) for p, v in law.mixture()])
    # fsum per point keeps the reduction order-independent
    out = np.array([math.fsum(col) for col in parts.T])
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if xs.ndim == 0 else out.reshape(xs.shape)


def maxsum_ccdf(law: MaxSumLaw, x):
    """``Pr[X > x]``, vectorized over ``x``."""
    c = maxsum_cdf(law, x)
    return 1.0 - c


def _check_taus(taus) -> np.ndarray:
    t = np.atleast_1d(np.asarray(taus, dtype=float))
    if t.size == 0 or np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise DomainError("taus must be positive and finite")
    return t


def pm_alo(taus) -> float:
    """Probability that every slot individually fails: ``prod (1 - exp(-tau))``."""
    t = _check_taus(taus)
    return float(np.prod(-np.expm1(-t)))


def pm_rtd(taus) -> float:
    """``Pr[sum gamma_s / tau_s < 1]`` for Rayleigh gains."""
    t = _check_taus(taus)
    return maxsum_cdf(MaxSumLaw(0.0, 1.0, tuple(1.0 / t)), 1.0)


def _outer_coef(theta: float, m: int) -> float:
    # theta / ((1+theta)^{1/m} - 1) - m, written to survive theta -> 0
    den = math.expm1(math.log1p(theta) / m)
    return theta / den - m


def pm_inr_bounds(taus, theta: float) -> tuple[float, float]:
    """Piecewise-linear inner and outer bounds on the INR failure probability."""
    t = _check_taus(taus)
    if not theta > 0:
        raise DomainError("theta must be positive")
    means = tuple(1.0 / t)
    lower = maxsum_cdf(MaxSumLaw(-theta, 1.0 + theta, means), 1.0)
    # union over t of {sum + c x_t < 1} with c >= 0 is governed by the smallest x_t
    upper = maxsum_cdf(MaxSumLaw(_outer_coef(theta, t.size), 1.0, means, "min"), 1.0)
    return lower, upper


def pm_inr_quadrature(taus, theta: float) -> float:
    """``Pr[prod (1 + theta*gamma_s/tau_s) < 1 + theta]`` by nested quadrature (m <= 3)."""
    t = _check_taus(taus)
    if not theta > 0:
        raise DomainError("theta must be positive")
    if t.size > 3:
        raise UnsupportedError("nested quadrature supports at most 3 slots")
    model = rayleigh_model()
    opts = dict(epsabs=1e-11, epsrel=1e-10, limit=200)
    if t.size == 1:
        return float(model.cdf(t[0]))

    def xi_next(xi, x):
        return (xi - x) / (1.0 + theta * x)

    if t.size == 2:
        f = lambda g1: math.exp(-g1) * model.cdf(t[1] * xi_next(1.0, g1 / t[0]))  # noqa: E731
        return integrate.quad(f, 0.0, t[0], **opts)[0]

    def inner(g1):
        xi2 = xi_next(1.0, g1 / t[0])
        f = lambda g2: math.exp(-g2) * model.cdf(t[2] * xi_next(xi2, g2 / t[1]))  # noqa: E731
        return integrate.quad(f, 0.0, t[1] * xi2, **opts)[0]

    return integrate.quad(lambda g1: math.exp(-g1) * inner(g1), 0.0, t[0], **opts)[0]
