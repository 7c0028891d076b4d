"""Exponential integral and the fading-gain distribution abstraction.

Every rate in this package is in nats.  Thresholds may be ``inf``; numpy's
``exp(-inf) == 0`` convention is relied on throughout.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .errors import DomainError

__all__ = [
    "e1",
    "exp_e1",
    "FadingModel",
    "RayleighFading",
    "rayleigh_model",
]

_CF_MAX_ITER = 500
_CF_SWITCH = 50.0
_TINY = 1e-300


def _check_positive(x: np.ndarray) -> None:
    if np.any(~(x > 0)):
        raise DomainError("exponential integral requires x > 0")


def _cf_exp_e1(x: np.ndarray) -> np.ndarray:
    # modified Lentz evaluation of e^x E1(x); converges in a few terms for large x
    b = x + 1.0
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _CF_MAX_ITER):
        an = -float(i * i)
        b = b + 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h = h * delta
        if np.all(np.abs(delta - 1.0) < 4e-16):
            return h
    raise ArithmeticError("continued fraction for E1 did not converge")


def _as_output(arr: np.ndarray, out: np.ndarray):
    return float(out) if arr.ndim == 0 else out


def e1(x):
    """Exponential integral ``E1(x) = int_x^inf exp(-t)/t dt`` for ``x > 0``.

    Accepts scalars or arrays; ``inf`` maps to 0.
    """
    arr = np.asarray(x, dtype=float)
    _check_positive(arr)
    return _as_output(arr, special.exp1(arr))


def exp_e1(x):
    """``exp(x) * E1(x)`` without overflow; tends to ``1/x`` for large x."""
    arr = np.asarray(x, dtype=float)
    _check_positive(arr)
    flat = np.atleast_1d(arr)
    out = np.empty_like(flat)
    small = flat < _CF_SWITCH
    out[small] = np.exp(flat[small]) * special.exp1(flat[small])
    big = ~small
    if np.any(big):
        fin = big & np.isfinite(flat)
        out[big & ~fin] = 0.0
        if np.any(fin):
            out[fin] = _cf_exp_e1(flat[fin])
    return _as_output(arr, out.reshape(arr.shape))


class FadingModel:
    """Distribution of the per-slot fading power gain.

    Subclasses must provide ``cdf``, ``pdf`` and ``isf``.  The remaining
    moments default to adaptive quadrature and may be overridden with closed
    forms.  All thresholds are extended reals.
    """

    name = "generic"

    def cdf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def isf(self, q):
        """Inverse survival function: ``x`` with ``Pr[gamma > x] = q``."""
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def ppf(self, u):
        return self.isf(1.0 - np.asarray(u, dtype=float))

    def sample(self, u):
        """Inverse-CDF transform of uniforms in [0, 1)."""
        return self.ppf(u)

    @property
    def mean(self) -> float:
        return integrate.quad(lambda t: self.sf(t), 0.0, np.inf, limit=200)[0]

    def _quad(self, fun, a: float, b: float) -> float:
        if not a < b:
            return 0.0
        return integrate.quad(lambda t: fun(t) * self.pdf(t), a, b, limit=200, epsabs=1e-13, epsrel=1e-11)[0]

    def mass(self, a, b):
        """``Pr[a <= gamma < b]``."""
        return np.maximum(self.cdf(b) - self.cdf(a), 0.0)

    def partial_mean(self, a: float, b: float) -> float:
        """``E[gamma; a <= gamma < b]``."""
        return self._quad(lambda t: t, a, b)

    def conditional_mean(self, a: float, b: float) -> float:
        """``E[gamma | a <= gamma < b]``, the centroid of the interval."""
        if not a < b:
            raise DomainError("conditional_mean requires a < b")
        mass = float(self.mass(a, b))
        if mass <= 0.0:
            return a if math.isfinite(a) else b
        return self.partial_mean(a, b) / mass

    def tail_inverse_mean(self, x: float) -> float:
        """``E[1/gamma; gamma >= x]``."""
        if x <= 0:
            raise DomainError("tail_inverse_mean requires x > 0")
        return self._quad(lambda t: 1.0 / t, x, np.inf)

    def expected_log(self, power: float, a: float = 0.0, b: float = np.inf) -> float:
        """``E[log(1 + gamma*power); a <= gamma < b]``."""
        if power <= 0 or not a < b:
            return 0.0
        return self._quad(lambda t: math.log1p(power * t), a, b)

    def expected_log_sum(self, powers, edges) -> float:
        """``sum_f E[log(1 + gamma P_f); edges[f] <= gamma < edges[f+1]]``."""
        return math.fsum(self.expected_log(P, edges[f], edges[f + 1]) for f, P in enumerate(powers))

    def expected_log_ratio(self, lam: float) -> float:
        """``E[log(gamma/lam); gamma >= lam]``, the water-filling rate."""
        return self._quad(lambda t: math.log(t / lam), lam, np.inf)

    def waterfill_power(self, lam: float) -> float:
        """``E[1/lam - 1/gamma; gamma >= lam]``, the water-filling average power."""
        return self.sf(lam) / lam - self.tail_inverse_mean(lam)


class RayleighFading(FadingModel):
    """Unit-mean exponential power gain (Rayleigh amplitude)."""

    name = "rayleigh"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = -np.expm1(-np.maximum(x, 0.0))
        return float(out) if out.ndim == 0 else out

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.exp(-np.maximum(x, 0.0))
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, np.exp(-np.abs(x)), 0.0)
        return float(out) if out.ndim == 0 else out

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        out = -np.log(q)
        return float(out) if out.ndim == 0 else out

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        out = -np.log1p(-u)
        return float(out) if out.ndim == 0 else out

    @property
    def mean(self) -> float:
        return 1.0

    def partial_mean(self, a: float, b: float) -> float:
        # int_a^b t e^{-t} dt; (1+b)e^{-b} -> 0 at b = inf
        upper = 0.0 if math.isinf(b) else (1.0 + b) * math.exp(-b)
        return (1.0 + a) * math.exp(-a) - upper

    def conditional_mean(self, a: float, b: float) -> float:
        if not a < b:
            raise DomainError("conditional_mean requires a < b")
        if math.isinf(b):
            return a + 1.0
        # shift by a so both exponentials stay representable
        w = b - a
        ew = -math.expm1(-w)
        if ew <= 0.0:
            return a
        return a + (1.0 - (1.0 + w) * math.exp(-w)) / ew

    def tail_inverse_mean(self, x: float) -> float:
        return e1(x)

    def expected_log(self, power: float, a: float = 0.0, b: float = np.inf) -> float:
        if power <= 0 or not a < b:
            return 0.0
        inv = 1.0 / power

        def edge(s: float) -> float:
            if math.isinf(s):
                return 0.0
            return math.exp(-s) * (math.log1p(power * s) + exp_e1(s + inv))

        return edge(a) - edge(b)

    def expected_log_sum(self, powers, edges) -> float:
        P = np.asarray(powers, dtype=float)
        s = np.asarray(edges, dtype=float)
        a, b = s[:-1], s[1:]
        on = (P > 0) & (b > a)
        if not np.any(on):
            return 0.0
        P, a, b = P[on], a[on], b[on]
        inv = 1.0 / P

        def edge(x):
            fin = np.isfinite(x)
            xf = np.where(fin, x, 0.0)
            val = np.exp(-xf) * (np.log1p(P * xf) + exp_e1(xf + inv))
            return np.where(fin, val, 0.0)

        return float(np.sum(edge(a) - edge(b)))

    def expected_log_ratio(self, lam: float) -> float:
        return e1(lam)

    def waterfill_power(self, lam: float) -> float:
        return math.exp(-lam) * (1.0 / lam - exp_e1(lam))


_RAYLEIGH = RayleighFading()


def rayleigh_model() -> RayleighFading:
    """The iid Rayleigh fading instance (``F(x) = 1 - exp(-x)``)."""
    return _RAYLEIGH
