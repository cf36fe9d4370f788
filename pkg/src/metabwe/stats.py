"""Confidence intervals and Welch's t-test.

The Student-t CDF goes through the regularized incomplete beta function,
evaluated with a modified-Lentz continued fraction, so nothing here needs scipy.
"""

from __future__ import annotations

import math
from typing import Sequence

# variance floor used when both samples are constant but the means differ
EPS_VARIANCE = 1e-12

_TINY = 1e-300
_CF_EPS = 3e-16
_CF_MAX_ITER = 10_000


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    # the continued fraction converges fast for x < (a+1)/(a+b+2); use symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF with ``df`` degrees of freedom (df may be fractional)."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    t2 = t * t
    if t2 < df:
        # near the center; integrate from 0 so nothing cancels
        half = 0.5 * betainc(0.5, df / 2.0, t2 / (df + t2))
        return 0.5 + half if t > 0 else 0.5 - half
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t2))
    return 1.0 - tail if t > 0 else tail


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|)."""
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 < df:
        return 1.0 - betainc(0.5, df / 2.0, t2 / (df + t2))
    return betainc(df / 2.0, 0.5, df / (df + t2))


def t_ppf(p: float, df: float) -> float:
    """Inverse Student-t CDF by bracketed bisection."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_ppf(1.0 - p, df)
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < p:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def _mean_var(x: Sequence[float]) -> tuple[float, float]:
    n = len(x)
    m = math.fsum(x) / n
    var = math.fsum((v - m) ** 2 for v in x) / (n - 1)
    return m, var


def mean_ci95(samples: Sequence[float]) -> tuple[float, float]:
    """Mean and two-sided 95% t-interval half-width."""
    x = [float(v) for v in samples]
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    m, var = _mean_var(x)
    if var == 0.0:
        return m, 0.0
    return m, t_ppf(0.975, n - 1) * math.sqrt(var) / math.sqrt(n)


def welch_statistic(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch t statistic and Welch-Satterthwaite degrees of freedom."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    ma, va = _mean_var(a)
    mb, vb = _mean_var(b)
    na, nb = len(a), len(b)
    if va == 0.0 and vb == 0.0 and ma != mb:
        va = vb = EPS_VARIANCE
    sa, sb = va / na, vb / nb
    se2 = sa + sb
    if se2 == 0.0:
        return 0.0, float(na + nb - 2)
    t = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    return t, df


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided Welch t-test p-value.

    Two constant samples with equal means give p = 1. With different means, a
    tiny variance floor is used, which sends p towards 0.
    """
    t, df = welch_statistic(a, b)
    if t == 0.0:
        return 1.0
    return min(1.0, max(0.0, t_sf_two_sided(t, df)))
