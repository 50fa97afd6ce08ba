"""Naive reference implementations used as test oracles.

Everything here is written with plain Python loops and the ``math`` module,
independently of the vectorised code in ``leakdetect``.
"""

from __future__ import annotations

import math
from collections import Counter


def _mean(xs):
    return math.fsum(xs) / len(xs)


def _pstd(xs):
    mu = _mean(xs)
    return math.sqrt(math.fsum((x - mu) ** 2 for x in xs) / len(xs))


def _ratio(a, b):
    return 0.0 if b == 0 else a / b


def basic(x):
    n = len(x)
    ab = [abs(v) for v in x]
    peak = max(ab)
    mean_abs = _mean(ab)
    srm = _mean([math.sqrt(v) for v in ab]) ** 2
    energy = math.fsum(v * v for v in x)
    rms = math.sqrt(energy / n)
    mu = _mean(x)
    sd = _pstd(x)
    if sd == 0:
        kurt = skew = 0.0
    else:
        kurt = _mean([((v - mu) / sd) ** 4 for v in x])
        skew = _mean([((v - mu) / sd) ** 3 for v in x])
    return [
        peak, _ratio(peak, mean_abs), srm, _ratio(peak, srm), rms, _ratio(peak, srm),
        energy, _ratio(peak, rms), max(x) - min(x), kurt, skew, _ratio(rms, mean_abs),
        peak / n, min(ab) / n,
    ]


def autocorr(x, t):
    mu = _mean(x)
    den = math.fsum((v - mu) ** 2 for v in x)
    num = math.fsum((x[i] - mu) * (x[i + t] - mu) for i in range(len(x) - t))
    return _ratio(num, den)


def pct(x, t, eps=0.0):
    steps = []
    for i in range(t, len(x)):
        base = x[i - t]
        if abs(base) > eps:
            steps.append((x[i] - base) * 100.0 / abs(base))
    return _mean(steps) if steps else 0.0


def symbol(v, edges):
    return sum(1 for e in edges if v >= e)


def _entropy(counter, total, base):
    return -math.fsum((c / total) * math.log(c / total, base) for c in counter.values())


def shannon(x, edges, base=2.0):
    s = [symbol(v, edges) for v in x]
    return _entropy(Counter(s), len(s), base)


def rate_entropy(x, edges, base=2.0):
    """Chain rule: H(X_n | X_{n-1}, X_{n-2}) = H(triples) - H(pairs)."""
    s = [symbol(v, edges) for v in x]
    n = len(s) - 2
    triples = Counter(tuple(s[i : i + 3]) for i in range(n))
    pairs = Counter(tuple(s[i : i + 2]) for i in range(n))
    return _entropy(triples, n, base) - _entropy(pairs, n, base)


def _tol(x, r_factor):
    sd = _pstd(x)
    return 1e-12 if sd == 0 else r_factor * sd


def _close(x, i, j, m, r):
    return all(abs(x[i + k] - x[j + k]) <= r for k in range(m))


def apen(x, m=2, r_factor=0.2):
    r = _tol(x, r_factor)
    n = len(x)

    def phi(k):
        cnt = n - k + 1
        logs = []
        for i in range(cnt):
            c = sum(1 for j in range(cnt) if _close(x, i, j, k, r))
            logs.append(math.log(c / cnt))
        return _mean(logs)

    return phi(m) - phi(m + 1)


def sampen(x, m=2, r_factor=0.2):
    r = _tol(x, r_factor)
    cnt = len(x) - m
    b = a = 0
    for i in range(cnt):
        for j in range(i + 1, cnt):
            if _close(x, i, j, m, r):
                b += 1
                if _close(x, i, j, m + 1, r):
                    a += 1
    if a == 0 or b == 0:
        return math.log(b + 1)
    return -math.log(a / b)


def all_features(x, edges, lags=(1, 2, 3, 4, 5), pct_lags=(1, 2, 3)):
    """The 26 per-band features in column order."""
    return [
        *basic(x),
        *(autocorr(x, t) for t in lags),
        *(pct(x, t) for t in pct_lags),
        shannon(x, edges),
        rate_entropy(x, edges),
        apen(x),
        sampen(x),
    ]


def quantile7(values, p):
    """Sort-and-interpolate quantile (linear between order statistics)."""
    s = sorted(values)
    h = (len(s) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def pearson(x, y):
    n = len(x)
    mx, my = _mean(x), _mean(y)
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    return cov / (_pstd(x) * _pstd(y))
