"""Modified Bessel function of the second kind and the normalized Matern shape.

K_nu is evaluated with Temme's series for x <= 2 and a Steed-type continued
fraction for x > 2, with upward recurrence in the order; this reaches ~1e-12
relative accuracy for nu in (0, 5] and x in [1e-8, 30].  The Matern shape
M_nu carries the 2^(1-nu)/Gamma(nu) normalization so that M_nu(0) = 1, and
half-integer orders take their closed forms.
"""

from __future__ import annotations

import math

import numpy as np
from numba import vectorize

_EPS = 1e-16
_MAXIT = 10000
# Taylor coefficients of 1/Gamma(1+x) around 0, used when |mu| is too small
# for direct Gamma evaluation of (1/Gamma(1-mu) - 1/Gamma(1+mu))/(2 mu).
_G1 = 0.5772156649015329
_G3 = -0.04200263503409524


@vectorize(["float64(float64, float64)"], nopython=True, cache=True)
def modified_bessel_k(nu, x):
    """K_nu(x) for nu >= 0, x > 0; returns nan on invalid input."""
    if not (x > 0.0) or nu < 0.0:
        return math.nan
    nround = int(nu + 0.5)
    mu = nu - nround  # |mu| <= 1/2
    if x <= 2.0:
        # Temme series for K_mu and K_{mu+1}
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = 1.0 if abs(pimu) < 1e-15 else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = mu * d
        fact2 = 1.0 if abs(e) < 1e-15 else math.sinh(e) / e
        if abs(mu) > 1e-5:
            gampl = 1.0 / math.gamma(1.0 + mu)
            gammi = 1.0 / math.gamma(1.0 - mu)
            gam1 = (gammi - gampl) / (2.0 * mu)
            gam2 = 0.5 * (gammi + gampl)
        else:
            gampl = 1.0 / math.gamma(1.0 + mu)
            gammi = 1.0 / math.gamma(1.0 - mu)
            gam1 = -(_G1 + _G3 * mu * mu)
            gam2 = 0.5 * (gammi + gampl)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, _MAXIT + 1):
            ff = (i * ff + p + q) / (i * i - mu * mu)
            c *= d / i
            p /= i - mu
            q /= i + mu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        rkmu = total
        rk1 = total1 * (2.0 / x)
    else:
        # Steed's continued fraction CF2 for K_mu and K_{mu+1}
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = d
        delh = d
        q1 = 0.0
        q2 = 1.0
        a1 = 0.25 - mu * mu
        q = a1
        c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT + 1):
            a -= 2.0 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _EPS:
                break
        h = a1 * h
        rkmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
        rk1 = rkmu * (mu + x + 0.5 - h) / x
    for i in range(nround):
        rktemp = (mu + i + 1.0) * (2.0 / x) * rk1 + rkmu
        rkmu = rk1
        rk1 = rktemp
    return rkmu


@vectorize(["float64(float64, float64)"], nopython=True, cache=True)
def matern_function(nu, x):
    """Normalized Matern shape (2^(1-nu)/Gamma(nu)) x^nu K_nu(x); M_nu(0) = 1."""
    if x < 0.0 or nu <= 0.0:
        return math.nan
    if x < 1e-14:
        return 1.0
    half = nu - 0.5
    if half == round(half):
        # closed forms for the half-integer orders in the model catalog
        if nu == 0.5:
            return math.exp(-x)
        if nu == 1.5:
            return (1.0 + x) * math.exp(-x)
        if nu == 2.5:
            return (1.0 + x + x * x / 3.0) * math.exp(-x)
    k = modified_bessel_k(nu, x)
    if k == 0.0 or math.isinf(k):
        return 0.0
    val = math.pow(2.0, 1.0 - nu) / math.gamma(nu) * math.pow(x, nu) * k
    if val < 0.0:
        return 0.0
    return val
