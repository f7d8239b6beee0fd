"""Bessel functions J0, J1, Y0, Y1 and Hankel functions H0(1), H1(1) of real argument.

Power series up to SERIES_LIMIT, Cephes amplitude/phase rational approximations of
the Hankel asymptotic expansion beyond it. Absolute error stays below 1e-10 on [0, 50].
Every function accepts a scalar or an array and returns the same shape.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from crackscat.core.errors import DomainError

EULER_GAMMA = 0.57721566490153286061
SERIES_LIMIT = 8.0
SERIES_TERMS = 40

TWOOPI = 6.36619772367581343075535e-1  # 2/pi
SQ2OPI = 7.9788456080286535587989e-1  # sqrt(2/pi)
PIO4 = 7.85398163397448309616e-1  # pi/4
THPIO4 = 2.35619449019234492885  # 3pi/4

# order 0, x > 5
PP = np.array([
    7.96936729297347051624e-4,
    8.28352392107440799803e-2,
    1.23953371646414299388e0,
    5.44725003058768775090e0,
    8.74716500199817011941e0,
    5.30324038235394892183e0,
    9.99999999999999997821e-1,
])
PQ = np.array([
    9.24408810558863637013e-4,
    8.56288474354474431428e-2,
    1.25352743901058953537e0,
    5.47097740330417105182e0,
    8.76190883237069594232e0,
    5.30605288235394617618e0,
    1.00000000000000000218e0,
])
QP = np.array([
    -1.13663838898469149931e-2,
    -1.28252718670509318512e0,
    -1.95539544257735972385e1,
    -9.32060152123768231369e1,
    -1.77681167980488050595e2,
    -1.47077505154951170175e2,
    -5.14105326766599330220e1,
    -6.05014350600728481186e0,
])
QQ = np.array([
    6.43178256118178023184e1,
    8.56430025976980587198e2,
    3.88240183605401609683e3,
    7.24046774195652478189e3,
    5.93072701187316984827e3,
    2.06209331660327847417e3,
    2.42005740240291393179e2,
])

# order 1, x > 5
PP1 = np.array([
    7.62125616208173112003e-4,
    7.31397056940917570436e-2,
    1.12719608129684925192e0,
    5.11207951146807644818e0,
    8.42404590141772420927e0,
    5.21451598682361504063e0,
    1.00000000000000000254e0,
])
PQ1 = np.array([
    5.71323128072548699714e-4,
    6.88455908754495404082e-2,
    1.10514232634061696926e0,
    5.07386386128601488557e0,
    8.39985554327604159757e0,
    5.20982848682361821619e0,
    9.99999999999999997461e-1,
])
QP1 = np.array([
    5.10862594750176621635e-2,
    4.98213872951233449420e0,
    7.58238284132545283818e1,
    3.66779609360150777800e2,
    7.10856304998926107277e2,
    5.97489612400613639965e2,
    2.11688757100572135698e2,
    2.52070205858023719784e1,
])
QQ1 = np.array([
    7.42373277035675149943e1,
    1.05644886038262816351e3,
    4.98641058337653607651e3,
    9.56231892404756170795e3,
    7.99704160447350683650e3,
    2.82619278517639096600e3,
    3.36093607810698293419e2,
])


def _polevl(x: np.ndarray, coef: np.ndarray) -> np.ndarray:
    ans = np.full_like(x, coef[0])
    for c in coef[1:]:
        ans = ans * x + c
    return ans


def _p1evl(x: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Same as _polevl with an implicit leading coefficient of 1."""
    ans = x + coef[0]
    for c in coef[1:]:
        ans = ans * x + c
    return ans


def _prepare(x: Any, name: str, strict: bool) -> tuple[np.ndarray, tuple[int, ...]]:
    arr = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(arr).ravel()
    if not np.all(np.isfinite(flat)):
        raise DomainError(f"{name} requires a finite argument")
    if strict and np.any(flat <= 0.0):
        raise DomainError(f"{name} requires x > 0")
    if not strict and np.any(flat < 0.0):
        raise DomainError(f"{name} requires x >= 0")
    return flat, arr.shape


def _finish(values: np.ndarray, shape: tuple[int, ...]) -> Any:
    if shape == ():
        return values[0].item()
    return values.reshape(shape)


def _series_order0(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = 0.25 * x * x
    term = np.ones_like(x)
    j0 = term.copy()
    ysum = np.zeros_like(x)
    harmonic = 0.0
    for k in range(1, SERIES_TERMS):
        term = -term * q / (k * k)
        harmonic += 1.0 / k
        j0 += term
        ysum -= harmonic * term
    return j0, ysum


def _series_order1(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = 0.25 * x * x
    term = 0.5 * x
    j1 = term.copy()
    h_k, h_k1 = 0.0, 1.0
    ysum = term * (h_k + h_k1)
    for k in range(1, SERIES_TERMS):
        term = -term * q / (k * (k + 1))
        h_k = h_k1
        h_k1 = h_k + 1.0 / (k + 1)
        j1 += term
        ysum += term * (h_k + h_k1)
    return j1, ysum


def _asymptotic(x: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    w = 5.0 / x
    z = w * w
    if order == 0:
        p = _polevl(z, PP) / _polevl(z, PQ)
        q = _polevl(z, QP) / _p1evl(z, QQ)
        xn = x - PIO4
    else:
        p = _polevl(z, PP1) / _polevl(z, PQ1)
        q = _polevl(z, QP1) / _p1evl(z, QQ1)
        xn = x - THPIO4
    amp = SQ2OPI / np.sqrt(x)
    c, s = np.cos(xn), np.sin(xn)
    return amp * (p * c - w * q * s), amp * (p * s + w * q * c)


def _order0(x: np.ndarray, need_y: bool) -> tuple[np.ndarray, np.ndarray]:
    j = np.empty_like(x)
    y = np.empty_like(x)
    small = x <= SERIES_LIMIT
    if small.any():
        xs = x[small]
        js, ysum = _series_order0(xs)
        j[small] = js
        if need_y:
            y[small] = TWOOPI * ((np.log(0.5 * xs) + EULER_GAMMA) * js + ysum)
    large = ~small
    if large.any():
        j[large], y[large] = _asymptotic(x[large], 0)
    return j, y


def _order1(x: np.ndarray, need_y: bool) -> tuple[np.ndarray, np.ndarray]:
    j = np.empty_like(x)
    y = np.empty_like(x)
    small = x <= SERIES_LIMIT
    if small.any():
        xs = x[small]
        js, ysum = _series_order1(xs)
        j[small] = js
        if need_y:
            y[small] = TWOOPI * (np.log(0.5 * xs) + EULER_GAMMA) * js - TWOOPI / xs - ysum / np.pi
    large = ~small
    if large.any():
        j[large], y[large] = _asymptotic(x[large], 1)
    return j, y


def bessel_j0(x: Any) -> Any:
    flat, shape = _prepare(x, "bessel_j0", strict=False)
    return _finish(_order0(flat, False)[0], shape)


def bessel_j1(x: Any) -> Any:
    flat, shape = _prepare(x, "bessel_j1", strict=False)
    return _finish(_order1(flat, False)[0], shape)


def bessel_y0(x: Any) -> Any:
    flat, shape = _prepare(x, "bessel_y0", strict=True)
    return _finish(_order0(flat, True)[1], shape)


def bessel_y1(x: Any) -> Any:
    flat, shape = _prepare(x, "bessel_y1", strict=True)
    return _finish(_order1(flat, True)[1], shape)


def hankel1_0(x: Any) -> Any:
    flat, shape = _prepare(x, "hankel1_0", strict=True)
    j, y = _order0(flat, True)
    return _finish(j + 1j * y, shape)


def hankel1_1(x: Any) -> Any:
    flat, shape = _prepare(x, "hankel1_1", strict=True)
    j, y = _order1(flat, True)
    return _finish(j + 1j * y, shape)
