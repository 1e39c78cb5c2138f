"""Low-discrepancy point sets whose nets certify axis-aligned boxes.

Digit-reversal coordinates are computed as exact rationals and rounded once
to float, so base-2 values are exact dyadics.
"""

from __future__ import annotations

import math

import numpy as np

from .construct import VDC, HALTON_HAMMERSLEY, Net, _make_net


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in range(2, int(math.isqrt(n)) + 1):
        if n % p == 0:
            return False
    return True


def first_primes(m: int) -> list[int]:
    """The first m prime numbers."""
    if m < 0:
        raise ValueError("m must be >= 0")
    primes: list[int] = []
    cand = 2
    while len(primes) < m:
        if _is_prime(cand):
            primes.append(cand)
        cand += 1
    return primes


def primorial(m: int) -> int:
    """Product of the first m primes; primorial(0) = 1."""
    return math.prod(first_primes(m))


def bit_reversal(alpha: int, rho: int = 2) -> float:
    """Reverse the base-rho digits of alpha across the radix point.

    alpha = sum b_i rho^i maps to sum b_i rho^-(i+1); the value is formed as
    an exact integer ratio and converted to float in one rounding step.
    """
    if alpha < 0:
        raise ValueError("alpha must be a nonnegative integer")
    if not _is_prime(rho):
        raise ValueError(f"rho must be prime, got {rho}")
    num, den = 0, 1
    a = alpha
    while a:
        a, digit = divmod(a, rho)
        num = num * rho + digit
        den *= rho
    return num / den


def van_der_corput(n: int) -> np.ndarray:
    """The n-point set (i/n, bit_reversal(i)) in [0,1)^2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = np.empty((n, 2))
    pts[:, 0] = np.arange(n) / n
    pts[:, 1] = [bit_reversal(i, 2) for i in range(n)]
    return pts


def halton_hammersley(n: int, d: int) -> np.ndarray:
    """n points (br_p1(i), ..., br_p(d-1)(i), i/n) over the first d-1 primes."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if d < 2:
        raise ValueError("d must be >= 2")
    primes = first_primes(d - 1)
    pts = np.empty((n, d))
    for col, rho in enumerate(primes):
        pts[:, col] = [bit_reversal(i, rho) for i in range(n)]
    pts[:, d - 1] = np.arange(n) / n
    return pts


def box_net_size(d: int, eps: float) -> int:
    """Point count guaranteeing that every eps-heavy axis-aligned box is hit."""
    if d == 2:
        return math.ceil(4.0 / eps)
    return math.ceil((2.0 ** (d - 1) / eps) * primorial(d - 1))


def box_net(d: int, eps: float) -> Net:
    """Net for axis-aligned boxes: Van der Corput in 2-D, Halton-Hammersley
    in higher dimensions.  The stabbing guarantee covers boxes only."""
    if d < 2:
        raise ValueError("d must be >= 2")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    n = box_net_size(d, eps)
    if d == 2:
        pts, kind = van_der_corput(n), VDC
    else:
        pts, kind = halton_hammersley(n, d), HALTON_HAMMERSLEY
    return _make_net(d, 0, eps, kind, pts, params={"n": float(n)})
