"""Closed-form modes of an empty (or uniformly filled) PEC right-circular cylinder.

Used as the reference against which the finite-element pipeline is checked.
Bessel functions are evaluated with Miller's backward recurrence, so the
module has no special-function dependency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .constants import C0


def besselj(m: int, x: float) -> float:
    """J_m(x) for integer m >= 0 and real x, by Miller's backward recurrence."""
    if m < 0:
        return (-1) ** m * besselj(-m, x)
    if x < 0:
        return (-1) ** m * besselj(m, -x)
    if x == 0.0:
        return 1.0 if m == 0 else 0.0
    if x < 1e-8:
        return (0.5 * x) ** m / math.factorial(m)

    top = max(m, int(x)) + 20 + int(math.sqrt(40.0 * max(m, x)))
    top += top % 2
    j_hi, j = 0.0, 1e-30
    norm = 0.0
    result = 0.0
    for k in range(top, 0, -1):
        j_lo = 2.0 * k / x * j - j_hi
        j_hi, j = j, j_lo
        if abs(j) > 1e250:
            j *= 1e-250
            j_hi *= 1e-250
            result *= 1e-250
            norm *= 1e-250
        if k - 1 == m:
            result = j
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * j
    norm += j  # J_0 term
    return result / norm


def besselj_prime(m: int, x: float) -> float:
    if m == 0:
        return -besselj(1, x)
    return 0.5 * (besselj(m - 1, x) - besselj(m + 1, x))


def _mcmahon_guess(family: str, m: int, n: int) -> float:
    mu = 4.0 * m * m
    if family == "TM":
        beta = (n + 0.5 * m - 0.25) * math.pi
        return beta - (mu - 1) / (8 * beta) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * beta) ** 3)
    beta = (n + 0.5 * m - 0.75) * math.pi
    return beta - (mu + 3) / (8 * beta) - 4 * (7 * mu * mu + 82 * mu - 9) / (3 * (8 * beta) ** 3)


def _target(family: str, m: int):
    if family == "TM":
        return (lambda x: besselj(m, x)), (lambda x: besselj_prime(m, x))

    def f(x):
        return besselj_prime(m, x)

    def df(x):
        # J'' from Bessel's equation
        return -besselj_prime(m, x) / x - (1.0 - m * m / (x * x)) * besselj(m, x)

    return f, df


def _bracket_zeros(f, n: int, lo: float, step: float = 0.05) -> list[tuple[float, float]]:
    brackets = []
    a, fa = lo, f(lo)
    while len(brackets) < n:
        b = a + step
        fb = f(b)
        if fa == 0.0 or fa * fb < 0:
            brackets.append((a, b))
        a, fa = b, fb
    return brackets


def _bisect(f, a: float, b: float, tol: float = 1e-15) -> float:
    fa = f(a)
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0 or (b - a) < tol * max(1.0, abs(mid)):
            return mid
        if fa * fm < 0:
            b = mid
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def bessel_zero(family: str, m: int, n: int) -> float:
    """n-th positive zero of J_m (family "TM") or J'_m (family "TE").

    For TE with m = 0 the trivial root at x = 0 is not counted.
    """
    if family not in ("TE", "TM"):
        raise ValueError(f"unknown family {family!r}")
    if m < 0 or n < 1:
        raise ValueError("need m >= 0 and n >= 1")
    f, df = _target(family, m)

    # the bracket scan decides which root is the n-th; Newton only polishes
    lo = 1e-3 if not (family == "TE" and m == 0) else 0.5
    a, b = _bracket_zeros(f, n, lo)[n - 1]
    guess = _mcmahon_guess(family, m, n)
    x = guess if a <= guess <= b else 0.5 * (a + b)
    for _ in range(50):
        step = f(x) / df(x)
        x_new = x - step
        if not (a <= x_new <= b):
            x = _bisect(f, a, b)
            break
        x = x_new
        if abs(step) < 1e-15 * x:
            break
    return x


@dataclass(frozen=True)
class CavityMode:
    family: str
    m: int
    n: int
    p: int
    frequency: float

    def __post_init__(self):
        if self.family == "TE" and self.p < 1:
            raise ValueError("TE modes need p >= 1")
        if self.p < 0 or self.frequency <= 0:
            raise ValueError("invalid cavity mode")

    @property
    def label(self) -> str:
        return f"{self.family}{self.m}{self.n}{self.p}"


def cylinder_frequency(family: str, m: int, n: int, p: int, a: float, d: float, eps: float = 1.0) -> float:
    chi = bessel_zero(family, m, n)
    return C0 / (2 * math.pi * math.sqrt(eps)) * math.hypot(chi / a, p * math.pi / d)


def cylinder_modes(a: float, d: float, eps: float, M: int, n_modes: int) -> list[CavityMode]:
    """Lowest `n_modes` TE/TM modes with azimuthal index M, ascending in frequency."""
    if a <= 0 or d <= 0:
        raise ValueError("cavity dimensions must be positive")
    if eps < 1:
        raise ValueError("eps must be >= 1")
    # the k-th lowest mode has n <= k and p <= k
    zeros = {
        fam: [bessel_zero(fam, M, n) for n in range(1, n_modes + 1)] for fam in ("TM", "TE")
    }
    scale = C0 / (2 * math.pi * math.sqrt(eps))
    modes = []
    for fam in ("TM", "TE"):
        p0 = 0 if fam == "TM" else 1
        for n, chi in enumerate(zeros[fam], start=1):
            for p in range(p0, n_modes + 1):
                f = scale * math.hypot(chi / a, p * math.pi / d)
                modes.append(CavityMode(fam, M, n, p, f))
    modes.sort(key=lambda md: (md.frequency, md.family, md.n, md.p))
    return modes[:n_modes]


def tm010_mode_volume(a: float, d: float) -> float:
    """Mode volume of TM010: 2 pi a^2 d J1(x01)^2 / 2."""
    x01 = bessel_zero("TM", 0, 1)
    return 2 * math.pi * a * a * d * besselj(1, x01) ** 2 / 2


def tm010_wall_q(a: float, d: float, conductivity: float, mu: float | None = None) -> float:
    """Textbook conductor-loss Q of TM010: Q = eta x01 / (2 Rs (1 + a/d))."""
    from .constants import MU0, Z0

    mu = MU0 if mu is None else mu
    f = cylinder_frequency("TM", 0, 1, 0, a, d)
    rs = math.sqrt(math.pi * f * mu / conductivity)
    x01 = bessel_zero("TM", 0, 1)
    return Z0 * x01 / (2 * rs * (1 + a / d))
