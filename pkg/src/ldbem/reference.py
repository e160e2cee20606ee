"""Special functions, exact solutions and manufactured sources for the test problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

__all__ = [
    "gamma_fn",
    "mittag_leffler",
    "bessel",
    "find_roots",
    "caputo_of_power",
    "RadialSeriesParams",
    "problem1_exact",
    "problem1_source",
    "problem2_exact",
    "problem3_exact",
    "problem4_exact",
    "problem4_source",
]


def gamma_fn(x: float) -> float:
    if not x > 0:
        raise ValueError(f"gamma_fn needs a positive argument, got {x}")
    return math.gamma(x)


# ---------------------------------------------------------------- Mittag-Leffler

_ML_TAYLOR_RADIUS = 1.0


def _ml_taylor(alpha: float, z: float) -> float:
    """Power series with Neumaier-compensated summation."""
    total, comp = 0.0, 0.0
    term_max = 0.0
    for n in range(2000):
        term = z ** n / math.gamma(alpha * n + 1.0) if n else 1.0
        term_max = max(term_max, abs(term))
        t = total + term
        comp += (total - t) + term if abs(total) >= abs(term) else (term - t) + total
        total = t
        if n > 5 and abs(term) < 1e-17 * max(abs(total), 1e-300):
            break
    return total + comp


def _ml_integral(alpha: float, x: float) -> float:
    """E_alpha(-x) for x > 0 and 0 < alpha < 1 as a real integral.

    E_alpha(-x) = (sin(a pi) / (a pi)) * x * int_0^inf exp(-u^(1/a)) / (u^2 + 2 u x cos(a pi) + x^2) du,
    obtained by collapsing the Hankel contour onto the negative real axis.
    """
    c = math.cos(alpha * math.pi)
    inv = 1.0 / alpha

    # scaled by x^2 so the integrand is O(1) for every x
    def integrand(u):
        w = u / x
        return math.exp(-(u ** inv)) / (w * w + 2.0 * w * c + 1.0)

    # the exponential dies out past u = 50^alpha; near alpha = 1 the
    # denominator peaks at u = x
    cut = 50.0 ** alpha
    pieces = sorted({0.0, min(x, cut), cut})
    total, err = 0.0, 0.0
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        v, e = integrate.quad(integrand, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)
        total, err = total + v, err + e
    v, e = integrate.quad(integrand, cut, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
    total, err = total + v, err + e
    pref = math.sin(alpha * math.pi) / (alpha * math.pi) / x
    if pref * err > 1e-10:
        raise ArithmeticError(f"Mittag-Leffler quadrature error bound {pref * err:.2e} exceeds 1e-10")
    return pref * total


def mittag_leffler(alpha: float, z):
    """One-parameter Mittag-Leffler function E_alpha(z) for real z <= 0.

    Taylor series for |z| <= 1, a real-axis integral representation beyond.
    Accepts scalars or arrays.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    za = np.asarray(z, dtype=float)
    if np.any(za > 0):
        raise ValueError("mittag_leffler is implemented for z <= 0 only")
    if alpha == 1.0:
        out = np.exp(za)
        return float(out) if out.ndim == 0 else out
    flat = za.ravel()
    out = np.empty_like(flat)
    for i, v in enumerate(flat):
        out[i] = _ml_taylor(alpha, v) if -v <= _ML_TAYLOR_RADIUS else _ml_integral(alpha, -v)
    out = out.reshape(za.shape)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- Bessel

_BESSEL = {"J0": special.j0, "J1": special.j1, "Y0": special.y0, "Y1": special.y1}


def bessel(kind: str, x):
    """J0, J1, Y0 or Y1 at real x (x >= 0 for J, x > 0 for Y)."""
    try:
        fn = _BESSEL[kind]
    except KeyError:
        raise ValueError(f"unknown Bessel kind {kind!r}; expected one of {sorted(_BESSEL)}") from None
    xa = np.asarray(x, dtype=float)
    if kind.startswith("Y") and np.any(xa <= 0):
        raise ValueError(f"{kind} needs x > 0")
    if kind.startswith("J") and np.any(xa < 0):
        raise ValueError(f"{kind} needs x >= 0")
    out = fn(xa)
    return float(out) if np.ndim(out) == 0 else out


def _cross_product(lam: float) -> Callable[[float], float]:
    def f(k):
        return special.j1(k) * special.y0(lam * k) - special.j0(lam * k) * special.y1(k)

    return f


def find_roots(equation: str, count: int, lam: float | None = None) -> np.ndarray:
    """First ``count`` positive roots of J0(x) = 0 or of the annulus equation.

    ``equation`` is ``"J0"`` or ``"cross"`` (J1(k) Y0(lam k) - J0(lam k) Y1(k) = 0).
    Brackets come from a sign-change scan with steps well below the root
    spacing; each bracket is refined by Brent's method to 1e-13.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if equation == "J0":
        f, spacing = special.j0, math.pi
    elif equation == "cross":
        if lam is None or not lam > 1.0:
            raise ValueError("cross-product equation needs lam > 1")
        f, spacing = _cross_product(lam), math.pi / (lam - 1.0)
    else:
        raise ValueError(f"unknown equation {equation!r}")
    step = spacing / 16.0
    roots: list[float] = []
    a = 1e-6
    fa = f(a)
    limit = a + (count + 10) * spacing * 4.0
    while len(roots) < count:
        b = a + step
        fb = f(b)
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0.0:
            roots.append(optimize.brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
        a, fa = b, fb
        if a > limit:
            raise ArithmeticError(f"bracket scan found only {len(roots)} of {count} roots")
    return np.array(roots[:count])


@lru_cache(maxsize=32)
def _cached_roots(equation: str, count: int, lam: float | None) -> np.ndarray:
    r = find_roots(equation, count, lam)
    r.setflags(write=False)
    return r


def caputo_of_power(p: float, t, alpha: float):
    """Caputo derivative of t^p (p > 0): Gamma(p+1)/Gamma(p+1-alpha) t^(p-alpha)."""
    return math.gamma(p + 1.0) / math.gamma(p + 1.0 - alpha) * np.asarray(t, float) ** (p - alpha)


# ---------------------------------------------------------------- problems


def problem1_exact(x, y, t, alpha: float):
    x = np.asarray(x, float)
    return np.asarray(t, float) ** (2 * alpha) * (1.0 - x * x) * np.exp(2.0 * x) + 0.0 * np.asarray(y, float)


def problem1_source(x, y, t, alpha: float, rho: float = 1.0):
    x = np.asarray(x, float)
    e = np.exp(2.0 * x)
    t = np.asarray(t, float)
    phi = t ** (2 * alpha) * (1.0 - x * x) * e
    out = (
        e * (1.0 - x * x) * t ** alpha * math.gamma(2 * alpha + 1.0) / math.gamma(alpha + 1.0)
        - 2.0 * rho * t ** (2 * alpha) * (1.0 - 4.0 * x - 2.0 * x * x) * e
        - phi * (1.0 - phi ** 3)
    )
    return out + 0.0 * np.asarray(y, float)


@dataclass
class RadialSeriesParams:
    """Truncated radial series for the disk (``R``) or the annulus (``R_in``, ``R_out``).

    ``value`` is c0 on the disk rim, or the outer prescribed value on the annulus.
    """

    alpha: float
    rho: float = 1.0
    value: float = 1.0
    R: float = 2.0
    R_in: float = 1.0
    R_out: float = 2.0
    n_roots: int = 200
    roots: np.ndarray = field(default=None, repr=False)

    @property
    def lam(self) -> float:
        return self.R_out / self.R_in

    def disk_roots(self) -> np.ndarray:
        return self.roots if self.roots is not None else _cached_roots("J0", self.n_roots, None)

    def annulus_roots(self) -> np.ndarray:
        return self.roots if self.roots is not None else _cached_roots("cross", self.n_roots, self.lam)


_RADIAL_SLACK = 0.05


def _ml_table(alpha: float, z: np.ndarray) -> np.ndarray:
    return np.asarray(mittag_leffler(alpha, z), dtype=float)


def problem2_exact(x, y, t: float, params: RadialSeriesParams):
    """Disk with phi = value on the rim and zero initial field.

    Uses the classical denominator eta_i J1(eta_i) with eta_i the zeros of J0.
    For 0 < alpha < 1 the Mittag-Leffler factors decay only like
    1 / (x Gamma(1 - alpha)); that leading term is subtracted from every
    coefficient and summed in closed form through
    sum 2 J0(d eta) / (eta^3 J1(eta)) = (1 - d^2) / 4, which leaves a tail
    decaying like eta^-4.5 instead of eta^-2.5.
    """
    eta = params.disk_roots()
    d = np.hypot(np.asarray(x, float), np.asarray(y, float)) / params.R
    if np.any(d > 1.0 + _RADIAL_SLACK):
        raise ValueError("point outside the disk")
    a = params.alpha
    kappa2 = params.rho * t ** a / params.R ** 2 if t > 0 else 0.0
    x_i = kappa2 * eta ** 2
    ml = _ml_table(a, -x_i)
    closed = 0.0
    if a < 1.0 and x_i[-1] >= 10.0:
        lead = 1.0 / (x_i * math.gamma(1.0 - a))
        ml = ml - lead
        closed = (1.0 - d * d) / (8.0 * kappa2 * math.gamma(1.0 - a))
    w = ml / (eta * special.j1(eta))
    terms = special.j0(np.multiply.outer(d, eta)) * w
    return params.value * (1.0 - 2.0 * (terms.sum(axis=-1) + closed))


def problem3_exact(x, y, t: float, params: RadialSeriesParams):
    """Annulus with q = 0 on the inner circle and phi = value on the outer one.

    The slowly decaying 1 / (x Gamma(1 - alpha)) part of each Mittag-Leffler
    factor is summed in closed form, as for the disk: with the inner-Neumann,
    outer-Dirichlet eigenfunctions,
    pi sum c_i U0(d k_i) / k_i^2 = (lam^2 - d^2) / 4 + ln(d / lam) / 2.
    """
    k = params.annulus_roots()
    lam = params.lam
    d = np.hypot(np.asarray(x, float), np.asarray(y, float)) / params.R_in
    # chordal meshes put inner-edge nodes slightly inside R_in; the series
    # continues smoothly there
    if np.any(d < 1.0 - _RADIAL_SLACK) or np.any(d > lam * (1.0 + _RADIAL_SLACK)):
        raise ValueError("point outside the annulus")
    a = params.alpha
    tau_a = params.rho * t ** a / params.R_in ** 2 if t > 0 else 0.0  # tau^alpha
    x_i = k ** 2 * tau_a
    ml = _ml_table(a, -x_i)
    closed = 0.0
    if a < 1.0 and x_i[-1] >= 10.0:
        ml = ml - 1.0 / (x_i * math.gamma(1.0 - a))
        closed = ((lam * lam - d * d) / 4.0 + 0.5 * np.log(d / lam)) / (tau_a * math.gamma(1.0 - a))
    j1k = special.j1(k)
    j0lk = special.j0(lam * k)
    coef = j1k ** 2 / (j1k ** 2 - j0lk ** 2) * ml
    dk = np.multiply.outer(d, k)
    U0 = special.j0(dk) * special.y0(lam * k) - j0lk * special.y0(dk)
    phi_n = 1.0 - math.pi * (U0 * coef).sum(axis=-1) - closed
    return params.value * phi_n


def problem4_exact(x, y, t, alpha: float):
    T = np.asarray(t, float) ** alpha / math.gamma(1.0 + alpha)
    return 1.0 + T * np.sin(np.asarray(x, float)) + 0.0 * np.asarray(y, float)


def problem4_source(x, y, t, alpha: float):
    s = np.sin(np.asarray(x, float))
    T = np.asarray(t, float) ** alpha / math.gamma(1.0 + alpha)
    return s + 2.0 * s * T + s * s * T * T + 0.0 * np.asarray(y, float)
