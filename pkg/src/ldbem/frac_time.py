"""Discrete Caputo and fractal-fractional (Riemann-Liouville sense) time derivatives.

Both schemes share the L1-type form

    D phi_{n+1} = coeff(n) * (phi_{n+1} - phi_n + P_n)

where ``P_n`` carries the memory of all earlier increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CAPUTO",
    "FRACTAL_FRACTIONAL",
    "FractionalScheme",
    "HistoryLedger",
    "weight_B",
    "weights_B",
    "caputo_coeff",
    "ffp_coeff",
    "time_coeff",
    "history_term",
    "discrete_derivative",
    "caputo_oracle",
]

CAPUTO = "caputo"
FRACTAL_FRACTIONAL = "ffp_rl"


@dataclass(frozen=True)
class FractionalScheme:
    kind: str
    alpha: float
    dt: float
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in (CAPUTO, FRACTAL_FRACTIONAL):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie strictly in (0, 1), got {self.alpha}")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")


def weight_B(n: int, k: int, alpha: float) -> float:
    """Memory weight (n+1-k)^(1-alpha) - (n-k)^(1-alpha), for 0 <= k <= n-1."""
    if not (0 <= k <= n - 1):
        raise ValueError(f"history index k={k} outside [0, {n - 1}]")
    e = 1.0 - alpha
    return (n + 1 - k) ** e - (n - k) ** e


def weights_B(n: int, alpha: float) -> np.ndarray:
    """All weights B_{n,k} for k = 0..n-1 as an array."""
    j = np.arange(n, 0, -1, dtype=float)  # n - k
    e = 1.0 - alpha
    return (j + 1.0) ** e - j ** e


def caputo_coeff(scheme: FractionalScheme) -> float:
    return 1.0 / (scheme.dt ** scheme.alpha * math.gamma(2.0 - scheme.alpha))


def ffp_coeff(scheme: FractionalScheme, n: int) -> float:
    a, b, dt = scheme.alpha, scheme.beta, scheme.dt
    return dt / (math.gamma(2.0 - a) * b * dt ** (a + b) * (n + 1) ** (b - 1.0))


def time_coeff(scheme: FractionalScheme, n: int) -> float:
    """Leading coefficient for the step t_n -> t_{n+1}."""
    if scheme.kind == CAPUTO:
        return caputo_coeff(scheme)
    return ffp_coeff(scheme, n)


@dataclass
class HistoryLedger:
    """Append-only increment history for a fixed set of nodes.

    Storage grows geometrically so appends stay amortised O(nodes).
    """

    phi0: np.ndarray
    _buf: np.ndarray = field(init=False, repr=False)
    _n: int = field(init=False, default=0)

    def __post_init__(self):
        self.phi0 = np.array(self.phi0, dtype=float).ravel()
        self._buf = np.empty((16, self.phi0.size))

    def __len__(self) -> int:
        return self._n

    @property
    def increments(self) -> np.ndarray:
        return self._buf[: self._n]

    def append(self, delta) -> None:
        delta = np.asarray(delta, dtype=float).ravel()
        if delta.shape != self.phi0.shape:
            raise ValueError("increment shape does not match the ledger")
        if self._n == len(self._buf):
            grown = np.empty((2 * len(self._buf), self.phi0.size))
            grown[: self._n] = self._buf[: self._n]
            self._buf = grown
        self._buf[self._n] = delta
        self._n += 1


def history_term(scheme: FractionalScheme, ledger: HistoryLedger, n: int, node=None):
    """Memory term P_n for every node (or a single ``node`` index)."""
    if len(ledger) < n:
        raise ValueError(f"ledger holds {len(ledger)} increments, step {n} needs {n}")
    inc = ledger.increments[:n]
    if node is not None:
        inc = inc[:, node]
        phi0 = ledger.phi0[node]
    else:
        phi0 = ledger.phi0
    P = weights_B(n, scheme.alpha) @ inc if n else np.zeros_like(np.asarray(phi0, dtype=float))
    if scheme.kind == FRACTAL_FRACTIONAL:
        a = scheme.alpha
        P = P + phi0 * (1.0 - a) / ((n + 1) ** a * math.gamma(1.0 - a))
    return P


def discrete_derivative(scheme: FractionalScheme, phi_next, phi_curr, P, n: int):
    return time_coeff(scheme, n) * (phi_next - phi_curr + P)


def caputo_oracle(samples, alpha: float, dt: float, n_eval: int | None = None) -> float:
    """Caputo derivative at t = n_eval*dt of the piecewise-linear interpolant.

    Each interval contributes its finite-difference rate times the exact
    integral of (t - tau)^(-alpha) over the interval, which is what the
    weighted scheme approximates algebraically.
    """
    y = np.asarray(samples, dtype=float)
    n1 = len(y) - 1 if n_eval is None else n_eval
    if n1 < 1 or n1 > len(y) - 1:
        raise ValueError("need samples covering [0, t_eval]")
    t = dt * n1
    total = 0.0
    for k in range(n1):
        rate = (y[k + 1] - y[k]) / dt
        lo, hi = t - dt * (k + 1), t - dt * k
        total += rate * (hi ** (1.0 - alpha) - lo ** (1.0 - alpha)) / (1.0 - alpha)
    return total / math.gamma(1.0 - alpha)
