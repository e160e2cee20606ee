"""Elimination of the four cell unknowns of each subdomain.

All functions broadcast over leading axes, so the same code condenses one
subdomain or a whole mesh worth of stacked blocks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .subdomain import SubdomainMatrices

__all__ = [
    "NonlinearParams",
    "CondensedBlock",
    "SingularUpdateError",
    "nonlinear_diagonal",
    "nonlinear_matrix_M",
    "build_S_and_b",
    "hs_inverse",
    "condense",
    "recover_interior",
]

log = logging.getLogger(__name__)


class SingularUpdateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class NonlinearParams:
    """Reaction term phi * (c - d * phi**b) and diffusivity rho."""

    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.b < 0:
            raise ValueError(f"exponent b must be >= 0, got {self.b}")

    @property
    def m(self) -> tuple[float, float, float]:
        return (self.b, self.c, self.d)

    @property
    def is_linear(self) -> bool:
        return self.d == 0.0 or self.b == 0.0

    def reaction(self, phi):
        """Un-linearised reaction N(phi)."""
        return phi * nonlinear_diagonal(self, phi)


def nonlinear_diagonal(params: NonlinearParams, phi_lag) -> np.ndarray:
    """Diagonal of the lagged reaction matrix, c - d * phi_lag**b."""
    phi_lag = np.asarray(phi_lag, dtype=float)
    if params.d == 0.0:
        return np.full(phi_lag.shape, float(params.c))
    b = params.b
    if float(b).is_integer():
        power = phi_lag ** int(b)
    else:
        if np.any(phi_lag < 0):
            raise ValueError(f"negative cell value with non-integer exponent b={b}")
        power = phi_lag ** b
    return params.c - params.d * power


def nonlinear_matrix_M(params: NonlinearParams, phi_lag) -> np.ndarray:
    """Lagged reaction matrix as explicit (..., 4, 4) diagonal matrices."""
    diag = nonlinear_diagonal(params, phi_lag)
    return diag[..., :, None] * np.eye(diag.shape[-1])


def build_S_and_b(blocks: SubdomainMatrices, M_diag, c_time: float, phi_n, P, f_next, rho: float):
    """Volume coupling matrices and load vectors for the current lag.

    Returns ``(S_dd, S_bd, b_dd, b_bd)`` where
    ``S = C (c_time I - M) / rho`` and ``b = C (c_time (phi_n - P) + f) / rho``.
    ``M_diag`` is the diagonal of the lagged reaction matrix.
    """
    scale = (c_time - np.asarray(M_diag, float)) / rho
    load = (c_time * (np.asarray(phi_n, float) - np.asarray(P, float)) + np.asarray(f_next, float)) / rho
    S_dd = blocks.C_dd * scale[..., None, :]
    S_bd = blocks.C_bd * scale[..., None, :]
    b_dd = np.einsum("...ij,...j->...i", blocks.C_dd, load)
    b_bd = np.einsum("...ij,...j->...i", blocks.C_bd, load)
    return S_dd, S_bd, b_dd, b_bd


def hs_inverse(S_dd, tol: float = 1e-12) -> np.ndarray:
    """Inverse of I + S by successive rank-one (Sherman-Morrison) updates.

    S is split into its columns, S = sum_r s_r e_r^T, and starting from the
    identity each update applies

        X^-1 <- X^-1 - g X^-1 S_r X^-1,   g = 1 / (1 + trace(X^-1 S_r)).

    Whenever a denominator falls below ``tol`` the affected matrices are
    inverted directly instead, with a warning.
    """
    S = np.asarray(S_dd, dtype=float)
    n = S.shape[-1]
    Xinv = np.broadcast_to(np.eye(n), S.shape).copy()
    bad = np.zeros(S.shape[:-2], dtype=bool)
    for r in range(n):
        s = S[..., :, r]
        Xs = np.einsum("...ij,...j->...i", Xinv, s)  # X^-1 s_r
        denom = 1.0 + Xs[..., r]  # 1 + trace(X^-1 s_r e_r^T)
        small = np.abs(denom) < tol
        bad |= small
        g = 1.0 / np.where(small, 1.0, denom)
        # X^-1 s_r e_r^T X^-1 = outer(X^-1 s_r, row r of X^-1)
        Xinv = Xinv - g[..., None, None] * Xs[..., :, None] * Xinv[..., r, None, :]
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))
        log.warning("singular rank-one update in %d block(s); using direct inversion", len(idx))
        X = np.eye(n) + S
        if bad.ndim == 0:
            Xinv = np.linalg.inv(X)
        else:
            Xinv[bad] = np.linalg.inv(X[bad])
    return Xinv


@dataclass
class CondensedBlock:
    Hbar: np.ndarray  # (..., 8, 8)
    Gbar: np.ndarray  # (..., 8, 8)
    bbar: np.ndarray  # (..., 8)
    X_inv: np.ndarray  # (..., 4, 4)
    S_bd: np.ndarray  # (..., 8, 4)
    b_dd: np.ndarray  # (..., 4)


def condense(blocks: SubdomainMatrices, S_dd, S_bd, b_dd, b_bd, X_inv=None) -> CondensedBlock:
    """Condensed boundary system Hbar phi_b = Gbar q_b + bbar."""
    if X_inv is None:
        X_inv = hs_inverse(S_dd)
    T = np.einsum("...ij,...jk->...ik", S_bd, X_inv)  # S_bd X^-1
    Hbar = blocks.H_bb - np.einsum("...ij,...jk->...ik", T, blocks.H_db)
    Gbar = blocks.G_bb - np.einsum("...ij,...jk->...ik", T, blocks.G_db)
    bbar = b_bd - np.einsum("...ij,...j->...i", T, b_dd)
    return CondensedBlock(Hbar, Gbar, bbar, X_inv, S_bd, b_dd)


def recover_interior(cond: CondensedBlock, blocks: SubdomainMatrices, phi_b, q_b) -> np.ndarray:
    """Cell values X^-1 (G_db q_b - H_db phi_b + b_dd)."""
    rhs = (
        np.einsum("...ij,...j->...i", blocks.G_db, q_b)
        - np.einsum("...ij,...j->...i", blocks.H_db, phi_b)
        + cond.b_dd
    )
    return np.einsum("...ij,...j->...i", cond.X_inv, rhs)
