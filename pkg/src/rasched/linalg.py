"""Dense kernels for upper-triangular generator matrices.

The sojourn-chain generators built by :mod:`rasched.exact` are upper
triangular, so inverses are replaced by back-substitution and the matrix
exponential recomputes its diagonal exactly after every squaring.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

from rasched.errors import DomainError

# Pade degree 13 coefficients and the 1-norm bound below which no scaling is
# needed (Higham, "The scaling and squaring method for the matrix exponential
# revisited", 2005).
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152

_LOW_ORDER = {
    3: ((120.0, 60.0, 12.0, 1.0), 1.495585217958292e-2),
    5: ((30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0), 2.539398330063230e-1),
    7: ((17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0,
         1.0), 9.504178996162932e-1),
    9: ((17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
         2162160.0, 110880.0, 3960.0, 90.0, 1.0), 2.097847961257068),
}


def _check_upper(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    if np.any(np.tril(m, -1) != 0.0):
        raise DomainError("matrix is not upper triangular")
    return m


def _pade_low(a: np.ndarray, coeffs: tuple[float, ...]) -> tuple[np.ndarray, np.ndarray]:
    ident = np.eye(a.shape[0])
    a2 = a @ a
    powers = [ident, a2]
    for _ in range(2, (len(coeffs) + 1) // 2):
        powers.append(powers[-1] @ a2)
    u = sum(coeffs[k] * powers[k // 2] for k in range(len(coeffs) - 1, 0, -2))
    v = sum(coeffs[k] * powers[k // 2] for k in range(len(coeffs) - 2, -1, -2))
    return a @ u, v


def _pade13(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = _PADE13
    ident = np.eye(a.shape[0])
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return u, v


def matrix_exponential(m: np.ndarray) -> np.ndarray:
    """Exponential of an upper-triangular matrix.

    Scaling and squaring with a diagonal Pade approximant of degree 3 to 13.
    Both ``V - U`` and every intermediate power stay upper triangular, so the
    Pade denominator is solved by back-substitution and the diagonal of each
    squared iterate is reset to the exact ``exp`` of the scaled diagonal.

    Raises
    ------
    DomainError
        If ``m`` has non-finite entries or nonzero entries below the diagonal.
    """
    a = _check_upper(m)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    diag = np.diag(a).copy()
    norm = np.abs(a).sum(axis=0).max()
    if norm == 0.0:
        return np.eye(n)

    for order in (3, 5, 7, 9):
        coeffs, theta = _LOW_ORDER[order]
        if norm <= theta:
            u, v = _pade_low(a, coeffs)
            f = solve_triangular(v - u, v + u)
            f[np.diag_indices(n)] = np.exp(diag)
            return np.triu(f)

    s = max(0, int(math.ceil(math.log2(norm / _THETA13))))
    a = a / 2.0**s
    u, v = _pade13(a)
    f = np.triu(solve_triangular(v - u, v + u))
    idx = np.diag_indices(n)
    for k in range(s + 1):
        f[idx] = np.exp(diag / 2.0 ** (s - k))
        if k < s:
            f = np.triu(f @ f)
    return f


def solve_row_upper(v: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """Row vector ``v @ inv(rates)`` for upper-triangular ``rates``."""
    return solve_triangular(rates, v, trans="T")
