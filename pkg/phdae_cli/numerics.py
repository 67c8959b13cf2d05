import re
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from phdae_cli.error import DimensionMismatch, PhDaeError, SingularMatrix

PIVOT_TOLERANCE = 1e-12


class NonFiniteValue(PhDaeError):
    def __init__(self, operation):
        self.message = f"Non-finite entries (NaN or Inf) in the input of {operation}."

    hint = "The parameters probably diverged; lower the learning rate."


def as_matrix(a, operation='matrix') -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionMismatch(operation, '2-d matrix', f'{a.ndim}-d array')
    return a


def ensure_finite(a, operation):
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue(operation)


@dataclass(frozen=True)
class LuFactors:
    """
    Combined LU storage of a square matrix with its row pivots, as returned by LAPACK getrf.
    """
    lu: np.ndarray
    piv: np.ndarray

    @property
    def size(self) -> int:
        return self.lu.shape[0]

    def lower(self) -> np.ndarray:
        return np.tril(self.lu, k=-1) + np.eye(self.size)

    def upper(self) -> np.ndarray:
        return np.triu(self.lu)

    def permutation(self) -> np.ndarray:
        # row order such that a[perm] == L @ U
        perm = np.arange(self.size)
        for i, p in enumerate(self.piv):
            perm[[i, p]] = perm[[p, i]]
        return perm


def lu_factor(a) -> LuFactors:
    a = as_matrix(a, 'lu_factor')
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch('lu_factor', 'square matrix', f'{a.shape[0]}x{a.shape[1]}')
    ensure_finite(a, 'lu_factor')

    scale = float(np.max(np.linalg.norm(a, axis=1))) if a.size else 0.0
    tolerance = PIVOT_TOLERANCE * scale
    if a.size == 0:
        return LuFactors(lu=a.copy(), piv=np.zeros(0, dtype=np.int32))
    if scale == 0.0:
        raise SingularMatrix(0, 0.0, tolerance)

    with warnings.catch_warnings():
        warnings.simplefilter('error', linalg.LinAlgWarning)
        try:
            lu, piv = linalg.lu_factor(a, check_finite=False)
        except linalg.LinAlgWarning as w:
            # LAPACK reports the exactly zero diagonal entry 1-based
            found = re.search(r'\d+', str(w))
            raise SingularMatrix(int(found.group()) - 1 if found else 0, 0.0, tolerance)
    pivots = np.abs(np.diag(lu))
    below = np.flatnonzero(pivots <= tolerance)
    if below.size:
        i = int(below[0])
        raise SingularMatrix(i, float(lu[i, i]), tolerance)
    return LuFactors(lu=lu, piv=piv)


def _check_rhs(f: LuFactors, b, operation):
    b = np.asarray(b, dtype=np.float64)
    if b.ndim not in (1, 2) or b.shape[0] != f.size:
        raise DimensionMismatch(operation, f'right-hand side with {f.size} rows', f'shape {b.shape}')
    return b


def lu_solve(f: LuFactors, b) -> np.ndarray:
    """
    Solve A x = b. ``b`` may be a vector or carry one column per right-hand side.
    """
    b = _check_rhs(f, b, 'lu_solve')
    if f.size == 0:
        return b.copy()
    return linalg.lu_solve((f.lu, f.piv), b, trans=0, check_finite=False)


def lu_solve_transposed(f: LuFactors, b) -> np.ndarray:
    """
    Solve A^T x = b with the factors of A.
    """
    b = _check_rhs(f, b, 'lu_solve_transposed')
    if f.size == 0:
        return b.copy()
    return linalg.lu_solve((f.lu, f.piv), b, trans=1, check_finite=False)


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[0]:
        raise DimensionMismatch('matmul', f'{a.shape[-1]} rows on the right operand', b.shape[0])
    return a @ b


def add(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch('add', a.shape, b.shape)
    return a + b


def scale(a, s: float) -> np.ndarray:
    return np.asarray(a, dtype=np.float64) * float(s)


def transpose(a) -> np.ndarray:
    return as_matrix(a, 'transpose').T.copy()


def norm2(a) -> float:
    # Euclidean for vectors, Frobenius for matrices
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64).ravel()))
