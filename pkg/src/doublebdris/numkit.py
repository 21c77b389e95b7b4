"""Dense complex linear-algebra helpers.

Matrices are plain ``numpy`` complex arrays. Vectorization is column-stacking
everywhere in the package, so ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
"""

from typing import NamedTuple

import numpy as np

#: default relative tolerance for numerical rank decisions
RANK_RTOL = 1e-8


class SingularSystemError(np.linalg.LinAlgError):
    """A least-squares system lacks the rank its closed form requires."""


class SvdResult(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def embed(self) -> np.ndarray:
        """Rectangular diagonal matrix holding the singular values."""
        m, n = self.U.shape[0], self.V.shape[0]
        s = np.zeros((m, n))
        k = len(self.singular_values)
        s[:k, :k] = np.diag(self.singular_values)
        return s


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    return a


def svd(a) -> SvdResult:
    """Full SVD ``a = U @ diag(s) @ V^H`` with square unitary ``U`` and ``V``.

    Empty dimensions are allowed: a ``0 x n`` matrix yields ``U`` of shape
    ``(0, 0)``, no singular values and ``V = I_n``.
    """
    a = as_matrix(a)
    m, n = a.shape
    if m == 0 or n == 0:
        return SvdResult(np.eye(m, dtype=complex), np.zeros(0), np.eye(n, dtype=complex))
    if not np.all(np.isfinite(a)):
        raise np.linalg.LinAlgError("matrix has non-finite entries")
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    return SvdResult(u, s, vh.conj().T)


def numerical_rank(a, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol * sigma_max``; zero for a zero matrix."""
    if not 0 < rtol < 1:
        raise ValueError("rtol must lie in (0, 1)")
    a = as_matrix(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def vec(a) -> np.ndarray:
    """Column-stacked vectorization, returned as an ``(m*n, 1)`` column."""
    a = as_matrix(a)
    return a.reshape(-1, 1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape {v.size} entries into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``n x n`` unitary matrix.

    QR of a complex standard Gaussian matrix with the phases of ``diag(R)``
    moved into ``Q`` so the draw is uniform and deterministic per stream.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def orthonormal_completion(first_col) -> np.ndarray:
    """Unitary matrix whose first column is ``first_col``.

    The other columns span the orthogonal complement, taken from the
    Householder reflector that maps ``first_col`` onto the ``e_1`` axis.
    """
    u = np.asarray(first_col, dtype=complex).ravel()
    n = u.size
    if n == 0 or abs(np.linalg.norm(u) - 1) > 1e-10:
        raise ValueError("first column must have unit 2-norm")
    phase = u[0] / abs(u[0]) if abs(u[0]) > 0 else 1.0
    w = u.copy()
    w[0] += phase
    h = np.eye(n, dtype=complex) - 2 * np.outer(w, w.conj()) / np.vdot(w, w).real
    # h is Hermitian with h @ e1 = -conj(phase) * u
    q = -phase * h
    q[:, 0] = u
    return q


def ls_solve(a, y, side: str = "left", rtol: float = RANK_RTOL) -> np.ndarray:
    """Least-squares solve through the SVD.

    ``side="left"`` solves ``a @ x ~= y`` for ``x`` with ``a`` of full column
    rank, i.e. ``(a^H a)^{-1} a^H y``. ``side="right"`` solves ``x @ a ~= y``
    with ``a`` of full row rank, i.e. ``y a^H (a a^H)^{-1}``.

    Raises
    ------
    SingularSystemError
        If ``a`` falls short of the required rank at tolerance ``rtol``.
    """
    a = as_matrix(a)
    y = np.asarray(y, dtype=complex)
    if side == "right":
        return ls_solve(a.conj().T, y.conj().T, "left", rtol).conj().T
    if side != "left":
        raise ValueError("side must be 'left' or 'right'")
    m, n = a.shape
    vector_rhs = y.ndim == 1
    y = y.reshape(m, -1) if vector_rhs else y
    if y.shape[0] != m:
        raise ValueError(f"rhs has {y.shape[0]} rows, system has {m}")
    if m < n:
        raise SingularSystemError(f"{m}x{n} system cannot have full column rank")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0 or s[-1] <= rtol * s[0]:
        rank = 0 if s.size == 0 or s[0] == 0 else int(np.count_nonzero(s > rtol * s[0]))
        raise SingularSystemError(f"rank {rank} < {n} columns")
    x = vh.conj().T @ ((u.conj().T @ y) / s[:, None])
    return x.ravel() if vector_rhs else x


def min_norm_lstsq(a, y) -> np.ndarray:
    """Minimum-norm least-squares solution of ``a @ x ~= y`` (any rank)."""
    x, *_ = np.linalg.lstsq(as_matrix(a), np.asarray(y, dtype=complex), rcond=None)
    return x
