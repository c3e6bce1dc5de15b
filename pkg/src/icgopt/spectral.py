"""Dense linear algebra specialized to singular-value structure.

Everything a spectral solver needs from LAPACK lives here: the SVD
factorization bundled as a :class:`SpectralTriple`, the diagonal
embedding/extraction maps ``dg`` / ``diag_extract``, lifting a vector back
into a fixed pair of singular frames, and the epsilon-subdifferential
transfer value between a matrix and its singular-value vector.

All functions are pure; concurrent callers may share inputs freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ~100x double-precision epsilon, scaled by the Frobenius norm at the call
# sites that use them.
RECONSTRUCTION_TOL = 1e-10
ORTHONORMALITY_TOL = 1e-10


@dataclass(frozen=True)
class SpectralTriple:
    """Economy SVD factors ``(P, s, Q)`` with ``Z = P @ dg(s) @ Q.T``.

    ``P`` is m-by-r and ``Q`` is n-by-r with orthonormal columns, where
    r = min(m, n); ``s`` holds the singular values in nonincreasing order.
    When singular values tie, any orthonormal completion is acceptable:
    every downstream use is invariant to the choice.
    """

    P: np.ndarray
    s: np.ndarray
    Q: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.P.shape[0], self.Q.shape[0])

    @property
    def rank_bound(self) -> int:
        return self.s.shape[0]


def _as_matrix(Z, name="Z") -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError(f"{name} must be a 2-d array, got ndim={Z.ndim}")
    return Z


def svd(Z) -> SpectralTriple:
    """Factor ``Z = P dg(s) Q^T`` with s nonincreasing and nonnegative.

    The all-zero matrix gets the fixed convention ``s = 0`` with identity
    frames, which avoids exercising LAPACK's undefined sign choices.
    """
    Z = _as_matrix(Z)
    if not np.all(np.isfinite(Z)):
        raise ValueError("svd: input has non-finite entries")
    m, n = Z.shape
    r = min(m, n)
    if r == 0 or not Z.any():
        return SpectralTriple(np.eye(m, r), np.zeros(r), np.eye(n, r))
    U, s, Vh = np.linalg.svd(Z, full_matrices=False)
    return SpectralTriple(np.ascontiguousarray(U), s, np.ascontiguousarray(Vh.T))


def singular_values(Z) -> np.ndarray:
    """Singular values only (no frames), nonincreasing."""
    Z = _as_matrix(Z)
    if not np.all(np.isfinite(Z)):
        raise ValueError("singular_values: input has non-finite entries")
    if min(Z.shape) == 0 or not Z.any():
        return np.zeros(min(Z.shape))
    return np.linalg.svd(Z, compute_uv=False)


def dg(z, rows: int, cols: int) -> np.ndarray:
    """Embed a vector on the leading diagonal of a rows-by-cols zero matrix."""
    z = np.asarray(z, dtype=float).ravel()
    r = min(rows, cols)
    if z.shape[0] != r:
        raise ValueError(f"dg: expected length {r}, got {z.shape[0]}")
    out = np.zeros((rows, cols))
    out[np.arange(r), np.arange(r)] = z
    return out


def diag_extract(Z) -> np.ndarray:
    """Leading diagonal of a rectangular matrix, length min(m, n)."""
    return np.array(_as_matrix(Z).diagonal(), dtype=float)


def lift(t: SpectralTriple, u) -> np.ndarray:
    """Return ``P dg(u) Q^T`` in the frames of ``t``."""
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != t.rank_bound:
        raise ValueError(f"lift: expected length {t.rank_bound}, got {u.shape[0]}")
    return (t.P * u) @ t.Q.T


def vectorize(t: SpectralTriple, U) -> np.ndarray:
    """Return ``Dg(P^T U Q)``, the frame coordinates of ``U``."""
    U = _as_matrix(U, "U")
    if U.shape != t.shape:
        raise ValueError(f"vectorize: shape {U.shape} does not match frame {t.shape}")
    return np.einsum("mi,mn,ni->i", t.P, U, t.Q)


def eps_transfer(S, Z, eps: float) -> float:
    """Inexactness budget left after moving a subgradient to singular values.

    For an absolutely symmetric function, ``S`` lies in the eps-subdifferential
    at ``Z`` exactly when ``sigma(S)`` lies in the eps(S)-subdifferential at
    ``sigma(Z)`` with::

        eps(S) = eps - [<sigma(Z), sigma(S)> - <Z, S>]

    The bracketed trace gap is nonnegative (von Neumann), so the result stays
    above ``-1e-10`` in floating point whenever ``eps >= 0``.
    """
    S = _as_matrix(S, "S")
    Z = _as_matrix(Z, "Z")
    if S.shape != Z.shape:
        raise ValueError(f"eps_transfer: shapes differ, {S.shape} vs {Z.shape}")
    if eps < 0:
        raise ValueError("eps_transfer: eps must be nonnegative")
    gap = float(singular_values(Z) @ singular_values(S)) - float(np.vdot(Z, S))
    return float(eps) - gap
