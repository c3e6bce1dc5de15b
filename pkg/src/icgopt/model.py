"""Composite problem abstraction.

A :class:`CompositeProblem` bundles the oracles for an objective

    phi(U) = f1(U) + f2(U) + h(U),        U in R^{m x n},

where f1 is smooth on matrices, and f2 and h act on singular values through
absolutely symmetric vector functions f2v and hv.  Blockwise problems are
supported through ``block_grid``: the matrix splits into an equal grid of
blocks and the singular-value vector is the concatenation of the per-block
ones, in row-major block order.

Oracles must be pure functions; instances are immutable and safe to share
across concurrent solver runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import spectral


class InfeasiblePointError(ValueError):
    """An oracle was evaluated where the nonsmooth term is infinite."""


@dataclass(frozen=True)
class CurvatureBounds:
    """Lower/upper curvature (m_i, M_i) of the two smooth terms.

    The contract is -m_i/2 ||u-y||^2 <= f_i(u) - l_{f_i}(u; y) <= M_i/2 ||u-y||^2
    on the domain of h.  The signs of m_i and M_i are unconstrained; only
    finiteness is required.
    """

    m1: float
    M1: float
    m2: float
    M2: float

    def __post_init__(self):
        for name in ("m1", "M1", "m2", "M2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"CurvatureBounds.{name} must be finite")

    @property
    def L1(self) -> float:
        return max(abs(self.m1), abs(self.M1))

    @property
    def L2(self) -> float:
        return max(abs(self.m2), abs(self.M2))

    @property
    def m1_plus(self) -> float:
        return max(self.m1, 0.0)

    @property
    def m2_plus(self) -> float:
        return max(self.m2, 0.0)

    @property
    def M1_plus(self) -> float:
        return max(self.M1, 0.0)

    @property
    def M2_plus(self) -> float:
        return max(self.M2, 0.0)

    def shifted(self, xi: float) -> "CurvatureBounds":
        return CurvatureBounds(self.m1 + xi, self.M1 - xi, self.m2 - xi, self.M2 + xi)


@dataclass(frozen=True)
class FunctionValueBundle:
    phi: float
    f1: float
    f2: float
    h: float


@dataclass(frozen=True)
class CompositeProblem:
    """Oracle bundle for min f1 + f2v(sigma(.)) + hv(sigma(.)).

    ``f2v_value``/``f2v_grad`` and ``hv_value`` take the concatenated
    singular-value vector (length sum of per-block min(p, q)); ``hv_prox``
    is the weighted prox ``hv_prox(c, t) = argmin_u t*hv(u) + ||u-c||^2/2``.
    f2v must be differentiable everywhere and absolutely symmetric within
    each block segment; hv must be proper closed convex.

    ``domain_radius`` is the Frobenius-ball radius of dom h (may be inf);
    ``omega_project`` projects onto a bounded superset of dom h and defaults
    to that same ball (identity when the radius is infinite).
    """

    shape: tuple[int, int]
    f1_value: Callable[[np.ndarray], float]
    f1_grad: Callable[[np.ndarray], np.ndarray]
    f2v_value: Callable[[np.ndarray], float]
    f2v_grad: Callable[[np.ndarray], np.ndarray]
    hv_value: Callable[[np.ndarray], float]
    hv_prox: Callable[[np.ndarray, float], np.ndarray]
    curvature: CurvatureBounds
    domain_radius: float = math.inf
    omega_project: Callable[[np.ndarray], np.ndarray] | None = None
    block_grid: tuple[int, int] = (1, 1)

    def __post_init__(self):
        m, n = self.shape
        gr, gc = self.block_grid
        if m <= 0 or n <= 0:
            raise ValueError(f"shape must be positive, got {self.shape}")
        if gr <= 0 or gc <= 0 or m % gr or n % gc:
            raise ValueError(f"block grid {self.block_grid} does not divide shape {self.shape}")
        if not self.domain_radius > 0:
            raise ValueError("domain_radius must be positive (or inf)")


def block_slices(p: CompositeProblem) -> tuple[tuple[slice, slice], ...]:
    """Row-major (row_slice, col_slice) pairs covering the matrix."""
    m, n = p.shape
    gr, gc = p.block_grid
    bm, bn = m // gr, n // gc
    return tuple(
        (slice(i * bm, (i + 1) * bm), slice(j * bn, (j + 1) * bn))
        for i in range(gr)
        for j in range(gc)
    )


def segment_length(p: CompositeProblem) -> int:
    """Length of each block's singular-value segment."""
    m, n = p.shape
    gr, gc = p.block_grid
    return min(m // gr, n // gc)


def sigma_dim(p: CompositeProblem) -> int:
    gr, gc = p.block_grid
    return gr * gc * segment_length(p)


def _check_shape(p: CompositeProblem, U: np.ndarray, name="U") -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.shape != p.shape:
        raise ValueError(f"{name} has shape {U.shape}, expected {p.shape}")
    return U


def block_sigma(p: CompositeProblem, U) -> np.ndarray:
    """Concatenated per-block singular values of U (one SVD pass)."""
    U = _check_shape(p, U)
    return np.concatenate([spectral.singular_values(U[rs, cs]) for rs, cs in block_slices(p)])


def block_svd(p: CompositeProblem, U) -> tuple[tuple[spectral.SpectralTriple, ...], np.ndarray]:
    """Per-block SVDs plus the concatenated singular-value vector."""
    U = _check_shape(p, U)
    triples = tuple(spectral.svd(U[rs, cs]) for rs, cs in block_slices(p))
    return triples, np.concatenate([t.s for t in triples])


def lift_blocks(p: CompositeProblem, triples, u) -> np.ndarray:
    """Assemble the matrix with segment i lifted into block i's frames."""
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != sigma_dim(p):
        raise ValueError(f"lift_blocks: expected length {sigma_dim(p)}, got {u.shape[0]}")
    out = np.zeros(p.shape)
    seg = segment_length(p)
    for i, (rs, cs) in enumerate(block_slices(p)):
        out[rs, cs] = spectral.lift(triples[i], u[i * seg : (i + 1) * seg])
    return out


def vectorize_blocks(p: CompositeProblem, triples, U) -> np.ndarray:
    """Per-block frame coordinates of U, concatenated."""
    U = _check_shape(p, U)
    return np.concatenate(
        [spectral.vectorize(triples[i], U[rs, cs]) for i, (rs, cs) in enumerate(block_slices(p))]
    )


def phi_eval(p: CompositeProblem, U) -> FunctionValueBundle:
    """Evaluate each term of the objective; h (and phi) may be +inf."""
    U = _check_shape(p, U)
    s = block_sigma(p, U)
    f1 = float(p.f1_value(U))
    f2 = float(p.f2v_value(s))
    h = float(p.hv_value(s))
    return FunctionValueBundle(f1 + f2 + h, f1, f2, h)


def grad_f2_matrix(p: CompositeProblem, U) -> np.ndarray:
    """Gradient of the spectral term f2 = f2v(sigma(.)) at U.

    Uses the chain rule for absolutely symmetric functions: lift the vector
    gradient at sigma(U) back through the singular frames of U.
    """
    triples, s = block_svd(p, U)
    return lift_blocks(p, triples, p.f2v_grad(s))


def grad_smooth(p: CompositeProblem, U) -> np.ndarray:
    """Gradient of f1 + f2 at U."""
    return p.f1_grad(U) + grad_f2_matrix(p, U)


def matrix_h_prox(p: CompositeProblem, C, t: float) -> np.ndarray:
    """Weighted prox of the spectral term h at a matrix point.

    argmin_U t*h(U) + ||U - C||_F^2 / 2, computed by one blockwise SVD and the
    vector prox on the concatenated singular values.
    """
    if t < 0:
        raise ValueError("matrix_h_prox: weight must be nonnegative")
    triples, s = block_svd(p, C)
    return lift_blocks(p, triples, p.hv_prox(s, t))


def project_domain(p: CompositeProblem, U) -> np.ndarray:
    """Projection onto the bounded set containing dom h (radial scaling)."""
    U = _check_shape(p, U)
    if p.omega_project is not None:
        return p.omega_project(U)
    if not math.isfinite(p.domain_radius):
        return U
    nrm = float(np.linalg.norm(U))
    if nrm <= p.domain_radius:
        return U
    return U * (p.domain_radius / nrm)


def shift_convexity(p: CompositeProblem, xi: float) -> CompositeProblem:
    """Move xi/2 ||.||^2 of curvature from f1 into f2; phi is unchanged.

    Since ||sigma(U)||^2 = ||U||_F^2, adding xi/2 ||.||^2 to the vector
    function f2v adds exactly what was subtracted from f1.
    """
    if not xi > 0:
        raise ValueError("shift_convexity: xi must be positive")
    f1v, f1g = p.f1_value, p.f1_grad
    f2v, f2g = p.f2v_value, p.f2v_grad
    return replace(
        p,
        f1_value=lambda U: f1v(U) - 0.5 * xi * float(np.vdot(U, U)),
        f1_grad=lambda U: f1g(U) - xi * U,
        f2v_value=lambda z: f2v(z) + 0.5 * xi * float(z @ z),
        f2v_grad=lambda z: f2g(z) + xi * z,
        curvature=p.curvature.shifted(xi),
    )
