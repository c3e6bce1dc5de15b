"""Spectral reduction of the matrix prox subproblem to a vector one.

Each outer iteration of the composite gradient methods must inexactly solve

    min_U  lam * [ l_{f1}(U; X0) + f2(U) + h(U) ] + ||U - X0||_F^2 / 2.

With f2 and h spectral, one (blockwise) SVD of ``X0 - lam * grad f1(X0)``
turns this into a problem over singular-value vectors: run the generic
R-ACG there, then lift the certified triple back through the same frames.
The certificate transfers with eps unchanged because all lifted quantities
share one simultaneous SVD.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import model
from .model import CompositeProblem
from .racg import AcgInputs, AcgOutcome, AcgStatus, racg_run


def _nsq(a) -> float:
    return float(np.vdot(a, a))


@dataclass
class SpectralSubproblem:
    """One prox subproblem, reduced to vector form.

    ``x0_vec`` holds the frame coordinates of the prox center X0; since the
    frames diagonalize ``X0_lam`` rather than X0, ``||x0_vec|| <= ||X0||_F``
    and the slack ``tau_relax = theta^2 (||X0||_F^2 - ||x0_vec||^2) >= 0``
    is exactly what the vector-space stopping inequality may be loosened by
    while still certifying the matrix-space one.
    """

    lam: float
    theta: float
    mu: float
    M: float
    X0: np.ndarray
    X0_lam: np.ndarray
    triples: tuple
    sigma: np.ndarray
    x0_vec: np.ndarray
    tau_relax: float
    psi_s_value: Callable[[np.ndarray], float]
    psi_s_grad: Callable[[np.ndarray], np.ndarray]
    psi_n_value: Callable[[np.ndarray], float]
    psi_n_prox: Callable[[np.ndarray, float], np.ndarray]
    # precomputed scalars for outer-level checks expressed in frame coordinates
    f1_x0: float
    grad_f1_x0: np.ndarray
    g_vec: np.ndarray
    grad_dot_x0: float
    x0_frob_sq: float

    def lift(self, u) -> np.ndarray:
        return model.lift_blocks(self._problem, self.triples, u)

    def matrix_dist_sq(self, u) -> float:
        """||lift(u) - X0||_F^2 without forming the lift."""
        u = np.asarray(u, dtype=float)
        return _nsq(u) - 2.0 * float(u @ self.x0_vec) + self.x0_frob_sq

    def linearized_f1(self, u) -> float:
        """l_{f1}(lift(u); X0) evaluated in frame coordinates."""
        return self.f1_x0 + float(self.g_vec @ np.asarray(u, dtype=float)) - self.grad_dot_x0

    _problem: CompositeProblem = None


def build_subproblem(
    p: CompositeProblem, lam: float, theta: float, X0, mu: float = 1.0
) -> SpectralSubproblem:
    """Assemble the vector subproblem at prox center X0 with stepsize lam.

    The vector oracles are

        psi_s(u) = lam * f2v(u) - <sigma(X0_lam), u> + ||u||^2 / 2,
        psi_n(u) = lam * hv(u),

    with mu as given and M = lam * max(M2, 0) + 1.
    """
    if not lam > 0:
        raise ValueError("build_subproblem: lam must be positive")
    X0 = np.asarray(X0, dtype=float)
    if not np.all(np.isfinite(X0)):
        raise ValueError("build_subproblem: X0 has non-finite entries")
    grad_f1_x0 = p.f1_grad(X0)
    X0_lam = X0 - lam * grad_f1_x0
    triples, sigma = model.block_svd(p, X0_lam)
    x0_vec = model.vectorize_blocks(p, triples, X0)
    x0_frob_sq = _nsq(X0)
    tau_relax = theta * theta * (x0_frob_sq - _nsq(x0_vec))

    f2v, f2g = p.f2v_value, p.f2v_grad
    hv, hprox = p.hv_value, p.hv_prox

    def psi_s_value(u):
        return lam * f2v(u) - float(sigma @ u) + 0.5 * _nsq(u)

    def psi_s_grad(u):
        return lam * f2g(u) - sigma + u

    def psi_n_value(u):
        return lam * hv(u)

    def psi_n_prox(c, t):
        return hprox(c, t * lam)

    return SpectralSubproblem(
        lam=lam,
        theta=theta,
        mu=mu,
        # a larger M is always a valid upper bound; keep M > mu strictly
        M=max(lam * p.curvature.M2_plus + 1.0, mu * (1.0 + 1e-6)),
        X0=X0,
        X0_lam=X0_lam,
        triples=triples,
        sigma=sigma,
        x0_vec=x0_vec,
        tau_relax=tau_relax,
        psi_s_value=psi_s_value,
        psi_s_grad=psi_s_grad,
        psi_n_value=psi_n_value,
        psi_n_prox=psi_n_prox,
        f1_x0=float(p.f1_value(X0)),
        grad_f1_x0=grad_f1_x0,
        g_vec=model.vectorize_blocks(p, triples, grad_f1_x0),
        grad_dot_x0=float(np.vdot(grad_f1_x0, X0)),
        x0_frob_sq=x0_frob_sq,
        _problem=p,
    )


def run_subproblem(
    sub: SpectralSubproblem,
    *,
    relax_tau: bool = True,
    M: float | None = None,
    relaxed_stop=None,
    curvature_check: bool = False,
    max_iterations: int | None = None,
    deadline: float | None = None,
    callback=None,
) -> AcgOutcome:
    """Solve the vector subproblem and lift the certificate back to matrices.

    On success the outcome carries (Y, V, eps) with Y, V sharing the frames
    of X0_lam; the pre-lift vectors stay available as ``z_vec``/``v_vec``.
    ``M`` overrides the default curvature bound (used by the outer line
    search); ``relax_tau`` loosens the vector stopping test by exactly the
    frame slack, which is equivalent to running the test in matrix space.
    """
    inputs = AcgInputs(
        mu=sub.mu,
        M=sub.M if M is None else M,
        theta=sub.theta,
        z0=sub.x0_vec,
        psi_s_value=sub.psi_s_value,
        psi_s_grad=sub.psi_s_grad,
        psi_n_value=sub.psi_n_value,
        psi_n_prox=sub.psi_n_prox,
    )
    out = racg_run(
        inputs,
        tau=sub.tau_relax if relax_tau else 0.0,
        relaxed_stop=relaxed_stop,
        curvature_check=curvature_check,
        max_iterations=max_iterations,
        deadline=deadline,
        callback=callback,
    )
    if out.status is AcgStatus.FAILURE:
        return out
    return AcgOutcome(
        AcgStatus.SUCCESS,
        z=sub.lift(out.z),
        v=sub.lift(out.v),
        eps=out.eps,
        inner_iterations=out.inner_iterations,
        z_vec=out.z,
        v_vec=out.v,
    )


def spectral_racg_run(
    p: CompositeProblem,
    lam: float,
    theta: float,
    X0,
    relax_tau: bool = True,
    *,
    mu: float = 1.0,
    **run_kwargs,
) -> AcgOutcome:
    """Convenience wrapper: build the subproblem at X0 and solve it."""
    sub = build_subproblem(p, lam, theta, X0, mu=mu)
    return run_subproblem(sub, relax_tau=relax_tau, **run_kwargs)
