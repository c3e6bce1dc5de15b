"""Relaxed accelerated composite gradient (R-ACG) inner solver.

Solves min psi_s(u) + psi_n(u) over a generic inner-product space (numpy
arrays of any shape) inexactly, returning a certified triple (z, v, eps):

* when psi_s is mu-strongly convex the triple satisfies the strong
  certificate ``v in d_eps(psi - mu/2 ||.-z||^2)(z)`` together with
  ``||v||^2 + 2 eps <= theta^2 ||z - z0||^2``;
* otherwise the run either certifies the weaker refinement-gap condition
  (``delta_mu`` at the refined point bounded by eps) or stops with an
  explicit failure, never with a silently wrong answer.

The module also provides the one-step refinement that turns such a triple
into a point with a certified stationarity residual.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .model import InfeasiblePointError


class AcgBudgetError(RuntimeError):
    """Iteration cap or deadline exceeded; indicates a bug or a too-small cap,
    not an algorithmic failure."""

    def __init__(self, message: str, reason: str = "iteration-cap"):
        super().__init__(message)
        self.reason = reason


class CurvatureUnderestimate(RuntimeError):
    """The supplied upper curvature M was contradicted at an observed iterate."""


class AcgStatus(Enum):
    SUCCESS = "success"
    FAILURE = "failure"


FAIL_INVARIANT = "invariant-check"
FAIL_DELTA = "delta-check"


def _dot(a, b) -> float:
    return float(np.vdot(a, b))


def _nsq(a) -> float:
    return float(np.vdot(a, a))


@dataclass(frozen=True)
class RefinedPair:
    """(z_r, v_r) with v_r in grad psi_s(z_r) + d psi_n(z_r)."""

    z_r: np.ndarray
    v_r: np.ndarray


@dataclass
class AcgInputs:
    """Problem data for one R-ACG run.

    ``psi_n_prox(c, t)`` must return argmin_u t*psi_n(u) + ||u - c||^2 / 2.
    """

    mu: float
    M: float
    theta: float
    z0: np.ndarray
    psi_s_value: Callable[[np.ndarray], float]
    psi_s_grad: Callable[[np.ndarray], np.ndarray]
    psi_n_value: Callable[[np.ndarray], float]
    psi_n_prox: Callable[[np.ndarray, float], np.ndarray]

    def __post_init__(self):
        if not (self.M > self.mu > 0):
            raise ValueError(f"require M > mu > 0, got M={self.M}, mu={self.mu}")
        if not (0 < self.theta < 1):
            raise ValueError(f"require theta in (0,1), got {self.theta}")
        self.z0 = np.asarray(self.z0, dtype=float)

    def psi_value(self, u) -> float:
        return float(self.psi_s_value(u)) + float(self.psi_n_value(u))


@dataclass
class AcgState:
    """Per-iteration snapshot delivered to callbacks (read-only by contract).

    The aggregated model Gamma_j is stored as constant + linear part; the
    quadratic term mu/2 ||u||^2 is implicit, so Gamma_j can be evaluated
    exactly anywhere via :meth:`model_value`.
    """

    j: int
    B: float
    z: np.ndarray
    zc: np.ndarray
    z_tilde: np.ndarray
    Gamma_const: float
    Gamma_lin: np.ndarray
    r: np.ndarray
    eta: float
    mu: float

    def model_value(self, u) -> float:
        return self.Gamma_const + _dot(self.Gamma_lin, u) + 0.5 * self.mu * _nsq(u)


@dataclass
class AcgOutcome:
    status: AcgStatus
    z: np.ndarray | None = None
    v: np.ndarray | None = None
    eps: float | None = None
    inner_iterations: int = 0
    failure_stage: str | None = None
    # populated by the spectral wrapper: the pre-lift vector certificate
    z_vec: np.ndarray | None = field(default=None, repr=False)
    v_vec: np.ndarray | None = field(default=None, repr=False)


def delta_mu(u, y, v, mu: float, psi_value: Callable[[np.ndarray], float]) -> float:
    """Inexactness gap psi(y) - psi(u) - <v, y-u> + mu/2 ||u-y||^2.

    Nonpositivity over all u certifies v as an exact strongly-convex
    subgradient at y; a small positive bound eps certifies the relaxed
    inclusion with budget eps.
    """
    pu = float(psi_value(u))
    py = float(psi_value(y))
    if not (math.isfinite(pu) and math.isfinite(py)):
        raise InfeasiblePointError("delta_mu: psi is infinite at an argument")
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    return py - pu - _dot(v, y - u) + 0.5 * mu * _nsq(u - y)


def refine(z, v, M: float, psi_s_grad, psi_n_prox) -> RefinedPair:
    """One composite gradient step converting (z, v) into a certified pair.

    z_r minimizes <grad psi_s(z) - v, u> + M/2 ||u - z||^2 + psi_n(u); the
    residual v_r then lies in grad psi_s(z_r) + d psi_n(z_r) by the prox
    optimality condition.
    """
    if not M > 0:
        raise ValueError("refine: M must be positive")
    z = np.asarray(z, dtype=float)
    g = psi_s_grad(z)
    z_r = psi_n_prox(z - (g - v) / M, 1.0 / M)
    v_r = v + M * (z - z_r) + psi_s_grad(z_r) - g
    return RefinedPair(z_r, v_r)


def default_iteration_cap(mu: float, M: float, theta: float) -> int:
    """Safety cap: a constant multiple of the worst-case bound.

    Exceeding it signals a bug (or a caller-supplied cap that is too small),
    never an algorithmic failure.
    """
    k2 = (1.0 + math.sqrt(2.0) / theta) ** 2
    bound = 10.0 * (1.0 + math.sqrt(M / mu)) * math.log(1.0 + M * k2 * (1.0 + mu * k2)) + 100.0
    return int(math.ceil(bound))


def racg_run(
    inputs: AcgInputs,
    *,
    tau: float = 0.0,
    relaxed_stop: Callable[[np.ndarray, np.ndarray, float], bool] | None = None,
    curvature_check: bool = False,
    max_iterations: int | None = None,
    deadline: float | None = None,
    callback: Callable[[AcgState], None] | None = None,
) -> AcgOutcome:
    """Run the relaxed ACG iteration until certification, failure, or budget.

    Each iteration follows the accelerated recursion on (z_j, z_j^c), checks
    a per-iteration invariant whose violation proves psi_s was not strongly
    convex enough (failure stage "invariant-check"), and tests the stopping
    inequality ``||r_j||^2 + 2 eta_j <= theta^2 ||z_j - z0||^2 + tau``.  On
    stopping, the refined point must close the delta gap (failure stage
    "delta-check") before the triple (z_j, r_j, eta_j) is certified.

    ``relaxed_stop(z_j, r_j, eta_j, psi_s_j, psi_n_j)`` grants an additional
    data-dependent way to stop (the last two arguments hand over the
    already-computed term values at z_j); ``tau >= 0`` loosens the default
    test additively.
    ``curvature_check=True`` raises :class:`CurvatureUnderestimate` when the
    local descent bound for M fails at an observed iterate, for callers that
    estimate M by doubling.  ``deadline`` is a ``time.perf_counter`` value.
    """
    mu, M, theta = inputs.mu, inputs.M, inputs.theta
    z0 = inputs.z0
    tau = max(float(tau), 0.0)
    cap = max_iterations if max_iterations is not None else default_iteration_cap(mu, M, theta)

    B = 0.0
    z = z0.copy()
    zc = z0.copy()
    Gamma_const = 0.0
    Gamma_lin = np.zeros_like(z0)
    # Accumulated, B-weighted violations of the upper-curvature bound at the
    # observed steps.  psi_n can carry convex kinks into psi_s (the spectral
    # subproblems do); those violate the descent bound without breaking
    # mu-strong convexity, and the per-iteration invariant degrades by
    # exactly twice this sum, so it must not be read as a failure.
    kink_debt = 0.0

    for j in range(1, cap + 1):
        if deadline is not None and time.perf_counter() > deadline:
            raise AcgBudgetError(f"deadline exceeded at inner iteration {j}", reason="deadline")

        xi = (1.0 + mu * B) / (M - mu)
        b = 0.5 * (xi + math.sqrt(xi * xi + 4.0 * xi * B))
        B_new = B + b
        z_t = (B * z + b * zc) / B_new

        g_t = inputs.psi_s_grad(z_t)
        val_t = float(inputs.psi_s_value(z_t))
        z_new = inputs.psi_n_prox(z_t - g_t / M, 1.0 / M)
        zc_new = (zc - b * (M - mu) * (z_t - z_new) + mu * (B * zc + b * z_new)) / (1.0 + mu * B_new)

        dzt = z_new - z_t
        ell = val_t + _dot(g_t, dzt)
        psis_z = float(inputs.psi_s_value(z_new))
        quad = 0.5 * M * _nsq(dzt)
        # tight slack: an undervalued M inflates B like 1/(M - mu) and must
        # be caught even when the step dzt is already tiny
        descent_slack = 1e-14 * (1.0 + abs(psis_z) + abs(ell)) + 1e-12 * quad
        overshoot = psis_z - ell - quad
        if curvature_check and overshoot > descent_slack:
            raise CurvatureUnderestimate(
                f"M={M} violates the descent bound at inner iteration {j}"
            )

        psin_z = float(inputs.psi_n_value(z_new))
        step = (M - mu) * (z_t - z_new)
        gamma_z = ell + psin_z + 0.5 * mu * _nsq(dzt)
        g_const = gamma_z - _dot(step, z_new) + 0.5 * mu * _nsq(z_new)
        g_lin = step - mu * z_new
        Gamma_const = (B * Gamma_const + b * g_const) / B_new
        Gamma_lin = (B * Gamma_lin + b * g_lin) / B_new

        r = (z0 - zc_new) / B_new + mu * (zc_new - z_new)
        psi_z = psis_z + psin_z
        Gamma_at_zc = Gamma_const + _dot(Gamma_lin, zc_new) + 0.5 * mu * _nsq(zc_new)
        eta = max(
            0.0,
            psi_z - Gamma_at_zc - _dot(r, z_new - zc_new) + 0.5 * mu * _nsq(z_new - zc_new),
        )

        B, z, zc = B_new, z_new, zc_new
        kink_debt += B * max(overshoot, 0.0)
        if callback is not None:
            callback(AcgState(j, B, z, zc, z_t, Gamma_const, Gamma_lin, r, eta, mu))

        dist2 = _nsq(z - z0)
        # Exact-arithmetic inequality in the strongly convex case; the guard
        # absorbs the observed upper-curvature debt plus floating-point
        # cancellation, which scales with B times the values inside eta.
        cancel_scale = 1.0 + abs(psi_z) + abs(Gamma_at_zc)
        invariant_lhs = _nsq(B * r + z - z0) / (1.0 + mu * B) + 2.0 * B * eta
        allowance = 2.0 * kink_debt + 1e-12 * (1.0 + dist2) + 2e-14 * B * cancel_scale
        if invariant_lhs > dist2 + allowance:
            return AcgOutcome(
                AcgStatus.FAILURE, inner_iterations=j, failure_stage=FAIL_INVARIANT
            )

        stop = _nsq(r) + 2.0 * eta <= theta * theta * dist2 + tau
        if not stop and relaxed_stop is not None:
            stop = bool(relaxed_stop(z, r, eta, psis_z, psin_z))
        if stop:
            pair = refine(z, r, M, inputs.psi_s_grad, inputs.psi_n_prox)
            gap = delta_mu(pair.z_r, z, r, mu, inputs.psi_value)
            if gap <= eta + 1e-12 * (1.0 + abs(eta)) + 1e-13 * cancel_scale:
                return AcgOutcome(AcgStatus.SUCCESS, z=z, v=r, eps=eta, inner_iterations=j)
            return AcgOutcome(
                AcgStatus.FAILURE, inner_iterations=j, failure_stage=FAIL_DELTA
            )

    raise AcgBudgetError(f"iteration cap {cap} exceeded without stopping")


def check_problem_a(
    z,
    v,
    eps: float,
    mu: float,
    theta: float,
    z0,
    psi_value: Callable[[np.ndarray], float],
    probes,
    slack: float = 1e-9,
) -> bool:
    """Verify the strong certificate on a finite probe set.

    Checks the stopping inequality ``||v||^2 + 2 eps <= theta^2 ||z - z0||^2``
    and ``delta_mu(u; z, v) <= eps + slack`` for every probe u in dom psi_n.
    """
    lhs = _nsq(v) + 2.0 * eps
    rhs = theta * theta * _nsq(np.asarray(z) - np.asarray(z0))
    if lhs > rhs + 1e-12 * (1.0 + rhs):
        return False
    return all(delta_mu(u, z, v, mu, psi_value) <= eps + slack for u in probes)
