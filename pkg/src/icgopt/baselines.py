"""Exact first-order baselines.

Both methods linearize the full smooth part f1 + f2 and keep only h as the
composite term, so every step is one gradient evaluation plus one exact
spectral prox of h (a blockwise SVD and the vector prox on singular values):

* ``ecg_run``: the classic composite gradient method with a doubling /
  halving backtracking line search on the stepsize;
* ``ag_run``: the three-sequence accelerated gradient scheme for nonconvex
  composite objectives with the fixed stepsize beta_k = 1/(2M).

They report the same residual as the inexact methods, the composite
gradient mapping

    v_hat = (y_prev - y_new) / lam + grad(f1+f2)(y_new) - grad(f1+f2)(y_prev),

which lies in grad(f1+f2)(y_new) + d h(y_new) by prox optimality.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import model
from .model import CompositeProblem
from .icg import IcgOutcome, IcgStatus, RunTrace, residual_denominator


def _smooth_constants(p: CompositeProblem) -> tuple[float, float, float]:
    c = p.curvature
    m = c.m1 + c.m2
    M = c.M1 + c.M2
    return m, M, max(m, M)


@dataclass
class BaselineConfig:
    """Shared configuration for the exact baselines.

    ``lam_init`` defaults to 100/L with L = max(m1+m2, M1+M2); ``beta``
    defaults to 1/(2M) with M = M1+M2.  The backtracking factors gamma_up /
    gamma_down grow the stepsize after acceptance and shrink it on failure.
    """

    rho_hat: float = 1e-6
    lam_init: float | None = None
    gamma_up: float = 2.0
    gamma_down: float = 2.0
    beta: float | None = None
    relative_residual: bool = False
    time_budget: float = math.inf
    iteration_cap: int = 10**8

    def __post_init__(self):
        if not self.rho_hat > 0:
            raise ValueError("rho_hat must be positive")
        if self.gamma_up <= 1 or self.gamma_down <= 1:
            raise ValueError("backtracking factors must exceed 1")
        if not self.time_budget > 0 or self.iteration_cap <= 0:
            raise ValueError("budgets must be positive")


def _smooth_eval(p: CompositeProblem, U):
    """Value and gradient of f1 + f2 at U, sharing one blockwise SVD."""
    triples, s = model.block_svd(p, U)
    val = float(p.f1_value(U)) + float(p.f2v_value(s))
    grad = p.f1_grad(U) + model.lift_blocks(p, triples, p.f2v_grad(s))
    return val, grad, s


def _prox_step(p: CompositeProblem, U, grad, lam: float):
    """Spectral prox of lam*h at U - lam*grad; returns the point and its sigma."""
    triples, s = model.block_svd(p, U - lam * grad)
    u = p.hv_prox(s, lam)
    return model.lift_blocks(p, triples, u), u


def ecg_run(p: CompositeProblem, cfg: BaselineConfig, z0, callback=None) -> IcgOutcome:
    """Exact composite gradient method with backtracking."""
    m, M, L = _smooth_constants(p)
    lam_cap = 1e12 / max(L, 1e-12)
    lam = cfg.lam_init if cfg.lam_init is not None else 100.0 / max(L, 1e-12)
    lam = min(lam, lam_cap)
    denom = residual_denominator(p, z0) if cfg.relative_residual else 1.0
    trace = RunTrace()
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_budget

    y = np.asarray(z0, dtype=float)
    val, grad, _ = _smooth_eval(p, y)
    status = IcgStatus.BUDGET
    pair = None
    for k in range(1, cfg.iteration_cap + 1):
        if time.perf_counter() > deadline:
            break
        n_tries = 0
        while True:
            n_tries += 1
            y_new, u_new = _prox_step(p, y, grad, lam)
            diff = y_new - y
            dist2 = float(np.vdot(diff, diff))
            val_new = float(p.f1_value(y_new)) + float(p.f2v_value(u_new))
            bound = val + float(np.vdot(grad, diff)) + dist2 / (2.0 * lam)
            if val_new <= bound + 1e-10 * (1.0 + abs(val_new)):
                break
            lam /= cfg.gamma_down
            if lam < 1e-18 / max(L, 1.0):
                raise RuntimeError("ECG backtracking underflowed; check curvature bounds")
        val_next, grad_new, _ = _smooth_eval(p, y_new)
        v_hat = (y - y_new) / lam + grad_new - grad
        resid = float(np.linalg.norm(v_hat))
        phi = val_new + float(p.hv_value(u_new))
        rec = trace.append(k, time.perf_counter() - t0, phi, resid, lam, n_tries, "exact")
        if callback is not None:
            callback(rec)
        if resid <= cfg.rho_hat * denom:
            status = IcgStatus.SUCCESS
            pair = (y_new, v_hat)
            break
        y, val, grad = y_new, val_next, grad_new
        lam = min(lam * cfg.gamma_up, lam_cap)
    return IcgOutcome(
        status=status,
        z_hat=None if pair is None else pair[0],
        v_hat=None if pair is None else pair[1],
        trace=trace,
        resid_denominator=denom,
    )


def ag_run(p: CompositeProblem, cfg: BaselineConfig, z0, callback=None) -> IcgOutcome:
    """Accelerated gradient baseline with fixed beta_k = 1/(2M).

    Standard three-sequence scheme: alpha_k = 2/(k+1) mixes the aggregated
    and the monitored sequences, the aggregated point takes the growing step
    lam_k = k*beta/2, and the monitored point takes the fixed step beta.
    """
    _, M, _ = _smooth_constants(p)
    beta = cfg.beta if cfg.beta is not None else 1.0 / (2.0 * max(M, 1e-12))
    denom = residual_denominator(p, z0) if cfg.relative_residual else 1.0
    trace = RunTrace()
    t0 = time.perf_counter()
    deadline = t0 + cfg.time_budget

    x = np.asarray(z0, dtype=float)
    x_ag = x.copy()
    status = IcgStatus.BUDGET
    pair = None
    for k in range(1, cfg.iteration_cap + 1):
        if time.perf_counter() > deadline:
            break
        alpha = 2.0 / (k + 1.0)
        lam_k = 0.5 * k * beta
        x_md = (1.0 - alpha) * x_ag + alpha * x
        _, grad_md, _ = _smooth_eval(p, x_md)
        x, _ = _prox_step(p, x, grad_md, lam_k)
        x_ag, u_ag = _prox_step(p, x_md, grad_md, beta)
        _, grad_ag, _ = _smooth_eval(p, x_ag)
        v_hat = (x_md - x_ag) / beta + grad_ag - grad_md
        resid = float(np.linalg.norm(v_hat))
        phi = float(p.f1_value(x_ag)) + float(p.f2v_value(u_ag)) + float(p.hv_value(u_ag))
        rec = trace.append(k, time.perf_counter() - t0, phi, resid, beta, 1, "exact")
        if callback is not None:
            callback(rec)
        if resid <= cfg.rho_hat * denom:
            status = IcgStatus.SUCCESS
            pair = (x_ag, v_hat)
            break
    return IcgOutcome(
        status=status,
        z_hat=None if pair is None else pair[0],
        v_hat=None if pair is None else pair[1],
        trace=trace,
        resid_denominator=denom,
    )
