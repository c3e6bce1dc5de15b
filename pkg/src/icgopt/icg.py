"""Outer inexact composite gradient methods.

Two static methods share the same skeleton: pick a prox center, solve the
spectral prox subproblem inexactly with the relaxed ACG, verify the
certificate, refine to a stationarity residual, and stop once the residual
is small.  The inner-accelerated (IA) variant recenters on the last inexact
solution; the doubly-accelerated (DA) variant picks centers through a
momentum sequence and keeps a monotone incumbent.

The dynamic wrappers make failure impossible: whenever a static run fails a
certificate check, curvature xi is shifted from f1 to f2 (doubling xi each
time) until the subproblems become convex, warm-starting from the last
iterate.

Practical-mode switches (on by default, off for certificate unit tests):
mu = 1/2 in the inner solver, the data-dependent three-way stopping
relaxation, the frame-slack relaxation of the vector stopping test, a
doubling/halving search for the local upper curvature M, and the adaptive
stepsize rule.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import model
from .model import CompositeProblem
from .racg import (
    AcgBudgetError,
    AcgOutcome,
    AcgStatus,
    CurvatureUnderestimate,
    RefinedPair,
    refine,
)
from .spectral_racg import SpectralSubproblem, build_subproblem, run_subproblem


def _nsq(a) -> float:
    return float(np.vdot(a, a))


class IcgStatus(Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    BUDGET = "budget"


@dataclass
class TraceRecord:
    k: int
    wall_seconds: float
    phi: float
    resid: float
    min_resid: float
    lam: float
    inner_iterations: int
    acg_status: str


class RunTrace:
    """Per-outer-iteration records; the benchmark output of a run."""

    def __init__(self):
        self.records: list[TraceRecord] = []

    def append(self, k, wall_seconds, phi, resid, lam, inner_iterations, acg_status) -> TraceRecord:
        prev = self.records[-1].min_resid if self.records else math.nan
        if math.isnan(resid):
            min_resid = prev
        elif math.isnan(prev):
            min_resid = resid
        else:
            min_resid = min(prev, resid)
        rec = TraceRecord(k, wall_seconds, phi, resid, min_resid, lam, inner_iterations, acg_status)
        self.records.append(rec)
        return rec

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def final_min_resid(self) -> float:
        return self.records[-1].min_resid if self.records else math.nan

    def min_resid_before(self, seconds: float) -> float:
        """min-so-far residual of the last record at or before a deadline."""
        out = math.nan
        for rec in self.records:
            if rec.wall_seconds > seconds:
                break
            out = rec.min_resid
        return out


@dataclass
class IcgConfig:
    """Outer-method configuration.

    The benchmark defaults (xi0, lambda0, theta) = (M1, 5/M1, 1/2) come from
    :meth:`for_problem`; note that 5/M1 violates the static stepsize
    restriction lam*M1 + theta^2 <= 1/2 on purpose and is only admissible
    with ``relax_descent`` on.
    """

    lambda0: float
    theta: float = 0.5
    rho_hat: float = 1e-6
    xi0: float = 1.0
    mu: float = 0.5
    adaptive_lambda: bool = True
    relax_descent: bool = True
    relax_tau: bool = True
    adapt_curvature: bool = True
    relative_residual: bool = False
    time_budget: float = math.inf
    outer_cap: int = 10**7

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not self.rho_hat > 0:
            raise ValueError("rho_hat must be positive")
        if not self.xi0 > 0:
            raise ValueError("xi0 must be positive")
        if not self.time_budget > 0 or self.outer_cap <= 0:
            raise ValueError("budgets must be positive")

    @classmethod
    def for_problem(cls, p: CompositeProblem, **overrides) -> "IcgConfig":
        M1 = p.curvature.M1
        base = {"lambda0": 5.0 / M1, "xi0": M1} if M1 > 0 else {"lambda0": 1.0, "xi0": 1.0}
        base.update(overrides)
        return cls(**base)

    @classmethod
    def strict(cls, lambda0: float, **overrides) -> "IcgConfig":
        """Certificate mode: mu = 1, no relaxations, fixed M and lambda."""
        base = {
            "lambda0": lambda0,
            "mu": 1.0,
            "adaptive_lambda": False,
            "relax_descent": False,
            "relax_tau": False,
            "adapt_curvature": False,
        }
        base.update(overrides)
        return cls(**base)


@dataclass
class IcgOutcome:
    status: IcgStatus
    z_hat: np.ndarray | None
    v_hat: np.ndarray | None
    trace: RunTrace
    resid_denominator: float = 1.0
    xi_final: float | None = None
    restarts: int = 0
    failure_stage: str | None = None


def c_lambda(lam: float, M2_plus: float, L1_local: float, L2_local: float) -> float:
    """Residual amplification constant of the specialized refinement."""
    if not lam > 0:
        raise ValueError("c_lambda: lam must be positive")
    return (1.0 + lam * (M2_plus + L1_local + L2_local)) / math.sqrt(1.0 + lam * M2_plus)


def adaptive_lambda(lam_old: float, r_k: float) -> float:
    """Stepsize rule: hold for balanced ratios, shrink or grow by sqrt(2)."""
    if not lam_old > 0:
        raise ValueError("adaptive_lambda: lam_old must be positive")
    if r_k < 0:
        raise ValueError("adaptive_lambda: r_k must be nonnegative")
    if r_k < 0.5:
        return lam_old * math.sqrt(0.5)
    if r_k > 2.0:
        return lam_old * math.sqrt(2.0)
    return lam_old


def residual_denominator(p: CompositeProblem, Z0) -> float:
    """Normalization for relative stopping: ||grad (f1+f2)(Z0)||_F + 1."""
    return float(np.linalg.norm(model.grad_smooth(p, Z0))) + 1.0


def srp(p: CompositeProblem, lam: float, z, v, x0, M: float | None = None) -> RefinedPair:
    """Specialized refinement: map a subproblem certificate to the objective.

    Refines (z, v) for the prox subproblem at center x0, then converts the
    refined residual into one for phi itself:

        v_hat = (v_r + x0 - z) / lam + grad f1(z_hat) - grad f1(x0),

    which lies in grad f1(z_hat) + grad f2(z_hat) + d h(z_hat).
    """
    if not lam > 0:
        raise ValueError("srp: lam must be positive")
    z = np.asarray(z, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if M is None:
        M = lam * p.curvature.M2_plus + 1.0
    g_x0 = p.f1_grad(x0)

    def psi_s_grad(U):
        return lam * (g_x0 + model.grad_f2_matrix(p, U)) + (U - x0)

    def psi_n_prox(C, t):
        return model.matrix_h_prox(p, C, t * lam)

    rp = refine(z, v, M, psi_s_grad, psi_n_prox)
    v_hat = (rp.v_r + x0 - z) / lam + p.f1_grad(rp.z_r) - g_x0
    return RefinedPair(rp.z_r, v_hat)


# ---------------------------------------------------------------------------
# shared engine


@dataclass
class _RunCtx:
    p: CompositeProblem
    cfg: IcgConfig
    trace: RunTrace
    t0: float
    deadline: float
    denom: float
    lam: float
    k: int = 1
    M_est: float | None = None
    callback: Callable[[TraceRecord], None] | None = None
    on_iterate: Callable[[dict], None] | None = None

    def now(self) -> float:
        return time.perf_counter() - self.t0

    def out_of_budget(self) -> bool:
        return time.perf_counter() > self.deadline or self.k > self.cfg.outer_cap

    def emit(self, rec: TraceRecord):
        if self.callback is not None:
            self.callback(rec)

    def threshold(self) -> float:
        return self.cfg.rho_hat * self.denom


def _check_lambda_restriction(cfg: IcgConfig, curvature: model.CurvatureBounds, lam: float):
    if cfg.relax_descent:
        return
    if lam * curvature.M1 + cfg.theta**2 > 0.5 + 1e-12:
        raise ValueError(
            f"stepsize restriction violated: lam*M1 + theta^2 = "
            f"{lam * curvature.M1 + cfg.theta ** 2:.6g} > 1/2 "
            "(enable relax_descent or reduce lam)"
        )


def _clamped_lambda(cfg: IcgConfig, curvature: model.CurvatureBounds, lam: float) -> float:
    # keep adaptive updates admissible when the restriction is enforced
    if cfg.relax_descent or curvature.M1 <= 0:
        return lam
    return min(lam, (0.5 - cfg.theta**2) / curvature.M1)


def _phi_from_vec(p: CompositeProblem, sub: SpectralSubproblem, out: AcgOutcome) -> float:
    """phi at a lifted inner solution, reusing its frame coordinates."""
    return float(p.f1_value(out.z)) + float(p.f2v_value(out.z_vec)) + float(p.hv_value(out.z_vec))


def _accepts_delta(
    p: CompositeProblem,
    sub: SpectralSubproblem,
    out: AcgOutcome,
    u,
    f2h_u: float,
    mu: float,
) -> bool:
    """Certificate check delta_mu(u; Z, V) <= eps for the current subproblem.

    ``f2h_u`` must equal f2(u) + h(u); the remaining terms are assembled from
    the subproblem's cached linearization data.  The slack absorbs the
    floating-point cancellation of the large lam-scaled values differenced.
    """
    lam = sub.lam
    z_vec = out.z_vec
    psi_Z = (
        lam * (sub.linearized_f1(z_vec) + p.f2v_value(z_vec) + p.hv_value(z_vec))
        + 0.5 * sub.matrix_dist_sq(z_vec)
    )
    ell_u = sub.f1_x0 + float(np.vdot(sub.grad_f1_x0, u - sub.X0))
    psi_u = lam * (ell_u + f2h_u) + 0.5 * _nsq(u - sub.X0)
    gap = psi_Z - psi_u - float(np.vdot(out.v, out.z - u)) + 0.5 * mu * _nsq(u - out.z)
    slack = 1e-9 * (1.0 + abs(out.eps)) + 1e-12 * (abs(psi_Z) + abs(psi_u))
    return gap <= out.eps + slack


def _delta_budget(p: CompositeProblem, sub: SpectralSubproblem, phi_x0: float, M1: float, z_vec):
    """Data-dependent relaxation budget 4*lam*[phi(x0) - l_phi(Z; x0) - M1/2 d^2]."""
    mdist2 = sub.matrix_dist_sq(z_vec)
    ell = sub.linearized_f1(z_vec) + p.f2v_value(z_vec) + p.hv_value(z_vec)
    return 4.0 * sub.lam * (phi_x0 - ell - 0.5 * M1 * mdist2), mdist2


def _make_relaxed_stop(p: CompositeProblem, sub: SpectralSubproblem, phi_x0: float, M1: float):
    # recover f2v + hv at the iterate from the subproblem term values
    # already computed inside the solver loop, avoiding a re-evaluation
    lam = sub.lam
    sigma, x0_vec = sub.sigma, sub.x0_vec
    lin0 = sub.f1_x0 - sub.grad_dot_x0
    g_vec = sub.g_vec
    x0_sq = sub.x0_frob_sq

    def stop(z_vec, r, eta, psi_s_z, psi_n_z):
        zsq = float(z_vec @ z_vec)
        f2h = (psi_s_z + float(sigma @ z_vec) - 0.5 * zsq + psi_n_z) / lam
        ell = lin0 + float(g_vec @ z_vec) + f2h
        mdist2 = zsq - 2.0 * float(z_vec @ x0_vec) + x0_sq
        budget = 4.0 * lam * (phi_x0 - ell - 0.5 * M1 * mdist2)
        tol = budget + 1e-12 * (1.0 + abs(budget))
        return mdist2 <= tol and _nsq(r) <= tol and 2.0 * eta <= tol

    return stop


def _inner_solve(ctx: _RunCtx, sub: SpectralSubproblem, relaxed_stop):
    """One R-ACG call, with the practical doubling/halving search for M.

    The search is capped at the global bound lam*M2+ + 1, where the descent
    check is switched off: a violation there reflects a kink of f2v (which
    the methods tolerate), not an underestimated curvature.
    """
    cfg = ctx.cfg
    kwargs = dict(
        relax_tau=cfg.relax_tau,
        relaxed_stop=relaxed_stop,
        deadline=ctx.deadline,
    )
    if not cfg.adapt_curvature:
        return run_subproblem(sub, **kwargs), sub.M
    floor = cfg.mu * (1.0 + 1e-6)
    base = max(sub.M, floor)
    M_try = min(max(ctx.M_est if ctx.M_est is not None else base, floor), base)
    clean = True
    while True:
        checked = M_try < base * (1.0 - 1e-12)
        try:
            out = run_subproblem(sub, M=M_try, curvature_check=checked, **kwargs)
        except CurvatureUnderestimate:
            clean = False
            M_try = min(2.0 * M_try, base)
            continue
        except AcgBudgetError as err:
            if err.reason == "deadline":
                raise
            # a stalled inner run is treated as a certificate failure so the
            # dynamic wrapper can convexify further instead of aborting
            out = AcgOutcome(AcgStatus.FAILURE, failure_stage="iteration-cap")
        # probe a smaller M next time only after an uncontested call
        ctx.M_est = max(floor, 0.5 * M_try) if clean else M_try
        return out, M_try


def _adapt_lambda(ctx: _RunCtx, p: CompositeProblem, Z, pair: RefinedPair):
    cfg = ctx.cfg
    if not cfg.adaptive_lambda:
        return
    c = p.curvature
    coef = ctx.lam * (c.M2_plus + 2.0 * c.m2_plus) + 1.0
    diff = Z - pair.z_r
    den = float(np.linalg.norm(pair.v_r - coef * diff))
    num = coef * float(np.linalg.norm(diff))
    r_k = math.inf if den <= 1e-300 else num / den
    lam = adaptive_lambda(ctx.lam, r_k)
    # keep the stepsize within a sane window of its initial value
    lam = min(max(lam, 1e-6 * cfg.lambda0), 1e6 * cfg.lambda0)
    ctx.lam = _clamped_lambda(cfg, c, lam)


def _ia_run(ctx: _RunCtx, p: CompositeProblem, z: np.ndarray):
    """Static inner-accelerated loop; returns (status, payload).

    payload: (pair, stage) on success/failure, the warm-start center on
    budget exhaustion.
    """
    cfg = ctx.cfg
    bundle = model.phi_eval(p, z)
    if not math.isfinite(bundle.phi):
        raise ValueError("starting point lies outside dom h")
    phi_z = bundle.phi
    f2h_z = bundle.f2 + bundle.h
    M1 = p.curvature.M1
    while True:
        if ctx.out_of_budget():
            return IcgStatus.BUDGET, z
        sub = build_subproblem(p, ctx.lam, cfg.theta, z, mu=cfg.mu)
        relaxed = _make_relaxed_stop(p, sub, phi_z, M1) if cfg.relax_descent else None
        try:
            out, M_used = _inner_solve(ctx, sub, relaxed)
        except AcgBudgetError as err:
            if err.reason == "deadline":
                return IcgStatus.BUDGET, z
            raise
        if out.status is AcgStatus.FAILURE:
            rec = ctx.trace.append(
                ctx.k, ctx.now(), phi_z, math.nan, ctx.lam, out.inner_iterations,
                f"failure:{out.failure_stage}",
            )
            ctx.emit(rec)
            ctx.k += 1
            return IcgStatus.FAILURE, (z, out.failure_stage)
        if not _accepts_delta(p, sub, out, z, f2h_z, cfg.mu):
            rec = ctx.trace.append(
                ctx.k, ctx.now(), phi_z, math.nan, ctx.lam, out.inner_iterations,
                "failure:delta-outer",
            )
            ctx.emit(rec)
            ctx.k += 1
            return IcgStatus.FAILURE, (z, "delta-outer")

        pair = srp(p, ctx.lam, out.z, out.v, z)
        resid = float(np.linalg.norm(pair.v_r))
        f2h_new = float(p.f2v_value(out.z_vec)) + float(p.hv_value(out.z_vec))
        phi_new = float(p.f1_value(out.z)) + f2h_new
        rec = ctx.trace.append(
            ctx.k, ctx.now(), phi_new, resid, ctx.lam, out.inner_iterations, "success"
        )
        ctx.emit(rec)
        if ctx.on_iterate is not None:
            ctx.on_iterate(
                {
                    "variant": "IA",
                    "k": ctx.k,
                    "x0": z,
                    "z": out.z,
                    "v": out.v,
                    "eps": out.eps,
                    "z_hat": pair.z_r,
                    "v_hat": pair.v_r,
                    "resid": resid,
                    "phi_prev": phi_z,
                    "phi": phi_new,
                    "lam": ctx.lam,
                    "M": M_used,
                }
            )
        ctx.k += 1
        if resid <= ctx.threshold():
            return IcgStatus.SUCCESS, pair
        _adapt_lambda(ctx, p, out.z, pair)
        z = out.z
        phi_z = phi_new
        f2h_z = f2h_new


def _da_run(ctx: _RunCtx, p: CompositeProblem, y: np.ndarray, x: np.ndarray, A: float):
    """Static doubly-accelerated loop; returns (status, payload)."""
    cfg = ctx.cfg
    bundle = model.phi_eval(p, y)
    if not math.isfinite(bundle.phi):
        raise ValueError("starting point lies outside dom h")
    phi_y = bundle.phi
    f2h_y = bundle.f2 + bundle.h
    M1 = p.curvature.M1
    while True:
        if ctx.out_of_budget():
            return IcgStatus.BUDGET, (y, x, A)
        a = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * A))
        A_new = a * a  # equals A + a; squaring keeps the identity exact
        x_tilde = (A * y + a * x) / A_new
        phi_xt = model.phi_eval(p, x_tilde).phi
        sub = build_subproblem(p, ctx.lam, cfg.theta, x_tilde, mu=cfg.mu)
        relaxed = _make_relaxed_stop(p, sub, phi_xt, M1) if cfg.relax_descent else None
        try:
            out, M_used = _inner_solve(ctx, sub, relaxed)
        except AcgBudgetError as err:
            if err.reason == "deadline":
                return IcgStatus.BUDGET, (y, x, A)
            raise
        if out.status is AcgStatus.FAILURE:
            rec = ctx.trace.append(
                ctx.k, ctx.now(), phi_y, math.nan, ctx.lam, out.inner_iterations,
                f"failure:{out.failure_stage}",
            )
            ctx.emit(rec)
            ctx.k += 1
            return IcgStatus.FAILURE, (y, x, A, out.failure_stage)
        if not _accepts_delta(p, sub, out, y, f2h_y, cfg.mu):
            rec = ctx.trace.append(
                ctx.k, ctx.now(), phi_y, math.nan, ctx.lam, out.inner_iterations,
                "failure:delta-outer",
            )
            ctx.emit(rec)
            ctx.k += 1
            return IcgStatus.FAILURE, (y, x, A, "delta-outer")

        pair = srp(p, ctx.lam, out.z, out.v, x_tilde)
        resid = float(np.linalg.norm(pair.v_r))
        phi_ya = _phi_from_vec(p, sub, out)
        # monotone incumbent; ties keep the fresh point
        if phi_ya <= phi_y:
            y_new, phi_new = out.z, phi_ya
            f2h_y = phi_ya - float(p.f1_value(out.z))
        else:
            y_new, phi_new = y, phi_y
        rec = ctx.trace.append(
            ctx.k, ctx.now(), phi_new, resid, ctx.lam, out.inner_iterations, "success"
        )
        ctx.emit(rec)
        if ctx.on_iterate is not None:
            ctx.on_iterate(
                {
                    "variant": "DA",
                    "k": ctx.k,
                    "a": a,
                    "A": A_new,
                    "x_tilde": x_tilde,
                    "x": x,
                    "y_prev": y,
                    "y": y_new,
                    "z": out.z,
                    "v": out.v,
                    "eps": out.eps,
                    "z_hat": pair.z_r,
                    "v_hat": pair.v_r,
                    "resid": resid,
                    "phi": phi_new,
                    "lam": ctx.lam,
                    "M": M_used,
                }
            )
        ctx.k += 1
        if resid <= ctx.threshold():
            return IcgStatus.SUCCESS, pair
        x = model.project_domain(p, x - a * (out.v + x_tilde - out.z))
        _adapt_lambda(ctx, p, out.z, pair)
        y, phi_y, A = y_new, phi_new, A_new


def _new_ctx(p, cfg, z0, callback, on_iterate) -> _RunCtx:
    denom = residual_denominator(p, np.asarray(z0, dtype=float)) if cfg.relative_residual else 1.0
    t0 = time.perf_counter()
    return _RunCtx(
        p=p,
        cfg=cfg,
        trace=RunTrace(),
        t0=t0,
        deadline=t0 + cfg.time_budget,
        denom=denom,
        lam=cfg.lambda0,
        callback=callback,
        on_iterate=on_iterate,
    )


def _finish(ctx: _RunCtx, status: IcgStatus, pair: RefinedPair | None, **extra) -> IcgOutcome:
    return IcgOutcome(
        status=status,
        z_hat=None if pair is None else pair.z_r,
        v_hat=None if pair is None else pair.v_r,
        trace=ctx.trace,
        resid_denominator=ctx.denom,
        **extra,
    )


def static_ia_icg(
    p: CompositeProblem, cfg: IcgConfig, z0, callback=None, on_iterate=None
) -> IcgOutcome:
    """Run the static inner-accelerated method from z0 in dom h."""
    _check_lambda_restriction(cfg, p.curvature, cfg.lambda0)
    ctx = _new_ctx(p, cfg, z0, callback, on_iterate)
    status, payload = _ia_run(ctx, p, np.asarray(z0, dtype=float))
    if status is IcgStatus.SUCCESS:
        return _finish(ctx, status, payload)
    if status is IcgStatus.FAILURE:
        return _finish(ctx, status, None, failure_stage=payload[1])
    return _finish(ctx, status, None)


def static_da_icg(
    p: CompositeProblem, cfg: IcgConfig, y0, callback=None, on_iterate=None
) -> IcgOutcome:
    """Run the static doubly-accelerated method from y0 in dom h."""
    _check_lambda_restriction(cfg, p.curvature, cfg.lambda0)
    ctx = _new_ctx(p, cfg, y0, callback, on_iterate)
    y0 = np.asarray(y0, dtype=float)
    status, payload = _da_run(ctx, p, y0, y0.copy(), 0.0)
    if status is IcgStatus.SUCCESS:
        return _finish(ctx, status, payload)
    if status is IcgStatus.FAILURE:
        return _finish(ctx, status, None, failure_stage=payload[3])
    return _finish(ctx, status, None)


def dynamic_icg(
    variant: str, p: CompositeProblem, cfg: IcgConfig, z0, callback=None, on_iterate=None
) -> IcgOutcome:
    """Dynamic wrapper: double the convexity shift xi on every static failure.

    Warm starts carry the center (IA) or the (y, x, A) momentum state (DA)
    across restarts; lam also carries over, including adaptive updates.
    Given enough budget the outcome is always a success, because a large
    enough xi makes the shifted f2 convex.
    """
    if variant not in ("IA", "DA"):
        raise ValueError(f"unknown variant {variant!r}, expected 'IA' or 'DA'")
    ctx = _new_ctx(p, cfg, z0, callback, on_iterate)
    z0 = np.asarray(z0, dtype=float)
    xi = cfg.xi0
    restarts = 0
    if variant == "IA":
        state = z0
    else:
        state = (z0, z0.copy(), 0.0)
    while True:
        ps = model.shift_convexity(p, xi)
        _check_lambda_restriction(cfg, ps.curvature, ctx.lam)
        if variant == "IA":
            status, payload = _ia_run(ctx, ps, state)
        else:
            status, payload = _da_run(ctx, ps, *state)
        if status is IcgStatus.SUCCESS:
            return _finish(ctx, status, payload, xi_final=xi, restarts=restarts)
        if status is IcgStatus.BUDGET:
            return _finish(ctx, status, None, xi_final=xi, restarts=restarts)
        # certificate failure: transfer more curvature and retry warm-started
        restarts += 1
        if ctx.M_est is not None:
            # the shift raises the f2 curvature by exactly the xi increment
            ctx.M_est += ctx.lam * xi
        xi *= 2.0
        state = payload[0] if variant == "IA" else (payload[0], payload[1], payload[2])
