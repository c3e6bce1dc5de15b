"""Benchmark problem instances and data plumbing.

Matrix completion (MC) and blockwise matrix completion (BMC) with the
log-sum plus Gaussian-bump regularizer pair acting on singular values.
The total objective is

    ||P_Omega(U - A)||_F^2 / 2 + mu*kappa(sigma) + tau(sigma)   s.t. ||U||_F^2 <= sqrt(l*n)*max|A|

with kappa(z) = (mu*beta/theta) sum log(1 + |z_i|/theta) and, per block,
tau(z) = alpha*beta * (1 - exp(-||z||^2 / (2 theta))).  It is split so that
the smooth spectral term is differentiable everywhere: the l1 weight
w = mu^2*beta/theta^2 cancels the log-sum kink at zero exactly,

    f1(U)  = ||P_Omega(U - A)||_F^2 / 2
    f2v(z) = mu*kappa(z) - w ||z||_1 + sum_blocks tau(z_block)
    hv(z)  = w ||z||_1 + indicator(||z|| <= R),

which gives grad f2v(0) = 0 and the curvature constants

    (m1, M1) = (0, 1),
    m2 = 2*beta*mu/theta^2 + (2*alpha*beta/theta) exp(-3*theta/2),
    M2 = alpha*beta/theta.

Also provided: synthetic block generators (binomial / truncated normal),
the shifted-binomial starting point, the weighted l1-plus-ball prox, and a
ratings CSV loader.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import CompositeProblem, CurvatureBounds


def weighted_l1_ball_prox(c, w: float, R: float) -> np.ndarray:
    """argmin_u w ||u||_1 + indicator(||u|| <= R) + ||u - c||^2 / 2.

    Soft-threshold by w, then scale radially onto the Euclidean ball: for
    the l1 term plus a centered ball the two prox factors compose exactly.
    """
    if w < 0:
        raise ValueError("weighted_l1_ball_prox: weight must be nonnegative")
    if not R > 0:
        raise ValueError("weighted_l1_ball_prox: radius must be positive")
    c = np.asarray(c, dtype=float)
    u = np.sign(c) * np.maximum(np.abs(c) - w, 0.0)
    nrm = float(np.linalg.norm(u))
    if nrm > R:
        u *= R / nrm
    return u


@dataclass(frozen=True)
class BlockLayout:
    """Equal grid of block_rows x block_cols blocks, each of block_shape."""

    block_rows: int
    block_cols: int
    block_shape: tuple[int, int]

    def __post_init__(self):
        p, q = self.block_shape
        if self.block_rows <= 0 or self.block_cols <= 0 or p <= 0 or q <= 0:
            raise ValueError("BlockLayout dimensions must be positive")

    @property
    def total_shape(self) -> tuple[int, int]:
        return (self.block_rows * self.block_shape[0], self.block_cols * self.block_shape[1])

    @property
    def n_blocks(self) -> int:
        return self.block_rows * self.block_cols


@dataclass(frozen=True)
class McParams:
    """Data and hyperparameters of one (B)MC instance.

    ``omega`` is the observation mask (boolean, same shape as A).
    """

    alpha: float
    beta: float
    mu: float
    theta: float
    A: np.ndarray
    omega: np.ndarray
    seed: int = 0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        omega = np.asarray(self.omega, dtype=bool)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "omega", omega)
        if A.ndim != 2:
            raise ValueError("A must be a matrix")
        if omega.shape != A.shape:
            raise ValueError(f"omega shape {omega.shape} does not match A {A.shape}")
        for name in ("alpha", "beta", "mu", "theta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def mc_curvature(params: McParams) -> CurvatureBounds:
    a, b, mu, th = params.alpha, params.beta, params.mu, params.theta
    m2 = 2.0 * b * mu / th**2 + (2.0 * a * b / th) * math.exp(-1.5 * th)
    M2 = a * b / th
    return CurvatureBounds(0.0, 1.0, m2, M2)


def ball_radius(A) -> float:
    """Radius of the feasibility ball ||U||_F^2 <= sqrt(l*n) * max|A_ij|."""
    A = np.asarray(A, dtype=float)
    ln = A.shape[0] * A.shape[1]
    return math.sqrt(math.sqrt(ln) * float(np.max(np.abs(A))))


def _mc_oracles(params: McParams, seg_len: int, n_segments: int):
    """Vector oracles over the concatenated singular-value vector."""
    a, b, mu, th = params.alpha, params.beta, params.mu, params.theta
    log_coef = mu * mu * b / th  # coefficient of the log-sum term in mu*kappa
    w = mu * mu * b / th**2  # l1 weight; cancels the log-sum kink exactly
    ab = a * b
    R = ball_radius(params.A)
    dim = seg_len * n_segments

    def _seg_sq(z):
        if n_segments == 1:
            return float(z @ z)
        return np.einsum("ij,ij->i", z.reshape(n_segments, seg_len), z.reshape(n_segments, seg_len))

    def f2v_value(z):
        z = np.asarray(z, dtype=float)
        az = np.abs(z)
        val = log_coef * float(np.log1p(az / th).sum()) - w * float(az.sum())
        if n_segments == 1:
            return val + ab * (1.0 - math.exp(-float(z @ z) / (2.0 * th)))
        sq = _seg_sq(z)
        return val + ab * float(np.sum(1.0 - np.exp(-sq / (2.0 * th))))

    def f2v_grad(z):
        # log-sum minus its kink: the combined derivative is -w*z/(th+|z|),
        # smooth everywhere and exactly zero at the origin
        z = np.asarray(z, dtype=float)
        g = -w * z / (th + np.abs(z))
        if n_segments == 1:
            bump = (ab / th) * math.exp(-float(z @ z) / (2.0 * th))
            return g + bump * z
        bump = (ab / th) * np.exp(-_seg_sq(z) / (2.0 * th))
        return g + np.repeat(bump, seg_len) * z

    def hv_value(z):
        z = np.asarray(z, dtype=float)
        az = np.abs(z)
        nrm2 = float(z @ z)
        # relative feasibility guard so prox outputs on the boundary stay finite
        if nrm2 > (R * (1.0 + 1e-9)) ** 2 + 1e-12:
            return math.inf
        return w * float(az.sum())

    def hv_prox(c, t):
        return weighted_l1_ball_prox(c, w * t, R)

    return f2v_value, f2v_grad, hv_value, hv_prox, R, dim


def mc_instance(params: McParams) -> CompositeProblem:
    """Single-block matrix completion instance."""
    return bmc_instance(params, BlockLayout(1, 1, params.A.shape))


def bmc_instance(params: McParams, layout: BlockLayout) -> CompositeProblem:
    """Blockwise matrix completion; a 1x1 layout reduces to plain MC."""
    A, omega = params.A, params.omega
    if layout.total_shape != A.shape:
        raise ValueError(f"layout covers {layout.total_shape}, data is {A.shape}")
    if not omega.any():
        raise ValueError("empty observation set")
    seg_len = min(layout.block_shape)
    f2v, f2g, hv, hprox, R, _ = _mc_oracles(params, seg_len, layout.n_blocks)
    mask = omega.astype(float)

    def f1_value(U):
        D = mask * (U - A)
        return 0.5 * float(np.vdot(D, D))

    def f1_grad(U):
        return mask * (U - A)

    return CompositeProblem(
        shape=A.shape,
        f1_value=f1_value,
        f1_grad=f1_grad,
        f2v_value=f2v,
        f2v_grad=f2g,
        hv_value=hv,
        hv_prox=hprox,
        curvature=mc_curvature(params),
        domain_radius=R,
        block_grid=(layout.block_rows, layout.block_cols),
    )


def synth_matrix(
    kind: str,
    layout: BlockLayout,
    density: float = 0.25,
    seed: int = 0,
    block_probs=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic block-structured ratings data.

    Per block, a success probability p ~ Uniform[0,1] is drawn (row-major
    block order, one draw per block from the seeded stream), then entries
    come from Binomial(10, p) or TruncatedNormal(10p, 10p(1-p)) clipped to
    [0, 10].  A fraction ``density`` of cells is kept; the observation set
    is wherever the kept values are nonzero.  ``block_probs`` overrides the
    drawn p values (mainly for tests).
    """
    if kind not in ("binomial", "truncnormal"):
        raise ValueError(f"unknown kind {kind!r}, expected 'binomial' or 'truncnormal'")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    p_blocks = rng.uniform(size=layout.n_blocks) if block_probs is None else np.asarray(
        block_probs, dtype=float
    )
    if p_blocks.shape != (layout.n_blocks,):
        raise ValueError(f"need {layout.n_blocks} block probabilities")
    bp, bq = layout.block_shape
    A = np.zeros(layout.total_shape)
    for idx in range(layout.n_blocks):
        i, j = divmod(idx, layout.block_cols)
        pr = float(p_blocks[idx])
        if kind == "binomial":
            block = rng.binomial(10, pr, size=(bp, bq)).astype(float)
        else:
            mean = 10.0 * pr
            sd = math.sqrt(max(10.0 * pr * (1.0 - pr), 0.0))
            if sd < 1e-12:
                block = np.full((bp, bq), mean)
            else:
                lo, hi = (0.0 - mean) / sd, (10.0 - mean) / sd
                block = stats.truncnorm.rvs(lo, hi, loc=mean, scale=sd, size=(bp, bq), random_state=rng)
        A[i * bp : (i + 1) * bp, j * bq : (j + 1) * bq] = block
    keep = rng.uniform(size=A.shape) < density
    A = np.where(keep, A, 0.0)
    return A, A != 0.0


def starting_point(A, omega, seed: int = 0) -> np.ndarray:
    """Shifted-binomial start that roughly matches the ratings distribution.

    Entries follow Binomial(a, mean/a) - A_min, where mean is the average
    observed rating, a is the ceiling of the ratings range, and A_min the
    minimum observed rating.
    """
    A = np.asarray(A, dtype=float)
    omega = np.asarray(omega, dtype=bool)
    if not omega.any():
        raise ValueError("empty observation set")
    ratings = A[omega]
    mean = float(ratings.mean())
    a_int = max(int(math.ceil(float(ratings.max() - ratings.min()))), 1)
    prob = min(max(mean / a_int, 0.0), 1.0)
    rng = np.random.default_rng(seed)
    return rng.binomial(a_int, prob, size=A.shape).astype(float) - float(ratings.min())


def load_ratings_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read "user_id,item_id,rating" lines into a dense matrix plus mask.

    Ids are 1-based integers; the matrix shape is (max user, max item) with
    zeros off the observation set.  A non-numeric first token on the first
    line is treated as a header.  Duplicate cells keep the last value and
    raise a single warning with the count.
    """
    entries: list[tuple[int, int, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = [tok.strip() for tok in line.split(",")]
            if lineno == 1 and parts:
                try:
                    float(parts[0])
                except ValueError:
                    continue  # header
            if len(parts) != 3:
                raise ValueError(f"{path}: line {lineno}: expected 3 fields, got {len(parts)}")
            try:
                user = int(parts[0])
                item = int(parts[1])
                rating = float(parts[2])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            if user < 1 or item < 1:
                raise ValueError(f"{path}: line {lineno}: ids must be 1-based positive integers")
            entries.append((user - 1, item - 1, rating))
    if not entries:
        raise ValueError(f"{path}: no ratings found")
    rows = max(e[0] for e in entries) + 1
    cols = max(e[1] for e in entries) + 1
    A = np.zeros((rows, cols))
    omega = np.zeros((rows, cols), dtype=bool)
    duplicates = 0
    for i, j, val in entries:
        if omega[i, j]:
            duplicates += 1
        A[i, j] = val
        omega[i, j] = True
    if duplicates:
        warnings.warn(f"{path}: {duplicates} duplicate cell(s); last value wins", stacklevel=2)
    return A, omega
