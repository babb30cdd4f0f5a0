"""Post-estimation inference on the location of a 2d change point.

Given an interior estimate and refitted quadrant means, the jump profile
collects the four between-quadrant jump vectors

    eta_1 = theta_2 - theta_1,  eta_2 = theta_3 - theta_2,
    eta_3 = theta_3 - theta_4,  eta_4 = theta_1 - theta_4,

their Euclidean sizes ``xi_j``, and the proportion-weighted directional
squared jumps

    xi_w^2 = omega_h * xi_1^2 + (1 - omega_h) * xi_3^2,
    xi_h^2 = omega_w * xi_4^2 + (1 - omega_w) * xi_2^2,

with ``omega_w = (T_w - tau_w) / T_w`` and ``omega_h = (T_h - tau_h) / T_h``.

Two asymptotic regimes drive the confidence intervals.  Under vanishing
jumps the centered estimate converges (after scaling by
``T_h xi_w^2 / sigma_w^2``) to the argmax of a two-sided Brownian motion
with triangular drift, whose distribution function is given in Yao (1987),
"Approximating the distribution of the maximum likelihood estimate of the
change-point in a sequence of independent random variables".  Under
non-vanishing jumps the limit is the integer argmax of a two-sided random
walk with Gaussian increments of mean ``-xi^2`` and variance
``4 xi^2 sigma^2``, whose quantiles are approximated by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .grid import (
    ChangePoint,
    DataGrid,
    QuadrantEstimate,
    quadrant_means,
    quadrant_rects,
    rect_block,
)


class BoundaryChangePointError(ValueError):
    """Raised when inference is requested at a boundary (no-split) estimate."""


@dataclass(frozen=True)
class JumpProfile:
    """Plug-in jump vectors, sizes, and direction-weighted squared jumps."""

    eta: tuple  # four length-p jump vectors
    xi: tuple[float, float, float, float]
    omega_w: float
    omega_h: float
    xi_w2: float
    xi_h2: float
    psi: float  # max_j ||eta_j||_inf, diagnostic only


@dataclass(frozen=True)
class AsymptoticVariances:
    sigma2_w: float
    sigma2_h: float
    cov: np.ndarray


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    margin: float


@dataclass(frozen=True)
class ConfidenceIntervals:
    """Per-axis confidence intervals under both limiting regimes."""

    alpha: float
    vanishing_w: Interval
    vanishing_h: Interval
    nonvanishing_w: Interval
    nonvanishing_h: Interval
    xi_w_inf: float
    xi_h_inf: float


def refit_means(grid: DataGrid, tau: ChangePoint, supports) -> QuadrantEstimate:
    """Unshrunk quadrant means restricted to previously selected supports.

    Component ``k`` of the j-th refitted vector equals the sample quadrant
    mean when ``k`` is in ``supports[j]`` and zero otherwise, removing the
    finite sample bias of the thresholded fit while keeping its selection.
    An empty quadrant with a nonempty declared support is an error.
    """
    supports = tuple(frozenset(s) for s in supports)
    if len(supports) != 4:
        raise ValueError("need one support set per quadrant")
    means = quadrant_means(grid, tau)
    theta = []
    for j, (mean, sup) in enumerate(zip(means, supports)):
        if mean is None:
            if sup:
                raise ValueError(
                    f"quadrant {j + 1} is empty but support {sorted(sup)} is not"
                )
            theta.append(None)
            continue
        out = np.zeros_like(mean)
        if sup:
            idx = sorted(sup)
            if idx[0] < 0 or idx[-1] >= grid.p:
                raise ValueError(f"support indices outside 0..{grid.p - 1}")
            out[idx] = mean[idx]
        theta.append(out)
    return QuadrantEstimate.from_theta(theta)


def jump_profile(
    est: QuadrantEstimate, tau: ChangePoint, dims: tuple[int, int]
) -> JumpProfile:
    """Jump vectors and direction-weighted jump sizes at an interior ``tau``."""
    t_w, t_h = dims
    if tau.is_boundary(t_w, t_h):
        raise BoundaryChangePointError(
            f"jump profile undefined at boundary change point {tau}"
        )
    th = est.theta
    if any(v is None for v in th):
        raise ValueError("all four quadrant means are required")
    eta = (th[1] - th[0], th[2] - th[1], th[2] - th[3], th[0] - th[3])
    xi = tuple(float(np.linalg.norm(v)) for v in eta)
    omega_w = (t_w - tau.tau_w) / t_w
    omega_h = (t_h - tau.tau_h) / t_h
    xi_w2 = omega_h * xi[0] ** 2 + (1.0 - omega_h) * xi[2] ** 2
    xi_h2 = omega_w * xi[3] ** 2 + (1.0 - omega_w) * xi[1] ** 2
    psi = max(float(np.max(np.abs(v))) for v in eta)
    return JumpProfile(
        eta=eta,
        xi=xi,
        omega_w=omega_w,
        omega_h=omega_h,
        xi_w2=xi_w2,
        xi_h2=xi_h2,
        psi=psi,
    )


def sample_covariance(grid: DataGrid, tau: ChangePoint, est: QuadrantEstimate) -> np.ndarray:
    """Pooled residual covariance with quadrant-wise centering.

    ``Sigma_hat = (1/(T_w T_h)) sum_j sum_{Q_j} (x - theta_j)(x - theta_j)^T``
    using the supplied mean estimates; symmetric PSD by construction.
    """
    grid.check_tau(tau)
    if grid.n_cells <= 1:
        raise ValueError("need more than one cell to estimate a covariance")
    cov = np.zeros((grid.p, grid.p))
    for j, rect in enumerate(quadrant_rects(grid.dims, tau)):
        if rect is None:
            continue
        theta = est.theta[j]
        if theta is None:
            raise ValueError(f"quadrant {j + 1} is nonempty but has no mean vector")
        resid = (rect_block(grid, rect) - theta).reshape(-1, grid.p)
        cov += resid.T @ resid
    cov /= grid.n_cells
    return (cov + cov.T) / 2.0


def asymptotic_variances(profile: JumpProfile, cov) -> AsymptoticVariances:
    """Direction-wise limiting variances from the jump profile and a covariance.

    ``sigma2_w = [omega_h eta_1' S eta_1 + (1-omega_h) eta_3' S eta_3] / xi_w^2``
    and symmetrically for height with ``eta_4``/``eta_2`` and ``omega_w``.
    """
    cov = np.asarray(cov, dtype=float)
    if profile.xi_w2 <= 0 or profile.xi_h2 <= 0:
        raise ValueError("directional squared jumps must be positive")
    e1, e2, e3, e4 = profile.eta
    quad = lambda v: float(v @ cov @ v)
    sigma2_w = (profile.omega_h * quad(e1) + (1 - profile.omega_h) * quad(e3)) / profile.xi_w2
    sigma2_h = (profile.omega_w * quad(e4) + (1 - profile.omega_w) * quad(e2)) / profile.xi_h2
    return AsymptoticVariances(sigma2_w=sigma2_w, sigma2_h=sigma2_h, cov=cov)


def _brownian_argmax_cdf(x) -> np.ndarray:
    """CDF of ``argmax_t {W(t) - |t|/2}`` on the nonnegative half line.

    Closed form from Yao (1987); the distribution is symmetric about zero,
    so ``F(-x) = 1 - F(x)``.
    """
    x = np.asarray(x, dtype=float)
    rt = np.sqrt(x)
    return (
        1.0
        + np.sqrt(x / (2.0 * np.pi)) * np.exp(-x / 8.0)
        + 1.5 * np.exp(x) * norm.cdf(-1.5 * rt)
        - 0.5 * (x + 5.0) * norm.cdf(-0.5 * rt)
    )


def brownian_argmax_quantile(alpha: float) -> float:
    """Symmetric ``1 - alpha`` critical value of the Brownian argmax law.

    Returns ``q`` with ``P(|argmax_t {2 W(t) - |t|}| <= q) = 1 - alpha`` by
    numerical inversion of the Yao (1987) distribution function; at
    ``alpha = 0.05`` this evaluates to 11.03.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    target = 1.0 - alpha / 2.0
    if target <= 0.5:
        return 0.0
    hi = 1.0
    while _brownian_argmax_cdf(hi) < target:
        hi *= 2.0
        if hi > 1e9:  # pragma: no cover - CDF reaches any target well before
            raise RuntimeError("quantile bracket failed")
    return float(brentq(lambda q: _brownian_argmax_cdf(q) - target, 0.0, hi, xtol=1e-10))


def drift_horizon(xi_inf: float, sigma2_inf: float) -> int:
    """Truncation horizon for the negative-drift walk.

    Smallest integer ``H`` with ``H * xi^2 >= 10 * sqrt(H * 4 xi^2 sigma^2)``
    (drift at the horizon dominates ten standard deviations), plus a 50-step
    safety pad.
    """
    base = max(1, math.ceil(400.0 * sigma2_inf / (xi_inf**2)))
    return base + 50


_RW_CHUNK = 512  # fixed draw chunk: keeps memory bounded and output stable


def random_walk_argmax_quantile(
    xi_inf: float,
    sigma2_inf: float,
    alpha: float,
    n_draws: int = 4000,
    seed: int | None = None,
) -> int:
    """Monte Carlo quantile of ``|argmax|`` of the negative-drift random walk.

    The two branches of the walk take i.i.d. Gaussian increments with mean
    ``-xi_inf^2`` and variance ``4 xi_inf^2 sigma2_inf``, truncated at
    :func:`drift_horizon`.  Each draw's argmax over the integers breaks
    exact ties toward zero and then toward the negative branch.  Returns the
    empirical ``1 - alpha/2`` quantile (an integer) of the absolute argmax;
    bit-identical across runs for fixed ``(seed, n_draws)``.
    """
    if xi_inf <= 0 or sigma2_inf <= 0:
        raise ValueError("xi_inf and sigma2_inf must be positive")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    if seed is None:
        raise ValueError("a seed is required for reproducible quantiles")

    horizon = drift_horizon(xi_inf, sigma2_inf)
    mu = -(xi_inf**2)
    sd = math.sqrt(4.0 * xi_inf**2 * sigma2_inf)
    rng = np.random.default_rng(seed)

    abs_argmax = np.empty(n_draws, dtype=np.int64)
    for start in range(0, n_draws, _RW_CHUNK):
        nb = min(_RW_CHUNK, n_draws - start)
        pos = np.cumsum(mu + sd * rng.standard_normal((nb, horizon)), axis=1)
        neg = np.cumsum(mu + sd * rng.standard_normal((nb, horizon)), axis=1)
        # evaluate candidates in preference order 0, -1, +1, -2, +2, ...
        # so the first maximum realizes the tie-breaking rule
        pref = np.empty((nb, 2 * horizon + 1))
        pref[:, 0] = 0.0
        pref[:, 1::2] = neg
        pref[:, 2::2] = pos
        k = np.argmax(pref, axis=1)
        abs_argmax[start : start + nb] = (k + 1) // 2
    abs_argmax.sort()
    rank = math.ceil((1.0 - alpha / 2.0) * n_draws)
    rank = min(max(rank, 1), n_draws)
    return int(abs_argmax[rank - 1])


def _split_seed(seed: int, n: int):
    """Deterministic child seeds for the per-axis Monte Carlo streams."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, np.uint64)]


def confidence_intervals(
    tau: ChangePoint,
    profile: JumpProfile,
    variances: AsymptoticVariances,
    dims: tuple[int, int],
    alpha: float = 0.05,
    n_draws: int = 4000,
    seed: int | None = None,
) -> ConfidenceIntervals:
    """Component-wise intervals ``tau +- ME`` under both limiting regimes.

    The vanishing-regime margin is
    ``q_v * sigma2 / (T_other * xi_axis^2)`` with ``q_v`` from
    :func:`brownian_argmax_quantile`; the non-vanishing margin is the Monte
    Carlo random walk quantile at ``xi_inf = sqrt(T_other) * xi_axis``.
    Margins are real valued (vanishing) respectively integer (non-vanishing)
    and the intervals are not rounded.  Inference at a boundary estimate is
    refused.
    """
    t_w, t_h = dims
    if tau.is_boundary(t_w, t_h):
        raise BoundaryChangePointError(
            f"inference refused: change point {tau} lies on the sampling boundary"
        )
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if profile.xi_w2 <= 0 or profile.xi_h2 <= 0:
        raise ValueError("directional squared jumps must be positive for inference")

    q_v = brownian_argmax_quantile(alpha)
    me_v_w = q_v * variances.sigma2_w / (t_h * profile.xi_w2)
    me_v_h = q_v * variances.sigma2_h / (t_w * profile.xi_h2)

    xi_w_inf = math.sqrt(t_h * profile.xi_w2)
    xi_h_inf = math.sqrt(t_w * profile.xi_h2)
    seed_w, seed_h = _split_seed(seed, 2) if seed is not None else (None, None)
    if variances.sigma2_w > 0:
        me_nv_w = random_walk_argmax_quantile(xi_w_inf, variances.sigma2_w, alpha, n_draws, seed_w)
    else:
        me_nv_w = 0  # degenerate noiseless walk: drift only, argmax at 0
    if variances.sigma2_h > 0:
        me_nv_h = random_walk_argmax_quantile(xi_h_inf, variances.sigma2_h, alpha, n_draws, seed_h)
    else:
        me_nv_h = 0

    def interval(center, margin):
        return Interval(lo=center - margin, hi=center + margin, margin=margin)

    return ConfidenceIntervals(
        alpha=alpha,
        vanishing_w=interval(tau.tau_w, me_v_w),
        vanishing_h=interval(tau.tau_h, me_v_h),
        nonvanishing_w=interval(tau.tau_w, float(me_nv_w)),
        nonvanishing_h=interval(tau.tau_h, float(me_nv_h)),
        xi_w_inf=xi_w_inf,
        xi_h_inf=xi_h_inf,
    )
