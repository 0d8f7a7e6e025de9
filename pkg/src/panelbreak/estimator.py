"""Break-date estimation: SSR profile, argmin date, confidence interval.

The estimator profiles the sum of squared CCE residuals over candidate
break dates. Two projection modes exist because the theory assigns them
different roles: ESTIMATION projects out (D, X̄) only, while TESTING
additionally projects out the break-interacted proxies (D(b), Z̄(b)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .exceptions import (
    DegenerateScale,
    EmptyCandidateSet,
    InputError,
    RankConditionFailure,
    RankDeficientDesign,
    ZeroBreakMagnitude,
)
from .linalg import (
    Projector,
    compensated_sum_of_squares,
    cross_sectional_average,
)
from .panel import (
    BreakSpec,
    PanelData,
    estimation_candidates,
    post_break_mask,
    z_regressors,
)


class ProjectorMode(Enum):
    ESTIMATION = "estimation"
    TESTING = "testing"


def _scaled_rank(singular_values, shape, data_scale: float) -> int:
    """Numerical rank with the cutoff tied to the raw data scale."""
    tol = max(shape) * np.finfo(float).eps * max(data_scale, np.finfo(float).tiny)
    return int(np.sum(np.asarray(singular_values) > tol))


def projection_columns(panel: PanelData, spec: BreakSpec, b: int, mode: ProjectorMode):
    """Factor-proxy columns to project out of the time dimension."""
    xbar = cross_sectional_average(panel)
    blocks = []
    if panel.d is not None:
        blocks.append(panel.d)
    if mode is ProjectorMode.TESTING:
        mask = post_break_mask(panel.n_periods, b).astype(float)[:, None]
        if panel.d is not None:
            blocks.append(panel.d * mask)
        blocks.append(xbar)
        blocks.append((xbar @ spec.selection) * mask)
    else:
        blocks.append(xbar)
    return np.hstack(blocks)


@dataclass(frozen=True)
class CceFit:
    """Partialled CCE regression at a single candidate date.

    ``residuals`` and ``z_partialled`` are stored in N x T (x r) layout;
    ``z_partialled`` holds the rows of M_X̃ Z̃(b), which is what the HAC
    covariance estimator consumes.
    """

    break_date: int
    mode: ProjectorMode
    delta: np.ndarray
    residuals: np.ndarray
    z_partialled: np.ndarray
    ssr: float
    x_stacked: np.ndarray
    z_stacked: np.ndarray
    y_stacked: np.ndarray


def cce_fit(panel: PanelData, spec: BreakSpec, b: int, mode: ProjectorMode) -> CceFit:
    """Two-step partialled fit of projected y on projected (X, Z(b)).

    Step one partials the projected regressors X̃ out of ỹ and Z̃(b);
    step two regresses the partialled response on the partialled
    break-interacted regressors. By Frisch-Waugh this matches the joint
    stacked OLS coefficients on (X̃, Z̃(b)).
    """
    n, t, k = panel.x.shape
    r = spec.n_breaking
    proj = Projector.from_columns(projection_columns(panel, spec, b, mode), t)
    q = proj.q
    yt = panel.y - (panel.y @ q) @ q.T
    xt = panel.x - np.einsum("inq,tq->int", np.tensordot(panel.x, q, axes=(1, 0)), q).transpose(0, 2, 1)
    z = z_regressors(panel, spec, b)
    zt = z - np.einsum("inq,tq->int", np.tensordot(z, q, axes=(1, 0)), q).transpose(0, 2, 1)
    ys = yt.reshape(-1)
    xs = xt.reshape(n * t, k)
    zs = zt.reshape(n * t, r)
    coef_y, _, _, s_x = np.linalg.lstsq(xs, np.column_stack([ys, zs]), rcond=None)
    # Rank must be judged against the scale of the *unprojected* data:
    # a design annihilated down to rounding noise still looks full rank
    # to lstsq, whose cutoff is relative to the design's own largest
    # singular value.
    rank = _scaled_rank(s_x, xs.shape, np.linalg.norm(panel.x))
    if rank < k:
        msg = f"projected regressors have rank {rank} < k={k} at b={b}"
        if mode is ProjectorMode.TESTING:
            raise RankConditionFailure(msg)
        raise RankDeficientDesign(msg)
    partialled = np.column_stack([ys, zs]) - xs @ coef_y
    ry = partialled[:, 0]
    rz = partialled[:, 1:]
    delta, _, _, s_z = np.linalg.lstsq(rz, ry, rcond=None)
    rank_z = _scaled_rank(s_z, rz.shape, np.linalg.norm(z))
    if rank_z < r:
        msg = f"partialled break regressors have rank {rank_z} < r={r} at b={b}"
        if mode is ProjectorMode.TESTING:
            raise RankConditionFailure(msg)
        raise RankDeficientDesign(msg)
    eps = ry - rz @ delta
    ssr = compensated_sum_of_squares(eps)
    return CceFit(
        break_date=b,
        mode=mode,
        delta=delta,
        residuals=eps.reshape(n, t),
        z_partialled=rz.reshape(n, t, r),
        ssr=ssr,
        x_stacked=xs,
        z_stacked=zs,
        y_stacked=ys,
    )


def ssr_at(panel: PanelData, spec: BreakSpec, b: int, mode: ProjectorMode = ProjectorMode.ESTIMATION) -> float:
    """Sum of squared CCE residuals at candidate date ``b``."""
    return cce_fit(panel, spec, b, mode).ssr


@dataclass(frozen=True)
class SsrProfile:
    """SSR over the candidate set, with the first-argmin index."""

    candidate_dates: tuple
    ssr_values: tuple
    argmin_index: int

    @property
    def b_hat(self) -> int:
        return self.candidate_dates[self.argmin_index]


def estimate_breakpoint(panel: PanelData, spec: BreakSpec) -> SsrProfile:
    """Profile SSR(b) over B = [r, T-r-1]; the estimate is the first argmin.

    Ties are broken towards the smallest date, a deterministic choice
    needed for reproducibility.
    """
    candidates = estimation_candidates(spec, panel.n_periods)
    if not candidates:
        raise EmptyCandidateSet(
            f"no estimation candidates for T={panel.n_periods}, r={spec.n_breaking}"
        )
    ssrs = [cce_fit(panel, spec, b, ProjectorMode.ESTIMATION).ssr for b in candidates]
    argmin = int(np.argmin(ssrs))  # np.argmin returns the first minimum
    return SsrProfile(
        candidate_dates=tuple(candidates),
        ssr_values=tuple(ssrs),
        argmin_index=argmin,
    )


def moment_estimates(panel: PanelData, fit: CceFit):
    """Plug-in moment matrices for the break-date limit distribution.

    Returns (omega_x_hat, phi_x_hat, sigma_eps_i): the average outer
    moment of the raw regressors, its residual-variance-weighted version
    and the per-unit residual variances, taken from the supplied fit.
    """
    n, t, _ = panel.x.shape
    gram = np.einsum("itp,itq->ipq", panel.x, panel.x)
    omega = gram.sum(axis=0) / (n * t)
    sigma_i = np.array([compensated_sum_of_squares(fit.residuals[i]) / t for i in range(n)])
    phi = np.einsum("i,ipq->pq", sigma_i, gram) / (n * t)
    return omega, phi, sigma_i


def interval_half_width(
    delta: np.ndarray,
    selection: np.ndarray,
    omega_x: np.ndarray,
    phi_x: np.ndarray,
    n_units: int,
    c_alpha: float,
) -> int:
    """Half-width floor(c * num / (N * den^2)) + 1 of the date interval."""
    r_omega = selection.T @ omega_x @ selection
    r_phi = selection.T @ phi_x @ selection
    den = float(delta @ r_omega @ delta)
    num = float(delta @ r_phi @ delta)
    if float(delta @ delta) == 0.0:
        raise ZeroBreakMagnitude("estimated break size is zero; interval is infinite")
    if den <= 0.0:
        raise DegenerateScale("quadratic form in omega_x is not positive")
    return int(math.floor(c_alpha * num / (n_units * den * den))) + 1


@dataclass(frozen=True)
class BreakFit:
    """Estimated break date with its confidence interval and coefficients."""

    b_hat: int
    delta_hat: np.ndarray
    theta_hat: np.ndarray
    theta_cov: np.ndarray
    omega_x_hat: np.ndarray
    phi_x_hat: np.ndarray
    sigma_eps_i: np.ndarray
    ci_lower: int
    ci_upper: int
    alpha: float
    ssr_profile: SsrProfile
    ci_clamped: bool = False


def confidence_interval(
    panel: PanelData,
    spec: BreakSpec,
    b_hat: int,
    alpha: float,
    c_alpha: float | None = None,
    fit: CceFit | None = None,
):
    """Confidence interval for the true break date at level 1 - alpha.

    Parameters
    ----------
    c_alpha : float, optional
        The (1 - alpha/2) percentile of the argmax limit law. Looked up
        via :mod:`panelbreak.limits` when omitted.
    fit : CceFit, optional
        Estimation-mode fit at ``b_hat`` (recomputed when omitted).

    Returns
    -------
    (lower, upper, clamped) with endpoints clamped to [1, T-1].
    """
    if not (0.0 < alpha <= 1.0):
        raise InputError("alpha must lie in (0, 1]")
    if fit is None or fit.break_date != b_hat or fit.mode is not ProjectorMode.ESTIMATION:
        fit = cce_fit(panel, spec, b_hat, ProjectorMode.ESTIMATION)
    if c_alpha is None:
        from .limits import argmax_quantile

        c_alpha = argmax_quantile(1.0 - alpha / 2.0)
    omega, phi, _ = moment_estimates(panel, fit)
    if not np.any(fit.delta):
        raise ZeroBreakMagnitude("estimated break size is zero; interval is infinite")
    w = interval_half_width(fit.delta, spec.selection, omega, phi, panel.n_units, c_alpha)
    lower, upper = b_hat - w, b_hat + w
    t_max = panel.n_periods - 1
    clamped = lower < 1 or upper > t_max
    return max(1, lower), min(t_max, upper), clamped


def estimate_theta(panel: PanelData, spec: BreakSpec, b: int):
    """Joint coefficient estimate theta = (beta', delta')' at date ``b``.

    Uses the TESTING-mode projection (the break-interacted proxies must
    be projected out for the slope estimator to be asymptotically
    normal). The covariance is the unit-clustered sandwich
    (W̃'W̃)^{-1} [sum_i W̃_i' e_i e_i' W̃_i] (W̃'W̃)^{-1}.
    """
    n, t, k = panel.x.shape
    r = spec.n_breaking
    fit = cce_fit(panel, spec, b, ProjectorMode.TESTING)
    ws = np.hstack([fit.x_stacked, fit.z_stacked])
    theta, _, _, s_w = np.linalg.lstsq(ws, fit.y_stacked, rcond=None)
    rank = _scaled_rank(s_w, ws.shape, np.linalg.norm(panel.x))
    if rank < k + r:
        raise RankConditionFailure(
            f"joint projected design has rank {rank} < {k + r} at b={b}"
        )
    resid = (fit.y_stacked - ws @ theta).reshape(n, t)
    w_blocks = ws.reshape(n, t, k + r)
    bread = np.linalg.inv(ws.T @ ws)
    scores = np.einsum("itp,it->ip", w_blocks, resid)
    meat = scores.T @ scores
    cov = bread @ meat @ bread
    return theta, cov


def fit_break(
    panel: PanelData,
    spec: BreakSpec,
    alpha: float = 0.05,
    c_alpha: float | None = None,
) -> BreakFit:
    """Full dating pipeline: profile, argmin, interval, coefficients."""
    profile = estimate_breakpoint(panel, spec)
    b_hat = profile.b_hat
    fit = cce_fit(panel, spec, b_hat, ProjectorMode.ESTIMATION)
    omega, phi, sigma_i = moment_estimates(panel, fit)
    lower, upper, clamped = confidence_interval(
        panel, spec, b_hat, alpha, c_alpha=c_alpha, fit=fit
    )
    theta, cov = estimate_theta(panel, spec, b_hat)
    return BreakFit(
        b_hat=b_hat,
        delta_hat=fit.delta,
        theta_hat=theta,
        theta_cov=cov,
        omega_x_hat=omega,
        phi_x_hat=phi,
        sigma_eps_i=sigma_i,
        ci_lower=lower,
        ci_upper=upper,
        alpha=alpha,
        ssr_profile=profile,
        ci_clamped=clamped,
    )
