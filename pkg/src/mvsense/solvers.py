"""Scalar-variance message-passing solvers for occluded sparse reconstruction.

Three variants share one loop over the real-embedded system y ~ (A*V) x:

* ``run_gamp``      -- fixed free-space matrix, occlusion ignored.
* ``run_bilinear``  -- each complex matrix entry carries an independent
                       two-point (present/blocked) prior; no geometry.
* ``run_multiview`` -- hard occlusion estimate recomputed geometrically from
                       the thresholded coefficient estimate each iteration.

All iterates are real; complex measurements occupy interleaved row pairs that
share one occlusion bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .occlusion import OcclusionParams, occlusion_matrices_from_values
from .scene import NodeLayout, PriorParams, VoxelGrid

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny
_VAR_CLAMP = 1e-12


@dataclass
class SolverOptions:
    """Loop controls shared by all solver variants.

    ``misfit_tol`` turns on the channel-misfit stopping test when set; the
    default stopping test is relative change of the coefficient estimate.
    ``sigma_h_floor`` lifts the (otherwise zero) hard-occlusion channel
    variance. ``damping`` convexly blends successive (x, s) iterates; the
    divergence guard escalates it (halving the step, up to ``damping_max``)
    and restarts from the best-fit state instead of aborting outright, and a
    sustained improving stretch relaxes it back down to ``damping_min``.
    ``detect_tol`` gates occlusion re-detection on estimate stability so the
    geometry is recomputed from settled coefficients, not mid-flight ones;
    ``detect_patience`` bounds the wait. With ``debias`` the returned
    coefficients get a final ridge refit on the detected support under the
    final mask, which removes the amplitude bias left by early stopping.
    """

    max_iters: int = 100
    misfit_tol: float | None = None
    damping: float = 0.0
    damping_min: float = 0.0
    damping_max: float = 0.96875
    sigma_h_floor: float = 0.0
    mode: str = "hard-occlusion"
    x_rel_tol: float = 1e-6
    detect_tol: float = 1e-4
    detect_patience: int = 8
    divergence_factor: float = 10.0
    debias: bool = True
    debias_cutoff: float = 0.04  # support cutoff as a fraction of the slab mean

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.misfit_tol is not None and self.misfit_tol <= 0:
            raise ValueError("misfit_tol must be positive when set")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if not 0.0 <= self.damping_min <= self.damping:
            raise ValueError("damping_min must lie in [0, damping]")
        if not self.damping <= self.damping_max < 1.0:
            raise ValueError("damping_max must lie in [damping, 1)")
        if self.sigma_h_floor < 0:
            raise ValueError("sigma_h_floor must be nonnegative")
        if not 0 < self.x_rel_tol <= self.detect_tol:
            raise ValueError("need 0 < x_rel_tol <= detect_tol")
        if self.detect_patience < 1:
            raise ValueError("detect_patience must be >= 1")
        if self.mode not in ("hard-occlusion", "soft-bilinear", "no-occlusion"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class SolverState:
    """Per-iteration message-passing quantities over the real stacked system."""

    x_hat: np.ndarray     # (n_voxels,)
    sigma_x: np.ndarray   # (n_voxels,)
    h_hat: np.ndarray     # (n_rows, n_voxels)
    sigma_h: np.ndarray   # (n_rows, n_voxels)
    s_bar: np.ndarray     # (n_rows,)
    p_bar: np.ndarray | None = None
    sigma_p: np.ndarray | None = None
    sigma_s: np.ndarray | None = None
    r_bar: np.ndarray | None = None
    sigma_r: np.ndarray | None = None
    q_bar: np.ndarray | None = None
    sigma_q: np.ndarray | None = None
    v_est: np.ndarray | None = None  # (n_complex, n_voxels) uint8
    t: int = 0


@dataclass
class ReconstructionResult:
    """Final estimate plus per-iteration diagnostics.

    ``event_iters`` lists the iterations at which the state was restarted
    (mask updates, mask backtracks, divergence-guard reverts); the misfit
    trace shows a transient around each.
    """

    x_hat: np.ndarray
    sigma_x: np.ndarray
    v_est: np.ndarray | None
    converged: bool
    n_iters: int
    stop_reason: str
    misfit_trace: np.ndarray
    mse_trace: np.ndarray | None
    occluded_trace: np.ndarray | None
    event_iters: np.ndarray | None = None

    @property
    def final_misfit(self) -> float:
        return float(self.misfit_trace[-1]) if self.misfit_trace.size else float("nan")

    def write_voxels(self, path) -> None:
        header = "index,x_hat,sigma_x"
        data = np.column_stack([np.arange(self.x_hat.size), self.x_hat, self.sigma_x])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=["%d", "%.17g", "%.17g"])

    def write_trace(self, path) -> None:
        n = self.misfit_trace.size
        mse = self.mse_trace if self.mse_trace is not None else np.full(n, np.nan)
        occ = self.occluded_trace if self.occluded_trace is not None else np.full(n, -1)
        data = np.column_stack([np.arange(1, n + 1), self.misfit_trace, mse, occ])
        np.savetxt(
            path, data, delimiter=",", header="iteration,misfit,mse,occluded_entries",
            comments="", fmt=["%d", "%.17g", "%.17g", "%d"],
        )

    def metadata(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.n_iters,
            "stop_reason": self.stop_reason,
            "final_misfit": self.final_misfit,
        }


def _maybe_scalar(value, *refs):
    if all(np.ndim(r) == 0 for r in refs):
        return float(value)
    return value


def gx_denoise(r_bar, sigma_r, prior: PriorParams):
    """Posterior mean/variance of a coefficient under the spike-and-slab prior.

    Combines the prior with the pseudo-observation N(x; r_bar, sigma_r). The
    slab-Gaussian product has mean m = (mu*sr + r*v0)/(v0+sr) and variance
    v = v0*sr/(v0+sr); the posterior spike weight follows from the two
    marginal likelihoods.
    """
    r = np.asarray(r_bar, dtype=float)
    sr = np.asarray(sigma_r, dtype=float)
    if np.any(sr <= 0):
        raise ValueError("sigma_r must be positive")
    lam, mu, v0 = prior.sparsity, prior.slab_mean, prior.slab_var
    m = (mu * sr + r * v0) / (v0 + sr)
    v = v0 * sr / (v0 + sr)
    if lam == 0.0:
        z = np.zeros_like(r)
        return _maybe_scalar(z, r_bar, sigma_r), _maybe_scalar(np.zeros_like(r), r_bar, sigma_r)
    if lam == 1.0:
        return _maybe_scalar(m, r_bar, sigma_r), _maybe_scalar(v + np.zeros_like(r), r_bar, sigma_r)
    log_slab = -0.5 * np.log(2.0 * np.pi * (v0 + sr)) - (r - mu) ** 2 / (2.0 * (v0 + sr))
    log_spike = -0.5 * np.log(2.0 * np.pi * sr) - r**2 / (2.0 * sr)
    pi = expit(np.log(lam) - np.log1p(-lam) + log_slab - log_spike)
    x_hat = pi * m
    var = pi * v + pi * (1.0 - pi) * m**2
    return _maybe_scalar(x_hat, r_bar, sigma_r), _maybe_scalar(var, r_bar, sigma_r)


def gh_denoise_hard(v, h_free, q_bar=None, sigma_q=None, sigma_h_floor: float = 0.0):
    """Channel posterior under the hard occlusion prior.

    The prior is a point mass at v*h_free, so the pseudo-observation
    (q_bar, sigma_q) cannot move it; arguments are accepted for step parity.
    The returned variance is raised to ``sigma_h_floor``.
    """
    v = np.asarray(v)
    h = np.asarray(h_free, dtype=float)
    mean = np.where(v != 0, h, 0.0)
    var = np.full_like(mean, float(sigma_h_floor), dtype=float)
    return _maybe_scalar(mean, v, h_free), _maybe_scalar(var, v, h_free)


def gh_denoise_soft(rho, h_free, q_bar, sigma_q):
    """Channel posterior under an independent two-point prior per complex entry.

    Each matrix entry is h_free with probability 1-rho and 0 with probability
    rho. Rows come in (Re, Im) pairs sharing one presence weight computed from
    the pair's joint Gaussian likelihood under (q_bar, sigma_q); an infinite
    sigma_q contributes no evidence.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    h = np.asarray(h_free, dtype=float)
    if h.shape[0] % 2 != 0:
        raise ValueError("expected interleaved Re/Im rows (even row count)")
    if rho == 0.0:
        return h.copy(), np.zeros_like(h)
    if rho == 1.0:
        return np.zeros_like(h), np.zeros_like(h)
    q = np.asarray(q_bar, dtype=float)
    sq = np.asarray(sigma_q, dtype=float)
    if np.any(sq <= 0):
        raise ValueError("sigma_q must be positive")
    # log N(q; h, sq) - log N(q; 0, sq) per row, summed over each pair
    with np.errstate(invalid="ignore"):
        delta = (2.0 * q * h - h**2) / (2.0 * sq)
    delta = np.where(np.isfinite(sq), delta, 0.0)
    pair_delta = delta.reshape(-1, 2, *delta.shape[1:]).sum(axis=1)
    w = expit(np.log1p(-rho) - np.log(rho) + pair_delta)
    w_rows = np.repeat(w, 2, axis=0)
    mean = w_rows * h
    var = w_rows * (1.0 - w_rows) * h**2
    return mean, var


def output_posterior(p_bar, sigma_p, h_hat_obs, sigma_w):
    """Gaussian product of the prior-predictive channel and its observation."""
    p = np.asarray(p_bar, dtype=float)
    sp = np.asarray(sigma_p, dtype=float)
    y = np.asarray(h_hat_obs, dtype=float)
    total = sp + sigma_w
    if np.any(total <= 0):
        raise ValueError("sigma_p + sigma_w must be positive")
    mean = (sigma_w * p + sp * y) / total
    var = sp * sigma_w / total
    return _maybe_scalar(mean, p_bar, sigma_p, h_hat_obs), _maybe_scalar(var, p_bar, sigma_p, h_hat_obs)


def residual_step(p_bar, sigma_p, h_hat_obs, sigma_w):
    """Scaled residual mean and variance of the output node."""
    p = np.asarray(p_bar, dtype=float)
    sp = np.asarray(sigma_p, dtype=float)
    y = np.asarray(h_hat_obs, dtype=float)
    total = sp + sigma_w
    if np.any(total <= 0):
        raise ValueError("sigma_p + sigma_w must be positive")
    s = (y - p) / total
    var = 1.0 / total
    return _maybe_scalar(s, p_bar, sigma_p, h_hat_obs), _maybe_scalar(var, p_bar, sigma_p, h_hat_obs)


def p_step(state: SolverState):
    """Prior-predictive channel moments with the memory correction.

    p = h_hat @ x_hat - s_prev * sum_k (sigma_h x^2 + h^2 sigma_x)
    sigma_p = sum_k (sigma_h x^2 + h^2 sigma_x + sigma_h sigma_x)
    """
    h, sh = state.h_hat, state.sigma_h
    x, sx = state.x_hat, state.sigma_x
    h2 = h**2
    x2 = x**2
    cross = sh @ x2 + h2 @ sx
    p_bar = h @ x - state.s_bar * cross
    sigma_p = cross + sh @ sx
    return p_bar, sigma_p


def r_step(state: SolverState, prior: PriorParams):
    """Pseudo-observation of the coefficients from the current residual.

    sigma_r = 1 / sum_k h^2 sigma_s ; r = x (1 - sigma_r sum_k sigma_h sigma_s)
    + sigma_r sum_k h s. Voxels whose matrix column is entirely zero carry no
    information and fall back to the prior moments.
    """
    h, sh = state.h_hat, state.sigma_h
    s, ss = state.s_bar, state.sigma_s
    denom = (h**2).T @ ss
    dead = denom <= 0.0
    with np.errstate(divide="ignore"):
        sigma_r = np.where(dead, np.inf, 1.0 / np.where(dead, 1.0, denom))
    r_bar = state.x_hat * (1.0 - np.where(dead, 0.0, sigma_r) * (sh.T @ ss)) + np.where(dead, 0.0, sigma_r) * (h.T @ s)
    if np.any(dead):
        m0, v0 = prior.moments
        r_bar = np.where(dead, m0, r_bar)
        sigma_r = np.where(dead, max(v0, _VAR_CLAMP), sigma_r)
    neg = sigma_r < 0
    if np.any(neg):
        logger.warning("clamped %d negative sigma_r entries", int(neg.sum()))
        sigma_r = np.where(neg, _VAR_CLAMP, sigma_r)
    return r_bar, sigma_r


def q_step(state: SolverState):
    """Pseudo-observation of the channel entries from the current residual.

    sigma_q = 1 / (x^2 sigma_s); q = h (1 - sigma_q sigma_x sigma_s)
    + sigma_q x s. Columns with x = 0 provide no evidence: sigma_q = inf and
    q is set to 0 (its value is never consumed in that case).
    """
    h = state.h_hat
    x, sx = state.x_hat, state.sigma_x
    s, ss = state.s_bar, state.sigma_s
    x2 = x**2
    live = x2 > 0.0
    denom = np.outer(ss, np.where(live, x2, 1.0))
    with np.errstate(divide="ignore"):
        sigma_q = 1.0 / denom
    q_bar = h * (1.0 - sigma_q * np.outer(ss, sx)) + sigma_q * np.outer(s, x)
    sigma_q = np.where(live[None, :], sigma_q, np.inf)
    q_bar = np.where(live[None, :], q_bar, 0.0)
    return q_bar, sigma_q


def output_loglike(p_bar, sigma_p, h_obs, sigma_w):
    """Log of the Gaussian-convolved output likelihood, log N(h_obs; p, sigma_p + sigma_w)."""
    total = np.asarray(sigma_p, dtype=float) + sigma_w
    return -0.5 * np.log(2.0 * np.pi * total) - (np.asarray(h_obs, float) - np.asarray(p_bar, float)) ** 2 / (2.0 * total)


def check_F_identity(p_bar, sigma_p, h_obs, sigma_w, step: float = 1e-4):
    """Finite-difference residual of d/dsigma F = (1/2)[(dF/dp)^2 + d2F/dp2].

    Both sides are evaluated by central differences of output_loglike; the
    residual vanishes up to discretization error.
    """
    p = np.asarray(p_bar, dtype=float)
    sp = np.asarray(sigma_p, dtype=float)
    if np.any(sp <= 0) or sigma_w < 0:
        raise ValueError("variances must be positive")

    def f(pp, ss):
        return output_loglike(pp, ss, h_obs, sigma_w)

    d1 = (f(p + step, sp) - f(p - step, sp)) / (2.0 * step)
    d2 = (f(p + step, sp) - 2.0 * f(p, sp) + f(p - step, sp)) / step**2
    ds = (f(p, sp + step) - f(p, sp - step)) / (2.0 * step)
    res = np.abs(ds - 0.5 * (d1**2 + d2))
    return _maybe_scalar(res, p_bar, sigma_p)


def _complex_l1(residual_rows: np.ndarray) -> float:
    """Sum of complex moduli over interleaved (Re, Im) row pairs."""
    return float(np.hypot(residual_rows[0::2], residual_rows[1::2]).sum())


def _expand_rows(v_complex: np.ndarray) -> np.ndarray:
    """Duplicate each complex-level occlusion row for its (Re, Im) pair."""
    return np.repeat(v_complex, 2, axis=0)


def _make_redetector(grid: VoxelGrid, layout: NodeLayout, occ_params: OcclusionParams):
    """Geometric occlusion re-detection from a coefficient estimate.

    Caches on the blocker index set: estimates that cross no threshold reuse
    the previous matrices.
    """
    last_idx = None
    last_v = None

    def redetect(x_hat: np.ndarray) -> np.ndarray:
        nonlocal last_idx, last_v
        idx = np.flatnonzero(x_hat > occ_params.coeff_threshold)
        if last_idx is not None and np.array_equal(idx, last_idx):
            return last_v
        mats = occlusion_matrices_from_values(grid, x_hat, layout, occ_params)
        last_idx, last_v = idx, mats.stacked()
        return last_v

    return redetect


_RELAX_AFTER = 4  # improving iterations before the step is allowed to grow back


def _debias_on_support(x_hat, v_est, a_free, y, noise_var, prior, cutoff_frac):
    """Ridge MAP refit of the above-cutoff coefficients under the final mask.

    Solves (B'B + (sigma_w/slab_var) I) x = B'y + (sigma_w/slab_var) * mean
    over the detected support and clips to the physical [0, 1] range; all
    other voxels are set to zero. Zero-norm columns (fully masked voxels)
    stay at zero.
    """
    mat = a_free if v_est is None else a_free * _expand_rows(v_est)
    support = np.flatnonzero(x_hat > cutoff_frac * prior.slab_mean)
    out = np.zeros_like(x_hat)
    if support.size == 0:
        return out
    b = mat[:, support]
    live = np.einsum("ij,ij->j", b, b) > 0.0
    support = support[live]
    if support.size == 0:
        return out
    b = b[:, live]
    ridge = noise_var / prior.slab_var
    gram = b.T @ b + ridge * np.eye(support.size)
    rhs = b.T @ y + ridge * prior.slab_mean
    try:
        sol = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    out[support] = np.clip(sol, 0.0, 1.0)
    return out


def _run_loop(system, prior, opts, *, rho=None, redetect=None, x_true=None, range_mask=None):
    a_free = system.a_free
    y = system.y
    noise_var = system.noise_var
    n_rows, n_vox = a_free.shape
    n_cplx = n_rows // 2
    mode = opts.mode

    m0, v0 = prior.moments
    state = SolverState(
        x_hat=np.full(n_vox, m0),
        sigma_x=np.full(n_vox, max(v0, 0.0)),
        h_hat=a_free.copy(),
        sigma_h=np.zeros_like(a_free),
        s_bar=np.zeros(n_rows),
    )
    if mode == "hard-occlusion":
        state.v_est = np.ones((n_cplx, n_vox), dtype=np.uint8)
        state.sigma_h = np.full_like(a_free, opts.sigma_h_floor)
    elif mode == "soft-bilinear":
        state.h_hat = (1.0 - rho) * a_free
        state.sigma_h = rho * (1.0 - rho) * a_free**2

    misfit_trace: list[float] = []
    mse_trace: list[float] = []
    occ_trace: list[int] = []
    converged = False
    reason = "max-iterations"
    gamma = opts.damping

    # Best-fit snapshot: the committed state with the lowest observed misfit.
    # The divergence guard restarts from it with a harder-damped step; a
    # non-converged run returns it. After a stable improving stretch the step
    # is allowed to grow back toward the configured damping.
    best = None
    best_misfit = np.inf
    ref_misfit = np.inf  # lowest misfit since the last restart/mask change
    last_event = 0
    improving = 0
    gamma_bad = -1.0  # largest step damping seen to diverge under this mask
    pending_flip = None  # last accepted mask change, awaiting fit judgment
    rejected_masks: list[np.ndarray] = []
    events: list[int] = []

    def record(misfit):
        misfit_trace.append(misfit)
        if x_true is not None:
            diff = (x_true - state.x_hat) if range_mask is None else (x_true - state.x_hat)[range_mask]
            mse_trace.append(float(np.mean(diff**2)))
        if state.v_est is not None:
            occ_trace.append(int((state.v_est == 0).sum()))

    t = 0
    for t in range(1, opts.max_iters + 1):
        state.t = t
        p_bar, sigma_p = p_step(state)
        state.p_bar = p_bar
        state.sigma_p = np.maximum(sigma_p, _TINY)
        # Fit metric: observation vs predicted channel. The exact posterior
        # mean tracks the observation whenever sigma_p >> noise, so its gap is
        # not a usable convergence signal; the prior-predictive gap is.
        with np.errstate(invalid="ignore"):
            misfit = _complex_l1(y - p_bar)
        if not np.isfinite(misfit):
            misfit = np.inf
        record(misfit)

        diverging = misfit > opts.divergence_factor * ref_misfit and t - last_event >= 2
        if diverging or np.isinf(misfit):
            if best is not None and gamma < opts.damping_max:
                gamma_bad = max(gamma_bad, gamma)
                gamma = 1.0 - (1.0 - gamma) / 2.0
                if pending_flip is not None and not np.array_equal(best["v"], state.v_est):
                    rejected_masks.append(state.v_est)  # the flip blew up the fit
                pending_flip = None
                state.x_hat, state.sigma_x, state.h_hat, state.sigma_h, state.v_est = (
                    best["x"].copy(), best["sx"].copy(), best["h"].copy(), best["sh"].copy(),
                    None if best["v"] is None else best["v"].copy(),
                )
                state.s_bar = np.zeros(n_rows)
                ref_misfit = np.inf
                last_event = t
                improving = 0
                events.append(t)
                continue
            reason = "diverged"
            break
        if misfit < ref_misfit:
            improving += 1
            if improving >= _RELAX_AFTER:
                relaxed = max(opts.damping_min, 1.0 - (1.0 - gamma) * 1.5)
                if relaxed < gamma and relaxed > gamma_bad:
                    gamma = relaxed
                improving = 0
        else:
            improving = 0
        ref_misfit = min(ref_misfit, misfit)
        if misfit < best_misfit:
            best_misfit = misfit
            best = {
                "x": state.x_hat.copy(), "sx": state.sigma_x.copy(),
                "h": state.h_hat.copy(), "sh": state.sigma_h.copy(),
                "v": None if state.v_est is None else state.v_est.copy(),
            }
        if opts.misfit_tol is not None and misfit <= opts.misfit_tol:
            converged, reason = True, "misfit-tol"
            break

        s_new, sigma_s = residual_step(state.p_bar, state.sigma_p, y, noise_var)
        if gamma > 0.0:
            s_new = (1.0 - gamma) * s_new + gamma * state.s_bar
        state.s_bar, state.sigma_s = s_new, sigma_s
        state.r_bar, state.sigma_r = r_step(state, prior)
        state.q_bar, state.sigma_q = q_step(state)

        x_new, sigma_x_new = gx_denoise(state.r_bar, state.sigma_r, prior)
        if mode == "hard-occlusion":
            h_new, sigma_h_new = gh_denoise_hard(
                _expand_rows(state.v_est), a_free, state.q_bar, state.sigma_q,
                sigma_h_floor=opts.sigma_h_floor,
            )
        elif mode == "soft-bilinear":
            h_new, sigma_h_new = gh_denoise_soft(rho, a_free, state.q_bar, state.sigma_q)
        else:
            h_new, sigma_h_new = state.h_hat, state.sigma_h

        if gamma > 0.0:
            x_new = (1.0 - gamma) * x_new + gamma * state.x_hat

        if not np.all(np.isfinite(x_new)):
            reason = "non-finite"
            break

        x_prev = state.x_hat
        state.x_hat, state.sigma_x = x_new, sigma_x_new
        state.h_hat, state.sigma_h = h_new, sigma_h_new
        rel = float(np.linalg.norm(state.x_hat - x_prev)) / max(float(np.linalg.norm(x_prev)), _TINY)

        if mode == "hard-occlusion" and redetect is not None:
            # era 0 gets twice the patience: the first proposal should come
            # from a reasonably settled estimate
            wait = opts.detect_patience * (2 if not events else 1)
            if rel < opts.detect_tol or t - last_event >= wait:
                if pending_flip is not None:
                    # Judge the last accepted mask on the observable fit: if
                    # its era never approached the previous floor, back out.
                    if ref_misfit > 1.05 * pending_flip["floor"]:
                        rejected_masks.append(state.v_est)
                        state.v_est = pending_flip["mask"]
                        state.h_hat, state.sigma_h = gh_denoise_hard(
                            _expand_rows(state.v_est), a_free, sigma_h_floor=opts.sigma_h_floor
                        )
                        state.s_bar = np.zeros(n_rows)
                        ref_misfit = np.inf
                        last_event = t
                        improving = 0
                        gamma_bad = -1.0
                        pending_flip = None
                        events.append(t)
                        continue
                    pending_flip = None
                v_new = redetect(state.x_hat)  # complex-level; row pairs share the bit
                changed = not np.array_equal(v_new, state.v_est)
                if changed and any(np.array_equal(v_new, r) for r in rejected_masks):
                    changed = False  # known-bad proposal; stay on the current mask
                    v_new = state.v_est
                if changed:
                    # Fresh mask: rebuild the channel estimate around it and
                    # drop the residual memory, which refers to the old matrix.
                    pending_flip = {"mask": state.v_est, "floor": ref_misfit}
                    state.v_est = v_new
                    state.h_hat, state.sigma_h = gh_denoise_hard(
                        _expand_rows(v_new), a_free, sigma_h_floor=opts.sigma_h_floor
                    )
                    state.s_bar = np.zeros(n_rows)
                    ref_misfit = np.inf
                    last_event = t
                    improving = 0
                    gamma_bad = -1.0
                    events.append(t)
                elif rel < opts.x_rel_tol:
                    converged, reason = True, "x-converged"
                    break
        elif rel < opts.x_rel_tol:
            converged, reason = True, "x-converged"
            break

    if not converged and best is not None and best_misfit < np.inf:
        state.x_hat, state.sigma_x, state.v_est = best["x"], best["sx"], best["v"]

    if opts.debias:
        state.x_hat = _debias_on_support(
            state.x_hat, state.v_est, a_free, y, noise_var, prior, opts.debias_cutoff
        )

    return ReconstructionResult(
        x_hat=state.x_hat,
        sigma_x=state.sigma_x,
        v_est=state.v_est,
        converged=converged,
        n_iters=t,
        stop_reason=reason,
        misfit_trace=np.asarray(misfit_trace),
        mse_trace=np.asarray(mse_trace) if x_true is not None else None,
        occluded_trace=np.asarray(occ_trace) if occ_trace else None,
        event_iters=np.asarray(events, dtype=int),
    )


def run_gamp(system, prior: PriorParams, opts: SolverOptions | None = None, x_true=None, range_mask=None) -> ReconstructionResult:
    """Baseline solver on the fixed free-space matrix, occlusion ignored."""
    opts = opts or SolverOptions()
    opts = _with_mode(opts, "no-occlusion")
    return _run_loop(system, prior, opts, x_true=x_true, range_mask=range_mask)


def run_multiview(
    system,
    grid: VoxelGrid,
    layout: NodeLayout,
    prior: PriorParams,
    occ_params: OcclusionParams,
    opts: SolverOptions | None = None,
    x_true=None,
    range_mask=None,
) -> ReconstructionResult:
    """Occlusion-aware solver: hard geometric blockage re-detected per iteration.

    The system must be built over the free-space matrix; the occlusion estimate
    starts all-clear and is refreshed from the thresholded coefficient estimate
    after every update, masking the matrix used by the next iteration.
    """
    opts = opts or SolverOptions()
    if opts.mode == "soft-bilinear":
        raise ValueError("use run_bilinear for the soft variant")
    redetect = _make_redetector(grid, layout, occ_params) if opts.mode == "hard-occlusion" else None
    return _run_loop(system, prior, opts, redetect=redetect, x_true=x_true, range_mask=range_mask)


def run_bilinear(system, prior: PriorParams, rho: float, opts: SolverOptions | None = None, x_true=None, range_mask=None) -> ReconstructionResult:
    """Soft baseline: independent Bernoulli blockage per complex matrix entry.

    No geometric coupling constrains the blockage pattern, so entries are
    inferred purely from the channel fit.
    """
    opts = opts or SolverOptions()
    opts = _with_mode(opts, "soft-bilinear")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    return _run_loop(system, prior, opts, rho=rho, x_true=x_true, range_mask=range_mask)


def _with_mode(opts: SolverOptions, mode: str) -> SolverOptions:
    if opts.mode == mode:
        return opts
    return replace(opts, mode=mode)
