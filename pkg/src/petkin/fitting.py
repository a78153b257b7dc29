"""Bounded non-linear least squares and Patlak estimation for TACs.

fit_tac wraps scipy's trust-region-reflective least_squares around the
closed-form forward model with an analytic Jacobian; fit_voxelwise and
fit_voi are the per-voxel and per-region drivers. patlak implements the
graphical late-time linearization whose slope estimates the net influx rate.
"""

from __future__ import annotations

import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

import numba

from . import _kernels
from ._lm import STATUS_MESSAGES, lm_bounded, projected_gradient
from .kinetics import (
    DomainError,
    ForwardModel,
    FrameSchedule,
    InputFunction,
    KineticParams,
    ParamBounds,
)
from .volumes import FIT_CHANNELS, DynamicVolume, LabelMap, ParametricVolume

__all__ = ["FitConfig", "FitResult", "PatlakResult",
           "fit_tac", "fit_voxelwise", "fit_voi", "patlak", "patlak_map",
           "PAPER_INITIAL"]

# curve-fit protocol start point: 0.1 for K1 and k2, 0.01 for k3 and vb
PAPER_INITIAL = KineticParams(0.1, 0.1, 0.01, 0.01)


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings for one TAC fit.

    jacobian is "analytic" (closed-form derivatives of the discretized model)
    or "finite-difference" (2-point differences with relative step fd_step).
    engine selects the solver: "lm" is the low-overhead in-package bounded
    Levenberg-Marquardt, "trf" the scipy trust-region-reflective solver; both
    honor the same tolerances (step_tol on the step norm, cost_tol on the
    relative cost reduction, gradient_tol on the projected gradient).
    """

    initial: KineticParams = PAPER_INITIAL
    bounds: ParamBounds | None = None
    max_iterations: int = 200
    step_tol: float = 1e-8
    cost_tol: float = 1e-10
    gradient_tol: float = 1e-8
    jacobian: str = "analytic"
    fd_step: float = 1e-3
    fine_step_s: float = 1.0
    engine: str = "lm"

    def __post_init__(self):
        if self.bounds is None:
            object.__setattr__(self, "bounds", ParamBounds.nonnegative())
        if min(self.step_tol, self.cost_tol, self.gradient_tol) <= 0:
            raise ValueError("tolerances must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.jacobian not in ("analytic", "finite-difference"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")
        if self.engine not in ("lm", "trf"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.fd_step <= 0 or self.fine_step_s <= 0:
            raise ValueError("fd_step and fine_step_s must be > 0")
        if not self.bounds.contains(self.initial.as_array()):
            raise ValueError("initial point must lie within the bounds")

    @classmethod
    def clamp_box(cls, **kw) -> "FitConfig":
        """Variant constrained to the network parameter box."""
        box = ParamBounds.clamp_box()
        init = box.clamp_params(PAPER_INITIAL.as_array())
        return cls(initial=init, bounds=box, **kw)


@dataclass(frozen=True)
class FitResult:
    """Outcome of one bounded least-squares fit.

    cost is the mean squared residual [Bq^2/ml^2]. at_bounds flags parameters
    that ended on an active bound; degenerate marks identifiability failures
    (e.g. an all-zero objective), never reported as silent success.
    """

    params: KineticParams
    cost: float
    iterations: int
    converged: bool
    optimality: float
    status: int
    message: str
    at_bounds: tuple[bool, bool, bool, bool]
    stderr: np.ndarray | None = None
    degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return self.params.as_array()


def _at_bounds(x: np.ndarray, bounds: ParamBounds) -> tuple[bool, ...]:
    scale = np.maximum(1.0, np.abs(x))
    lo = np.abs(x - bounds.lower) <= 1e-10 * scale
    hi = np.isfinite(bounds.upper) & (np.abs(x - bounds.upper) <= 1e-10 * scale)
    return tuple(bool(b) for b in lo | hi)


def _stderr(jac: np.ndarray, residuals: np.ndarray) -> np.ndarray | None:
    n, p = jac.shape
    if n <= p:
        return None
    sse = float(residuals @ residuals)
    sigma2 = sse / (n - p)
    try:
        cov = sigma2 * np.linalg.pinv(jac.T @ jac)
    except np.linalg.LinAlgError:
        return None
    d = np.diag(cov)
    return np.sqrt(np.maximum(d, 0.0))


def fit_tac(tac: np.ndarray, input_function: InputFunction,
            schedule: FrameSchedule, config: FitConfig | None = None,
            model: ForwardModel | None = None) -> FitResult:
    """Estimate (k1, k2, k3, vb) from one frame-averaged TAC.

    Minimizes the sum of squared differences between the TAC and the
    closed-form model, subject to the configured bounds. Deterministic for
    fixed inputs and config. Pass a prebuilt ForwardModel to amortize the
    grid setup over many fits.
    """
    cfg = config or FitConfig()
    y = np.asarray(tac, dtype=np.float64)
    if y.ndim != 1 or y.size != schedule.n_frames:
        raise ValueError(f"TAC length {y.size} vs {schedule.n_frames} frames")
    if not np.all(np.isfinite(y)):
        raise ValueError("TAC must be finite")
    if model is None:
        model = ForwardModel(input_function, schedule, cfg.fine_step_s)
    elif abs(model.fine_step_s - cfg.fine_step_s) > 1e-12:
        raise ValueError("prebuilt model uses a different fine_step_s")

    x0 = cfg.initial.as_array()
    lo, hi = cfg.bounds.lower, cfg.bounds.upper
    input_is_zero = not np.any(model.frame_averaged_input)

    if not np.any(y):
        # an all-zero TAC is exactly reproducible only when the model can
        # vanish; report that as a degenerate identity, not a real fit
        if input_is_zero:
            p = cfg.bounds.clamp_params(x0)
            return FitResult(p, 0.0, 0, True, 0.0, 1,
                             "zero TAC with zero input: objective identically 0",
                             _at_bounds(cfg.bounds.clamp(x0), cfg.bounds),
                             None, degenerate=True)
        if lo[0] == 0.0 and lo[3] == 0.0:
            p_arr = lo.copy()
            return FitResult(KineticParams.from_array(p_arr), 0.0, 0, True, 0.0, 1,
                             "zero TAC: exact fit at the lower bounds",
                             _at_bounds(p_arr, cfg.bounds), None, degenerate=True)

    def residual(x):
        return model.tac_array(x) - y

    if cfg.jacobian == "analytic":
        def residual_jac(x):
            tac, jac = model.tac_and_jacobian(x)
            return tac - y, jac
    else:
        def residual_jac(x):
            r0 = residual(x)
            jac = np.empty((y.size, 4))
            for k in range(4):
                h = cfg.fd_step * max(abs(x[k]), cfg.fd_step)
                if x[k] + h > hi[k]:  # step inward at an upper bound
                    h = -h
                xs = x.copy()
                xs[k] += h
                jac[:, k] = (residual(xs) - r0) / h
            return r0, jac

    if cfg.engine == "lm" and cfg.jacobian == "analytic":
        # compiled path; bitwise identical to what fit_voxelwise produces
        x = np.empty(4)
        sse, nfev, status, optimality = _kernels._lm_fit_one(
            y, x0, cfg.bounds.lower, cfg.bounds.upper, cfg.max_iterations,
            cfg.step_tol, cfg.cost_tol, cfg.gradient_tol, input_is_zero,
            *model.kernel_args, x)
        nfev, status = int(nfev), int(status)
        message = STATUS_MESSAGES[status]
        final_r, final_jac = residual_jac(x)
    elif cfg.engine == "lm":
        x, sse, nfev, njev, status, optimality = lm_bounded(
            residual, residual_jac, x0, lo, hi, cfg.max_iterations,
            cfg.step_tol, cfg.cost_tol, cfg.gradient_tol)
        message = STATUS_MESSAGES[status]
        final_r, final_jac = residual_jac(x)
    else:
        kwargs = dict(bounds=(lo, hi), xtol=cfg.step_tol, ftol=cfg.cost_tol,
                      gtol=cfg.gradient_tol, max_nfev=cfg.max_iterations,
                      x_scale="jac", method="trf")
        if cfg.jacobian == "analytic":
            kwargs["jac"] = lambda xx: model.tac_and_jacobian(xx)[1]
        else:
            kwargs["jac"] = "2-point"
            kwargs["diff_step"] = cfg.fd_step
        res = least_squares(residual, x0, **kwargs)
        x, sse = res.x, 2.0 * res.cost
        nfev, status, message = int(res.nfev), int(res.status), str(res.message)
        final_r, final_jac = residual_jac(x)
        # same optimality semantics as the lm engine: projected-gradient
        # inf-norm at the solution relative to its value at the start point
        r0, jac0 = residual_jac(x0)
        g0 = float(np.max(np.abs(projected_gradient(jac0.T @ r0, x0, lo, hi))))
        gx = float(np.max(np.abs(projected_gradient(final_jac.T @ final_r, x, lo, hi))))
        optimality = 0.0 if g0 == 0.0 else gx / g0

    params = cfg.bounds.clamp_params(x)  # shave float dust off the bounds
    mse = sse / y.size
    return FitResult(params, mse, nfev, bool(status > 0),
                     float(optimality), status, message,
                     _at_bounds(x, cfg.bounds), _stderr(final_jac, final_r),
                     degenerate=input_is_zero)


def _fit_block(tacs: np.ndarray, input_function: InputFunction,
               schedule: FrameSchedule, cfg: FitConfig) -> np.ndarray:
    """Fit a [n, T] block; rows of (k1, k2, k3, vb, converged)."""
    model = ForwardModel(input_function, schedule, cfg.fine_step_s)
    out = np.empty((tacs.shape[0], 5))
    for i in range(tacs.shape[0]):
        r = fit_tac(tacs[i], input_function, schedule, cfg, model=model)
        out[i, :4] = r.as_array()
        out[i, 4] = 1.0 if r.converged else 0.0
    return out


def _fit_block_star(args):
    return _fit_block(*args)


def fit_voxelwise(volume: DynamicVolume, input_function: InputFunction,
                  config: FitConfig | None = None,
                  mask: LabelMap | np.ndarray | None = None,
                  workers: int = 1) -> ParametricVolume:
    """Independent per-voxel fits over a dynamic volume.

    Returns a 5-channel map (k1, k2, k3, vb, converged); voxels outside the
    mask stay zero with converged = 0. Voxel problems are independent, so the
    result does not depend on evaluation order or on the worker count;
    workers=1 is the deterministic sequential reference mode (worker results
    are identical, just computed in parallel processes).
    """
    cfg = config or FitConfig()
    shape = volume.spatial_shape
    if mask is None:
        flat_mask = np.ones(int(np.prod(shape)), dtype=bool)
    else:
        m = mask.labels != 0 if isinstance(mask, LabelMap) else np.asarray(mask) != 0
        if m.shape != shape:
            raise ValueError(f"mask shape {m.shape} vs volume {shape}")
        flat_mask = m.reshape(-1)

    tacs = volume.data.reshape(volume.n_frames, -1).T.astype(np.float64)
    idx = np.flatnonzero(flat_mask)
    out = np.zeros((5, tacs.shape[0]), dtype=np.float32)

    if cfg.engine == "lm" and cfg.jacobian == "analytic":
        model = ForwardModel(input_function, volume.schedule, cfg.fine_step_s)
        block = np.ascontiguousarray(tacs[idx])
        params = np.empty((idx.size, 4))
        diag = np.empty((idx.size, 4))
        n_threads = numba.get_num_threads()
        try:
            numba.set_num_threads(max(1, workers))
            _kernels.lm_fit_batch(
                block, cfg.initial.as_array(), cfg.bounds.lower,
                cfg.bounds.upper, cfg.max_iterations, cfg.step_tol,
                cfg.cost_tol, cfg.gradient_tol,
                not np.any(model.frame_averaged_input), *model.kernel_args,
                params, diag)
        finally:
            numba.set_num_threads(n_threads)
        rows = np.concatenate([params, (diag[:, 2:3] > 0).astype(np.float64)],
                              axis=1)
    elif workers <= 1 or idx.size < 2 * workers:
        rows = _fit_block(tacs[idx], input_function, volume.schedule, cfg)
    else:
        chunks = np.array_split(np.arange(idx.size), workers * 4)
        jobs = [(tacs[idx[c]], input_function, volume.schedule, cfg)
                for c in chunks if c.size]
        # spawn, not fork: the compiled kernels' thread pool does not
        # survive forking once it has run in the parent
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = list(pool.map(_fit_block_star, jobs))
        rows = np.concatenate(parts, axis=0)
    out[:, idx] = rows.T.astype(np.float32)
    return ParametricVolume(out.reshape((5,) + shape), FIT_CHANNELS,
                            volume.spacing_mm)


def fit_voi(volume: DynamicVolume, labelmap: LabelMap, label: int,
            input_function: InputFunction,
            config: FitConfig | None = None) -> FitResult:
    """Average the TACs inside one labeled region, then fit once.

    This is the organ-level protocol: pooling before fitting trades spatial
    resolution for a far less noisy objective.
    """
    if labelmap.labels.shape != volume.spatial_shape:
        raise ValueError("label map does not match the volume")
    sel = labelmap.mask(label)
    if not np.any(sel):
        raise ValueError(f"label {label} is empty")
    mean_tac = volume.data[:, sel].astype(np.float64).mean(axis=1)
    return fit_tac(mean_tac, input_function, volume.schedule, config)


@dataclass(frozen=True)
class PatlakResult:
    """Late-time graphical estimate: slope approximates the net influx Ki."""

    ki_slope: float
    intercept: float
    r_squared: float
    t_star_s: float
    n_points: int


def _patlak_axes(input_function: InputFunction, schedule: FrameSchedule,
                 t_star_s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mids = schedule.mid_times
    sel = np.flatnonzero(mids >= t_star_s)
    if sel.size < 3:
        raise DomainError(
            f"need >= 3 frames with mid-time >= {t_star_s:g} s, have {sel.size}")
    a_mid = np.asarray(input_function(mids[sel]), dtype=np.float64)
    if np.any(a_mid <= 0):
        raise DomainError("input function is <= 0 at a frame used by the plot")
    x = input_function.integral(mids[sel]) / 60.0 / a_mid  # minutes
    return sel, a_mid, x


def _ols_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm = x - x.mean()
    denom = float(xm @ xm)
    slope = float(xm @ (y - y.mean())) / denom
    intercept = float(y.mean() - slope * x.mean())
    ss_res = float(np.sum((y - slope * x - intercept) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 0.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    return slope, intercept, r2


def patlak(tac: np.ndarray, input_function: InputFunction,
           schedule: FrameSchedule, t_star_s: float = 1200.0) -> PatlakResult:
    """Ordinary least squares on the Patlak coordinates over late frames.

    Regresses C(t)/A(t) on int_0^t A / A(t) for frames with mid-time >=
    t_star_s; for an irreversible tracer past equilibration the slope
    estimates Ki = K1*k3/(k2+k3) and both axes are invariant under joint
    rescaling of C and A.
    """
    y_tac = np.asarray(tac, dtype=np.float64)
    if y_tac.size != schedule.n_frames:
        raise ValueError(f"TAC length {y_tac.size} vs {schedule.n_frames} frames")
    sel, a_mid, x = _patlak_axes(input_function, schedule, t_star_s)
    slope, intercept, r2 = _ols_line(x, y_tac[sel] / a_mid)
    return PatlakResult(slope, intercept, r2, float(t_star_s), int(sel.size))


def patlak_map(volume: DynamicVolume, input_function: InputFunction,
               t_star_s: float = 1200.0,
               mask: LabelMap | np.ndarray | None = None) -> ParametricVolume:
    """Voxel-wise Patlak regression; channels (ki, intercept, r_squared).

    The regressor axis is shared by all voxels, so the whole volume reduces
    to vectorized closed-form OLS.
    """
    sel, a_mid, x = _patlak_axes(input_function, volume.schedule, t_star_s)
    shape = volume.spatial_shape
    if mask is None:
        m = np.ones(shape, dtype=bool)
    else:
        m = mask.labels != 0 if isinstance(mask, LabelMap) else np.asarray(mask) != 0
        if m.shape != shape:
            raise ValueError(f"mask shape {m.shape} vs volume {shape}")

    y = volume.data[sel][:, m].astype(np.float64) / a_mid[:, None]
    xm = x - x.mean()
    denom = float(xm @ xm)
    ym = y - y.mean(axis=0)
    slope = (xm @ ym) / denom
    intercept = y.mean(axis=0) - slope * x.mean()
    resid = ym - np.outer(xm, slope)
    ss_res = np.sum(resid ** 2, axis=0)
    ss_tot = np.sum(ym ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 1e-300, 1.0 - ss_res / ss_tot, 0.0)
    r2 = np.clip(r2, 0.0, 1.0)

    out = np.zeros((3,) + shape, dtype=np.float32)
    for ch, vals in enumerate((slope, intercept, r2)):
        plane = np.zeros(shape, dtype=np.float32)
        plane[m] = vals.astype(np.float32)
        out[ch] = plane
    return ParametricVolume(out, ("ki", "intercept", "r_squared"),
                            volume.spacing_mm)
