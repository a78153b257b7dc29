"""Irreversible two-tissue compartment model for dynamic PET.

The tissue tracer concentration is driven by the blood input curve A(t)
through two pools, a free pool F and an irreversibly bound pool B::

    dF/dt = K1 * A(t) - (k2 + k3) * F(t)
    dB/dt = k3 * F(t)

and the measured voxel signal mixes tissue and blood through the blood
fraction volume vb::

    C(t) = (1 - vb) * (h * A)(t) + vb * A(t)
    h(t) = K1 / (k2 + k3) * (k3 + k2 * exp(-(k2 + k3) * t))

h is the tissue impulse response obtained by solving the system in closed
form. Some texts print the exponent of h with a positive sign; that variant
grows without bound and contradicts the ODE system above, so the decaying
form is used here (the ODE integrator in petkin.ode acts as the arbiter).

Rate constants are per minute, K1 in ml/cm^3/min; schedules and input-curve
time stamps are in seconds and converted internally. PET frames report
time-averaged activity, so the forward model returns the average of C(t)
over each frame window, computed exactly for a piecewise-linear A(t) on an
internal fine grid (default step 1 s).

All values in this module are immutable after construction; every operation
is a pure function and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

SECONDS_PER_MINUTE = 60.0

__all__ = [
    "DomainError",
    "KineticParams",
    "ParamBounds",
    "FrameSchedule",
    "InputFunction",
    "CLAMP_BOX",
    "impulse_response",
    "net_influx",
    "multi_clamp",
    "ForwardModel",
    "model_tac",
    "frame_average",
    "wb_fdg_schedule",
]


class DomainError(ValueError):
    """Raised when inputs leave the mathematical domain of an operation."""


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class KineticParams:
    """Micro-parameters of one voxel or region.

    k1: uptake rate [ml/cm^3/min]; k2: efflux rate [1/min]; k3: binding
    rate [1/min]; vb: blood fraction volume (dimensionless, in [0, 1]).
    """

    k1: float
    k2: float
    k3: float
    vb: float

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0 or self.k3 < 0:
            raise ValueError(f"rate constants must be >= 0, got {self}")
        if not 0.0 <= self.vb <= 1.0:
            raise ValueError(f"vb must lie in [0, 1], got {self.vb}")

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.vb])

    @classmethod
    def from_array(cls, arr) -> "KineticParams":
        k1, k2, k3, vb = np.asarray(arr, dtype=float)
        return cls(float(k1), float(k2), float(k3), float(vb))


@dataclass(frozen=True)
class ParamBounds:
    """Closed per-parameter intervals for (k1, k2, k3, vb)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _as_float_array(self.lower, "lower")
        hi = np.asarray(self.upper, dtype=np.float64)  # +inf allowed
        if lo.shape != (4,) or hi.shape != (4,):
            raise ValueError("bounds must each hold 4 values (k1, k2, k3, vb)")
        if np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ValueError("need lower <= upper componentwise")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def clamp_box(cls) -> "ParamBounds":
        """Default network output ranges: K1 in [0.01, 2], k2 in [0.01, 3],
        k3 in [0.01, 1], vb in [0, 1]."""
        return cls(np.array([0.01, 0.01, 0.01, 0.0]),
                   np.array([2.0, 3.0, 1.0, 1.0]))

    @classmethod
    def nonnegative(cls) -> "ParamBounds":
        """Curve-fit protocol bounds: rates in [0, +inf), vb in [0, 1]."""
        return cls(np.zeros(4), np.array([np.inf, np.inf, np.inf, 1.0]))

    def contains(self, params, atol: float = 0.0) -> bool:
        p = np.asarray(params, dtype=float)
        return bool(np.all(p >= self.lower - atol) and np.all(p <= self.upper + atol))

    def clamp(self, raw) -> np.ndarray:
        return multi_clamp(raw, self)

    def clamp_params(self, raw) -> KineticParams:
        return KineticParams.from_array(multi_clamp(raw, self))


CLAMP_BOX = ParamBounds.clamp_box()


def multi_clamp(raw, bounds: ParamBounds | None = None) -> np.ndarray:
    """Project raw parameter values onto per-channel intervals.

    Accepts a 4-vector or any array whose last axis has length 4; clamping is
    componentwise, idempotent and non-expansive. Default bounds are the
    standard clamp box.
    """
    if bounds is None:
        bounds = CLAMP_BOX
    arr = np.asarray(raw, dtype=np.float64)
    if arr.shape[-1] != 4:
        raise ValueError("expected last axis of length 4 (k1, k2, k3, vb)")
    return np.clip(arr, bounds.lower, bounds.upper)


@dataclass(frozen=True)
class FrameSchedule:
    """Contiguous, non-overlapping acquisition frames.

    starts and durations are in seconds; frame i covers
    [starts[i], starts[i] + durations[i]) with starts[0] = 0.
    """

    starts: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        starts = _as_float_array(self.starts, "starts")
        durs = _as_float_array(self.durations, "durations")
        if starts.ndim != 1 or starts.shape != durs.shape or starts.size == 0:
            raise ValueError("starts and durations must be equal-length 1-D arrays")
        if np.any(durs <= 0):
            raise ValueError("frame durations must be > 0")
        if abs(starts[0]) > 1e-9:
            raise ValueError("first frame must start at t = 0")
        if not np.allclose(starts[1:], starts[:-1] + durs[:-1], rtol=0, atol=1e-6):
            raise ValueError("frames must be contiguous and non-overlapping")
        starts.flags.writeable = False
        durs.flags.writeable = False
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "durations", durs)

    @classmethod
    def from_durations(cls, durations_s) -> "FrameSchedule":
        durs = np.asarray(durations_s, dtype=np.float64)
        starts = np.concatenate(([0.0], np.cumsum(durs)[:-1]))
        return cls(starts, durs)

    @property
    def n_frames(self) -> int:
        return int(self.starts.size)

    @property
    def mid_times(self) -> np.ndarray:
        """Frame mid-points [s]."""
        return self.starts + 0.5 * self.durations

    @property
    def end_time(self) -> float:
        """End of the last frame [s]."""
        return float(self.starts[-1] + self.durations[-1])

    @property
    def boundaries(self) -> np.ndarray:
        """The n+1 frame edges [s]."""
        return np.concatenate((self.starts, [self.end_time]))

    def head(self, n: int) -> "FrameSchedule":
        """Sub-schedule made of the first n frames."""
        if not 1 <= n <= self.n_frames:
            raise ValueError(f"n must be in [1, {self.n_frames}]")
        return FrameSchedule(self.starts[:n].copy(), self.durations[:n].copy())


def wb_fdg_schedule() -> FrameSchedule:
    """65-minute whole-body FDG protocol: 62 frames
    (2x10 s, 30x2 s, 4x10 s, 8x30 s, 4x60 s, 5x120 s, 9x300 s)."""
    durs = [10.0] * 2 + [2.0] * 30 + [10.0] * 4 + [30.0] * 8 \
        + [60.0] * 4 + [120.0] * 5 + [300.0] * 9
    return FrameSchedule.from_durations(durs)


@dataclass(frozen=True)
class InputFunction:
    """Blood (or plasma) activity A(t), piecewise linear between samples.

    times_s must be strictly increasing; values are in Bq/ml and must be
    non-negative. A(t) is 0 before the first sample and held constant after
    the last one.
    """

    times_s: np.ndarray
    values: np.ndarray
    interpolation: str = field(default="linear")

    def __post_init__(self):
        t = _as_float_array(self.times_s, "times_s")
        v = _as_float_array(self.values, "values")
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("need >= 2 aligned time/value samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("activity values must be >= 0")
        if self.interpolation != "linear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times_s", t)
        object.__setattr__(self, "values", v)

    def __call__(self, t_s) -> np.ndarray:
        return np.interp(t_s, self.times_s, self.values, left=0.0)

    def integral(self, t_s) -> np.ndarray:
        """Exact cumulative integral of the piecewise-linear curve, in
        Bq/ml * s, from t=0 to the requested times."""
        t = np.atleast_1d(np.asarray(t_s, dtype=np.float64))
        seg = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.times_s)
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        j = np.searchsorted(self.times_s, t, side="right") - 1
        out = np.zeros_like(t)
        inside = j >= 0  # A is 0 before the first sample
        ji = np.minimum(j[inside], self.times_s.size - 1)
        a_t = self(t[inside])
        u = t[inside] - self.times_s[ji]
        out[inside] = cum[ji] + 0.5 * (self.values[ji] + a_t) * np.maximum(u, 0.0)
        return out if np.ndim(t_s) else float(out[0])

    def covers(self, end_time_s: float) -> bool:
        return bool(self.times_s[-1] >= end_time_s - 1e-6)


def check_input_coverage(input_function: InputFunction,
                         schedule: FrameSchedule) -> None:
    """Require samples at least into the final frame.

    Frame-mid sampled curves (e.g. IDIF CSV files) end half a frame before
    the schedule does; the constant right-extension is accepted across that
    tail. A curve ending before the last frame starts is a real mismatch.
    """
    if input_function.times_s[-1] < schedule.starts[-1] - 1e-6:
        raise DomainError(
            f"input function ends at {input_function.times_s[-1]:g} s, before "
            f"the last frame starts ({schedule.starts[-1]:g} s of a "
            f"{schedule.end_time:g} s schedule)")


def impulse_response(params: KineticParams, t_min) -> np.ndarray:
    """Tissue impulse response h(t) = K1/(k2+k3) * (k3 + k2 e^{-(k2+k3) t}).

    t_min is in minutes. h is non-increasing, starts at K1 and decays to the
    net influx rate Ki = K1*k3/(k2+k3).
    """
    s = params.k2 + params.k3
    if s <= 0:
        raise DomainError("impulse response needs k2 + k3 > 0")
    t = np.asarray(t_min, dtype=np.float64)
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    return params.k1 / s * (params.k3 + params.k2 * np.exp(-s * t))


def net_influx(params: KineticParams) -> float:
    """Net influx macro-parameter Ki = K1*k3/(k2+k3) [ml/cm^3/min]."""
    s = params.k2 + params.k3
    if s <= 0:
        raise DomainError("net influx needs k2 + k3 > 0")
    return params.k1 * params.k3 / s


class ForwardModel:
    """Precomputed frame-averaging operator for one (input, schedule) pair.

    Building the fine grid, the running integrals of A and the frame-edge
    bookkeeping once makes repeated per-voxel evaluations cheap, which is what
    the fitter and the volume-level metrics rely on.
    """

    def __init__(self, input_function: InputFunction, schedule: FrameSchedule,
                 fine_step_s: float = 1.0):
        if fine_step_s <= 0:
            raise ValueError("fine_step_s must be > 0")
        check_input_coverage(input_function, schedule)
        self.input_function = input_function
        self.schedule = schedule
        self.fine_step_s = float(fine_step_s)

        end_min = schedule.end_time / SECONDS_PER_MINUTE
        self._dt = fine_step_s / SECONDS_PER_MINUTE
        n = int(np.ceil(end_min / self._dt - 1e-9))
        grid_min = np.arange(n + 1) * self._dt
        self._a = input_function(grid_min * SECONDS_PER_MINUTE)

        # exact running integrals of the piecewise-linear A on the grid:
        # z = int A (trapezoid is exact), iz = int z (quadratic per segment)
        seg_z = 0.5 * (self._a[1:] + self._a[:-1]) * self._dt
        self._z = np.concatenate(([0.0], np.cumsum(seg_z)))
        seg_iz = (0.5 * (self._z[1:] + self._z[:-1]) * self._dt
                  - np.diff(self._a) * self._dt ** 2 / 12.0)
        self._iz = np.concatenate(([0.0], np.cumsum(seg_iz)))

        b_min = schedule.boundaries / SECONDS_PER_MINUTE
        node = np.minimum((b_min / self._dt + 1e-9).astype(np.int64), n)
        off = b_min - node * self._dt
        off[off < 1e-12] = 0.0
        self._bnode = node
        self._boff = off
        self._dur_min = schedule.durations / SECONDS_PER_MINUTE

        # param-independent boundary values of A, z and int z
        slopes = np.diff(self._a, append=self._a[-1]) / self._dt  # last entry unused
        a_b = self._a[node] + off * slopes[node]
        self._zb = self._z[node] + 0.5 * (self._a[node] + a_b) * off
        self._izb = (self._iz[node] + 0.5 * (self._z[node] + self._zb) * off
                     - (a_b - self._a[node]) * off ** 2 / 12.0)

    @property
    def frame_averaged_input(self) -> np.ndarray:
        """Frame averages of A(t) [Bq/ml]; exactly what vb = 1 returns."""
        return np.diff(self._zb) / self._dur_min

    @property
    def kernel_args(self) -> tuple:
        """Positional grid arguments shared by the petkin._kernels routines."""
        return (self._a, self._dt, self._bnode, self._boff,
                self._zb, self._izb, self._dur_min)

    @property
    def frame_integrated_input(self) -> np.ndarray:
        """Cumulative integral of A at frame boundaries [Bq/ml * min]."""
        return self._zb.copy()

    def _check(self, params: KineticParams):
        if params.k2 + params.k3 <= 0:
            raise DomainError("model needs k2 + k3 > 0")

    def tac(self, params: KineticParams) -> np.ndarray:
        """Frame-averaged model TAC for one parameter set [Bq/ml]."""
        self._check(params)
        out = np.empty(self.schedule.n_frames)
        _kernels.single_tac(params.k1, params.k2, params.k3, params.vb,
                            self._a, self._dt, self._bnode, self._boff,
                            self._zb, self._izb, self._dur_min, out)
        return out

    def tac_array(self, raw: np.ndarray) -> np.ndarray:
        """tac() for a raw 4-vector without KineticParams validation.

        Exists for optimizer callbacks that may probe points outside the
        physical box; the caller owns domain safety.
        """
        k1, k2, k3, vb = np.asarray(raw, dtype=np.float64)
        out = np.empty(self.schedule.n_frames)
        _kernels.single_tac(k1, k2, k3, vb, self._a, self._dt, self._bnode,
                            self._boff, self._zb, self._izb, self._dur_min, out)
        return out

    def tac_and_jacobian(self, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Model TAC and its analytic Jacobian [n_frames, 4] at a raw point."""
        k1, k2, k3, vb = np.asarray(raw, dtype=np.float64)
        tac = np.empty(self.schedule.n_frames)
        jac = np.empty((self.schedule.n_frames, 4))
        _kernels.tac_with_jac(k1, k2, k3, vb, self._a, self._dt, self._bnode,
                              self._boff, self._zb, self._izb, self._dur_min,
                              tac, jac)
        return tac, jac

    def batch_tac(self, params: np.ndarray) -> np.ndarray:
        """Model TACs for an [n, 4] array of parameter rows -> [n, n_frames]."""
        p = np.ascontiguousarray(params, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 4:
            raise ValueError("params must have shape [n, 4]")
        out = np.empty((p.shape[0], self.schedule.n_frames))
        _kernels.batch_tac(p, self._a, self._dt, self._bnode, self._boff,
                           self._zb, self._izb, self._dur_min, out)
        return out


def model_tac(params: KineticParams, input_function: InputFunction,
              schedule: FrameSchedule, fine_step_s: float = 1.0) -> np.ndarray:
    """Closed-form frame-averaged tissue curve C(t) for one parameter set.

    C(t) = (1 - vb) * (h * A)(t) + vb * A(t), averaged over each frame of the
    schedule. The convolution is evaluated exactly for the piecewise-linear
    representation of A on the internal fine grid (step fine_step_s).
    """
    return ForwardModel(input_function, schedule, fine_step_s).tac(params)


def frame_average(input_function: InputFunction, schedule: FrameSchedule,
                  fine_step_s: float = 1.0) -> np.ndarray:
    """Frame-averaged A(t) on the same grid the forward model uses."""
    return ForwardModel(input_function, schedule, fine_step_s).frame_averaged_input
