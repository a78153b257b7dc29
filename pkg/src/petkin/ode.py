"""Reference ODE integrator for the irreversible two-tissue model.

This is the slow, independent arbiter for petkin.kinetics.model_tac: it
integrates the compartment system

    dF/dt = K1 * A(t) - (k2 + k3) * F(t)
    dB/dt = k3 * F(t)

directly with classical fixed-step 4th-order Runge-Kutta and accumulates the
frame integrals of F, B and A as extra quadrature states, so the returned
frame averages carry the integrator's accuracy rather than a separate
sampling rule. It deliberately shares no convolution machinery with the
closed-form path.
"""

from __future__ import annotations

import numba
import numpy as np

from .kinetics import (
    SECONDS_PER_MINUTE,
    FrameSchedule,
    InputFunction,
    KineticParams,
    check_input_coverage,
)

__all__ = ["ode_tac"]


@numba.njit(cache=True)
def _rk4_frames(k1, k2, k3, vb, a_half, nsteps, h_min, dur_min, out):
    s = k2 + k3
    f = 0.0
    b = 0.0
    i_f = 0.0
    i_b = 0.0
    i_a = 0.0
    idx = 0
    for fr in range(nsteps.shape[0]):
        h = h_min[fr]
        if0 = i_f
        ib0 = i_b
        ia0 = i_a
        for _ in range(nsteps[fr]):
            a0 = a_half[idx]
            am = a_half[idx + 1]
            a1 = a_half[idx + 2]

            d1f = k1 * a0 - s * f
            d1b = k3 * f
            f2 = f + 0.5 * h * d1f
            b2 = b + 0.5 * h * d1b
            d2f = k1 * am - s * f2
            d2b = k3 * f2
            f3 = f + 0.5 * h * d2f
            b3 = b + 0.5 * h * d2b
            d3f = k1 * am - s * f3
            d3b = k3 * f3
            f4 = f + h * d3f
            b4 = b + h * d3b
            d4f = k1 * a1 - s * f4
            d4b = k3 * f4

            i_f += h / 6.0 * (f + 2.0 * f2 + 2.0 * f3 + f4)
            i_b += h / 6.0 * (b + 2.0 * b2 + 2.0 * b3 + b4)
            i_a += h / 6.0 * (a0 + 4.0 * am + a1)
            f += h / 6.0 * (d1f + 2.0 * d2f + 2.0 * d3f + d4f)
            b += h / 6.0 * (d1b + 2.0 * d2b + 2.0 * d3b + d4b)
            idx += 2
        out[fr] = ((1.0 - vb) * ((i_f - if0) + (i_b - ib0))
                   + vb * (i_a - ia0)) / dur_min[fr]


def ode_tac(params: KineticParams, input_function: InputFunction,
            schedule: FrameSchedule, step_s: float = 0.1) -> np.ndarray:
    """Frame-averaged tissue curve by direct RK4 integration of the system.

    step_s is an upper bound on the integration step; each frame is cut into
    equal sub-steps so frame edges are hit exactly. Serves as the oracle for
    the closed-form model.
    """
    if step_s <= 0:
        raise ValueError("step_s must be > 0")
    check_input_coverage(input_function, schedule)

    nsteps = np.ceil(schedule.durations / step_s - 1e-9).astype(np.int64)
    h_s = schedule.durations / nsteps

    # sample A at every step start, midpoint and end (seconds), frame by frame
    pieces = []
    for start, n, h in zip(schedule.starts, nsteps, h_s):
        pieces.append(start + 0.5 * h * np.arange(2 * n))
    pieces.append(np.array([schedule.end_time]))
    t_half = np.concatenate(pieces)
    a_half = input_function(t_half)

    out = np.empty(schedule.n_frames)
    _rk4_frames(params.k1, params.k2, params.k3, params.vb, a_half,
                nsteps, h_s / SECONDS_PER_MINUTE,
                schedule.durations / SECONDS_PER_MINUTE, out)
    return out
