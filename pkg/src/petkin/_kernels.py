"""Compiled inner loops for the closed-form tissue model.

Everything here works in minutes and assumes the input curve is piecewise
linear between the nodes of a uniform fine grid. The exponential-kernel
recurrence is exact for such inputs, so the only approximation left in the
forward model is the piecewise-linear representation of the input itself.

Kept deliberately free of scipy so the ODE oracle (petkin.ode) and this module
share no integration code.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _pq(s: float, u: float):
    """P = int_0^u e^{-s(u-w)} dw and Q = int_0^u w e^{-s(u-w)} dw."""
    x = s * u
    if x < 1e-6:
        # series guard: (u - P)/s cancels catastrophically for tiny s*u
        p = u * (1.0 - 0.5 * x + x * x / 6.0 - x * x * x / 24.0)
        q = u * u * (0.5 - x / 6.0 + x * x / 24.0)
    else:
        p = -math.expm1(-x) / s
        q = (u - p) / s
    return p, q


@numba.njit(cache=True)
def exp_conv_at_bounds(a, dt, bnode, boff, s, yb):
    """March y' = A(t) - s*y, y(0)=0 along the grid; record y at boundaries.

    y(t) equals the convolution (e^{-s t} * A)(t). Boundaries are given as a
    grid-node index plus an in-segment offset (0 <= boff < dt) and must be
    sorted ascending. Exact for piecewise-linear A.
    """
    n = a.shape[0] - 1
    nb = bnode.shape[0]
    e = math.exp(-s * dt)
    p, q = _pq(s, dt)
    c1 = q / dt
    c0 = p - c1

    y = 0.0
    k = 0
    for j in range(n):
        while k < nb and bnode[k] == j:
            u = boff[k]
            if u == 0.0:
                yb[k] = y
            else:
                m = (a[j + 1] - a[j]) / dt
                pu, qu = _pq(s, u)
                yb[k] = math.exp(-s * u) * y + a[j] * pu + m * qu
            k += 1
        y = e * y + c0 * a[j] + c1 * a[j + 1]
    while k < nb:  # boundaries sitting on the final node
        yb[k] = y
        k += 1


@numba.njit(cache=True, inline="always")
def _rs(s: float, u: float, e_u: float, p: float, q: float):
    """R = int_0^u e^{-s(u-w)} P(w) dw and S = int_0^u e^{-s(u-w)} Q(w) dw.

    These close the sensitivity recurrence exactly: R = (P - u*E)/s and
    S = (Q - R)/s, with series fallbacks where the subtractions cancel.
    """
    x = s * u
    if x < 1e-4:
        r = u * u * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0)
        sv = u * u * u * (1.0 / 6.0 - x / 12.0 + x * x / 40.0)
    else:
        r = (p - u * e_u) / s
        sv = (q - r) / s
    return r, sv


@numba.njit(cache=True)
def exp_conv_with_sens_at_bounds(a, dt, bnode, boff, s, yb, vb_out):
    """Like exp_conv_at_bounds but also tracks v = (t e^{-s t} * A)(t).

    v obeys v' = y - s*v and is -dy/ds; its segment update integrates the
    exact in-segment y, so both outputs are exact for piecewise-linear A.
    """
    n = a.shape[0] - 1
    nb = bnode.shape[0]
    e = math.exp(-s * dt)
    p, q = _pq(s, dt)
    r, sv = _rs(s, dt, e, p, q)
    c1 = q / dt
    c0 = p - c1

    y = 0.0
    v = 0.0
    k = 0
    for j in range(n):
        while k < nb and bnode[k] == j:
            u = boff[k]
            if u == 0.0:
                yb[k] = y
                vb_out[k] = v
            else:
                m = (a[j + 1] - a[j]) / dt
                e_u = math.exp(-s * u)
                pu, qu = _pq(s, u)
                ru, svu = _rs(s, u, e_u, pu, qu)
                yb[k] = e_u * y + a[j] * pu + m * qu
                vb_out[k] = e_u * v + u * e_u * y + a[j] * ru + m * svu
            k += 1
        m_full = (a[j + 1] - a[j]) / dt
        v = e * v + dt * e * y + a[j] * r + m_full * sv
        y = e * y + c0 * a[j] + c1 * a[j + 1]
    while k < nb:
        yb[k] = y
        vb_out[k] = v
        k += 1


@numba.njit(cache=True, inline="always")
def _assemble_tac(k1, k2, k3, vb, yb, zb, izb, dur, out_row):
    """Frame-averaged C(t) from boundary values of y, z=int A and int z."""
    s = k2 + k3
    nf = dur.shape[0]
    for i in range(nf):
        abar = (zb[i + 1] - zb[i]) / dur[i]
        zbar = (izb[i + 1] - izb[i]) / dur[i]
        if s < 1e-8:
            conv = k1 * zbar  # s -> 0 limit: impulse response is flat at K1
        else:
            ybar = (yb[i + 1] - yb[i]) / dur[i]
            conv = (k1 / s) * (k3 * zbar + k2 * (abar - ybar) / s)
        out_row[i] = (1.0 - vb) * conv + vb * abar


@numba.njit(cache=True, parallel=True)
def batch_tac(params, a, dt, bnode, boff, zb, izb, dur, out):
    """Frame-averaged model TACs for a batch of parameter rows [n,4]."""
    nb = bnode.shape[0]
    for r in numba.prange(params.shape[0]):
        yb = np.empty(nb)
        s = params[r, 1] + params[r, 2]
        if s >= 1e-8:
            exp_conv_at_bounds(a, dt, bnode, boff, s, yb)
        _assemble_tac(
            params[r, 0], params[r, 1], params[r, 2], params[r, 3],
            yb, zb, izb, dur, out[r],
        )


@numba.njit(cache=True)
def single_tac(k1, k2, k3, vb, a, dt, bnode, boff, zb, izb, dur, out):
    """Serial single-TAC evaluation (no thread pool involved)."""
    yb = np.empty(bnode.shape[0])
    s = k2 + k3
    if s >= 1e-8:
        exp_conv_at_bounds(a, dt, bnode, boff, s, yb)
    _assemble_tac(k1, k2, k3, vb, yb, zb, izb, dur, out)


@numba.njit(cache=True)
def tac_with_jac(k1, k2, k3, vb, a, dt, bnode, boff, zb, izb, dur, tac, jac):
    """Model TAC plus the analytic Jacobian w.r.t. (k1, k2, k3, vb).

    Derivatives follow from C = (1-vb) * (K1/s) * (k3*Z + k2*Y(s)) + vb*Abar,
    with Y the frame average of int y and dY/ds = (Vbar - Y)/s obtained from
    the sensitivity v. Near s = 0 the sensitivity expressions degenerate; s is
    floored there, which only perturbs the search direction, not the model.
    """
    s = k2 + k3
    s_eff = s if s > 1e-6 else 1e-6
    nb = bnode.shape[0]
    yb = np.empty(nb)
    vb_arr = np.empty(nb)
    exp_conv_with_sens_at_bounds(a, dt, bnode, boff, s_eff, yb, vb_arr)
    nf = dur.shape[0]
    for i in range(nf):
        abar = (zb[i + 1] - zb[i]) / dur[i]
        zbar = (izb[i + 1] - izb[i]) / dur[i]
        ybar = (yb[i + 1] - yb[i]) / dur[i]
        vbar = (vb_arr[i + 1] - vb_arr[i]) / dur[i]
        yfrm = (abar - ybar) / s_eff          # frame average of int y / dur
        dyfrm = (vbar - yfrm) / s_eff         # d/ds of the above
        base = (k3 * zbar + k2 * yfrm) / s_eff
        conv = k1 * base
        tac[i] = (1.0 - vb) * conv + vb * abar
        jac[i, 0] = (1.0 - vb) * base
        jac[i, 1] = (1.0 - vb) * k1 * (k3 * (yfrm - zbar) / (s_eff * s_eff)
                                       + (k2 / s_eff) * dyfrm)
        jac[i, 2] = (1.0 - vb) * k1 * (k2 * (zbar - yfrm) / (s_eff * s_eff)
                                       + (k2 / s_eff) * dyfrm)
        jac[i, 3] = abar - conv


@numba.njit(cache=True, inline="always")
def _solve4(m, b, out):
    """In-place Gaussian elimination with partial pivoting for a 4x4 system.

    Returns False when the matrix is numerically singular. m and b are
    clobbered.
    """
    for col in range(4):
        piv = col
        best = abs(m[col, col])
        for r in range(col + 1, 4):
            if abs(m[r, col]) > best:
                best = abs(m[r, col])
                piv = r
        if best == 0.0:
            return False
        if piv != col:
            for c in range(4):
                tmp = m[col, c]
                m[col, c] = m[piv, c]
                m[piv, c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        inv = 1.0 / m[col, col]
        for r in range(col + 1, 4):
            f = m[r, col] * inv
            if f != 0.0:
                for c in range(col, 4):
                    m[r, c] -= f * m[col, c]
                b[r] -= f * b[col]
    for col in range(3, -1, -1):
        acc = b[col]
        for c in range(col + 1, 4):
            acc -= m[col, c] * out[c]
        out[col] = acc / m[col, col]
    return True


@numba.njit(cache=True, inline="always")
def _pg_inf(g, x, lo, hi):
    """Inf-norm of the gradient projected onto the feasible directions."""
    worst = 0.0
    for k in range(4):
        tol = 1e-10 * max(1.0, abs(x[k]))
        gk = g[k]
        if x[k] <= lo[k] + tol and gk > 0.0:
            gk = 0.0
        if x[k] >= hi[k] - tol and gk < 0.0:
            gk = 0.0
        if abs(gk) > worst:
            worst = abs(gk)
    return worst


@numba.njit(cache=True)
def _lm_fit_one(y, x0, lo, hi, max_iter, xtol, ftol, gtol, input_zero,
                a, dt, bnode, boff, zb, izb, dur, x_out):
    """Bounded Levenberg-Marquardt for one TAC; mirrors petkin._lm.lm_bounded.

    Returns (sse, nfev, status, optimality). Steps solve the Marquardt-damped
    normal equations and are projected onto the box.
    """
    nf = dur.shape[0]
    nb = bnode.shape[0]
    tac = np.empty(nf)
    jac = np.empty((nf, 4))
    x = np.empty(4)
    for k in range(4):
        x[k] = min(max(x0[k], lo[k]), hi[k])

    all_zero = True
    for i in range(nf):
        if y[i] != 0.0:
            all_zero = False
            break
    if all_zero and not input_zero and lo[0] == 0.0 and lo[3] == 0.0:
        # exact zero model available at the lower bounds (with a zero input
        # the objective vanishes everywhere; fall through, the zero-gradient
        # exit then keeps the projected start point)
        for k in range(4):
            x_out[k] = lo[k]
        return 0.0, 0, 1, 0.0

    tac_with_jac(x[0], x[1], x[2], x[3], a, dt, bnode, boff, zb, izb, dur,
                 tac, jac)
    nfev = 1
    cost = 0.0
    g = np.zeros(4)
    amat = np.zeros((4, 4))
    for i in range(nf):
        r = tac[i] - y[i]
        cost += r * r
        for k in range(4):
            g[k] += jac[i, k] * r
            for l in range(4):
                amat[k, l] += jac[i, k] * jac[i, l]

    g0_scale = _pg_inf(g, x, lo, hi)
    if g0_scale == 0.0:
        for k in range(4):
            x_out[k] = x[k]
        return cost, nfev, 1, 0.0

    lam = 1e-3
    status = 0
    m = np.empty((4, 4))
    rhs = np.empty(4)
    p = np.empty(4)
    x_new = np.empty(4)
    tac_new = np.empty(nf)
    yb_tmp = np.empty(nb)
    it = 1
    while it < max_iter:
        it += 1
        dmax = max(amat[0, 0], max(amat[1, 1], max(amat[2, 2], amat[3, 3])))
        floor = 1e-14 * max(dmax, 1e-300)
        for k in range(4):
            for l in range(4):
                m[k, l] = amat[k, l]
            m[k, k] += lam * max(amat[k, k], floor)
            rhs[k] = -g[k]
        if not _solve4(m, rhs, p):
            lam = min(lam * 4.0, 1e15)
            if lam >= 1e15:
                status = 3
                break
            continue
        step_all_zero = True
        for k in range(4):
            x_new[k] = min(max(x[k] + p[k], lo[k]), hi[k])
            if x_new[k] != x[k]:
                step_all_zero = False
        if step_all_zero:
            lam = min(lam * 4.0, 1e15)
            if lam >= 1e15:
                status = 3
                break
            continue
        # evaluate trial cost with the value-only path
        s_new = x_new[1] + x_new[2]
        if s_new >= 1e-8:
            exp_conv_at_bounds(a, dt, bnode, boff, s_new, yb_tmp)
        _assemble_tac(x_new[0], x_new[1], x_new[2], x_new[3],
                      yb_tmp, zb, izb, dur, tac_new)
        nfev += 1
        cost_new = 0.0
        for i in range(nf):
            r = tac_new[i] - y[i]
            cost_new += r * r
        if np.isfinite(cost_new) and cost_new < cost:
            actual_drop = cost - cost_new
            step_norm = 0.0
            x_norm = 0.0
            for k in range(4):
                step_norm += (x_new[k] - x[k]) ** 2
                x_norm += x_new[k] ** 2
                x[k] = x_new[k]
            cost = cost_new
            lam = max(lam / 3.0, 1e-12)
            tac_with_jac(x[0], x[1], x[2], x[3], a, dt, bnode, boff,
                         zb, izb, dur, tac, jac)
            for k in range(4):
                g[k] = 0.0
                for l in range(4):
                    amat[k, l] = 0.0
            for i in range(nf):
                r = tac[i] - y[i]
                for k in range(4):
                    g[k] += jac[i, k] * r
                    for l in range(4):
                        amat[k, l] += jac[i, k] * jac[i, l]
            if _pg_inf(g, x, lo, hi) <= gtol * g0_scale:
                status = 1
                break
            if actual_drop <= ftol * max(cost, 1e-300):
                status = 2
                break
            if math.sqrt(step_norm) <= xtol * (math.sqrt(x_norm) + xtol):
                status = 3
                break
        else:
            lam = min(lam * 4.0, 1e15)
            if lam >= 1e15:
                status = 3
                break
    for k in range(4):
        x_out[k] = x[k]
    return cost, nfev, status, _pg_inf(g, x, lo, hi) / g0_scale


@numba.njit(cache=True, parallel=True)
def lm_fit_batch(tacs, x0, lo, hi, max_iter, xtol, ftol, gtol, input_zero,
                 a, dt, bnode, boff, zb, izb, dur, params_out, diag_out):
    """Independent bounded LM fits for each row of tacs [n, T].

    params_out is [n, 4]; diag_out rows are (sse, nfev, status, optimality).
    Voxel problems are independent, so results are identical for any thread
    count.
    """
    for r in numba.prange(tacs.shape[0]):
        x_row = np.empty(4)
        sse, nfev, status, opt = _lm_fit_one(
            tacs[r], x0, lo, hi, max_iter, xtol, ftol, gtol, input_zero,
            a, dt, bnode, boff, zb, izb, dur, x_row)
        for k in range(4):
            params_out[r, k] = x_row[k]
        diag_out[r, 0] = sse
        diag_out[r, 1] = nfev
        diag_out[r, 2] = status
        diag_out[r, 3] = opt
