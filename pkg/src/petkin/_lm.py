"""Small bounded Levenberg-Marquardt solver for 4-parameter TAC fits.

scipy's trust-region solvers spend ~0.3 ms of Python per iteration, which
dominates whole-volume fitting; this loop keeps the same semantics (Marquardt
diagonal scaling, projected steps onto box bounds, scipy-compatible status
codes) with almost no overhead for tiny parameter vectors.
"""

from __future__ import annotations

import numpy as np

STATUS_MESSAGES = {
    0: "maximum number of iterations reached",
    1: "projected gradient tolerance satisfied",
    2: "cost reduction tolerance satisfied",
    3: "step tolerance satisfied",
}


def projected_gradient(g: np.ndarray, x: np.ndarray, lo: np.ndarray,
                       hi: np.ndarray) -> np.ndarray:
    """Gradient with components pointing out of the box zeroed."""
    pg = g.copy()
    tol = 1e-10 * np.maximum(1.0, np.abs(x))
    pg[(x <= lo + tol) & (g > 0)] = 0.0
    pg[(x >= hi - tol) & (g < 0)] = 0.0
    return pg


def lm_bounded(fun, jac_fun, x0, lo, hi, max_iter=200,
               xtol=1e-8, ftol=1e-10, gtol=1e-8):
    """Minimize 0.5*||fun(x)||^2 over the box [lo, hi].

    fun(x) returns the residual vector; jac_fun(x) returns (residuals,
    jacobian). Steps solve the Marquardt-damped normal equations and are
    projected onto the box. Returns (x, sse, nfev, njev, status, optimality)
    where optimality is the projected-gradient inf-norm relative to its value
    at x0 (0.0 when the initial gradient already vanishes).
    """
    x = np.clip(np.asarray(x0, dtype=np.float64), lo, hi)
    r, jac = jac_fun(x)
    nfev = 1
    njev = 1
    cost = float(r @ r)

    a_mat = jac.T @ jac
    g = jac.T @ r
    g0_scale = float(np.max(np.abs(projected_gradient(g, x, lo, hi))))
    if g0_scale == 0.0:
        return x, cost, nfev, njev, 1, 0.0

    lam = 1e-3
    status = 0
    for _ in range(max_iter - 1):
        diag = np.maximum(np.diag(a_mat), 1e-14 * max(np.max(np.diag(a_mat)), 1e-300))
        try:
            p = np.linalg.solve(a_mat + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            p = np.linalg.lstsq(a_mat + lam * np.diag(diag), -g, rcond=None)[0]
        x_new = np.clip(x + p, lo, hi)
        step = x_new - x
        if np.all(step == 0.0):
            lam = min(lam * 4.0, 1e15)
            if lam >= 1e15:
                status = 3
                break
            continue
        r_new = fun(x_new)
        nfev += 1
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new < cost:
            actual_drop = cost - cost_new
            x, cost = x_new, cost_new
            lam = max(lam / 3.0, 1e-12)
            r, jac = jac_fun(x)
            njev += 1
            a_mat = jac.T @ jac
            g = jac.T @ r
            pg = np.max(np.abs(projected_gradient(g, x, lo, hi)))
            if pg <= gtol * g0_scale:
                status = 1
                break
            if actual_drop <= ftol * max(cost, 1e-300):
                status = 2
                break
            if np.linalg.norm(step) <= xtol * (np.linalg.norm(x) + xtol):
                status = 3
                break
        else:
            lam = min(lam * 4.0, 1e15)
            if lam >= 1e15:
                status = 3
                break
    pg = float(np.max(np.abs(projected_gradient(g, x, lo, hi))))
    return x, cost, nfev, njev, status, pg / g0_scale
