"""Ray shooting and paraxial (Jacobi) dynamic ray tracing.

Rays are integrated in euclidean arclength sigma for the Hamiltonian
|p|^2 = c(x):

    dx/dsigma = p / sqrt(c),   dp/dsigma = grad c / (2 sqrt(c)),
    dtau/dsigma = sqrt(c).

The same parametrization carries the paraxial perturbations (dx, dp) whose
transverse area gives the geometric spreading.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import least_squares

from .errors import NumericalError
from .grid import FieldInterp


def cap_directions(axis: np.ndarray, half_angle: float, count: int) -> np.ndarray:
    """Fibonacci sampling of the spherical cap around ``axis``."""
    axis = np.asarray(axis, float)
    axis = axis / np.linalg.norm(axis)
    i = np.arange(count)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    cmin = np.cos(half_angle)
    z = 1.0 - (1.0 - cmin) * (i + 0.5) / count
    s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = golden * i
    local = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    # rotate +z onto axis
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(ref, axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    return local[:, :1] * e1 + local[:, 1:2] * e2 + local[:, 2:3] * axis


def _ray_rhs(cfield: FieldInterp, X: np.ndarray, P: np.ndarray):
    c = np.maximum(cfield(X), 1e-12)
    g = cfield.gradient(X)
    sq = np.sqrt(c)[:, None]
    return P / sq, g / (2.0 * sq), np.sqrt(c)


def shoot_fan(
    cfield: FieldInterp,
    y: np.ndarray,
    dirs: np.ndarray,
    target: np.ndarray,
    sigma_max: float,
    step: float,
):
    """Integrate a bundle of rays from y; track closest approach to target.

    Returns (min_dist, tau_at_closest, end_points) arrays over the bundle.
    """
    y = np.asarray(y, float)
    target = np.asarray(target, float)
    m = len(dirs)
    X = np.tile(y, (m, 1))
    cy = np.sqrt(np.maximum(cfield(y[None, :]), 1e-12))[0]
    P = dirs * cy
    tau = np.zeros(m)
    best_d = np.full(m, np.inf)
    best_tau = np.zeros(m)
    nsteps = int(np.ceil(sigma_max / step))
    for _ in range(nsteps):
        X, P, tau = _rk4_step(cfield, X, P, tau, step)
        d = np.linalg.norm(X - target, axis=1)
        better = d < best_d
        best_d[better] = d[better]
        best_tau[better] = tau[better]
    return best_d, best_tau, X


def _rk4_step(cfield, X, P, tau, hstep):
    k1x, k1p, k1t = _ray_rhs(cfield, X, P)
    k2x, k2p, k2t = _ray_rhs(cfield, X + 0.5 * hstep * k1x, P + 0.5 * hstep * k1p)
    k3x, k3p, k3t = _ray_rhs(cfield, X + 0.5 * hstep * k2x, P + 0.5 * hstep * k2p)
    k4x, k4p, k4t = _ray_rhs(cfield, X + hstep * k3x, P + hstep * k3p)
    Xn = X + (hstep / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    Pn = P + (hstep / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
    taun = tau + (hstep / 6.0) * (k1t + 2 * k2t + 2 * k3t + k4t)
    # project back onto |p| = sqrt(c); the exact flow conserves it
    c = np.maximum(cfield(Xn), 1e-12)
    Pn *= (np.sqrt(c) / np.linalg.norm(Pn, axis=1))[:, None]
    return Xn, Pn, taun


def ray_travel_time(
    cfield: FieldInterp,
    y,
    x,
    step: float,
    sigma_slack: float = 1.6,
    refine: bool = True,
) -> tuple[float, np.ndarray]:
    """Two-point travel time by shooting: minimize the miss at closest approach.

    Fermat stationarity makes tau quadratically insensitive to the residual
    aiming error, which is what makes this a sturdy reference for the grid
    solver.  Returns (tau, end_point).
    """
    y = np.asarray(y, float)
    x = np.asarray(x, float)
    r = np.linalg.norm(x - y)
    d0 = (x - y) / r
    ref = np.array([1.0, 0.0, 0.0]) if abs(d0[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(ref, d0)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d0, e1)
    sigma_max = sigma_slack * r

    def run(angles):
        a, b = angles
        d = d0 + a * e1 + b * e2
        d /= np.linalg.norm(d)
        best_d, best_tau, _ = shoot_fan(cfield, y, d[None, :], x, sigma_max, step)
        return best_d[0], best_tau[0]

    def residual(angles):
        a, b = angles
        d = d0 + a * e1 + b * e2
        d /= np.linalg.norm(d)
        X = y[None, :].copy()
        cy = np.sqrt(np.maximum(cfield(y[None, :]), 1e-12))[0]
        P = d[None, :] * cy
        tau = np.zeros(1)
        best = np.inf
        vec = np.zeros(2)
        nsteps = int(np.ceil(sigma_max / step))
        for _ in range(nsteps):
            X, P, tau = _rk4_step(cfield, X, P, tau, step)
            dd = X[0] - x
            dist = np.linalg.norm(dd)
            if dist < best:
                best = dist
                vec = np.array([dd @ e1, dd @ e2])
        return vec

    if refine:
        sol = least_squares(residual, np.zeros(2), xtol=1e-12, ftol=1e-12, gtol=1e-12)
        angles = sol.x
    else:
        angles = np.zeros(2)
    miss, tau = run(angles)
    if miss > 0.05 * r:
        raise NumericalError(f"ray shooting missed target by {miss:.3g}")
    return float(tau), angles


def trace_with_jacobi(
    cfield_h: FieldInterp,
    y,
    direction,
    sigma_total: float,
    step: float,
):
    """Integrate one ray plus two paraxial fields; return spreading data.

    The paraxial state follows the linearization of the ray system; the
    returned ``area`` is |(dx1 x dx2) . t_hat| at the endpoint and
    ``min_area`` tracks caustic crossings past the near-source growth.
    """
    y = np.asarray(y, float)
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    ref = np.array([1.0, 0.0, 0.0]) if abs(d[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(ref, d)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)

    cy = float(np.maximum(cfield_h(y[None, :]), 1e-12)[0])
    x = y.copy()
    p = d * np.sqrt(cy)
    dx = np.zeros((3, 2))
    dp = np.stack([e1, e2], axis=1)
    tau = 0.0

    def rhs(x, p, dx, dp):
        pt = x[None, :]
        c = float(np.maximum(cfield_h(pt), 1e-12)[0])
        g = cfield_h.gradient(pt)[0]
        H = cfield_h.hessian(pt)[0]
        sq = np.sqrt(c)
        xd = p / sq
        pd = g / (2.0 * sq)
        dxd = dp / sq - np.outer(p, g @ dx) / (2.0 * c * sq)
        dpd = (H @ dx) / (2.0 * sq) - np.outer(g, g @ dx) / (4.0 * c * sq)
        return xd, pd, dxd, dpd, sq

    nsteps = max(int(np.ceil(sigma_total / step)), 2)
    hs = sigma_total / nsteps
    min_area = np.inf
    sigma = 0.0
    for istep in range(nsteps):
        k1 = rhs(x, p, dx, dp)
        k2 = rhs(x + 0.5 * hs * k1[0], p + 0.5 * hs * k1[1],
                 dx + 0.5 * hs * k1[2], dp + 0.5 * hs * k1[3])
        k3 = rhs(x + 0.5 * hs * k2[0], p + 0.5 * hs * k2[1],
                 dx + 0.5 * hs * k2[2], dp + 0.5 * hs * k2[3])
        k4 = rhs(x + hs * k3[0], p + hs * k3[1], dx + hs * k3[2], dp + hs * k3[3])
        x = x + (hs / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p = p + (hs / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        dx = dx + (hs / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        dp = dp + (hs / 6.0) * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        tau += (hs / 6.0) * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        c = float(np.maximum(cfield_h(x[None, :]), 1e-12)[0])
        p *= np.sqrt(c) / np.linalg.norm(p)
        sigma += hs
        t_hat = p / np.linalg.norm(p)
        signed = float(np.cross(dx[:, 0], dx[:, 1]) @ t_hat)
        if sigma > 4.0 * step:
            min_area = min(min_area, signed / sigma**2)

    t_hat = p / np.linalg.norm(p)
    signed = float(np.cross(dx[:, 0], dx[:, 1]) @ t_hat)
    return {
        "end": x,
        "tau": tau,
        "area": abs(signed),
        "min_scaled_area": min_area,   # signed: <= 0 past a caustic
        "c_end": float(np.maximum(cfield_h(x[None, :]), 1e-12)[0]),
        "c_src": cy,
    }
