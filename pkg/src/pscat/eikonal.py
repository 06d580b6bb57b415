"""Travel times, geodesics, regularity checks and geometric spreading.

The travel-time field solves |grad tau|^2 = c(x) by fast marching with an
analytically frozen source ball; geodesics are steepest-descent polylines on
tau; the spreading amplitude comes from paraxial ray tracing and carries the
free-space normalization a = 1/(4 pi |x-y|) when c = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fmm, rays
from .errors import NumericalError, PreconditionError
from .grid import FieldInterp, Grid3, trilinear
from .medium import MediumPhantom


@dataclass(frozen=True)
class TravelTimeField:
    source: tuple[float, float, float]
    tau_values: np.ndarray = field(repr=False)
    grid: Grid3

    def __call__(self, pts) -> np.ndarray:
        return trilinear(self.grid, self.tau_values, pts)


@dataclass(frozen=True)
class GeodesicPath:
    """Polyline from the source y to the evaluation point x."""

    points: np.ndarray = field(repr=False)
    ds: np.ndarray = field(repr=False)
    metric_length: float
    tau_samples: np.ndarray = field(repr=False)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def arclength(self) -> float:
        return float(np.sum(self.ds))


@dataclass(frozen=True)
class SpreadingAmplitude:
    j_value: float
    a_value: float


@dataclass(frozen=True)
class PairRegularity:
    x: tuple
    y: tuple
    arrivals: int
    hits: int
    ok: bool
    note: str = ""


@dataclass(frozen=True)
class RegularityReport:
    pairs: tuple[PairRegularity, ...]

    @property
    def all_regular(self) -> bool:
        return all(p.ok for p in self.pairs)

    def flagged(self) -> list[PairRegularity]:
        return [p for p in self.pairs if not p.ok]


def solve_eikonal(
    phantom: MediumPhantom,
    y,
    order: int = 2,
    source_ball_cells: float = 4.0,
) -> TravelTimeField:
    """Fast-marching travel times from the source y.

    Nodes inside the source ball are frozen to sqrt(c(y)) * |x - y| before
    marching, which removes the conical source error that otherwise
    dominates; the remaining field is first- or second-order upwind.
    """
    grid = phantom.grid
    y = np.asarray(y, dtype=float)
    if not grid.contains(y):
        raise PreconditionError(f"source {tuple(y)} outside the grid")
    if order not in (1, 2):
        raise PreconditionError("order must be 1 or 2")

    h = grid.spacing
    c = phantom.c_values
    r = grid.radius_from(y)
    sy = np.sqrt(trilinear(grid, c, y[None, :])[0])
    ball = r <= source_ball_cells * h
    if not np.any(ball):
        ball = r <= (r.min() + 1.5 * h)
    src_idx = np.flatnonzero(ball.ravel())
    src_tau = sy * r.ravel()[src_idx]

    tau = _fmm.fast_march(
        np.ascontiguousarray(c.ravel(), dtype=np.float64),
        grid.shape[0],
        grid.shape[1],
        grid.shape[2],
        float(h),
        src_idx.astype(np.int64),
        src_tau.astype(np.float64),
        order,
    ).reshape(grid.shape)
    return TravelTimeField(tuple(y), tau, grid)


def trace_geodesic(
    ttf: TravelTimeField,
    x,
    phantom: MediumPhantom | None = None,
    step_factor: float = 0.5,
    grad_tol: float = 0.2,
) -> GeodesicPath:
    """Steepest-descent polyline on tau from x back to the source.

    The metric length is the trapezoid line integral of sqrt(c) along the
    polyline; when the medium is not supplied the integrand falls back to
    |grad tau|, which equals sqrt(c) on the solution up to O(h^2/r^2) near
    the source.  A vanishing gradient away from the source signals an
    irregular field and raises.
    """
    grid = ttf.grid
    x = np.asarray(x, dtype=float)
    y = np.asarray(ttf.source, dtype=float)
    if not grid.contains(x):
        raise PreconditionError(f"point {tuple(x)} outside the grid")
    if np.linalg.norm(x - y) < grid.spacing:
        raise PreconditionError("evaluation point coincides with the source")

    h = grid.spacing
    step = step_factor * h
    interp = FieldInterp(grid, ttf.tau_values)
    pts = [x.copy()]
    speeds = [float(np.linalg.norm(interp.gradient(x[None, :])[0]))]
    p = x.copy()
    max_steps = int(20 * np.sum(grid.shape) / step_factor)
    for _ in range(max_steps):
        d = np.linalg.norm(p - y)
        if d <= 1.5 * h:
            break
        g = interp.gradient(p[None, :])[0]
        gn = np.linalg.norm(g)
        if gn < grad_tol:
            raise NumericalError(
                f"irregular field: descent stalled at {tuple(p)} (|grad|={gn:.3g})"
            )
        p = p - min(step, d) * g / gn
        p = np.clip(p, grid.origin_arr, grid.upper)
        pts.append(p.copy())
        speeds.append(float(gn))
    else:
        raise NumericalError("geodesic descent did not reach the source")
    pts.append(y.copy())
    speeds.append(speeds[-1])

    pts = np.asarray(pts[::-1])
    speeds = np.asarray(speeds[::-1])
    if phantom is not None:
        speeds = np.sqrt(trilinear(grid, phantom.c_values, pts))
    else:
        # interpolated |grad tau| collapses across the cone tip; backfill
        # the guard zone with the first reliable value along the path
        dist_src = np.linalg.norm(pts - y, axis=1)
        good = dist_src >= 3.0 * h
        if np.any(good):
            first_good = int(np.argmax(good))
            speeds[:first_good] = speeds[first_good]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    metric = float(np.sum(0.5 * (speeds[:-1] + speeds[1:]) * seg))
    tau_samples = ttf(pts)
    return GeodesicPath(pts, seg, metric, tau_samples)


def check_regularity(
    phantom: MediumPhantom,
    pairs,
    fan_count: int = 500,
    cone_deg: float = 30.0,
    cluster_factor: float = 1.0,
) -> RegularityReport:
    """Fan-count multipath detection for each (x, y) pair.

    A bundle of rays leaves y inside a cone aimed at x; rays passing within
    one grid cell of x are clustered by arrival time.  More than one cluster
    means several geodesics connect the pair (a caustic), which the pipeline
    must refuse.
    """
    grid = phantom.grid
    h = grid.spacing
    cfield = FieldInterp(grid, phantom.c_values)
    cmax = float(np.sqrt(np.max(phantom.c_values)))
    out = []
    for x, y in pairs:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        r = np.linalg.norm(x - y)
        dirs = rays.cap_directions(x - y, np.deg2rad(cone_deg), fan_count)
        best_d, best_tau, _ = rays.shoot_fan(
            cfield, y, dirs, x, sigma_max=2.0 * r, step=h / 3.0
        )
        hit = best_d <= h
        nhits = int(np.count_nonzero(hit))
        if nhits == 0:
            out.append(
                PairRegularity(tuple(x), tuple(y), 0, 0, False, "no ray reached x")
            )
            continue
        taus = np.sort(best_tau[hit])
        gaps = np.diff(taus)
        thresh = cluster_factor * h * cmax
        arrivals = 1 + int(np.count_nonzero(gaps > thresh))
        ok = arrivals == 1
        out.append(
            PairRegularity(
                tuple(x), tuple(y), arrivals, nhits, ok,
                "" if ok else f"{arrivals} distinct arrivals",
            )
        )
    return RegularityReport(tuple(out))


def spreading_amplitude(
    phantom: MediumPhantom,
    path: GeodesicPath,
    step_factor: float = 0.33,
) -> SpreadingAmplitude:
    """Geometric spreading along a traced geodesic.

    Two paraxial fields are integrated along the ray leaving the source in
    the path's initial direction.  j_value is the transverse-area Jacobian
    normalized to 1 in homogeneous media (and in the coincidence limit);
    a_value = 1 / (4 pi sqrt(n(x) n(y) area)) is the front amplitude that
    the wave solver reproduces, equal to 1/(4 pi |x-y|) for constant c.
    """
    grid = phantom.grid
    h = grid.spacing
    y = path.start
    d0 = path.points[1] - path.points[0]
    nrm = np.linalg.norm(d0)
    if nrm == 0:
        raise PreconditionError("degenerate path")
    cfield = FieldInterp(grid, phantom.c_values, with_hessian=True)
    res = rays.trace_with_jacobi(
        cfield, y, d0 / nrm, sigma_total=path.arclength, step=h * step_factor
    )
    area = res["area"]
    if area <= 0 or res["min_scaled_area"] <= 1e-3:
        raise NumericalError("spreading singular: paraxial area collapsed (caustic)")
    ny = np.sqrt(res["c_src"])
    nx = np.sqrt(res["c_end"])
    tau = path.metric_length
    j_value = area * res["c_src"] * res["c_end"] / tau**2
    a_value = 1.0 / (4.0 * np.pi * np.sqrt(nx * ny * area))
    return SpreadingAmplitude(float(j_value), float(a_value))


def omega0_bisect(
    phantom: MediumPhantom,
    y,
    ttf: TravelTimeField | None = None,
    n_dirs: int = 12,
    shells=(1.0, 0.7, 0.4),
    tol_factor: float = 0.02,
) -> float:
    """Largest radius omega <= rho where both near-source bounds hold.

    Condition (a): sqrt(J) < 1 + beta/2 on sampled points of the ball
    (J normalized to 1 at coincidence); condition (b): c >= 1 + beta at
    every grid node of the ball.  Collapse of the bisection reports that
    the surface contrast is too weak.
    """
    grid = phantom.grid
    beta = phantom.beta
    rho = phantom.geometry.rho
    y = np.asarray(y, float)
    if ttf is None:
        ttf = solve_eikonal(phantom, y)
    rfield = grid.radius_from(y)

    dirs = rays.cap_directions(np.array([0.0, 0.0, 1.0]), np.pi, n_dirs)

    def feasible(om: float) -> bool:
        ball = rfield <= om
        if np.any(ball) and float(np.min(phantom.c_values[ball])) < 1.0 + beta:
            return False
        for sh in shells:
            for d in dirs:
                x = y + d * (om * sh)
                if not grid.contains(x, margin=grid.spacing):
                    return False
                try:
                    path = trace_geodesic(ttf, x, phantom)
                    amp = spreading_amplitude(phantom, path)
                except (NumericalError, PreconditionError):
                    return False
                if np.sqrt(amp.j_value) >= 1.0 + beta / 2.0:
                    return False
        return True

    hi = 0.999 * rho
    lo = tol_factor * rho
    if feasible(hi):
        return hi
    if not feasible(lo):
        raise NumericalError("contrast too weak at surface: omega0 collapsed")
    for _ in range(18):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def geodesic_csv(path: GeodesicPath, filename) -> None:
    """Polyline export: x,y,z,sigma,tau per row."""
    sigma = np.concatenate([[0.0], np.cumsum(path.ds)])
    with open(filename, "w") as fh:
        fh.write("x,y,z,sigma,tau\n")
        for p, s, t in zip(path.points, sigma, path.tau_samples):
            fh.write(
                f"{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},"
                f"{float(s)!r},{float(t)!r}\n"
            )
