"""Admissible media and the nested measurement geometry.

A phantom is a gridded dielectric field c(x) >= 1 with a plateau c = 1+2*beta
covering the inner regions, a C2 radial taper down to exactly 1 before the
outer region's boundary, and optional compactly supported C2 bumps.  The
measurement surface S is the boundary of the middle region.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .grid import Grid3

_REGION_KINDS = ("box", "ball")


@dataclass(frozen=True)
class Region:
    """Axis-aligned box or ball; the only shapes with exact margin geometry."""

    kind: str
    lo: tuple[float, float, float] | None = None
    hi: tuple[float, float, float] | None = None
    center: tuple[float, float, float] | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in _REGION_KINDS:
            raise PreconditionError(f"unknown region kind {self.kind!r}")
        if self.kind == "box":
            if self.lo is None or self.hi is None:
                raise PreconditionError("box region needs lo and hi")
            if not np.all(np.asarray(self.hi) > np.asarray(self.lo)):
                raise PreconditionError("box region needs hi > lo")
        else:
            if self.center is None or self.radius is None or self.radius <= 0:
                raise PreconditionError("ball region needs center and radius > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        d = dict(d)
        kind = d.pop("kind")
        if kind == "box":
            return cls("box", lo=tuple(d["lo"]), hi=tuple(d["hi"]))
        return cls("ball", center=tuple(d["center"]), radius=float(d["radius"]))

    def to_dict(self) -> dict:
        if self.kind == "box":
            return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}

    @property
    def centroid(self) -> np.ndarray:
        if self.kind == "box":
            return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))
        return np.asarray(self.center, dtype=float)

    def contains_points(self, pts: np.ndarray, shrink: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.kind == "box":
            lo = np.asarray(self.lo) + shrink
            hi = np.asarray(self.hi) - shrink
            return np.all((pts >= lo) & (pts <= hi), axis=-1)
        d = np.linalg.norm(pts - np.asarray(self.center), axis=-1)
        return d <= self.radius - shrink

    def boundary_distance(self, pts: np.ndarray) -> np.ndarray:
        """Unsigned distance from each point to the region boundary."""
        pts = np.atleast_2d(pts)
        if self.kind == "ball":
            return np.abs(
                np.linalg.norm(pts - np.asarray(self.center), axis=-1) - self.radius
            )
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        q = np.maximum(lo - pts, pts - hi)         # per-axis exterior excess
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = -np.max(q, axis=-1)               # depth when fully inside
        return np.where(np.any(q > 0, axis=-1), outside, inside)

    def exterior_distance(self, pts: np.ndarray) -> np.ndarray:
        """Euclidean distance to the region, zero inside."""
        pts = np.atleast_2d(pts)
        if self.kind == "ball":
            d = np.linalg.norm(pts - np.asarray(self.center), axis=-1) - self.radius
            return np.maximum(d, 0.0)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        q = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
        return np.linalg.norm(q, axis=-1)

    def circumradius(self, about: np.ndarray) -> float:
        about = np.asarray(about, dtype=float)
        if self.kind == "ball":
            return float(np.linalg.norm(np.asarray(self.center) - about) + self.radius)
        corners = _box_corners(self.lo, self.hi)
        return float(np.max(np.linalg.norm(corners - about, axis=1)))

    def inradius(self, about: np.ndarray) -> float:
        """Largest rho with ball(about, rho) inside the region."""
        about = np.asarray(about, dtype=float)
        if self.kind == "ball":
            return float(self.radius - np.linalg.norm(np.asarray(self.center) - about))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return float(min(np.min(about - lo), np.min(hi - about)))


def _box_corners(lo, hi) -> np.ndarray:
    lo, hi = np.asarray(lo), np.asarray(hi)
    return np.array(
        [[(hi if (m >> d) & 1 else lo)[d] for d in range(3)] for m in range(8)]
    )


def region_nested_in(inner: Region, outer: Region) -> bool:
    if outer.kind == "box":
        lo, hi = np.asarray(outer.lo), np.asarray(outer.hi)
        if inner.kind == "box":
            return bool(
                np.all(np.asarray(inner.lo) > lo) and np.all(np.asarray(inner.hi) < hi)
            )
        c, r = np.asarray(inner.center), inner.radius
        return bool(np.all(c - r > lo) and np.all(c + r < hi))
    C, R = np.asarray(outer.center), outer.radius
    if inner.kind == "ball":
        return np.linalg.norm(np.asarray(inner.center) - C) + inner.radius < R
    corners = _box_corners(inner.lo, inner.hi)
    return bool(np.max(np.linalg.norm(corners - C, axis=1)) < R)


def surface_separation(inner: Region, outer: Region) -> float:
    """Minimum distance between the two boundaries of nested regions (exact)."""
    if not region_nested_in(inner, outer):
        raise PreconditionError("regions are not strictly nested")
    if inner.kind == "box" and outer.kind == "box":
        gaps = np.concatenate(
            [
                np.asarray(inner.lo) - np.asarray(outer.lo),
                np.asarray(outer.hi) - np.asarray(inner.hi),
            ]
        )
        return float(np.min(gaps))
    if inner.kind == "ball" and outer.kind == "ball":
        d = np.linalg.norm(np.asarray(inner.center) - np.asarray(outer.center))
        return float(outer.radius - d - inner.radius)
    if inner.kind == "ball" and outer.kind == "box":
        return float(outer.inradius(np.asarray(inner.center)) - inner.radius)
    # box inside ball: farthest box corner from the ball center decides
    return float(outer.radius - inner.circumradius(np.asarray(outer.center)))


def surface_points_normals(region: Region, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Discrete sampling of the region boundary with outward unit normals."""
    if region.kind == "ball":
        n = max(count, 4)
        i = np.arange(n)
        phi = np.pi * (3.0 - np.sqrt(5.0)) * i       # Fibonacci sphere
        z = 1.0 - 2.0 * (i + 0.5) / n
        s = np.sqrt(1.0 - z * z)
        dirs = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
        pts = np.asarray(region.center) + region.radius * dirs
        return pts, dirs
    lo, hi = np.asarray(region.lo), np.asarray(region.hi)
    per_face = max(count // 6, 1)
    m = max(int(np.ceil(np.sqrt(per_face))), 1)
    pts, nrm = [], []
    for axis in range(3):
        a, b = (axis + 1) % 3, (axis + 2) % 3
        # cell-centered sampling keeps points off edges and corners
        ua = lo[a] + (hi[a] - lo[a]) * (np.arange(m) + 0.5) / m
        ub = lo[b] + (hi[b] - lo[b]) * (np.arange(m) + 0.5) / m
        A, B = np.meshgrid(ua, ub, indexing="ij")
        for side, val in ((-1.0, lo[axis]), (1.0, hi[axis])):
            p = np.zeros((m * m, 3))
            p[:, axis] = val
            p[:, a] = A.ravel()
            p[:, b] = B.ravel()
            n = np.zeros((m * m, 3))
            n[:, axis] = side
            pts.append(p)
            nrm.append(n)
    return np.concatenate(pts), np.concatenate(nrm)


@dataclass(frozen=True)
class Geometry:
    """Nested regions Omega < Psi < G with the measurement surface S on dPsi."""

    omega: Region
    psi: Region
    g: Region
    surface_points: np.ndarray = field(repr=False)
    surface_normals: np.ndarray = field(repr=False)
    rho: float

    @classmethod
    def build(cls, omega: Region, psi: Region, g: Region, surface_count: int = 96):
        rho = margin_rho_regions(omega, psi, g)
        pts, nrm = surface_points_normals(psi, surface_count)
        return cls(omega, psi, g, pts, nrm, rho)

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        return cls.build(
            Region.from_dict(d["omega"]),
            Region.from_dict(d["psi"]),
            Region.from_dict(d["g"]),
            int(d.get("surface_count", 96)),
        )

    def to_dict(self) -> dict:
        return {
            "omega": self.omega.to_dict(),
            "psi": self.psi.to_dict(),
            "g": self.g.to_dict(),
            "surface_count": len(self.surface_points),
        }


def margin_rho_regions(omega: Region, psi: Region, g: Region) -> float:
    d_in = surface_separation(omega, psi)
    d_out = surface_separation(psi, g)
    rho = 0.5 * min(d_in, d_out)
    if rho <= 0:
        raise PreconditionError("geometry margins must be strictly positive")
    return rho


def margin_rho(geometry: Geometry) -> float:
    """rho = half the smaller surface separation; recomputed from the regions."""
    return margin_rho_regions(geometry.omega, geometry.psi, geometry.g)


def _smoothstep_down(u: np.ndarray) -> np.ndarray:
    """C2 quintic step: 1 for u<=0, 0 for u>=1."""
    u = np.clip(u, 0.0, 1.0)
    return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def _bump_profile(d: np.ndarray, radius: float) -> np.ndarray:
    """Compact C2 radial bump (1-(d/R)^2)^3 with unit peak."""
    u2 = np.clip((d / radius) ** 2, 0.0, 1.0)
    return (1.0 - u2) ** 3


@dataclass(frozen=True)
class MediumPhantom:
    grid: Grid3
    c_values: np.ndarray = field(repr=False)
    beta: float
    geometry: Geometry
    spec: dict = field(default_factory=dict, repr=False)

    @property
    def n_values(self) -> np.ndarray:
        return np.sqrt(self.c_values)

    def c_max(self) -> float:
        return float(np.max(self.c_values))


@dataclass(frozen=True)
class AdmissibleClass:
    """Membership class for the tomography step: n = sqrt(c), ||n||_C2 <= n00."""

    n00: float
    lower_bound: float = 1.0

    def __post_init__(self):
        if self.n00 <= 1.0:
            raise PreconditionError("n00 must exceed 1")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


def build_phantom(spec: dict) -> MediumPhantom:
    """Construct a phantom from a JSON-compatible description.

    Keys: ``grid``, ``geometry``, ``beta``, ``background`` (plateau level and
    optional taper radii) and ``bumps`` (center/radius/amplitude each).  The
    result is deterministic in the spec and satisfies the admissibility
    constraints by construction; violations raise with the offending detail.
    """
    beta = float(spec["beta"])
    if beta <= 0:
        raise PreconditionError("beta must be positive")
    geometry = (
        spec["geometry"]
        if isinstance(spec["geometry"], Geometry)
        else Geometry.from_dict(spec["geometry"])
    )
    gd = spec["grid"]
    grid = gd if isinstance(gd, Grid3) else Grid3(
        tuple(gd["origin"]), float(gd["spacing"]), tuple(gd["shape"])
    )

    bg = dict(spec.get("background", {}))
    plateau = float(bg.get("plateau", 1.0 + 2.0 * beta))
    if plateau < 1.0 + 2.0 * beta:
        raise PreconditionError(
            f"background plateau {plateau} below 1+2*beta = {1 + 2 * beta}"
        )

    # the plateau covers Psi exactly; a C2 step along dist(x, Psi) reaches 1
    # strictly before dG (offsets of a convex region stay nested while the
    # offset width is below the boundary separation)
    sep = surface_separation(geometry.psi, geometry.g)
    width = float(bg.get("taper_width", 0.96 * sep))
    if not 0.0 < width <= sep:
        raise PreconditionError(
            f"taper width {width:.6g} must lie in (0, {sep:.6g}] to stay inside G"
        )

    # grid must cover G so that c == 1 is realized on the grid outside G
    grid_box = Region("box", lo=tuple(grid.origin_arr), hi=tuple(grid.upper))
    if not region_nested_in(geometry.g, grid_box):
        raise PreconditionError("grid does not cover the region G")

    pts = np.stack([m.ravel() for m in grid.meshgrid()], axis=1)
    u = geometry.psi.exterior_distance(pts).reshape(grid.shape)
    c = 1.0 + (plateau - 1.0) * _smoothstep_down(u / width)

    for i, b in enumerate(spec.get("bumps", [])):
        amp = float(b["amplitude"])
        rad = float(b["radius"])
        ctr = np.asarray(b["center"], dtype=float)
        if amp < 0:
            raise PreconditionError(f"bump {i}: amplitude must be >= 0")
        if rad <= 0:
            raise PreconditionError(f"bump {i}: radius must be positive")
        support = Region("ball", center=tuple(ctr), radius=rad)
        if not region_nested_in(support, geometry.g):
            raise PreconditionError(f"bump {i}: support leaks outside G")
        d = grid.radius_from(ctr)
        c = c + amp * _bump_profile(d, rad)

    phantom = MediumPhantom(grid, c, beta, geometry, spec=_spec_as_plain(spec))
    report = validate_admissible(phantom, AdmissibleClass(n00=_default_n00(phantom)))
    bad = report.failures()
    if bad:
        raise PreconditionError(
            "phantom spec violates admissibility: "
            + "; ".join(f"{b.name} ({b.detail})" for b in bad)
        )
    return phantom


def _spec_as_plain(spec: dict) -> dict:
    out = dict(spec)
    if isinstance(out.get("geometry"), Geometry):
        out["geometry"] = out["geometry"].to_dict()
    if isinstance(out.get("grid"), Grid3):
        g = out["grid"]
        out["grid"] = {
            "origin": list(g.origin),
            "spacing": g.spacing,
            "shape": list(g.shape),
        }
    return out


def _default_n00(phantom: MediumPhantom) -> float:
    n = phantom.n_values
    h = phantom.grid.spacing
    grads = np.gradient(n, h, edge_order=2)
    seconds = [np.gradient(g, h, edge_order=2) for g in grads]
    worst = max(
        float(np.max(np.abs(n))),
        max(float(np.max(np.abs(g))) for g in grads),
        max(float(np.max(np.abs(s))) for row in seconds for s in row),
    )
    return worst * 1.05 + 1e-9


def validate_admissible(
    phantom: MediumPhantom,
    cls: AdmissibleClass,
    top_wavenumber: float | None = None,
) -> ValidationReport:
    """Check the admissibility constraints; failures are report rows, not errors."""
    grid, c, beta = phantom.grid, phantom.c_values, phantom.beta
    geo = phantom.geometry
    pts = np.stack([m.ravel() for m in grid.meshgrid()], axis=1)
    checks: list[CheckResult] = []

    m = float(np.min(c))
    idx = np.unravel_index(int(np.argmin(c)), c.shape)
    checks.append(
        CheckResult(
            "c_at_least_one",
            m >= 1.0 - 1e-12,
            m - 1.0,
            f"min c = {m:.6g} at node {tuple(int(i) for i in idx)}",
        )
    )

    inside_psi = geo.psi.contains_points(pts).reshape(c.shape)
    if np.any(inside_psi):
        m = float(np.min(c[inside_psi]))
        checks.append(
            CheckResult(
                "contrast_in_psi",
                m >= 1.0 + 2.0 * beta - 1e-12,
                m - (1.0 + 2.0 * beta),
                f"min c in Psi = {m:.6g}, needs >= {1 + 2 * beta:.6g}",
            )
        )
    outside_g = ~geo.g.contains_points(pts).reshape(c.shape)
    if np.any(outside_g):
        dev = float(np.max(np.abs(c[outside_g] - 1.0)))
        checks.append(
            CheckResult(
                "vacuum_outside_g",
                dev <= 1e-12,
                -dev,
                f"max |c-1| outside G = {dev:.3g}",
            )
        )

    n = phantom.n_values
    h = grid.spacing
    grads = np.gradient(n, h, edge_order=2)
    seconds = [np.gradient(g, h, edge_order=2) for g in grads]
    inside_psi_n = inside_psi
    cnorm = max(
        float(np.max(np.abs(n[inside_psi_n]))) if np.any(inside_psi_n) else 0.0,
        max(float(np.max(np.abs(g[inside_psi_n]))) for g in grads),
        max(float(np.max(np.abs(s[inside_psi_n]))) for row in seconds for s in row),
    )
    checks.append(
        CheckResult(
            "c2_norm_in_class",
            cnorm <= cls.n00,
            cls.n00 - cnorm,
            f"discrete ||n||_C2(Psi) = {cnorm:.6g}, bound {cls.n00:.6g}",
        )
    )
    mn = float(np.min(n))
    checks.append(
        CheckResult("n_at_least_one", mn >= cls.lower_bound - 1e-12, mn - 1.0)
    )

    sd = geo.psi.boundary_distance(geo.surface_points)
    checks.append(
        CheckResult(
            "surface_points_on_boundary",
            float(np.max(sd)) <= grid.spacing,
            grid.spacing - float(np.max(sd)),
            "surface sampling within one grid cell of dPsi",
        )
    )

    diagnostics = {"rho": geo.rho, "c_max": float(np.max(c))}
    if top_wavenumber is not None:
        # shortest wavelength at the top of the band vs the taper length scale
        lam = 2.0 * np.pi / (top_wavenumber * np.sqrt(np.max(c)))
        bg = phantom.spec.get("background", {})
        feature = None
        rads = [b["radius"] for b in phantom.spec.get("bumps", [])]
        if rads:
            feature = min(rads)
        diagnostics["wavelengths_per_feature"] = (
            None if feature is None else feature / lam
        )
        diagnostics["nodes_per_wavelength"] = lam / grid.spacing
    return ValidationReport(tuple(checks), diagnostics)
