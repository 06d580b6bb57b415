"""Uniform Cartesian grids, trilinear interpolation and the binary grid format.

Scalar fields (dielectric constant, travel times) live on a shared Grid3.
The on-disk format is fixed: 16-byte magic ``PSCAT-GRID-V1`` padded with
NULs, three little-endian int64 dims, one float64 spacing, three float64
origin coordinates, then the row-major float64 values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError

GRID_MAGIC = b"PSCAT-GRID-V1\x00\x00\x00"


@dataclass(frozen=True)
class Grid3:
    """Uniform grid: node i,j,k sits at origin + h*(i,j,k)."""

    origin: tuple[float, float, float]
    spacing: float
    shape: tuple[int, int, int]

    def __post_init__(self):
        if self.spacing <= 0:
            raise PreconditionError("grid spacing must be positive")
        if any(n < 2 for n in self.shape):
            raise PreconditionError("grid needs at least 2 nodes per axis")

    @property
    def upper(self) -> np.ndarray:
        return self.origin_arr + self.spacing * (np.asarray(self.shape) - 1)

    @property
    def origin_arr(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        o, h = self.origin_arr, self.spacing
        return tuple(o[d] + h * np.arange(self.shape[d]) for d in range(3))

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def contains(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.origin_arr + margin)
            and np.all(x <= self.upper - margin)
        )

    def nearest_index(self, x) -> tuple[int, int, int]:
        idx = np.rint((np.asarray(x, float) - self.origin_arr) / self.spacing)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1).astype(int)
        return tuple(int(i) for i in idx)

    def index_coords(self, idx) -> np.ndarray:
        return self.origin_arr + self.spacing * np.asarray(idx, dtype=float)

    def radius_from(self, y) -> np.ndarray:
        """|x - y| at every node, as a full field."""
        X, Y, Z = self.meshgrid()
        y = np.asarray(y, float)
        return np.sqrt((X - y[0]) ** 2 + (Y - y[1]) ** 2 + (Z - y[2]) ** 2)


def trilinear(grid: Grid3, values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a scalar field at points (n,3)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    u = (pts - grid.origin_arr) / grid.spacing
    n = np.asarray(grid.shape)
    u = np.clip(u, 0.0, n - 1 - 1e-12)
    i0 = np.floor(u).astype(int)
    i0 = np.minimum(i0, n - 2)
    f = u - i0
    out = np.zeros(len(pts))
    for di in (0, 1):
        wi = f[:, 0] if di else 1.0 - f[:, 0]
        for dj in (0, 1):
            wj = f[:, 1] if dj else 1.0 - f[:, 1]
            for dk in (0, 1):
                wk = f[:, 2] if dk else 1.0 - f[:, 2]
                out += (
                    wi * wj * wk
                    * values[i0[:, 0] + di, i0[:, 1] + dj, i0[:, 2] + dk]
                )
    return out


class FieldInterp:
    """Trilinearly interpolated scalar field with gradient and Hessian.

    Derivative grids are precomputed with central differences; the second
    derivatives are what the paraxial (Jacobi) system consumes, so a C2
    sampled field is assumed.
    """

    def __init__(self, grid: Grid3, values: np.ndarray, with_hessian: bool = False):
        self.grid = grid
        self.values = values
        h = grid.spacing
        self._grads = np.gradient(values, h, edge_order=2)
        self._hess = None
        if with_hessian:
            self._hess = [
                [np.gradient(self._grads[a], h, edge_order=2)[b] for b in range(3)]
                for a in range(3)
            ]

    def __call__(self, pts) -> np.ndarray:
        return trilinear(self.grid, self.values, pts)

    def gradient(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        g = np.empty((len(pts), 3))
        for a in range(3):
            g[:, a] = trilinear(self.grid, self._grads[a], pts)
        return g

    def hessian(self, pts) -> np.ndarray:
        if self._hess is None:
            raise PreconditionError("FieldInterp built without Hessian support")
        pts = np.atleast_2d(pts)
        H = np.empty((len(pts), 3, 3))
        for a in range(3):
            for b in range(3):
                H[:, a, b] = trilinear(self.grid, self._hess[a][b], pts)
        # symmetrize: mixed finite differences commute only approximately
        return 0.5 * (H + np.swapaxes(H, 1, 2))


def write_grid(path, grid: Grid3, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    if tuple(values.shape) != tuple(grid.shape):
        raise PreconditionError("field shape does not match grid")
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<3q", *grid.shape))
        fh.write(struct.pack("<d", grid.spacing))
        fh.write(struct.pack("<3d", *grid.origin))
        fh.write(values.tobytes(order="C"))


def read_grid(path) -> tuple[Grid3, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(16)
        if magic != GRID_MAGIC:
            raise PreconditionError(f"bad grid magic in {path!r}")
        shape = struct.unpack("<3q", fh.read(24))
        (spacing,) = struct.unpack("<d", fh.read(8))
        origin = struct.unpack("<3d", fh.read(24))
        count = shape[0] * shape[1] * shape[2]
        data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
    grid = Grid3(tuple(origin), spacing, tuple(int(n) for n in shape))
    return grid, data.reshape(shape).copy()
