"""Occupancy voxel maps and nearest-obstacle queries.

The map is a regular grid of cubic voxels with a flat occupancy bitset
(x-fastest, bit index ``i + nx*(j + ny*k)``). Obstacles are represented by
the centers of occupied voxels; nearest-neighbor lookups go through a
k-d tree built over the centers that fall inside a region of interest.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Box:
    """Axis-aligned box [lo, hi] in 3-D, inclusive on both ends."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _readonly(np.asarray(self.lo, dtype=float).reshape(3))
        hi = _readonly(np.asarray(self.hi, dtype=float).reshape(3))
        if np.any(hi < lo):
            raise ValueError("box upper corner below lower corner")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def expand(self, margin: float) -> "Box":
        if margin < 0:
            raise ValueError("margin must be >= 0")
        return Box(self.lo - margin, self.hi + margin)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the box (inclusive)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)


@dataclass(frozen=True)
class VoxelMap:
    """Occupancy voxel grid.

    Attributes:
        origin: world position of the grid's lower corner, meters.
        resolution: voxel edge length, meters (> 0).
        dims: (nx, ny, nz) voxel counts, all positive.
        occupancy: flat boolean array of length nx*ny*nz, x-fastest
            (flat index = i + nx*(j + ny*k)).
    """

    origin: np.ndarray
    resolution: float
    dims: tuple[int, int, int]
    occupancy: np.ndarray

    def __post_init__(self):
        origin = _readonly(np.asarray(self.origin, dtype=float).reshape(3))
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError(f"dims must be 3 positive integers, got {self.dims}")
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")
        occ = np.asarray(self.occupancy, dtype=bool).reshape(-1)
        if occ.size != dims[0] * dims[1] * dims[2]:
            raise ValueError(
                f"occupancy length {occ.size} != nx*ny*nz = {dims[0] * dims[1] * dims[2]}"
            )
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "occupancy", _readonly(occ))

    @property
    def extent(self) -> Box:
        nx, ny, nz = self.dims
        size = self.resolution * np.array([nx, ny, nz], dtype=float)
        return Box(self.origin, self.origin + size)

    def flat_index(self, i, j, k):
        nx, ny, _ = self.dims
        return i + nx * (j + ny * k)

    def voxel_center(self, i: int, j: int, k: int) -> np.ndarray:
        return self.origin + self.resolution * (np.array([i, j, k], dtype=float) + 0.5)

    def occupied_centers(self) -> np.ndarray:
        """Centers of all occupied voxels, shape (M, 3)."""
        nx, ny, _ = self.dims
        flat = np.flatnonzero(self.occupancy)
        i = flat % nx
        j = (flat // nx) % ny
        k = flat // (nx * ny)
        ijk = np.stack([i, j, k], axis=1).astype(float)
        return self.origin + self.resolution * (ijk + 0.5)

    def to_json_dict(self) -> dict:
        packed = np.packbits(self.occupancy, bitorder="little")
        return {
            "origin": [float(v) for v in self.origin],
            "resolution": float(self.resolution),
            "dims": list(self.dims),
            "occupancy_b64": base64.b64encode(packed.tobytes()).decode("ascii"),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "VoxelMap":
        dims = tuple(int(v) for v in d["dims"])
        n = dims[0] * dims[1] * dims[2]
        raw = base64.b64decode(d["occupancy_b64"])
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
        if bits.size < n:
            raise ValueError("occupancy_b64 too short for dims")
        return cls(
            origin=np.asarray(d["origin"], dtype=float),
            resolution=float(d["resolution"]),
            dims=dims,
            occupancy=bits[:n].astype(bool),
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f)
            f.write("\n")

    @classmethod
    def load(cls, path) -> "VoxelMap":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


@dataclass(frozen=True)
class ObstacleIndex:
    """Nearest-neighbor index over a fixed set of obstacle points.

    Equidistant candidates are resolved to the lexicographically smallest
    point (x, then y, then z) so queries are reproducible across runs.
    """

    points: np.ndarray
    _tree: cKDTree | None = field(repr=False, default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", _readonly(pts))
        tree = cKDTree(pts) if len(pts) else None
        object.__setattr__(self, "_tree", tree)

    def __len__(self) -> int:
        return len(self.points)

    def nearest(self, p) -> tuple[np.ndarray, float] | None:
        """Closest point to p and its Euclidean distance; None if empty."""
        if self._tree is None:
            return None
        p = np.asarray(p, dtype=float).reshape(3)
        dist, idx = self._tree.query(p)
        # resolve ties deterministically
        cand = self._tree.query_ball_point(p, dist * (1.0 + 1e-12) + 1e-300)
        if len(cand) > 1:
            pts = self.points[cand]
            d2 = np.sum((pts - p) ** 2, axis=1)
            best = d2.min()
            tied = pts[d2 == best]
            order = np.lexsort((tied[:, 2], tied[:, 1], tied[:, 0]))
            point = tied[order[0]]
            return point.copy(), float(np.sqrt(best))
        return self.points[idx].copy(), float(dist)

    def nearest_bulk(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Nearest points and distances for many queries at once.

        Returns (obstacles (M,3), dists (M,)); dists are +inf when the
        index is empty. Applies the same lexicographic tie-break as
        nearest().
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m = len(pts)
        if self._tree is None:
            return np.full((m, 3), np.nan), np.full(m, np.inf)
        dists, idxs = self._tree.query(pts)
        out = self.points[idxs].copy()
        for r in range(m):
            cand = self._tree.query_ball_point(pts[r], dists[r] * (1.0 + 1e-12) + 1e-300)
            if len(cand) > 1:
                res = self.nearest(pts[r])
                out[r], dists[r] = res[0], res[1]
        return out, dists


def local_region(traj, margin: float) -> Box:
    """Minimal axis-aligned box containing the trajectory, grown by margin."""
    pos = np.asarray(traj.pos, dtype=float)
    if pos.size == 0:
        raise ValueError("trajectory has no samples")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    return Box(pos.min(axis=0) - margin, pos.max(axis=0) + margin)


def build_index(vmap: VoxelMap, region: Box) -> ObstacleIndex:
    """Index of occupied voxel centers whose centers lie inside region."""
    centers = vmap.occupied_centers()
    if len(centers) == 0:
        return ObstacleIndex(points=np.empty((0, 3)))
    keep = region.contains(centers)
    return ObstacleIndex(points=centers[keep])


def nearest_obstacle(idx: ObstacleIndex, p) -> tuple[np.ndarray, float] | None:
    """Nearest obstacle to p, or None when the index is empty."""
    return idx.nearest(p)
