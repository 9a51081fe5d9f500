"""Braking-zone detection along a sampled trajectory.

A sample is a braking point when its nearest obstacle lies ahead of the
motion direction, (o - p) . v >= 0, and within the distance threshold
d_th. Runs of consecutive braking samples become raw time intervals,
which are then refined by first merging intervals separated by at most
merge_gap and then dropping intervals shorter than min_zone_duration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory import SampledTrajectory
from .voxmap import ObstacleIndex


@dataclass(frozen=True)
class BrakingConfig:
    """Thresholds for braking-zone detection.

    min_zone_duration defaults to 2*dtau of the trajectory when None.
    """

    d_th: float = 2.0
    min_zone_duration: float | None = None
    merge_gap: float = 0.2

    def __post_init__(self):
        if not self.d_th > 0:
            raise ValueError("d_th must be > 0")
        if self.min_zone_duration is not None and self.min_zone_duration < 0:
            raise ValueError("min_zone_duration must be >= 0")
        if self.merge_gap < 0:
            raise ValueError("merge_gap must be >= 0")

    def resolved_min_duration(self, dtau: float) -> float:
        return 2.0 * dtau if self.min_zone_duration is None else self.min_zone_duration


@dataclass(frozen=True)
class BrakingZone:
    """Closed interval of trajectory time that requires deceleration."""

    tau_start: float
    tau_end: float
    first_index: int
    last_index: int

    def __post_init__(self):
        if self.tau_end < self.tau_start:
            raise ValueError("zone must have tau_end >= tau_start")

    def contains_index(self, i: int) -> bool:
        return self.first_index <= i <= self.last_index


@dataclass(frozen=True)
class BrakingPoint:
    index: int
    obstacle: np.ndarray
    distance: float


def is_braking_point(p, v, o, d_th: float) -> bool:
    """Single-sample test: obstacle ahead and within the distance threshold."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    o = np.asarray(o, dtype=float)
    gap = o - p
    return bool(np.dot(gap, v) >= 0.0 and np.linalg.norm(gap) <= d_th)


def find_braking_points(
    s: SampledTrajectory,
    idx: ObstacleIndex,
    cfg: BrakingConfig,
    nearest: tuple[np.ndarray, np.ndarray] | None = None,
) -> list[BrakingPoint]:
    """Samples satisfying the braking condition, in index order.

    nearest may carry precomputed (obstacles, distances) for all samples
    to avoid a second round of index queries.
    """
    if len(idx) == 0:
        return []
    if nearest is None:
        nearest = idx.nearest_bulk(s.pos)
    obstacles, dists = nearest
    gap = obstacles - s.pos
    dots = np.einsum("ij,ij->i", gap, s.vel)
    mask = (dots >= 0.0) & (dists <= cfg.d_th)
    return [
        BrakingPoint(index=int(i), obstacle=obstacles[i].copy(), distance=float(dists[i]))
        for i in np.flatnonzero(mask)
    ]


def to_time_intervals(indices, dtau: float, tau0: float) -> list[tuple[float, float, int, int]]:
    """Group strictly increasing sample indices into maximal runs.

    Returns (tau_start, tau_end, first_index, last_index) per run; a
    single-sample run yields a zero-length interval.
    """
    idx = [int(i) for i in indices]
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError("indices must be strictly increasing")
    out = []
    run_start = None
    prev = None
    for i in idx:
        if run_start is None:
            run_start = prev = i
            continue
        if i == prev + 1:
            prev = i
            continue
        out.append((tau0 + run_start * dtau, tau0 + prev * dtau, run_start, prev))
        run_start = prev = i
    if run_start is not None:
        out.append((tau0 + run_start * dtau, tau0 + prev * dtau, run_start, prev))
    return out


def refine(raw, cfg: BrakingConfig, dtau: float) -> list[BrakingZone]:
    """Merge near-adjacent raw intervals, then drop the short ones."""
    if not raw:
        return []
    merged = [list(raw[0])]
    for interval in raw[1:]:
        if interval[0] - merged[-1][1] <= cfg.merge_gap:
            merged[-1][1] = interval[1]
            merged[-1][3] = interval[3]
        else:
            merged.append(list(interval))
    min_dur = cfg.resolved_min_duration(dtau)
    return [
        BrakingZone(tau_start=a, tau_end=b, first_index=i0, last_index=i1)
        for a, b, i0, i1 in merged
        if b - a >= min_dur
    ]


def find_braking_zones(
    s: SampledTrajectory,
    idx: ObstacleIndex,
    cfg: BrakingConfig,
    nearest: tuple[np.ndarray, np.ndarray] | None = None,
) -> list[BrakingZone]:
    """Full detection pipeline: classify samples, group, refine."""
    points = find_braking_points(s, idx, cfg, nearest=nearest)
    raw = to_time_intervals([p.index for p in points], s.dtau, s.tau0)
    return refine(raw, cfg, s.dtau)


def zone_sample_mask(zones, n_samples: int) -> np.ndarray:
    """Boolean mask of samples covered by any zone."""
    mask = np.zeros(n_samples, dtype=bool)
    for z in zones:
        mask[z.first_index : z.last_index + 1] = True
    return mask
