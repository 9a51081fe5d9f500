"""Collision-probability bounds and speed limits near obstacles.

The robot's safe region is an ellipsoid with semi-axes (a, b, c); a
collision with obstacle o happens when ||p - o||_Q <= 1 for
Q = diag(1/a^2, 1/b^2, 1/c^2). Scaling both positions by Q^(1/2) turns
the ellipsoid into a unit ball, and replacing the ball with the
half-space through its surface along the mean displacement direction
gives a closed-form Gaussian bound

    P = 1/2 + 1/2 * erf((1 - d_bar) / sqrt(2 * s_tot^2)),

which is inverted to find the largest speed whose position uncertainty
keeps P below a threshold. Position noise grows linearly with speed:
per-axis standard deviation s(v) = max(0, m*v + b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfinv

from .voxmap import _readonly


@dataclass(frozen=True)
class SafetyEllipsoid:
    """Robot-enclosing ellipsoid with semi-axes in meters."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("semi-axes must be > 0")

    @property
    def q(self) -> np.ndarray:
        """Collision quadratic form diag(1/a^2, 1/b^2, 1/c^2)."""
        return np.diag([1.0 / self.a**2, 1.0 / self.b**2, 1.0 / self.c**2])

    @property
    def q_sqrt(self) -> np.ndarray:
        return np.diag([1.0 / self.a, 1.0 / self.b, 1.0 / self.c])

    @property
    def q_sqrt_diag(self) -> np.ndarray:
        return np.array([1.0 / self.a, 1.0 / self.b, 1.0 / self.c])

    @classmethod
    def sphere(cls, radius: float) -> "SafetyEllipsoid":
        return cls(radius, radius, radius)


@dataclass(frozen=True)
class UncertaintyModel:
    """Linear speed-to-noise model plus a fixed obstacle covariance."""

    m: float = 0.2
    b: float = -0.1
    obstacle_cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("slope m must be > 0")
        cov = np.asarray(self.obstacle_cov, dtype=float).reshape(3, 3)
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("obstacle covariance must be symmetric")
        if np.any(np.linalg.eigvalsh(cov) < -1e-12):
            raise ValueError("obstacle covariance must be positive semidefinite")
        object.__setattr__(self, "obstacle_cov", _readonly(cov))

    def std_at(self, speed: float) -> float:
        """Per-axis position standard deviation at the given speed."""
        return max(0.0, self.m * speed + self.b)

    @property
    def zero_noise_speed(self) -> float:
        """Largest speed with s(v) = 0."""
        return max(0.0, -self.b / self.m)


@dataclass(frozen=True)
class ChanceParams:
    """Per-position collision probability bound."""

    delta: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 0.5)")


def transform_pair(p, o, ellipsoid: SafetyEllipsoid) -> tuple[np.ndarray, np.ndarray]:
    """Scale a robot/obstacle pair into the unit-ball frame."""
    d = ellipsoid.q_sqrt_diag
    return np.asarray(p, dtype=float) * d, np.asarray(o, dtype=float) * d


def linearize(p_r_mean, o_r_mean) -> tuple[np.ndarray, float]:
    """Unit direction and distance from obstacle to robot mean, ball frame."""
    gap = np.asarray(p_r_mean, dtype=float) - np.asarray(o_r_mean, dtype=float)
    norm = float(np.linalg.norm(gap))
    if norm == 0.0:
        raise ValueError("robot and obstacle means coincide; no linearization direction")
    return gap / norm, norm


def collision_probability(d_bar: float, s_tot2: float) -> float:
    """Half-space collision probability bound.

    s_tot2 is the total variance along the linearization direction in the
    ball frame. A non-positive variance degenerates to the deterministic
    indicator (0 beyond the ball surface, 1 otherwise).
    """
    if s_tot2 <= 0.0:
        return 0.0 if d_bar > 1.0 else 1.0
    return 0.5 + 0.5 * math.erf((1.0 - d_bar) / math.sqrt(2.0 * s_tot2))


@dataclass(frozen=True)
class SpeedLimit:
    value: float
    mean_in_collision: bool
    d_bar: float


def velocity_limit_detailed(
    p,
    o,
    ellipsoid: SafetyEllipsoid,
    noise: UncertaintyModel,
    params: ChanceParams,
    v_max: float,
) -> SpeedLimit:
    """Largest speed in [0, v_max] keeping the collision bound below delta.

    Uses the isotropic model Sigma_p = s(v)^2 * I in the world frame. A
    mean already inside the collision ellipsoid yields speed 0 with the
    mean_in_collision flag raised; the caller decides how to surface it.
    """
    d = ellipsoid.q_sqrt_diag
    p_r = np.asarray(p, dtype=float) * d
    o_r = np.asarray(o, dtype=float) * d
    a_hat, d_bar = linearize(p_r, o_r)
    if d_bar <= 1.0:
        return SpeedLimit(value=0.0, mean_in_collision=True, d_bar=d_bar)

    z = math.sqrt(2.0) * float(erfinv(1.0 - 2.0 * params.delta))
    cap = ((d_bar - 1.0) / z) ** 2

    sigma_o_r = (d[:, None] * noise.obstacle_cov) * d[None, :]
    obs_var = float(a_hat @ sigma_o_r @ a_hat)
    gain = float(np.sum((a_hat * d) ** 2))  # a_hat^T Q a_hat
    s_max2 = (cap - obs_var) / gain

    floor = noise.zero_noise_speed
    if s_max2 <= 0.0:
        return SpeedLimit(value=min(max(floor, 0.0), v_max), mean_in_collision=False, d_bar=d_bar)
    v = (math.sqrt(s_max2) - noise.b) / noise.m
    return SpeedLimit(value=max(floor, min(v_max, v)), mean_in_collision=False, d_bar=d_bar)


def velocity_limit(p, o, ellipsoid, noise, params, v_max: float) -> float:
    return velocity_limit_detailed(p, o, ellipsoid, noise, params, v_max).value


def velocity_limit_per_axis(
    p,
    o,
    direction,
    ellipsoid: SafetyEllipsoid,
    noise: UncertaintyModel,
    params: ChanceParams,
    v_max: float,
) -> SpeedLimit:
    """Speed limit under per-axis noise s_axis = max(0, m*|v_axis| + b).

    The per-axis velocity components follow the motion direction at the
    sample, v_axis = v * |dir_axis|. The resulting bound has no closed
    form, so the monotone probability is inverted by bisection.
    """
    d = ellipsoid.q_sqrt_diag
    p_r = np.asarray(p, dtype=float) * d
    o_r = np.asarray(o, dtype=float) * d
    a_hat, d_bar = linearize(p_r, o_r)
    if d_bar <= 1.0:
        return SpeedLimit(value=0.0, mean_in_collision=True, d_bar=d_bar)

    direction = np.abs(np.asarray(direction, dtype=float))
    norm = np.linalg.norm(direction)
    direction = direction / norm if norm > 0 else np.zeros(3)
    sigma_o_r = (d[:, None] * noise.obstacle_cov) * d[None, :]
    obs_var = float(a_hat @ sigma_o_r @ a_hat)

    def prob(speed: float) -> float:
        s_axes = np.maximum(0.0, noise.m * speed * direction + noise.b)
        var = float(np.sum((a_hat * d * s_axes) ** 2)) + obs_var
        return collision_probability(d_bar, var)

    if prob(v_max) <= params.delta:
        return SpeedLimit(value=v_max, mean_in_collision=False, d_bar=d_bar)
    lo, hi = 0.0, v_max
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if prob(mid) <= params.delta:
            lo = mid
        else:
            hi = mid
    return SpeedLimit(value=lo, mean_in_collision=False, d_bar=d_bar)
