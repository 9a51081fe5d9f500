"""Trajectory sampling, time-mapping reconstruction, and retiming.

A trajectory is given in its own time variable tau on [tau0, tau_f] and is
resampled uniformly with spacing dtau. Retiming replaces tau by a monotone
map h from real time t, represented by the squared rate beta = hdot^2
stored at the sample knots (piecewise linear between knots) and its slope
alpha per segment (piecewise constant). Real time accumulates per segment
through the exact integral of dtau/sqrt(beta), which for linear beta is

    t_{i+1} - t_i = 2*dtau / (sqrt(beta_i) + sqrt(beta_{i+1})).

Retimed velocity and acceleration follow the chain rule:

    v(t) = p'(tau) * hdot,   a(t) = p'(tau) * hddot + p''(tau) * hdot^2,

where hdot = sqrt(beta(tau)) and hddot is the segment's alpha.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .voxmap import _readonly


def _central_differences(values: np.ndarray, step: float) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives on a uniform grid.

    Central differences at interior samples, second-order one-sided at the
    endpoints.
    """
    v = np.asarray(values, dtype=float)
    n = len(v)
    d1 = np.empty_like(v)
    d2 = np.empty_like(v)
    d1[1:-1] = (v[2:] - v[:-2]) / (2.0 * step)
    d2[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / step**2
    if n >= 3:
        d1[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * step)
        d1[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * step)
    else:
        d1[0] = d1[-1] = (v[-1] - v[0]) / step
    if n >= 4:
        d2[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / step**2
        d2[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / step**2
    elif n == 3:
        d2[0] = d2[-1] = d2[1]
    else:
        d2[:] = 0.0
    return d1, d2


@dataclass(frozen=True)
class SampledTrajectory:
    """Uniform samples of a trajectory and its tau-derivatives.

    pos, vel, acc all have shape (N+1, 3); vel and acc are derivatives
    with respect to trajectory time tau, not real time.
    """

    tau0: float
    dtau: float
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray

    def __post_init__(self):
        if not self.dtau > 0:
            raise ValueError("dtau must be > 0")
        pos = np.asarray(self.pos, dtype=float).reshape(-1, 3)
        vel = np.asarray(self.vel, dtype=float).reshape(-1, 3)
        acc = np.asarray(self.acc, dtype=float).reshape(-1, 3)
        if not (len(pos) == len(vel) == len(acc)):
            raise ValueError("pos, vel, acc must have identical length")
        if len(pos) < 2:
            raise ValueError("need at least 2 samples")
        object.__setattr__(self, "tau0", float(self.tau0))
        object.__setattr__(self, "dtau", float(self.dtau))
        object.__setattr__(self, "pos", _readonly(pos))
        object.__setattr__(self, "vel", _readonly(vel))
        object.__setattr__(self, "acc", _readonly(acc))

    @property
    def n_samples(self) -> int:
        return len(self.pos)

    @property
    def n_segments(self) -> int:
        return len(self.pos) - 1

    @property
    def tau_f(self) -> float:
        return self.tau0 + self.n_segments * self.dtau

    @property
    def taus(self) -> np.ndarray:
        return self.tau0 + self.dtau * np.arange(self.n_samples)

    @property
    def duration(self) -> float:
        return self.tau_f - self.tau0


@dataclass(frozen=True)
class PolySegment:
    tau_start: float
    tau_end: float
    coeffs: np.ndarray  # (3, k), ascending powers of (tau - tau_start)

    def __post_init__(self):
        if not self.tau_end > self.tau_start:
            raise ValueError("segment must have tau_end > tau_start")
        object.__setattr__(self, "coeffs", _readonly(np.atleast_2d(np.asarray(self.coeffs, dtype=float))))


@dataclass(frozen=True)
class PiecewisePolynomial:
    """Piecewise polynomial position trajectory with analytic derivatives."""

    segments: tuple[PolySegment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("piecewise polynomial needs at least one segment")
        for a, b in zip(segs, segs[1:]):
            if abs(a.tau_end - b.tau_start) > 1e-9:
                raise ValueError("segments must be contiguous in tau")
        object.__setattr__(self, "segments", segs)

    @property
    def tau0(self) -> float:
        return self.segments[0].tau_start

    @property
    def tau_f(self) -> float:
        return self.segments[-1].tau_end

    def _segment_at(self, tau: float) -> PolySegment:
        for seg in self.segments:
            if tau <= seg.tau_end + 1e-12:
                return seg
        return self.segments[-1]

    def eval(self, tau: float, deriv: int = 0) -> np.ndarray:
        seg = self._segment_at(tau)
        u = tau - seg.tau_start
        out = np.zeros(3)
        for axis in range(3):
            c = np.polynomial.polynomial.polyder(seg.coeffs[axis], deriv) if deriv else seg.coeffs[axis]
            out[axis] = np.polynomial.polynomial.polyval(u, c) if len(c) else 0.0
        return out


def resample(raw, dtau: float) -> SampledTrajectory:
    """Uniformly sample a raw trajectory with spacing dtau.

    Accepts a PiecewisePolynomial (derivatives evaluated analytically), an
    existing SampledTrajectory (positions re-gridded, derivatives rebuilt
    by central differences), or a (taus, positions) series. Series
    timestamps must be strictly increasing; positions are interpolated
    with a cubic spline when the target grid does not coincide with the
    input grid, and velocity/acceleration always come from central finite
    differences on the new grid (second-order one-sided at endpoints).
    """
    if not dtau > 0:
        raise ValueError("dtau must be > 0")

    if isinstance(raw, PiecewisePolynomial):
        tau0, tau_f = raw.tau0, raw.tau_f
        n = _segment_count(tau0, tau_f, dtau)
        taus = tau0 + dtau * np.arange(n + 1)
        pos = np.array([raw.eval(t, 0) for t in taus])
        vel = np.array([raw.eval(t, 1) for t in taus])
        acc = np.array([raw.eval(t, 2) for t in taus])
        return SampledTrajectory(tau0=tau0, dtau=dtau, pos=pos, vel=vel, acc=acc)

    if isinstance(raw, SampledTrajectory):
        return resample((raw.taus, raw.pos), dtau)

    taus_in, pos_in = raw
    taus_in = np.asarray(taus_in, dtype=float).reshape(-1)
    pos_in = np.asarray(pos_in, dtype=float).reshape(-1, 3)
    if taus_in.size == 0 or pos_in.size == 0:
        raise ValueError("empty input trajectory")
    if len(taus_in) != len(pos_in):
        raise ValueError("timestamps and positions must have equal length")
    if len(taus_in) < 2:
        raise ValueError("need at least 2 input samples")
    if np.any(np.diff(taus_in) <= 0):
        raise ValueError("input timestamps must be strictly increasing")

    tau0, tau_f = float(taus_in[0]), float(taus_in[-1])
    n = _segment_count(tau0, tau_f, dtau)
    taus = tau0 + dtau * np.arange(n + 1)

    # pass positions through unchanged when the grids coincide
    if len(taus) == len(taus_in) and np.max(np.abs(taus - taus_in)) <= 1e-9:
        pos = pos_in.copy()
    else:
        spline = CubicSpline(taus_in, pos_in, axis=0, bc_type="natural")
        pos = spline(taus)

    d1 = np.empty_like(pos)
    d2 = np.empty_like(pos)
    for axis in range(3):
        d1[:, axis], d2[:, axis] = _central_differences(pos[:, axis], dtau)
    return SampledTrajectory(tau0=tau0, dtau=dtau, pos=pos, vel=d1, acc=d2)


def _segment_count(tau0: float, tau_f: float, dtau: float) -> int:
    span = tau_f - tau0
    if dtau >= span:
        raise ValueError(f"dtau={dtau} must be smaller than the trajectory span {span}")
    n = int(np.floor(span / dtau + 1e-9))
    return max(n, 1)


@dataclass(frozen=True)
class TimeMapping:
    """Discrete monotone map from real time t to trajectory time tau.

    beta holds hdot^2 at the tau knots, alpha the per-segment slope
    (beta[i+1]-beta[i])/dtau, and t_knots the accumulated real time with
    t_knots[0] = 0.
    """

    tau_knots: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    t_knots: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau_knots", _readonly(np.asarray(self.tau_knots, dtype=float)))
        object.__setattr__(self, "beta", _readonly(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "alpha", _readonly(np.asarray(self.alpha, dtype=float)))
        object.__setattr__(self, "t_knots", _readonly(np.asarray(self.t_knots, dtype=float)))
        if len(self.beta) != len(self.tau_knots) or len(self.alpha) != len(self.beta) - 1:
            raise ValueError("inconsistent knot array lengths")

    @property
    def tau0(self) -> float:
        return float(self.tau_knots[0])

    @property
    def tau_f(self) -> float:
        return float(self.tau_knots[-1])

    @property
    def dtau(self) -> float:
        return float(self.tau_knots[1] - self.tau_knots[0])

    @property
    def total_time(self) -> float:
        return float(self.t_knots[-1])


def mapping_from_solution(beta, dtau: float, tau0: float) -> TimeMapping:
    """Reconstruct the time mapping from knot values of beta = hdot^2."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if len(beta) < 2:
        raise ValueError("beta needs at least 2 knots")
    if np.any(beta <= 0):
        raise ValueError("all beta values must be > 0")
    if not dtau > 0:
        raise ValueError("dtau must be > 0")
    alpha = np.diff(beta) / dtau
    root = np.sqrt(beta)
    seg_dt = 2.0 * dtau / (root[:-1] + root[1:])
    t_knots = np.concatenate([[0.0], np.cumsum(seg_dt)])
    tau_knots = tau0 + dtau * np.arange(len(beta))
    return TimeMapping(tau_knots=tau_knots, beta=beta, alpha=alpha, t_knots=t_knots)


def eval_mapping(m: TimeMapping, t):
    """Evaluate (tau, hdot, hddot) at real time t (scalar or array).

    Within a segment, beta is linear in tau, so the closed-form inverse of
    the segment time integral gives

        tau - tau_i = sqrt(beta_i) * dt + alpha_i * dt^2 / 4,
        hdot = sqrt(beta_i) + alpha_i * dt / 2,

    where dt = t - t_i. hddot is the segment alpha.
    """
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    tf = m.total_time
    if np.any(t_arr < -1e-9) or np.any(t_arr > tf + 1e-9):
        raise ValueError(f"t outside [0, {tf}]")
    t_arr = np.clip(t_arr, 0.0, tf)
    seg = np.clip(np.searchsorted(m.t_knots, t_arr, side="right") - 1, 0, len(m.alpha) - 1)
    dt = t_arr - m.t_knots[seg]
    root_b = np.sqrt(m.beta[seg])
    a = m.alpha[seg]
    u = root_b * dt + 0.25 * a * dt * dt
    tau = m.tau_knots[seg] + u
    hdot = root_b + 0.5 * a * dt
    hddot = a.copy()
    if scalar:
        return float(tau[0]), float(hdot[0]), float(hddot[0])
    return tau, hdot, hddot


def time_at_tau(m: TimeMapping, tau):
    """Inverse lookup: real time at trajectory time tau (scalar or array)."""
    tau_arr = np.asarray(tau, dtype=float)
    scalar = tau_arr.ndim == 0
    tau_arr = np.atleast_1d(tau_arr)
    if np.any(tau_arr < m.tau0 - 1e-9) or np.any(tau_arr > m.tau_f + 1e-9):
        raise ValueError(f"tau outside [{m.tau0}, {m.tau_f}]")
    tau_arr = np.clip(tau_arr, m.tau0, m.tau_f)
    seg = np.clip(np.searchsorted(m.tau_knots, tau_arr, side="right") - 1, 0, len(m.alpha) - 1)
    u = tau_arr - m.tau_knots[seg]
    b0 = m.beta[seg]
    a = m.alpha[seg]
    root = np.sqrt(b0 + a * u)
    # dt = 2(sqrt(b0 + a u) - sqrt(b0))/a, with the a -> 0 limit u/sqrt(b0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.where(np.abs(a) > 1e-12, 2.0 * (root - np.sqrt(b0)) / np.where(a == 0, 1.0, a), u / np.sqrt(b0))
    t = m.t_knots[seg] + dt
    if scalar:
        return float(t[0])
    return t


@dataclass(frozen=True)
class ReparamTrajectory:
    """Trajectory samples in real time after retiming."""

    t: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    acc: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _readonly(np.asarray(self.t, dtype=float)))
        object.__setattr__(self, "pos", _readonly(np.asarray(self.pos, dtype=float).reshape(-1, 3)))
        object.__setattr__(self, "vel", _readonly(np.asarray(self.vel, dtype=float).reshape(-1, 3)))
        object.__setattr__(self, "acc", _readonly(np.asarray(self.acc, dtype=float).reshape(-1, 3)))

    @property
    def n_samples(self) -> int:
        return len(self.t)


def _interp_rows(taus: np.ndarray, grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.empty((len(taus), values.shape[1]))
    for axis in range(values.shape[1]):
        out[:, axis] = np.interp(taus, grid, values[:, axis])
    return out


def reparameterize(s: SampledTrajectory, m: TimeMapping, dt_out: float) -> ReparamTrajectory:
    """Sample the retimed trajectory on a uniform real-time grid.

    Positions and tau-derivatives are interpolated linearly between the
    knots; velocity and acceleration follow the chain rule with
    hdot = sqrt(beta) and hddot = segment alpha.
    """
    if not dt_out > 0:
        raise ValueError("dt_out must be > 0")
    if (
        len(m.tau_knots) != s.n_samples
        or abs(m.tau0 - s.tau0) > 1e-9
        or abs(m.dtau - s.dtau) > 1e-9
    ):
        raise ValueError("time mapping was not built on this trajectory's knots")
    tf = m.total_time
    n_out = int(np.floor(tf / dt_out + 1e-9))
    t = dt_out * np.arange(n_out + 1)
    tau, hdot, hddot = eval_mapping(m, t)
    grid = s.taus
    pos = _interp_rows(tau, grid, s.pos)
    dpos = _interp_rows(tau, grid, s.vel)
    ddpos = _interp_rows(tau, grid, s.acc)
    vel = dpos * hdot[:, None]
    acc = dpos * hddot[:, None] + ddpos * (hdot**2)[:, None]
    return ReparamTrajectory(t=t, pos=pos, vel=vel, acc=acc)


def identity_mapping(s: SampledTrajectory) -> TimeMapping:
    """Mapping with hdot = 1 everywhere (real time equals trajectory time)."""
    return mapping_from_solution(np.ones(s.n_samples), s.dtau, s.tau0)


def load_trajectory_json(source, dtau: float | None = None) -> SampledTrajectory:
    """Load a trajectory from a JSON file path or parsed dict.

    Two layouts are accepted: sampled ({"tau0","dtau","pos"[,"vel","acc"]})
    and piecewise polynomial ({"piecewise_poly": [...]}, coefficients in
    ascending powers of (tau - tau_start)). When dtau is given and differs
    from the file grid, the trajectory is resampled.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as f:
            data = json.load(f)
    else:
        data = source

    if "piecewise_poly" in data:
        segs = tuple(
            PolySegment(
                tau_start=float(seg["tau_start"]),
                tau_end=float(seg["tau_end"]),
                coeffs=np.array(
                    [seg["coeffs_x"], seg["coeffs_y"], seg["coeffs_z"]], dtype=float
                ),
            )
            for seg in data["piecewise_poly"]
        )
        poly = PiecewisePolynomial(segments=segs)
        if dtau is None:
            raise ValueError("dtau is required for piecewise polynomial input")
        return resample(poly, dtau)

    tau0 = float(data["tau0"])
    file_dtau = float(data["dtau"])
    pos = np.asarray(data["pos"], dtype=float).reshape(-1, 3)
    if len(pos) < 2:
        raise ValueError("trajectory file needs at least 2 samples")
    target = file_dtau if dtau is None else float(dtau)
    if abs(target - file_dtau) <= 1e-12 and "vel" in data and "acc" in data:
        return SampledTrajectory(
            tau0=tau0,
            dtau=file_dtau,
            pos=pos,
            vel=np.asarray(data["vel"], dtype=float),
            acc=np.asarray(data["acc"], dtype=float),
        )
    taus = tau0 + file_dtau * np.arange(len(pos))
    return resample((taus, pos), target)
