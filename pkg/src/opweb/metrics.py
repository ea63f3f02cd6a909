"""Rescaling map, path-space metrics, crossing counts and test batteries.

Spatial coordinates are squashed by ``tanh(x) / (1 + |t|)`` and times by
``tanh(t)``, which compactifies the plane; both infinities of a time row
collapse to single points, so finite-horizon truncations of paths behave
continuously under the metrics.  The supremum in the path distance is
evaluated on every interpolation breakpoint plus a uniform grid (default 16
points per unit of rescaled time); for piecewise-linear paths the grid error
is O(mesh) with a constant controlled by the squashing derivative, far below
the tolerances used anywhere in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .couple import run_right_family
from .errors import InvalidArgumentError
from .explore import Trajectory
from .oracle import cbm_baseline
from .runner import pmap
from .stats import wilson_interval

GRID_PER_UNIT = 16


@dataclass(frozen=True)
class CompactifiedPoint:
    """A space-time point in squashed coordinates (u, v)."""

    u: float
    v: float

    @classmethod
    def from_plane(cls, x: float, t: float) -> "CompactifiedPoint":
        if math.isinf(t):
            return cls(0.0, math.copysign(1.0, t))
        return cls(math.tanh(x) / (1.0 + abs(t)), math.tanh(t))


def rho(p1, p2) -> float:
    """Compactified plane metric; accepts (x, t) pairs or CompactifiedPoint."""
    a = p1 if isinstance(p1, CompactifiedPoint) else CompactifiedPoint.from_plane(*p1)
    b = p2 if isinstance(p2, CompactifiedPoint) else CompactifiedPoint.from_plane(*p2)
    return max(abs(a.v - b.v), abs(a.u - b.u))


@dataclass(frozen=True)
class RescaledPath:
    """Piecewise-linear real path; constant before its start and after its
    last sample (finite-horizon truncation)."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) == 0:
            raise InvalidArgumentError("times and values must match and be nonempty")

    @property
    def sigma(self) -> float:
        return float(self.times[0])

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def evaluate(self, t):
        return np.interp(t, self.times, self.values)


def shear_rescale(path, a: float, b: float, eps: float) -> RescaledPath:
    """Image of a path under drift removal and diffusive rescaling.

    A point ``(x, t)`` maps to ``(sqrt(eps)/b * (x - a t), eps t)``; lattice
    trajectories are interpolated linearly between integer times first.
    """
    if b <= 0 or eps <= 0:
        raise InvalidArgumentError("b and eps must be positive")
    if isinstance(path, Trajectory):
        times = path.start_t + np.arange(len(path.values), dtype=np.float64)
        values = path.values.astype(np.float64)
    else:
        times = np.asarray(path.times, dtype=np.float64)
        values = np.asarray(path.values, dtype=np.float64)
    scale = math.sqrt(eps) / b
    return RescaledPath(eps * times, scale * (values - a * times))


def _squash(path: RescaledPath, ts: np.ndarray) -> np.ndarray:
    clamped = np.maximum(ts, path.sigma)
    return np.tanh(path.evaluate(clamped)) / (1.0 + np.abs(ts))


def path_distance(p1: RescaledPath, p2: RescaledPath, *,
                  grid_per_unit: int = GRID_PER_UNIT) -> float:
    """Start-time term joined with the sup of squashed spatial separation."""
    start_term = abs(math.tanh(p1.sigma) - math.tanh(p2.sigma))
    lo = min(p1.sigma, p2.sigma)
    hi = max(p1.end_time, p2.end_time)
    if hi <= lo:
        ts = np.array([lo])
    else:
        n_grid = max(2, int(math.ceil((hi - lo) * grid_per_unit)) + 1)
        ts = np.union1d(np.linspace(lo, hi, n_grid),
                        np.concatenate([p1.times, p2.times]))
        ts = ts[(ts >= lo) & (ts <= hi)]
    sup_term = float(np.abs(_squash(p1, ts) - _squash(p2, ts)).max())
    return max(start_term, sup_term)


def set_distance(K1, K2, *, grid_per_unit: int = GRID_PER_UNIT) -> float:
    """Hausdorff distance between two finite path sets."""
    if len(K1) == 0 or len(K2) == 0:
        raise InvalidArgumentError("path sets must be nonempty")
    d = np.array([[path_distance(a, b, grid_per_unit=grid_per_unit)
                   for b in K2] for a in K1])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def _as_path(obj) -> RescaledPath:
    if isinstance(obj, Trajectory):
        return RescaledPath(
            obj.start_t + np.arange(len(obj.values), dtype=np.float64),
            obj.values.astype(np.float64))
    return obj


def eta_count(paths, t0: float, t: float, a: float, b: float) -> int:
    """Distinct positions at time ``t0 + t`` among paths through ``[a, b]``.

    Counts paths started at or before ``t0`` whose position at ``t0`` lies in
    ``[a, b]``; distinctness is exact equality of evaluated positions, which
    is the right notion for coalescing families (merged paths share values
    bit-for-bit).
    """
    if t <= 0:
        raise InvalidArgumentError("t must be positive")
    if a > b:
        raise InvalidArgumentError("need a <= b")
    vals = []
    for obj in paths:
        path = _as_path(obj)
        if path.sigma > t0:
            continue
        here = float(path.evaluate(t0))
        if a <= here <= b:
            vals.append(float(path.evaluate(t0 + t)))
    return int(len(np.unique(vals)))


# -- empirical batteries -----------------------------------------------------

def _family_eta_worker(args):
    xs, t0, level, p, seed, stream_base, scan_guard = args
    fam = run_right_family(xs, t0, level, p=p, seed=seed,
                           stream_base=stream_base, scan_guard=scan_guard)
    return fam.eta()


def even_span(gap: float) -> int:
    """Smallest comfortable even lattice span covering a real gap."""
    span = int(math.ceil(gap)) + 2
    return span + (span % 2)


def b1_battery(p: float, eps: float, t: float, delta_list, replicas: int, *,
               sigma_hat: float, seed: int = 0, workers: int = 1,
               scan_guard: int = 10_000, stream_stride: int = 1024,
               replica_offset: int = 0):
    """P(eta >= 2) for right-boundary families spanning rescaled gaps.

    For each target gap ``delta`` the family starts on all even columns of
    ``[0, x_eps]`` with ``x_eps`` covering ``delta * sigma / sqrt(eps)``, and
    eta is counted at level ``floor(t / eps)``.  The erf baseline for the
    effective gap rides along for comparison.
    """
    level = int(math.floor(t / eps))
    rows = []
    for idx, delta in enumerate(delta_list):
        x_eps = even_span(delta * sigma_hat / math.sqrt(eps))
        xs = tuple(range(0, x_eps + 1, 2))
        jobs = [(xs, 0, level, p, seed,
                 (replica_offset + idx * replicas + rep) * stream_stride,
                 scan_guard)
                for rep in range(replicas)]
        etas = pmap(_family_eta_worker, jobs, workers)
        k = sum(1 for e in etas if e >= 2)
        ci = wilson_interval(k, replicas)
        delta_eff = x_eps * math.sqrt(eps) / sigma_hat
        rows.append({
            "delta": delta, "delta_eff": delta_eff, "eps": eps, "t": t,
            "x_eps": x_eps, "level": level, "estimate": k / replicas,
            "ci_low": ci[0], "ci_high": ci[1], "n": replicas,
            "baseline": cbm_baseline(delta_eff, t),
        })
    return rows


@dataclass(frozen=True)
class FkgReport:
    p3: float
    p3_ci: tuple
    p2: float
    p2_ci: tuple
    n_per_side: int
    slack: float

    @property
    def rhs(self) -> float:
        return self.p2 * self.p2

    @property
    def holds(self) -> bool:
        return self.p3 <= self.rhs + self.slack


def b2_fkg_check(p: float, n: int, x: int, replicas: int, *, seed: int = 0,
                 workers: int = 1, scan_guard: int = 10_000,
                 stream_stride: int = 1024, z: float = 1.959963984540054) -> FkgReport:
    """Estimate P(eta >= 3) against P(eta >= 2)^2 on the family over [0, 2x].

    The two sides come from independent replica banks (half the budget
    each); the slack combines their delta-method standard errors, so a
    violation beyond slack is a genuine positive-correlation failure.
    """
    if x < 1:
        raise InvalidArgumentError("x must be at least 1")
    per_side = max(1, replicas // 2)
    xs = tuple(range(0, 2 * x + 1, 2))
    jobs3 = [(xs, 0, n, p, seed, rep * stream_stride, scan_guard)
             for rep in range(per_side)]
    jobs2 = [(xs, 0, n, p, seed, (per_side + rep) * stream_stride, scan_guard)
             for rep in range(per_side)]
    etas3 = pmap(_family_eta_worker, jobs3, workers)
    etas2 = pmap(_family_eta_worker, jobs2, workers)
    k3 = sum(1 for e in etas3 if e >= 3)
    k2 = sum(1 for e in etas2 if e >= 2)
    p3, p2 = k3 / per_side, k2 / per_side
    se3 = math.sqrt(max(p3 * (1 - p3), 1.0 / per_side) / per_side)
    se2 = math.sqrt(max(p2 * (1 - p2), 1.0 / per_side) / per_side)
    slack = z * math.sqrt(se3**2 + (2 * p2 * se2)**2)
    return FkgReport(p3, wilson_interval(k3, per_side), p2,
                     wilson_interval(k2, per_side), per_side, slack)
