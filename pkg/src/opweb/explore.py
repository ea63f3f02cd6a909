"""Exploration clusters and their boundary processes.

An exploration cluster discovers the minimal set of edge statuses needed to
find the rightmost open path from the half-line ``(-inf, x] x {t}`` to each
successive level.  The scan order is fixed: at every site the up-right edge
is examined before the up-left edge, sub-explorations are depth-first, and
start sites ``(x - 2k, t)`` are exhausted left-to-right in ``k``.

The process is resumable: the depth-first stack is frozen the moment the
first open path reaches the current target level (that path is the left
boundary ``l``, and its endpoint is the new right-boundary value ``r``), and
advancing the target simply continues the walk.  Each edge is sampled at
most once per cluster; sites whose forward cluster has been exhausted are
remembered so re-entry from a later start site costs nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ScanLimitExceededError
from .lattice import Config, LatticeSite, X_BIAS, make_key_sampler, unpack_edge_key

DEFAULT_SCAN_GUARD = 10_000

# Horizon used for finite approximations of the rightmost infinite path,
# as a multiple of the target window.
DEFAULT_HORIZON_FACTOR = 4


@dataclass(frozen=True)
class Trajectory:
    """An integer-valued lattice trajectory starting at time ``start_t``."""

    start_t: int
    values: np.ndarray  # values[j] is the position at time start_t + j

    def __len__(self):
        return len(self.values)

    @property
    def end_t(self) -> int:
        return self.start_t + len(self.values) - 1

    def at(self, t: int) -> int:
        return int(self.values[t - self.start_t])


@dataclass(frozen=True)
class RightBoundaryTrajectory(Trajectory):
    """Right boundary r; prefix-consistent under horizon extension."""

    start: LatticeSite = None


@dataclass(frozen=True)
class GammaApprox(Trajectory):
    """Finite-horizon stand-in for the rightmost infinite open path.

    Equals the left boundary of the exploration run to level ``horizon``;
    values can only decrease (pointwise) as the horizon grows.
    """

    start: LatticeSite = None
    horizon: int = 0


class ExplorationCluster:
    """Single-owner mutable exploration state; advance levels sequentially.

    ``source`` overrides the edge oracle (used by couplings); it is called
    once per never-before-examined packed edge key.
    """

    def __init__(self, origin: LatticeSite, cfg: Config | None = None, *,
                 source=None, scan_guard: int = DEFAULT_SCAN_GUARD,
                 record_left_deltas: bool = False):
        if cfg is None and source is None:
            raise InvalidArgumentError("need a Config or an edge source")
        self.origin = origin
        self.cfg = cfg
        self._source = source if source is not None else make_key_sampler(cfg)
        self._scan_guard = scan_guard
        self._t0 = origin.t
        self._status: dict[int, bool] = {}
        self._dead: set[int] = set()
        self._stack_x = [origin.x]
        self._stack_state = [0]
        self._r = [origin.x]
        self.scan_offset = 0
        self.last_change_floor = 0
        self._left_deltas = [] if record_left_deltas else None

    # -- read surface ------------------------------------------------------

    @property
    def level(self) -> int:
        """Highest explored target time."""
        return self._t0 + len(self._r) - 1

    @property
    def start_t(self) -> int:
        return self._t0

    @property
    def right_values(self) -> list[int]:
        return self._r

    @property
    def left_values(self) -> list[int]:
        return self._stack_x

    def right_boundary(self) -> RightBoundaryTrajectory:
        return RightBoundaryTrajectory(self._t0, np.array(self._r, dtype=np.int64),
                                       start=self.origin)

    def left_boundary(self) -> Trajectory:
        return Trajectory(self._t0, np.array(self._stack_x, dtype=np.int64))

    @property
    def n_examined(self) -> int:
        return len(self._status)

    @property
    def open_edges(self) -> set:
        return {k for k, v in self._status.items() if v}

    @property
    def closed_edges(self) -> set:
        return {k for k, v in self._status.items() if not v}

    @property
    def left_deltas(self):
        return self._left_deltas

    # -- the walk ----------------------------------------------------------

    def advance_level(self) -> int:
        """Explore until the first open path reaches the next level.

        Returns the new right-boundary value.  Raises
        ScanLimitExceededError once `scan_guard` start sites in a row have
        been exhausted without reaching the target (subcritical input never
        silently loops).
        """
        stack_x = self._stack_x
        stack_state = self._stack_state
        status = self._status
        dead = self._dead
        src = self._source
        t0 = self._t0
        r = self._r
        target = len(r)
        top = target - 1
        min_top = top
        while True:
            state = stack_state[top]
            if state == 0:
                stack_state[top] = 1
                x = stack_x[top]
                t = t0 + top
                key = ((2 * t + 1) << 32) | (x + X_BIAS)  # up-right
                s = status.get(key)
                if s is None:
                    s = src(key)
                    status[key] = s
                if s:
                    cx = x + 1
                    if ((t + 1) << 32) | (cx + X_BIAS) not in dead:
                        stack_x.append(cx)
                        stack_state.append(0)
                        top += 1
                        if top == target:
                            break
            elif state == 1:
                stack_state[top] = 2
                x = stack_x[top]
                t = t0 + top
                key = ((2 * t) << 32) | (x + X_BIAS)  # up-left
                s = status.get(key)
                if s is None:
                    s = src(key)
                    status[key] = s
                if s:
                    cx = x - 1
                    if ((t + 1) << 32) | (cx + X_BIAS) not in dead:
                        stack_x.append(cx)
                        stack_state.append(0)
                        top += 1
                        if top == target:
                            break
            else:
                x = stack_x.pop()
                stack_state.pop()
                dead.add(((t0 + top) << 32) | (x + X_BIAS))
                top -= 1
                if top < 0:
                    self.scan_offset += 1
                    if self.scan_offset >= self._scan_guard:
                        raise ScanLimitExceededError(
                            f"{self.scan_offset} start sites exhausted below level "
                            f"{t0 + target}", scan_offset=self.scan_offset)
                    stack_x.append(self.origin.x - 2 * self.scan_offset)
                    stack_state.append(0)
                    top = 0
                    min_top = -1
                elif top < min_top:
                    min_top = top
        new_r = stack_x[target]
        r.append(new_r)
        self.last_change_floor = min_top + 1
        if self._left_deltas is not None:
            self._left_deltas.append((min_top + 1, stack_x[min_top + 1:]))
        return new_r

    def advance_to(self, n: int) -> None:
        while self.level < n:
            self.advance_level()


def explore_to_level(z: LatticeSite, n: int, cfg: Config, *,
                     scan_guard: int = DEFAULT_SCAN_GUARD) -> ExplorationCluster:
    """Build the exploration cluster of ``z`` through target level ``n``."""
    if n < z.t:
        raise InvalidArgumentError(f"target level {n} precedes start time {z.t}")
    cluster = ExplorationCluster(z, cfg, scan_guard=scan_guard)
    cluster.advance_to(n)
    return cluster


def gamma_approx(z: LatticeSite, horizon: int, cfg: Config, *,
                 scan_guard: int = DEFAULT_SCAN_GUARD) -> GammaApprox:
    """Rightmost open path from the half-line at ``z`` reaching ``horizon``."""
    if horizon < z.t:
        raise InvalidArgumentError(f"horizon {horizon} precedes start time {z.t}")
    cluster = explore_to_level(z, horizon, cfg, scan_guard=scan_guard)
    return GammaApprox(z.t, np.array(cluster.left_values, dtype=np.int64),
                       start=z, horizon=horizon)


def boundary_ordering_check(cluster: ExplorationCluster, g: GammaApprox) -> bool:
    """True iff gamma <= left boundary <= right boundary on the cluster window."""
    if g.start != cluster.origin:
        raise InvalidArgumentError("gamma approximation has a different origin")
    if g.horizon < cluster.level:
        raise InvalidArgumentError("gamma horizon shorter than cluster level")
    m = cluster.level - cluster.start_t + 1
    gam = g.values[:m]
    left = np.asarray(cluster.left_values, dtype=np.int64)
    right = np.asarray(cluster.right_values, dtype=np.int64)
    return bool(np.all(gam <= left) and np.all(left <= right))


def write_trajectory_csv(path, cluster: ExplorationCluster, g: GammaApprox,
                         header_comment: str | None = None) -> None:
    """Dump ``j, r_j, l_j, gamma_j`` (integer-exact) for one cluster."""
    m = cluster.level - cluster.start_t + 1
    if g.horizon < cluster.level or g.start != cluster.origin:
        raise InvalidArgumentError("gamma approximation does not cover the cluster")
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append("j,r_j,l_j,gamma_j")
    r = cluster.right_values
    left = cluster.left_values
    for j in range(m):
        lines.append(f"{cluster.start_t + j},{r[j]},{left[j]},{int(g.values[j])}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def decode_edge_sets(cluster: ExplorationCluster):
    """Explored edges as (x, t, direction) triples, split open/closed."""
    opened, closed = [], []
    for key, is_open in cluster._status.items():
        (opened if is_open else closed).append(unpack_edge_key(key))
    return opened, closed
