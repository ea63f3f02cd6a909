"""Exact brute-force references on finite boxes.

The level-by-level reachability DP recomputes right boundaries and rightmost
paths independently of the exploration walk, reading the same deterministic
edge randomness.  Truncating the half-line seed row at the box wall is made
sound by a certificate: a second, pessimistic DP additionally marks the wall
column reachable at every level whose entry edge from outside the box is
open.  Whenever the optimistic and pessimistic answers disagree in any way
that could affect the result, the box cannot certify an exact answer and
`BoxTooNarrowError` is raised; agreement pins the true value exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoxTooNarrowError, InvalidArgumentError, NoPathError
from .lattice import Config, edge_status_array

DEAD = None  # marker for levels with no reachable site


@dataclass(eq=False)
class BoxConfig:
    """Materialized edge statuses for all edges inside a box.

    Boolean arrays are indexed ``[t - t_min, x - x_min]``; entries at odd
    parity are meaningless and never read.  ``entry_open[j]`` is the status
    of the up-right edge from ``(x_min - 1, t_min + j)``, the only kind of
    edge through which anything left of the box can influence it.
    """

    cfg: Config
    x_min: int
    x_max: int
    t_min: int
    t_max: int
    open_ur: np.ndarray = field(repr=False, default=None)
    open_ul: np.ndarray = field(repr=False, default=None)
    entry_open: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.x_max <= self.x_min or self.t_max <= self.t_min:
            raise InvalidArgumentError("degenerate box")
        height = self.t_max - self.t_min
        width = self.x_max - self.x_min + 1
        ts, xs = np.meshgrid(np.arange(self.t_min, self.t_max),
                             np.arange(self.x_min, self.x_max + 1), indexing="ij")
        mask = (xs + ts) % 2 == 0
        self.open_ur = np.zeros((height, width), dtype=bool)
        self.open_ul = np.zeros((height, width), dtype=bool)
        fx, ft = xs[mask], ts[mask]
        self.open_ur[ft - self.t_min, fx - self.x_min] = edge_status_array(
            self.cfg, fx, ft, np.ones(len(fx), dtype=np.int64))
        self.open_ul[ft - self.t_min, fx - self.x_min] = edge_status_array(
            self.cfg, fx, ft, np.zeros(len(fx), dtype=np.int64))
        wall_ts = np.arange(self.t_min, self.t_max)
        wall_mask = (self.x_min - 1 + wall_ts) % 2 == 0
        self.entry_open = np.zeros(height, dtype=bool)
        if wall_mask.any():
            self.entry_open[wall_mask] = edge_status_array(
                self.cfg, np.full(int(wall_mask.sum()), self.x_min - 1, dtype=np.int64),
                wall_ts[wall_mask], np.ones(int(wall_mask.sum()), dtype=np.int64))


@dataclass(frozen=True)
class DpBoundary:
    """Right boundary from the DP; ``dead_from`` is the first empty level."""

    start_t: int
    values: np.ndarray
    dead_from: int | None = None


def _propagate(reach, open_ur, open_ul):
    nxt = np.zeros_like(reach)
    nxt[1:] = reach[:-1] & open_ur[:-1]
    nxt[:-1] |= reach[1:] & open_ul[1:]
    return nxt


def _reach_tables(box: BoxConfig, start_x: int, n: int):
    """Lower (truncated seeds) and upper (wall-pessimistic) reach tables."""
    width = box.x_max - box.x_min + 1
    if not box.x_min <= start_x <= box.x_max:
        raise InvalidArgumentError("start_x outside the box")
    if box.t_min + n > box.t_max:
        raise InvalidArgumentError("box too short for the requested levels")
    seed = np.zeros(width, dtype=bool)
    xs = np.arange(box.x_min, box.x_max + 1)
    seed[(xs <= start_x) & ((xs + box.t_min) % 2 == 0)] = True
    lower = [seed]
    upper = [seed.copy()]
    for j in range(1, n + 1):
        lo = _propagate(lower[-1], box.open_ur[j - 1], box.open_ul[j - 1])
        hi = _propagate(upper[-1], box.open_ur[j - 1], box.open_ul[j - 1])
        if box.entry_open[j - 1]:
            hi[0] = True
        lower.append(lo)
        upper.append(hi)
        if hi[-1] or hi[-2]:
            raise BoxTooNarrowError("reachable set touched the right wall")
    return lower, upper


def _max_or_none(row, x_min):
    idx = np.flatnonzero(row)
    return None if len(idx) == 0 else int(x_min + idx[-1])


def dp_right_boundary(box: BoxConfig, start_x: int, n: int) -> DpBoundary:
    """Exact right boundary over ``n`` levels, certified or refused.

    Per level the value is the rightmost site reachable from the half-line
    seed row; levels with an empty reachable set terminate the trajectory
    (``dead_from``).  Raises BoxTooNarrowError when the truncated seed row
    cannot be certified against influence entering past the left wall.
    """
    lower, upper = _reach_tables(box, start_x, n)
    values = []
    dead_from = None
    for j in range(n + 1):
        lo = _max_or_none(lower[j], box.x_min)
        hi = _max_or_none(upper[j], box.x_min)
        if lo != hi:
            raise BoxTooNarrowError(
                f"level {box.t_min + j}: truncated max {lo} vs pessimistic max {hi}")
        if lo is None:
            dead_from = box.t_min + j
            break
        values.append(lo)
    return DpBoundary(box.t_min, np.array(values, dtype=np.int64), dead_from)


def dp_rightmost_path(box: BoxConfig, start_x: int, n: int) -> np.ndarray:
    """The pointwise-rightmost open path from the seed row to level ``n``.

    Backtracks the reachability DP right-edge-first; at every step the two
    candidate predecessor cells must agree between the truncated and the
    pessimistic tables, otherwise the path cannot be certified.
    """
    lower, upper = _reach_tables(box, start_x, n)
    anchor = _max_or_none(lower[n], box.x_min)
    if anchor is None or anchor != _max_or_none(upper[n], box.x_min):
        if anchor is None and _max_or_none(upper[n], box.x_min) is None:
            raise NoPathError(f"no open path reaches level {box.t_min + n}")
        raise BoxTooNarrowError("right boundary not certified at the top level")
    path = [anchor]
    y = anchor
    for j in range(n, 0, -1):
        chosen = None
        for cand, edge in ((y + 1, box.open_ul), (y - 1, box.open_ur)):
            ci = cand - box.x_min
            if not 0 <= ci < lower[j - 1].shape[0]:
                continue
            if bool(lower[j - 1][ci]) != bool(upper[j - 1][ci]):
                raise BoxTooNarrowError(
                    f"predecessor cell ({cand}, {box.t_min + j - 1}) not certified")
            if lower[j - 1][ci] and edge[j - 1][ci]:
                chosen = cand
                break
        if chosen is None:
            raise NoPathError("backtrack lost the path; inconsistent tables")
        path.append(chosen)
        y = chosen
    path.reverse()
    return np.array(path, dtype=np.int64)


def make_box_for(start_x: int, t0: int, n: int, cfg: Config,
                 slack: int = 64) -> BoxConfig:
    """A box sized so certification succeeds unless the run is degenerate."""
    return BoxConfig(cfg, x_min=start_x - 2 * n - slack, x_max=start_x + n + 2,
                     t_min=t0, t_max=t0 + n)


# -- coalescing-Brownian baseline and its random-walk oracle ----------------

def cbm_baseline(delta: float, t: float) -> float:
    """Survival probability of two coalescing Brownian paths a gap apart.

    Closed form erf(delta / (2 sqrt(t))); validate against
    `coalescing_walk_survival` before trusting it in an experiment.
    """
    if delta <= 0 or t <= 0:
        raise InvalidArgumentError("delta and t must be positive")
    return math.erf(delta / (2.0 * math.sqrt(t)))


def coalescing_walk_survival(delta: float, t: float, *, replicas: int = 10**6,
                             seed: int = 0, resolution: int = 48) -> float:
    """Monte Carlo survival of two coalescing simple random walks.

    The walks step +-1 per unit time and merge on meeting; under diffusive
    scaling with ``resolution`` lattice gap units per unit of ``delta`` the
    survival probability converges to `cbm_baseline`.  Start gap and step
    count are derived so the rescaled gap is exactly ``delta``.
    """
    if delta <= 0 or t <= 0:
        raise InvalidArgumentError("delta and t must be positive")
    d = int(round(delta * resolution))
    d += d % 2
    # time is rescaled so the effective rescaled gap is exactly delta even
    # after rounding d to an even integer
    steps = int(round(t * (d / delta) ** 2))
    rng = np.random.default_rng(seed)
    # half-gap walk: +-1 w.p. 1/4 each, hold w.p. 1/2; survival is a
    # running-minimum statement, so no absorption bookkeeping is needed
    survivors = 0
    chunk = 1 << 12
    for lo in range(0, replicas, chunk):
        k = min(chunk, replicas - lo)
        moves = rng.integers(0, 4, size=(k, steps), dtype=np.int8)
        incr = (moves == 0).astype(np.int32) - (moves == 1)
        walk = np.cumsum(incr, axis=1, dtype=np.int32)
        survivors += int((walk.min(axis=1) > -d // 2).sum())
    return float(survivors / replicas)


def _check_worker(args):
    p, seed, stream, n, slack, corrupt = args
    from .explore import explore_to_level
    from .lattice import LatticeSite
    cfg = Config(seed, p, stream)
    cluster = explore_to_level(LatticeSite(0, 0), n, cfg)
    r = np.asarray(cluster.right_values, dtype=np.int64)
    left = np.asarray(cluster.left_values, dtype=np.int64)
    if corrupt:
        r = r.copy()
        r[n // 2] += 1
    box = BoxConfig(cfg, x_min=-2 * n - slack, x_max=n + 2, t_min=0, t_max=n)
    dp = dp_right_boundary(box, 0, n)
    if dp.dead_from is not None:
        return "dp_dead"
    if not np.array_equal(dp.values, r):
        return "right_boundary_mismatch"
    if not np.array_equal(dp_rightmost_path(box, 0, n), left):
        return "left_boundary_mismatch"
    return "ok"


def check_suite(ps, seeds_per_p: int, n: int, seed: int, *, workers: int = 1,
                slack: int = 64, corrupt_run: int | None = None) -> dict:
    """Exact explore-vs-DP equivalence sweep plus the p=0 guard agreement.

    Every run demands integer equality of both boundaries.  ``corrupt_run``
    injects an off-by-one into that run's explored right boundary (negative
    control for the reporting path).
    """
    from .errors import ScanLimitExceededError
    from .explore import explore_to_level
    from .lattice import LatticeSite, STREAMS_PER_REPLICA
    from .runner import pmap
    jobs = []
    labels = []
    for ip, p in enumerate(ps):
        for rep in range(seeds_per_p):
            idx = ip * seeds_per_p + rep
            jobs.append((p, seed, (idx + 1) * STREAMS_PER_REPLICA, n, slack,
                         idx == corrupt_run))
            labels.append((p, rep))
    outcomes = pmap(_check_worker, jobs, workers)
    per_p = {p: {"passed": 0, "total": seeds_per_p} for p in ps}
    failures = []
    for (p, rep), outcome in zip(labels, outcomes):
        if outcome == "ok":
            per_p[p]["passed"] += 1
        else:
            failures.append({"p": p, "replica": rep, "kind": outcome})
    # degenerate input: the walk must trip its guard, the DP must report dead
    p0 = Config(seed, 0.0, STREAMS_PER_REPLICA)
    guard_tripped = False
    try:
        explore_to_level(LatticeSite(0, 0), 4, p0, scan_guard=64)
    except ScanLimitExceededError:
        guard_tripped = True
    dp0 = dp_right_boundary(BoxConfig(p0, -16, 8, 0, 4), 0, 4)
    return {"per_p": per_p, "failures": failures,
            "p0_agreement": guard_tripped and dp0.dead_from == 1}


def gap_walk_survival_exact(d: int, steps: int) -> float:
    """Exact (transition DP) survival of the coalescing-walk gap chain.

    Reference for the Monte Carlo above: gap moves +-2 w.p. 1/4 each, holds
    w.p. 1/2, absorbs at 0.
    """
    if d <= 0 or d % 2 != 0:
        raise InvalidArgumentError("gap must be positive and even")
    size = d // 2 + steps + 1
    q = np.zeros(size, dtype=np.float64)
    q[d // 2] = 1.0
    for _ in range(steps):
        nxt = np.zeros_like(q)
        nxt[1:] += 0.25 * q[:-1]
        nxt += 0.5 * q
        nxt[:-1] += 0.25 * q[1:]
        nxt[0] = 0.0  # absorbed mass leaves the chain
        q = nxt
    return float(q[1:].sum())
