"""Break points along right boundaries and drift/diffusivity estimation.

A time ``n`` is a (surrogate) break point when the open cluster of
``(r(n), n)`` reaches a survival horizon ``H``; that holds exactly when the
horizon-``H`` rightmost path and the right boundary coincide at ``n``, which
is how detection is implemented (one exploration run yields both).  Between
consecutive break points the spatial and temporal increments ``(X_i, tau_i)``
are i.i.d. from the second record on; the first record is always excluded
from estimation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError
from .explore import (ExplorationCluster, RightBoundaryTrajectory,
                      explore_to_level)
from .lattice import Config, LatticeSite
from .runner import pmap
from .stats import ks_distance_to_normal, wilson_interval

DEFAULT_BATCHES = 30


@dataclass(frozen=True)
class RegenRecord:
    """One break-point increment: time T, spatial step X, time step tau."""

    T: int
    X: int
    tau: int


@dataclass(frozen=True)
class DriftDiffusivity:
    alpha_hat: float
    sigma_hat: float
    n_records: int
    alpha_se: float
    sigma_se: float


@dataclass(frozen=True)
class KsReport:
    stat: float
    n_samples: int
    low_resolution: bool


def break_point_arrays(cluster: ExplorationCluster, n_end: int, margin: int):
    """Break times and boundary values from an explored cluster.

    The cluster must be advanced to at least ``n_end + margin``; detection
    runs on ``[start, n_end]`` and break points inside the trailing
    ``margin`` levels are discarded (their survival evidence is one-sided).
    Returns ``(T, RT)``: absolute break times and ``r`` evaluated there.
    """
    horizon = n_end + margin
    if margin <= 0:
        raise InvalidArgumentError("margin must be positive")
    if cluster.level < horizon:
        raise InvalidArgumentError("cluster not explored to the survival horizon")
    t0 = cluster.start_t
    keep = n_end - margin - t0
    if keep < 0:
        raise InvalidArgumentError("margin leaves no detection window")
    r = np.asarray(cluster.right_values[:keep + 1], dtype=np.int64)
    left = np.asarray(cluster.left_values[:keep + 1], dtype=np.int64)
    idx = np.flatnonzero(r == left)
    return t0 + idx, r[idx]


def detect_break_points(traj: RightBoundaryTrajectory, cfg: Config,
                        survival_horizon: int, *, scan_guard=None) -> list[RegenRecord]:
    """Break-point records along a right-boundary trajectory.

    Replays the exploration to ``survival_horizon`` (the trailing
    ``survival_horizon - traj.end_t`` levels act as the survival margin) and
    checks the replayed prefix against ``traj``.  Record 1 measures the
    offset from the origin; records from index 2 on are the i.i.d.
    increments used for estimation.
    """
    if survival_horizon <= traj.end_t:
        raise InvalidArgumentError("survival horizon must exceed the trajectory end")
    margin = survival_horizon - traj.end_t
    kwargs = {} if scan_guard is None else {"scan_guard": scan_guard}
    cluster = explore_to_level(traj.start, survival_horizon, cfg, **kwargs)
    replayed = np.asarray(cluster.right_values[:len(traj)], dtype=np.int64)
    if not np.array_equal(replayed, traj.values):
        raise InvalidArgumentError("trajectory does not match its configuration")
    T, RT = break_point_arrays(cluster, traj.end_t, margin)
    records = []
    prev_t, prev_x = traj.start.t, traj.start.x
    for bt, bx in zip(T.tolist(), RT.tolist()):
        records.append(RegenRecord(bt, bx - prev_x, bt - prev_t))
        prev_t, prev_x = bt, bx
    return records


def _plugin_sigma2(mx, mt, xx, xt, tt):
    # E[(X m_tau - tau m_X)^2] / m_tau^3 from raw second moments
    return (mt * mt * xx - 2.0 * mt * mx * xt + mx * mx * tt) / mt**3


def estimate_alpha_sigma(records, n_batches: int = DEFAULT_BATCHES) -> DriftDiffusivity:
    """Plug-in drift and diffusivity from i.i.d. increment records.

    ``records`` must already exclude the first increment.  Standard errors
    come from batch means over consecutive record blocks.
    """
    X = np.array([rec.X for rec in records], dtype=np.float64)
    tau = np.array([rec.tau for rec in records], dtype=np.float64)
    return estimate_from_increments(X, tau, n_batches=n_batches)


def estimate_from_increments(X, tau, n_batches: int = DEFAULT_BATCHES) -> DriftDiffusivity:
    X = np.asarray(X, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    n = len(X)
    if n < 2:
        raise InsufficientDataError(f"{n} records; need at least 2")
    mx, mt = X.mean(), tau.mean()
    alpha = mx / mt
    sigma2 = _plugin_sigma2(mx, mt, (X * X).mean(), (X * tau).mean(),
                            (tau * tau).mean())
    sigma = math.sqrt(max(sigma2, 0.0))
    b = max(2, min(n_batches, n // 2))
    bounds = np.linspace(0, n, b + 1).astype(int)
    a_b, s_b = [], []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        bx, bt = X[lo:hi], tau[lo:hi]
        a_b.append(bx.mean() / bt.mean())
        s2 = _plugin_sigma2(bx.mean(), bt.mean(), (bx * bx).mean(),
                            (bx * bt).mean(), (bt * bt).mean())
        s_b.append(math.sqrt(max(s2, 0.0)))
    alpha_se = float(np.std(a_b, ddof=1) / math.sqrt(b))
    sigma_se = float(np.std(s_b, ddof=1) / math.sqrt(b))
    return DriftDiffusivity(float(alpha), float(sigma), n, alpha_se, sigma_se)


class RegenAccumulator:
    """Associative sufficient-statistics merge for large record streams.

    Feed per-replica increment arrays; batches for the standard errors are
    formed by grouping whole replicas, which are independent by design.
    """

    def __init__(self):
        self._per_replica = []  # (n, sx, st, sxx, sxt, stt)

    def add(self, X, tau):
        X = np.asarray(X, dtype=np.float64)
        tau = np.asarray(tau, dtype=np.float64)
        self._per_replica.append((len(X), X.sum(), tau.sum(), (X * X).sum(),
                                  (X * tau).sum(), (tau * tau).sum()))

    @property
    def n_records(self) -> int:
        return int(sum(row[0] for row in self._per_replica))

    def finalize(self, n_batches: int = DEFAULT_BATCHES) -> DriftDiffusivity:
        rows = np.array(self._per_replica, dtype=np.float64)
        if len(rows) == 0 or rows[:, 0].sum() < 2:
            raise InsufficientDataError("not enough records accumulated")
        n, sx, st, sxx, sxt, stt = rows.sum(axis=0)
        alpha = sx / st
        sigma2 = _plugin_sigma2(sx / n, st / n, sxx / n, sxt / n, stt / n)
        sigma = math.sqrt(max(sigma2, 0.0))
        b = max(2, min(n_batches, len(rows)))
        bounds = np.linspace(0, len(rows), b + 1).astype(int)
        a_b, s_b = [], []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            bn, bsx, bst, bsxx, bsxt, bstt = rows[lo:hi].sum(axis=0)
            a_b.append(bsx / bst)
            s2 = _plugin_sigma2(bsx / bn, bst / bn, bsxx / bn, bsxt / bn, bstt / bn)
            s_b.append(math.sqrt(max(s2, 0.0)))
        alpha_se = float(np.std(a_b, ddof=1) / math.sqrt(b))
        sigma_se = float(np.std(s_b, ddof=1) / math.sqrt(b))
        return DriftDiffusivity(float(alpha), float(sigma), int(n), alpha_se, sigma_se)


def _clt_worker(args):
    cfg, x, t, n, scan_guard = args
    cluster = explore_to_level(LatticeSite(x, t), n, cfg, scan_guard=scan_guard)
    return cluster.right_values[-1]


def clt_check(configs, n: int, alpha: float, sigma: float, *,
              origin: LatticeSite | None = None, workers: int = 1,
              scan_guard: int = 10_000) -> KsReport:
    """KS distance between normalized endpoint values and a standard normal.

    One exploration per config; the endpoints ``(r(n) - alpha n) /
    (sigma sqrt(n))`` are compared against the normal CDF.  ``n`` below 100
    is flagged low-resolution but still computed.
    """
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    z = origin if origin is not None else LatticeSite(0, 0)
    endpoints = pmap(_clt_worker, [(cfg, z.x, z.t, z.t + n, scan_guard)
                                   for cfg in configs], workers)
    samples = (np.array(endpoints, dtype=np.float64) - z.x - alpha * n) / (
        sigma * math.sqrt(n))
    return KsReport(ks_distance_to_normal(samples), len(samples), n < 100)


def _error_gap_worker(args):
    cfg, window, threshold, horizon, scan_guard = args
    cluster = explore_to_level(LatticeSite(0, 0), horizon, cfg,
                               scan_guard=scan_guard)
    r = np.asarray(cluster.right_values, dtype=np.int64)
    gam = np.asarray(cluster.left_values, dtype=np.int64)
    sup_err = int((r[:window + 1] - gam[:window + 1]).max())
    meets = np.flatnonzero(r == gam)
    gap_event = _has_meeting_gap(meets, window, threshold)
    return sup_err >= threshold, gap_event


def _has_meeting_gap(meets, window, threshold) -> bool:
    """True iff a meeting-free stretch of length ``threshold`` starts
    somewhere in [0, window]; ``meets`` must cover [0, window + threshold]."""
    if len(meets) == 0 or meets[0] > threshold:
        return True
    diffs = np.diff(meets)
    if np.any((diffs > threshold) & (meets[:-1] < window)):
        return True
    return bool(meets[-1] < window)


def error_gap_frequencies(replicas: int, p: float, eps_list, delta: float,
                          L: float, *, seed: int = 0, stream_offset: int = 0,
                          workers: int = 1, horizon_margin: int = 256,
                          scan_guard: int = 10_000):
    """Frequencies of the sup-error and meeting-gap events per epsilon.

    For each eps: the sup of ``r - gamma`` over ``[0, L/eps]`` reaching
    ``eps**-delta``, and the existence of a meeting-free stretch of that
    length.  Gamma uses the horizon surrogate with a generous margin.
    Returns one row per eps with Wilson intervals.
    """
    if not 0 < delta < 1:
        raise InvalidArgumentError("delta must lie in (0, 1)")
    if L <= 0:
        raise InvalidArgumentError("L must be positive")
    rows = []
    for i, eps in enumerate(eps_list):
        window = int(math.floor(L / eps))
        threshold = eps**(-delta)
        horizon = window + max(3 * window, horizon_margin)
        jobs = []
        for rep in range(replicas):
            stream = stream_offset + (i * replicas + rep + 1)
            jobs.append((Config(seed, p, stream), window, threshold, horizon,
                         scan_guard))
        outcomes = pmap(_error_gap_worker, jobs, workers)
        k_err = sum(1 for e, _ in outcomes if e)
        k_gap = sum(1 for _, g in outcomes if g)
        rows.append({
            "eps": eps, "window": window, "threshold": threshold,
            "n": replicas,
            "freq_error": k_err / replicas,
            "ci_error": wilson_interval(k_err, replicas),
            "freq_gap": k_gap / replicas,
            "ci_gap": wilson_interval(k_gap, replicas),
        })
    return rows


def monotone_within_ci(rows, key: str) -> bool:
    """Non-increasing frequencies (as eps decreases) up to CI overlap."""
    ci_key = "ci_" + key.split("_", 1)[1]
    for prev, cur in zip(rows[:-1], rows[1:]):
        if cur[ci_key][0] > prev[ci_key][1]:
            return False
    return True
