"""Vectorized compact-set membership for large batches of 1-D step paths.

Per-atom membership checks during the big containment runs would be far too
slow one call at a time, so paths are packed into padded jump matrices and a
sufficient greedy pass (latest cut placement, cuts pinned at jumps) decides
the bulk of the modulus bounds across a whole batch with numpy; the few rows
the greedy cannot certify fall back to the exact feasibility search from
``path_core``.  The greedy only ever errs on the conservative side (a pass
proves the modulus is within the bound), so escapes are always decided by the
exact routine.

Two horizon forms are evaluated per node: the value at a birth landing exactly
on the evaluation horizon belongs to the final partition interval and cannot
be cut away ("at-birth" form), while any later horizon sees it as an ordinary
jump ("settled" form).  For a frozen step path neither form changes again as
the horizon grows, which is what makes one evaluation per node sufficient.
"""

from __future__ import annotations

import numpy as np

from .compact import CompactSetSpec
from .errors import ConfigError
from .fastsim import KIND_DEATH, KIND_MUTANT, FastRunResult
from .path_core import _feasible

__all__ = [
    "node_matrices",
    "greedy_within",
    "decide_within",
    "node_statuses",
    "exceedance_statuses",
    "replay_threshold",
]

_ABS = lambda a, b: abs(a - b)


def node_matrices(res: FastRunResult):
    """Pack every node's trait-changing records into padded (times, values).

    Row i holds node i's jumps after time 0; ``klen[i]`` is its jump count and
    ``v0`` the shared root value.  Children rows are built from parent rows,
    so construction is linear in total record count.
    """
    depth = res.node_depth
    kmax = int(depth.max()) if len(depth) else 0
    m = len(depth)
    jt = np.zeros((m, kmax))
    jv = np.zeros((m, kmax))
    for i in range(m):
        par = res.node_parent[i]
        if par < 0:
            continue
        d = depth[i]
        if d > 1:
            jt[i, : d - 1] = jt[par, : d - 1]
            jv[i, : d - 1] = jv[par, : d - 1]
        jt[i, d - 1] = res.node_time[i]
        jv[i, d - 1] = res.node_val[i]
    return jt, jv, depth.astype(np.int64), float(res.node_val[0])


def greedy_within(jt, jv, klen, v0, delta, bound, fold: bool):
    """Sufficient vectorized check that the modulus at ``delta`` is <= bound.

    Returns (certified, undecided): certified rows satisfy the bound; rows the
    greedy could not partition are merely undecided, not failures.
    """
    m, kmax = jt.shape
    keff = klen - 1 if fold else klen
    prev_cut = np.zeros(m)
    bmin = np.full(m, v0)
    bmax = np.full(m, v0)
    fail = np.zeros(m, dtype=bool)
    for j in range(kmax):
        act = keff > j
        if not act.any():
            break
        t = jt[:, j]
        v = jv[:, j]
        nmin = np.minimum(bmin, v)
        nmax = np.maximum(bmax, v)
        viol = act & (nmax - nmin > bound)
        can = t - prev_cut > delta
        fail |= viol & ~can
        cut = viol & can
        keep = act & ~cut
        prev_cut = np.where(cut, t, prev_cut)
        bmin = np.where(cut, v, np.where(keep, nmin, bmin))
        bmax = np.where(cut, v, np.where(keep, nmax, bmax))
    if fold:
        has = klen >= 1
        fv = jv[np.arange(m), np.maximum(klen - 1, 0)]
        nmin = np.minimum(bmin, fv)
        nmax = np.maximum(bmax, fv)
        fail |= has & (nmax - nmin > bound)
    return ~fail, fail


def decide_within(jt, jv, klen, v0, delta, bound, fold: bool) -> np.ndarray:
    """Exact batched decision ``modulus <= bound`` (greedy + exact fallback)."""
    ok, maybe = greedy_within(jt, jv, klen, v0, delta, bound, fold)
    out = ok.copy()
    for i in np.flatnonzero(maybe):
        ki = int(klen[i])
        k = max(ki - 1, 0) if fold else ki
        stimes = [0.0] + [float(x) for x in jt[i, :k]]
        svals = [v0] + [float(x) for x in jv[i, :k]]
        fv = float(jv[i, ki - 1]) if fold and ki >= 1 else None
        feas, _, _ = _feasible(svals, stimes, fv, delta, bound, _ABS)
        out[i] = feas
    return out


def node_statuses(res: FastRunResult, K: CompactSetSpec):
    """Escape indicators per node against a compact set spec.

    Returns (esc_settled, esc_at_birth): a node escapes when any attained
    value leaves the region or any envelope bound is exceeded.  The at-birth
    form applies only at the instant the node's last record is born.
    """
    if res.node_time is None:
        raise ConfigError("run was not recorded; rerun simulate_fast with record=True")
    jt, jv, klen, v0 = node_matrices(res)
    m = len(klen)
    region = K.region
    if region.kind != "ball" or region.space.kind != "euclidean" or region.space.dim != 1:
        raise ConfigError("batch statuses support 1-D euclidean ball regions")
    c0 = region.center[0]
    rad = region.radius
    range_ok = np.empty(m, dtype=bool)
    range_ok[0] = abs(v0 - c0) <= rad
    for i in range(1, m):
        range_ok[i] = range_ok[res.node_parent[i]] and abs(res.node_val[i] - c0) <= rad
    inside_plus = range_ok.copy()
    inside_at = range_ok.copy()
    for delta, bound in K.envelope:
        if bound == float("inf"):
            continue
        live = inside_plus | inside_at
        if not live.any():
            break
        ok_plus = decide_within(jt, jv, klen, v0, delta, bound, fold=False)
        inside_plus &= ok_plus
        ok_at = decide_within(jt, jv, klen, v0, delta, bound, fold=True)
        inside_at &= ok_at
    return ~inside_plus, ~inside_at


def exceedance_statuses(res: FastRunResult, t0: float, tau: float):
    """Indicators that the modulus at gap ``t0`` reaches ``tau`` per node.

    ``w' >= tau`` is the complement of ``w' <= tau-``; ties at exactly tau
    have probability zero for continuous kernels.
    """
    jt, jv, klen, v0 = node_matrices(res)
    just_below = tau * (1.0 - 1e-12)
    exc_plus = ~decide_within(jt, jv, klen, v0, t0, just_below, fold=False)
    exc_at = ~decide_within(jt, jv, klen, v0, t0, just_below, fold=True)
    return exc_plus, exc_at


def replay_threshold(res: FastRunResult, flag_plus, flag_at, threshold_mass: float):
    """Scan the event log for the first time the flagged mass exceeds a level.

    Uses the settled flags for standing atoms and swaps in the at-birth flag
    for a mutant exactly at its birth event.  Returns (exceeded, first_time,
    terminal_flagged_count).
    """
    if res.ev_kind is None:
        raise ConfigError("run was not recorded; rerun simulate_fast with record=True")
    thr = threshold_mass * res.n
    fp = flag_plus.astype(np.int64)
    base = res.initial_count * fp[0]
    if len(res.ev_kind) == 0:
        return base > thr, (0.0 if base > thr else np.inf), base
    per = fp[res.ev_node]
    deltas = np.where(res.ev_kind == KIND_DEATH, -per, per)
    traj = base + np.cumsum(deltas)
    adj = np.where(
        res.ev_kind == KIND_MUTANT,
        flag_at.astype(np.int64)[res.ev_node] - per,
        0,
    )
    checked = traj + adj
    exceeded = base > thr or bool((checked > thr).any())
    if base > thr:
        first = 0.0
    else:
        idx = np.flatnonzero(checked > thr)
        first = float(res.ev_time[idx[0]]) if len(idx) else np.inf
    return exceeded, first, int(traj[-1])
