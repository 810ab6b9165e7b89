"""Step-path lineages and Skorokhod-space operations.

A lineage is the right-continuous step function tracing the traits of an
individual's ancestors between their birth times.  Lineages are stored as a
persistent chain of birth records so that a population shares ancestral
prefixes structurally instead of copying them; a full record list is a lazy
view.  All operations are pure and safe under concurrent use.

The modulus of continuity computed here is the partition-based one used for
relative compactness in the Skorokhod topology: the infimum over partitions
``0 = t_0 < ... < t_{n-1} < T <= t_n`` with all spacings strictly greater
than ``delta`` of the maximal oscillation inside a partition interval.  For a
step path the oscillation of an interval is the diameter of the set of values
attained on it, so the infimum is attained and equals the diameter of some
consecutive run of post-collapse segment values.  ``modulus`` finds it with a
feasibility search over those candidate diameters; ``modulus_oracle`` is an
independent exhaustive check kept deliberately brute-force.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

from .compact import CompactSetSpec
from .errors import CapacityError, ConfigError, DomainError
from .trait_space import TraitSpace, as_point, distance, region_contains

__all__ = [
    "Lineage",
    "ModulusResult",
    "lineage",
    "constant_lineage",
    "extend",
    "eval_at",
    "left_limit",
    "stop",
    "concat",
    "modulus",
    "modulus_leq",
    "modulus_oracle",
    "in_compact_set",
    "attained_values",
    "lineage_to_dict",
    "lineage_from_dict",
]

_ORACLE_MAX_JUMPS = 12


class _Rec:
    """One birth record in a persistent ancestry chain."""

    __slots__ = ("parent", "time", "trait")

    def __init__(self, parent, time, trait):
        self.parent = parent
        self.time = time
        self.trait = trait


class Lineage:
    """Piecewise-constant cadlag path over a trait space.

    ``head`` is the newest birth record; earlier records are reached through
    parent pointers and may be shared with other lineages.
    """

    __slots__ = ("space", "head", "stop_time", "_times", "_traits")

    def __init__(self, space: TraitSpace, head: _Rec, stop_time: float | None = None):
        self.space = space
        self.head = head
        self.stop_time = stop_time
        self._times = None
        self._traits = None

    def _materialize(self):
        if self._times is None:
            recs = []
            node = self.head
            while node is not None:
                recs.append(node)
                node = node.parent
            recs.reverse()
            self._times = tuple(r.time for r in recs)
            self._traits = tuple(r.trait for r in recs)
        return self._times, self._traits

    @property
    def records(self) -> tuple[tuple[float, object], ...]:
        times, traits = self._materialize()
        return tuple(zip(times, traits))

    @property
    def birth_time(self) -> float:
        return self.head.time

    def __eq__(self, other):
        if not isinstance(other, Lineage):
            return NotImplemented
        return (
            self.space == other.space
            and self.records == other.records
            and self.stop_time == other.stop_time
        )

    def __hash__(self):
        return hash((self.records, self.stop_time))

    def __repr__(self):
        times, _ = self._materialize()
        stop = "" if self.stop_time is None else f", stop={self.stop_time}"
        return f"Lineage({len(times)} records, birth={times[-1]}{stop})"


def lineage(space: TraitSpace, records, stop_time: float | None = None) -> Lineage:
    """Build a lineage from explicit (time, trait) records.

    Times must be strictly increasing with the first record at time 0.
    Consecutive equal traits are allowed (clone birth records); the value
    function collapses them.
    """
    recs = [(float(t), as_point(space, x)) for t, x in records]
    if not recs:
        raise ConfigError("a lineage needs at least one birth record")
    if recs[0][0] != 0.0:
        raise ConfigError(f"first birth record must be at time 0, got {recs[0][0]}")
    for (t1, _), (t2, _) in zip(recs, recs[1:]):
        if not t2 > t1:
            raise ConfigError(f"record times must be strictly increasing ({t1} then {t2})")
    node = None
    for t, x in recs:
        node = _Rec(node, t, x)
    if stop_time is not None and stop_time < 0:
        raise ConfigError(f"stop_time must be >= 0, got {stop_time}")
    return Lineage(space, node, None if stop_time is None else float(stop_time))


def constant_lineage(space: TraitSpace, x) -> Lineage:
    return Lineage(space, _Rec(None, 0.0, as_point(space, x)))


def extend(y: Lineage, t: float, x) -> Lineage:
    """Child lineage with one more birth record at time ``t``.

    Used both for mutant births (new trait) and clone births (unchanged trait
    retained for genealogy audits).
    """
    if y.stop_time is not None:
        raise ConfigError("cannot extend a stopped lineage")
    if not t > y.head.time:
        raise ConfigError(f"new record time {t} not after last record {y.head.time}")
    return Lineage(y.space, _Rec(y.head, float(t), as_point(y.space, x)))


def eval_at(y: Lineage, t: float):
    """Value of the right-continuous step path at ``t`` (respects stop_time)."""
    if t < 0:
        raise DomainError(f"evaluation time must be >= 0, got {t}")
    if y.stop_time is not None:
        t = min(t, y.stop_time)
    times, traits = y._materialize()
    return traits[bisect_right(times, t) - 1]


def left_limit(y: Lineage, t: float):
    """Value approached from the left at ``t > 0``."""
    if t <= 0:
        raise DomainError(f"left limit needs t > 0, got {t}")
    if y.stop_time is not None and t > y.stop_time:
        return eval_at(y, y.stop_time)
    times, traits = y._materialize()
    return traits[max(bisect_left(times, t) - 1, 0)]


def stop(y: Lineage, t: float) -> Lineage:
    """Path stopped at ``t``: evaluates as ``s -> y(min(s, t))``.  Idempotent."""
    if t < 0:
        raise DomainError(f"stop time must be >= 0, got {t}")
    new_stop = t if y.stop_time is None else min(y.stop_time, t)
    return Lineage(y.space, y.head, new_stop)


def concat(y: Lineage, t: float, w) -> Lineage:
    """Concatenation: ``y`` before ``t``, then ``w`` (time-shifted) from ``t`` on.

    ``w`` may be a lineage or a single trait point (constant continuation),
    the latter being the mutant-lineage construction.
    """
    if t < 0:
        raise DomainError(f"concatenation time must be >= 0, got {t}")
    space = y.space
    if isinstance(w, Lineage):
        if w.space != space:
            raise ConfigError("concatenated paths must share one trait space")
        w_records = [(s, x) for s, x in w.records if w.stop_time is None or s <= w.stop_time]
        w_stop = None if w.stop_time is None else t + w.stop_time
    else:
        w_records = [(0.0, as_point(space, w))]
        w_stop = None

    out: list[tuple[float, object]] = []
    if t > 0:
        for s, x in y.records:
            if s >= t:
                break
            if y.stop_time is not None and s > y.stop_time:
                break
            out.append((s, x))
    for s, x in w_records:
        shifted = t + s
        if out and shifted <= out[-1][0]:
            continue  # w starts where y left off; y's record at exactly t wins nothing here
        out.append((shifted, x))
    if not out or out[0][0] != 0.0:
        out.insert(0, (0.0, w_records[0][1] if t == 0 else y.records[0][1]))
    node = None
    for s, x in out:
        node = _Rec(node, s, x)
    return Lineage(space, node, w_stop)


def attained_values(y: Lineage, T: float) -> list:
    """Distinct values attained by ``stop(y, T)`` on ``[0, T]``, in path order."""
    svals, _, fold, _ = _collapsed(y, T)
    return svals + ([fold] if fold is not None else [])


# --- modulus of continuity -------------------------------------------------


@dataclass(frozen=True)
class ModulusResult:
    value: float
    witness_partition: tuple[float, ...]


def _dist_fn(space: TraitSpace):
    if space.kind == "euclidean" and space.dim == 1:
        return lambda a, b: abs(a[0] - b[0])
    if space.kind == "interval":
        return lambda a, b: abs(a - b)
    if space.kind == "finite":
        table, index = space.table, space.index
        return lambda a, b: table[index[a]][index[b]]

    def _euclid(a, b):
        return sum((u - v) ** 2 for u, v in zip(a, b)) ** 0.5

    return _euclid


def _collapsed(y: Lineage, T: float):
    """Segment decomposition of ``stop(y, T)``.

    Returns ``(svals, stimes, fold, dist)`` where segment ``i`` holds value
    ``svals[i]`` from ``stimes[i]`` up to the next start (the last segment up
    to ``T``), duplicate consecutive values are collapsed, and ``fold`` is the
    value of a record landing exactly at the horizon (attained only at ``T``,
    so it always belongs to the final partition interval).
    """
    if T <= 0:
        raise DomainError(f"horizon must be > 0, got {T}")
    dist = _dist_fn(y.space)
    h = T if y.stop_time is None else min(y.stop_time, T)
    times, traits = y._materialize()
    svals = [traits[0]]
    stimes = [0.0]
    fold = None
    for t, x in zip(times[1:], traits[1:]):
        if t > h:
            break
        if dist(x, svals[-1]) == 0.0:
            continue
        if t == T:
            fold = x
        else:
            svals.append(x)
            stimes.append(t)
    return svals, stimes, fold, dist


def _feasible(svals, stimes, fold, delta, c, dist):
    """Decide whether a partition with max oscillation <= ``c`` exists.

    Left-to-right extension: from each reachable block start the block is
    extended maximally while its value diameter stays within ``c``; block
    boundaries are realized either as a cut pinned at a jump time or as a cut
    inside the last covered segment (sharing its value with the next block),
    and the earliest admissible cut position is propagated forward through the
    strict spacing inequalities.  Returns ``(ok, blocks, cuts)`` where blocks
    are (first_segment, last_segment) index pairs and cuts describe each block
    boundary for witness reconstruction.
    """
    k = len(svals) - 1
    INF = float("inf")
    entry = [INF] * (k + 1)
    entry[0] = 0.0
    pred: list = [None] * (k + 1)
    final_from = None
    for e in range(k + 1):
        a = entry[e]
        if a == INF:
            continue
        block = [svals[e]]
        b = e
        while True:
            if b == k:
                ok = fold is None or all(dist(fold, v) <= c for v in block)
                if ok:
                    final_from = e
                break
            s_next = stimes[b + 1]
            if s_next > a + delta and s_next < entry[b + 1]:
                entry[b + 1] = s_next
                pred[b + 1] = (e, "jump")
            if b > e:
                lo = max(stimes[b], a + delta)
                if lo < stimes[b + 1] and lo < entry[b]:
                    entry[b] = lo
                    pred[b] = (e, "interior")
            v = svals[b + 1]
            if any(dist(v, u) > c for u in block):
                break
            block.append(v)
            b += 1
        if final_from is not None:
            break
    if final_from is None:
        return False, None, None
    cuts = []
    e = final_from
    while pred[e] is not None:
        prev_e, kind = pred[e]
        cuts.append((kind, e))
        e = prev_e
    cuts.reverse()
    blocks = []
    start = 0
    for kind, seg in cuts:
        blocks.append((start, seg - 1 if kind == "jump" else seg))
        start = seg
    blocks.append((start, k))
    return True, blocks, cuts


def _block_diam(svals, fold, dist, blocks):
    worst = 0.0
    k = len(svals) - 1
    for i, (e, b) in enumerate(blocks):
        vals = svals[e : b + 1]
        if fold is not None and b == k and i == len(blocks) - 1:
            vals = vals + [fold]
        for p in range(len(vals)):
            for q in range(p + 1, len(vals)):
                d = dist(vals[p], vals[q])
                if d > worst:
                    worst = d
    return worst


def _witness_positions(cuts, stimes, svals, delta):
    """Concrete cut positions realizing a feasible block structure."""
    k = len(svals) - 1
    # forward infima, exactly as the feasibility pass computed them
    infs = []
    a = 0.0
    slack = float("inf")
    for kind, seg in cuts:
        if kind == "jump":
            pos = stimes[seg]
            slack = min(slack, pos - a - delta)
        else:
            pos = max(stimes[seg], a + delta)
            hi = stimes[seg + 1] if seg < k else float("inf")
            slack = min(slack, hi - pos)
        infs.append(pos)
        a = pos
    if not cuts:
        return []
    beta = slack / (2.0 * (len(cuts) + 1))
    out = []
    prev = 0.0
    for (kind, seg), f in zip(cuts, infs):
        if kind == "jump":
            pos = stimes[seg]
        else:
            pos = max(stimes[seg], prev + delta) + beta
        out.append(pos)
        prev = pos
    return out


def _run_candidates(svals, fold, dist):
    """Diameters of consecutive segment runs (the possible modulus values)."""
    k = len(svals) - 1
    cands = {0.0}
    for i in range(k + 1):
        run = 0.0
        for j in range(i + 1, k + 1):
            dj = max(dist(svals[l], svals[j]) for l in range(i, j))
            if dj > run:
                run = dj
            cands.add(run)
    if fold is not None:
        # final blocks additionally attain the folded at-horizon value
        tail = 0.0
        best_fold = 0.0
        for i in range(k, -1, -1):
            best_fold = max(best_fold, dist(fold, svals[i]))
            if i < k:
                tail = max(tail, max(dist(svals[l], svals[i]) for l in range(i + 1, k + 1)))
            cands.add(max(tail, best_fold))
    return sorted(cands)


def _diam_all(vals, dist):
    worst = 0.0
    for p in range(len(vals)):
        for q in range(p + 1, len(vals)):
            d = dist(vals[p], vals[q])
            if d > worst:
                worst = d
    return worst


def _trailing_partition_point(cut_positions, T, delta):
    last = cut_positions[-1] if cut_positions else 0.0
    return max(T, last + 1.5 * delta, 1.5 * delta)


def modulus(y: Lineage, delta: float, T: float) -> ModulusResult:
    """Exact modulus of continuity of ``stop(y, T)`` with an optimal witness."""
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if T <= 0:
        raise DomainError(f"horizon must be > 0, got {T}")
    svals, stimes, fold, dist = _collapsed(y, T)
    k = len(svals) - 1
    if k == 0 and fold is None:
        return ModulusResult(0.0, (0.0, _trailing_partition_point([], T, delta)))
    if k <= 48:
        cands = _run_candidates(svals, fold, dist)
        lo_i, hi_i = 0, len(cands) - 1
        best = None
        while lo_i <= hi_i:
            mid = (lo_i + hi_i) // 2
            ok, blocks, cuts = _feasible(svals, stimes, fold, delta, cands[mid], dist)
            if ok:
                best = (cands[mid], blocks, cuts)
                hi_i = mid - 1
            else:
                lo_i = mid + 1
        value, blocks, cuts = best  # single full-range block is always feasible
        value = _block_diam(svals, fold, dist, blocks)
    else:
        # large paths: bisection that snaps the upper end onto achieved values
        ok, blocks, cuts = _feasible(svals, stimes, fold, delta, float("inf"), dist)
        hi = _block_diam(svals, fold, dist, blocks)
        hi_blocks, hi_cuts = blocks, cuts
        lo = -1.0
        while hi - lo > 1e-14 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            if mid >= hi:
                break
            ok, blocks, cuts = _feasible(svals, stimes, fold, delta, mid, dist)
            if ok:
                hi = _block_diam(svals, fold, dist, blocks)
                hi_blocks, hi_cuts = blocks, cuts
            else:
                lo = mid
        value, blocks, cuts = hi, hi_blocks, hi_cuts
    positions = _witness_positions(cuts, stimes, svals, delta)
    partition = (0.0, *positions, _trailing_partition_point(positions, T, delta))
    return ModulusResult(value, partition)


def modulus_leq(y: Lineage, delta: float, T: float, bound: float) -> bool:
    """Decision form: is the modulus at gap ``delta`` at most ``bound``?"""
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if T <= 0:
        raise DomainError(f"horizon must be > 0, got {T}")
    if bound != bound or bound == float("inf"):
        return True
    svals, stimes, fold, dist = _collapsed(y, T)
    ok, _, _ = _feasible(svals, stimes, fold, delta, bound, dist)
    return ok


def modulus_oracle(y: Lineage, delta: float, T: float) -> float:
    """Exhaustive reference value for ``modulus``.

    Enumerates every assignment of consecutive segment runs to partition
    intervals (boundaries either pinned at a jump or placed inside a shared
    segment) and checks the spacing inequalities by forward propagation.
    Limited to 12 post-collapse jumps.
    """
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if T <= 0:
        raise DomainError(f"horizon must be > 0, got {T}")
    svals, stimes, fold, dist = _collapsed(y, T)
    k = len(svals) - 1
    if k > _ORACLE_MAX_JUMPS:
        raise CapacityError(f"oracle handles at most {_ORACLE_MAX_JUMPS} jumps, path has {k}")
    best = [float("inf")]

    def rec(e: int, a: float, curmax: float):
        if curmax >= best[0]:
            return
        vals = []
        for b in range(e, k + 1):
            vals.append(svals[b])
            d = _diam_all(vals, dist)
            if b == k and fold is not None:
                d = max(d, max(dist(fold, v) for v in vals))
            m = curmax if curmax > d else d
            if m >= best[0]:
                return  # diameters only grow with b
            if b == k:
                best[0] = m
                return
            s_next = stimes[b + 1]
            if s_next > a + delta:
                rec(b + 1, s_next, m)
            lo = max(stimes[b], a + delta)
            if lo < stimes[b + 1]:
                rec(b, lo, m)

    rec(0, 0.0, 0.0)
    return best[0]


def in_compact_set(y: Lineage, K: CompactSetSpec, T: float) -> bool:
    """Membership of ``stop(y, T)`` in the compact path set ``K``.

    True iff every attained value lies in the region and the modulus at each
    envelope grid width stays within its bound.
    """
    svals, stimes, fold, dist = _collapsed(y, T)
    vals = svals + ([fold] if fold is not None else [])
    if not all(region_contains(K.region, v) for v in vals):
        return False
    for d, w in K.envelope:
        if w == float("inf"):
            continue
        ok, _, _ = _feasible(svals, stimes, fold, d, w, dist)
        if not ok:
            return False
    return True


def validate_witness(y: Lineage, delta: float, T: float, result: ModulusResult) -> None:
    """Assert that a witness partition is admissible and attains the value."""
    pts = result.witness_partition
    if pts[0] != 0.0:
        raise AssertionError("witness partition must start at 0")
    interior = list(pts[1:-1])
    t_n = pts[-1]
    if t_n < T:
        raise AssertionError("witness partition must reach the horizon")
    if interior and not interior[-1] < T:
        raise AssertionError("interior breakpoints must stay below the horizon")
    gaps = [b - a for a, b in zip(pts, pts[1:])]
    if any(g <= delta for g in gaps):
        raise AssertionError(f"witness spacing {min(gaps)} not > delta={delta}")
    svals, stimes, fold, dist = _collapsed(y, T)
    k = len(svals) - 1
    worst = 0.0
    edges = [0.0] + interior + [t_n]
    for i, (a, b) in enumerate(zip(edges, edges[1:])):
        vals = []
        for s in range(k + 1):
            seg_start = stimes[s]
            seg_end = stimes[s + 1] if s < k else T
            if seg_start < b and seg_end > a:
                vals.append(svals[s])
        if i == len(edges) - 2 and fold is not None:
            vals.append(fold)
        worst = max(worst, _diam_all(vals, dist))
    if abs(worst - result.value) > 1e-12:
        raise AssertionError(f"witness attains {worst}, reported {result.value}")


# --- serialization ---------------------------------------------------------


def _trait_to_json(space: TraitSpace, x):
    return list(x) if space.kind == "euclidean" else x


def lineage_to_dict(y: Lineage) -> dict:
    d = {"records": [[t, _trait_to_json(y.space, x)] for t, x in y.records]}
    if y.stop_time is not None:
        d["stop_time"] = y.stop_time
    return d


def lineage_from_dict(space: TraitSpace, d: dict) -> Lineage:
    return lineage(space, [(t, x) for t, x in d["records"]], d.get("stop_time"))


def lineage_to_json(y: Lineage) -> str:
    return json.dumps(lineage_to_dict(y))


def lineage_from_json(space: TraitSpace, s: str) -> Lineage:
    return lineage_from_dict(space, json.loads(s))
