"""High-throughput engine for constant-rate branching configurations.

The general simulator pays for full lineage objects and history views on
every event; the large diagnostics runs (hundreds of replicates at n in the
hundreds) only need configs where all rates are constants, the interaction is
at most a constant kernel against the instantaneous mass, the space is the
real line and the kernel Gaussian.  Under those restrictions no thinning is
needed (total rates are exact functions of the alive count), lineages reduce
to an append-only parent-pointer store over trait-changing records, and clones
share their parent's node outright.

Distributional equality with the general engine is asserted by cross-check
tests at small n; this module is an internal optimization behind the same
model contract, not a second model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError
from .particle_system import ModelConfig

__all__ = ["FastRunResult", "is_fast_eligible", "simulate_fast"]

_BLOCK = 1 << 14

KIND_CLONE = 0
KIND_MUTANT = 1
KIND_DEATH = 2


@dataclass
class FastRunResult:
    n: int
    horizon: float
    initial_count: int
    terminal_count: int
    max_count: int
    min_count: int
    event_count: int
    checkpoint_counts: np.ndarray
    # node store: record chains over trait-changing births (node 0 = root)
    node_time: np.ndarray = field(default=None)
    node_val: np.ndarray = field(default=None)
    node_parent: np.ndarray = field(default=None)
    node_depth: np.ndarray = field(default=None)
    # event log (only when recorded)
    ev_time: np.ndarray = field(default=None)
    ev_kind: np.ndarray = field(default=None)
    ev_node: np.ndarray = field(default=None)
    terminal_nodes: np.ndarray = field(default=None)

    @property
    def terminal_mass(self) -> float:
        return self.terminal_count / self.n

    def replay_counts(self) -> np.ndarray:
        """Alive count after each logged event; audits the log consistency."""
        if self.ev_kind is None:
            raise ConfigError("run was not recorded with a log")
        deltas = np.where(self.ev_kind == KIND_DEATH, -1, 1)
        return self.initial_count + np.cumsum(deltas)


def is_fast_eligible(cfg: ModelConfig) -> bool:
    if cfg.space.kind != "euclidean" or cfg.space.dim != 1:
        return False
    if cfg.kernel.kind != "gaussian":
        return False
    if cfg.r.form != "constant" or cfg.b.form != "constant" or cfg.D.form != "constant":
        return False
    if cfg.U is not None:
        if cfg.U.form != "constant":
            return False
        if tuple(cfg.nu_d) != ((0.0, 1.0),):
            return False
    return True


def simulate_fast(
    cfg: ModelConfig,
    m0: float,
    y0: float,
    rng: np.random.Generator,
    record: bool = False,
    checkpoints=(),
) -> FastRunResult:
    """Run one replicate; with ``record`` the node store and event log are kept."""
    if not is_fast_eligible(cfg):
        raise ConfigError("configuration not eligible for the fast engine")
    n = cfg.n
    T = cfg.horizon
    r = cfg.r.value
    b = cfg.b.value
    D = cfg.D.value
    u = cfg.U.value if cfg.U is not None else 0.0
    p = cfg.p
    sig = cfg.kernel.sigma / math.sqrt(n)
    cap = cfg.event_cap

    count0 = int(round(m0 * n))
    cps = np.asarray(sorted(checkpoints), dtype=float)
    cp_counts = np.empty(len(cps), dtype=np.int64)
    cp_i = 0

    lb = n * r + b  # per-individual birth rate
    d_base = n * r + D

    if count0 == 0:
        cp_counts[:] = 0
        return FastRunResult(
            n=n, horizon=T, initial_count=0, terminal_count=0, max_count=0,
            min_count=0, event_count=0, checkpoint_counts=cp_counts,
            ev_time=np.empty(0) if record else None,
            ev_kind=np.empty(0, dtype=np.int8) if record else None,
            ev_node=np.empty(0, dtype=np.int64) if record else None,
            node_time=np.zeros(1) if record else None,
            node_val=np.full(1, float(y0)) if record else None,
            node_parent=np.full(1, -1, dtype=np.int64) if record else None,
            node_depth=np.zeros(1, dtype=np.int32) if record else None,
            terminal_nodes=np.empty(0, dtype=np.int64) if record else None,
        )

    alive = [0] * count0  # node id per alive atom (all share the root initially)
    node_time = [0.0]
    node_val = [float(y0)]
    node_parent = [-1]
    node_depth = [0]
    ev_time: list = []
    ev_kind: list = []
    ev_node: list = []

    # pre-drawn randomness, refilled in blocks
    eb = rng.exponential(size=_BLOCK)
    ub = rng.random(size=_BLOCK)
    gb = rng.standard_normal(size=_BLOCK)
    ie = iu = ig = 0

    t = 0.0
    N = count0
    max_count = N
    min_count = N
    events = 0
    while N > 0:
        ld = d_base + u * (N / n)
        if ie == _BLOCK:
            eb = rng.exponential(size=_BLOCK)
            ie = 0
        t += eb[ie] / (N * (lb + ld))
        ie += 1
        if t >= T:
            break
        while cp_i < len(cps) and t > cps[cp_i]:
            cp_counts[cp_i] = N
            cp_i += 1
        if iu + 3 > _BLOCK:
            ub = rng.random(size=_BLOCK)
            iu = 0
        is_birth = ub[iu] * (lb + ld) < lb
        slot = int(ub[iu + 1] * N)
        iu += 2
        if is_birth:
            pnode = alive[slot]
            if p > 0.0 and ub[iu] < p:
                iu += 1
                if ig == _BLOCK:
                    gb = rng.standard_normal(size=_BLOCK)
                    ig = 0
                child = len(node_time)
                node_time.append(t)
                node_val.append(node_val[pnode] + sig * gb[ig])
                ig += 1
                node_parent.append(pnode)
                node_depth.append(node_depth[pnode] + 1)
                alive.append(child)
                if record:
                    ev_time.append(t)
                    ev_kind.append(KIND_MUTANT)
                    ev_node.append(child)
            else:
                iu += 1
                alive.append(pnode)
                if record:
                    ev_time.append(t)
                    ev_kind.append(KIND_CLONE)
                    ev_node.append(pnode)
            N += 1
            if N > max_count:
                max_count = N
        else:
            node = alive[slot]
            alive[slot] = alive[N - 1]
            alive.pop()
            N -= 1
            if N < min_count:
                min_count = N
            if record:
                ev_time.append(t)
                ev_kind.append(KIND_DEATH)
                ev_node.append(node)
        events += 1
        if events >= cap:
            raise CapacityError(f"event cap {cap} reached at t={t}")
    while cp_i < len(cps):
        cp_counts[cp_i] = N
        cp_i += 1
    return FastRunResult(
        n=n,
        horizon=T,
        initial_count=count0,
        terminal_count=N,
        max_count=max_count,
        min_count=min_count,
        event_count=events,
        checkpoint_counts=cp_counts,
        node_time=np.asarray(node_time) if record else None,
        node_val=np.asarray(node_val) if record else None,
        node_parent=np.asarray(node_parent, dtype=np.int64) if record else None,
        node_depth=np.asarray(node_depth, dtype=np.int32) if record else None,
        ev_time=np.asarray(ev_time) if record else None,
        ev_kind=np.asarray(ev_kind, dtype=np.int8) if record else None,
        ev_node=np.asarray(ev_node, dtype=np.int64) if record else None,
        terminal_nodes=np.asarray(alive, dtype=np.int64) if record else None,
    )
