"""Coupled constructions: dominating population, minorizing mass, spine pair.

The dominating coupling simulates the simplified population (no natural or
competitive deaths, optionally the birth bonus pinned at its upper bound) as
the driving process and carves the original model out of it: every dominating
birth enters the base population with probability ``b_base/b_dom`` when its
parent is a base member, and base members additionally suffer marked deaths at
rate ``d_base - d_dom`` computed from the base's own interaction history.  By
construction the base alive-set is a sub-population of the dominating one with
identical lineages; the audit re-derives both populations from the event rows
and verifies that instead of assuming it.

The spine pair drives both jump processes with one exponential sequence: the
state-dependent spine converts variate ``E`` into a waiting time ``E/rate``
while the dominating spine uses the constant rate bound, so its waiting times
are pathwise shorter while remaining exactly exponential.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CapacityError, ConfigError, CouplingViolationError
from .mutation import sample_offspring_trait, sample_spine_jump
from .particle_system import (
    Event,
    EventLog,
    ModelConfig,
    PopulationState,
    _LagView,
    _interaction_sum,
)
from .fastsim import is_fast_eligible, simulate_fast
from .path_core import Lineage, constant_lineage, extend, lineage
from .rates import constant_rate, rate_value
from .statutil import wilson_interval
from .trait_space import as_point

__all__ = [
    "CoupledRun",
    "SpinePair",
    "MinorizingRun",
    "dominate",
    "run_dominating_coupling",
    "run_minorizing",
    "estimate_survival",
    "spine_pair",
    "minorizing_constraint_bound",
]


def dominate(cfg: ModelConfig, replace_b: bool = False) -> ModelConfig:
    """Config of the dominating process: no down pressure, optional flat bonus.

    Drops the natural death rate and the interaction entirely; with
    ``replace_b`` the extra birth rate is pinned at its declared upper bound.
    """
    b = constant_rate(cfg.b_hi) if replace_b else cfg.b
    return replace(
        cfg,
        b=b,
        D=constant_rate(0.0),
        U=None,
        nu_d=(),
        D_hi=1.0,
        U_hi=0.0,
        b_hi=cfg.b_hi,
    )


@dataclass(frozen=True)
class CoupleEvent:
    time: float
    kind: str  # "birth" | "death" | "unbase"
    parent: int
    child: int | None = None
    trait: object = None
    child_in_base: bool = False


@dataclass
class CoupledRun:
    cfg: ModelConfig
    cfg_dom: ModelConfig
    initial: tuple  # ((label, Lineage), ...)
    events: list
    base_counts: np.ndarray = None
    dom_counts: np.ndarray = None

    def audit(self) -> int:
        """Replay base and dominating populations independently.

        Returns the number of events at which the base alive-set failed to be
        a sub-population (by label and by lineage records) of the dominating
        one.  The declared guarantee is zero.
        """
        dom = {lab: lin for lab, lin in self.initial}
        base = {lab: lin for lab, lin in self.initial}
        violations = 0
        bc, dc = [], []
        for ev in self.events:
            if ev.kind == "birth":
                parent = dom.get(ev.parent)
                if parent is None:
                    violations += 1
                    continue
                dom[ev.child] = extend(parent, ev.time, ev.trait)
                if ev.child_in_base:
                    bparent = base.get(ev.parent)
                    if bparent is None:
                        violations += 1
                    else:
                        base[ev.child] = extend(bparent, ev.time, ev.trait)
            elif ev.kind == "death":
                dom.pop(ev.parent, None)
                base.pop(ev.parent, None)
            elif ev.kind == "unbase":
                if ev.parent not in base:
                    violations += 1
                base.pop(ev.parent, None)
            ok = all(
                lab in dom and dom[lab].records == lin.records for lab, lin in base.items()
            )
            if not ok:
                violations += 1
            bc.append(len(base))
            dc.append(len(dom))
        self.base_counts = np.asarray(bc, dtype=np.int64)
        self.dom_counts = np.asarray(dc, dtype=np.int64)
        return violations

    @property
    def terminal_base_mass(self) -> float:
        dom = set(l for l, _ in self.initial)
        base = set(dom)
        for ev in self.events:
            if ev.kind == "birth":
                dom.add(ev.child)
                if ev.child_in_base and ev.parent in base:
                    base.add(ev.child)
            elif ev.kind == "death":
                dom.discard(ev.parent)
                base.discard(ev.parent)
            else:
                base.discard(ev.parent)
        return len(base) / self.cfg.n

    @property
    def terminal_dom_mass(self) -> float:
        alive = set(l for l, _ in self.initial)
        for ev in self.events:
            if ev.kind == "birth":
                alive.add(ev.child)
            elif ev.kind == "death":
                alive.discard(ev.parent)
        return len(alive) / self.cfg.n


def run_dominating_coupling(
    cfg: ModelConfig,
    initial: PopulationState,
    rng: np.random.Generator,
    replace_b: bool = True,
) -> CoupledRun:
    """Joint simulation of the model and its dominating population."""
    cfg_dom = dominate(cfg, replace_b=replace_b)
    n = cfg.n
    T = cfg.horizon
    W = cfg.interaction_weight
    space = cfg.space

    atoms: dict[int, Lineage] = dict(initial.atoms)
    in_base = {lab: True for lab in atoms}
    labels = list(atoms.keys())
    next_label = max(labels, default=-1) + 1
    events: list[CoupleEvent] = []

    # base history for the lagged interaction integral
    base_events: list[Event] = []
    views = [_LagView(lag, atoms) for lag, _ in cfg.nu_d] if cfg.U is not None else []
    m_hat_base = len(atoms) / n

    Lb = n * cfg.r_hi + (cfg.b_hi if replace_b else cfg.b_hi)
    Ld = n * cfg.r_hi
    t = initial.time
    proposals = 0
    while labels:
        Lx = cfg.D_hi + cfg.U_hi * W * m_hat_base
        lam = Lb + Ld + Lx
        t += rng.exponential() / (len(labels) * lam)
        if t >= T:
            break
        proposals += 1
        if proposals > 200 * cfg.event_cap:
            raise CapacityError("proposal budget exhausted in coupling run")
        lab = labels[int(rng.integers(len(labels)))]
        y = atoms[lab]
        u = rng.random() * lam
        if u < Lb:
            b_dom = n * rate_value(cfg.r, space, t, y) + (
                cfg.b_hi if replace_b else rate_value(cfg.b, space, t, y)
            )
            if rng.random() * Lb < b_dom:
                trait, _ = sample_offspring_trait(cfg.kernel, n, cfg.p, y.head.trait, rng)
                child = next_label
                next_label += 1
                child_in_base = False
                if in_base[lab]:
                    b_base = n * rate_value(cfg.r, space, t, y) + rate_value(cfg.b, space, t, y)
                    ratio = b_base / b_dom
                    if ratio > 1.0 + 1e-12:
                        raise CouplingViolationError(
                            f"base birth rate {b_base} exceeds dominating rate {b_dom}"
                        )
                    child_in_base = rng.random() < ratio
                atoms[child] = extend(y, t, trait)
                in_base[child] = child_in_base
                labels.append(child)
                events.append(CoupleEvent(t, "birth", lab, child, trait, child_in_base))
                if child_in_base:
                    base_events.append(Event(t, "birth_clone", lab, child, trait))
                    m_hat_base = max(m_hat_base, sum(in_base.values()) / n)
        elif u < Lb + Ld:
            d_dom = n * rate_value(cfg.r, space, t, y)
            if rng.random() * Ld < d_dom:
                events.append(CoupleEvent(t, "death", lab))
                if in_base[lab]:
                    base_events.append(Event(t, "death", lab, None))
                labels.remove(lab)
                del atoms[lab]
                del in_base[lab]
        else:
            if in_base[lab] and Lx > 0:
                for view in views:
                    view.advance(base_events, t)
                extra = rate_value(cfg.D, space, t, y) + _interaction_sum(cfg, t, y, views)
                if extra < -1e-12:
                    raise CouplingViolationError(f"negative extra death rate {extra}")
                if extra > Lx * (1 + 1e-9):
                    raise CouplingViolationError(
                        f"extra death rate {extra} exceeds its majorant {Lx}"
                    )
                if rng.random() * Lx < extra:
                    in_base[lab] = False
                    events.append(CoupleEvent(t, "unbase", lab))
                    base_events.append(Event(t, "death", lab, None))
    return CoupledRun(
        cfg=cfg,
        cfg_dom=cfg_dom,
        initial=tuple(initial.atoms.items()),
        events=events,
    )


# --- minorizing process -------------------------------------------------------


def minorizing_constraint_bound(cfg: ModelConfig) -> float:
    """Upper limit on the constant death shift for the survival argument."""
    return 4.0 * cfg.r_lo / (cfg.horizon * cfg.r_hi)


@dataclass
class MinorizingRun:
    terminal_mass: float
    min_mass: float
    checkpoint_masses: np.ndarray
    warned: bool


def _minorizing_cfg(cfg: ModelConfig, D0: float) -> ModelConfig:
    return replace(
        cfg,
        b=constant_rate(0.0),
        b_hi=0.0,
        D=constant_rate(D0),
        D_hi=D0 + 1.0,
        U=None,
        nu_d=(),
        U_hi=0.0,
        p=0.0,
    )


def run_minorizing(
    cfg: ModelConfig,
    start_mass: float,
    y0,
    D0: float,
    rng: np.random.Generator,
    checkpoints=(),
) -> MinorizingRun:
    """Mass trajectory of the minorizing process (birth n r, death n r + D0)."""
    if D0 < 0:
        raise ConfigError(f"death shift D0 must be >= 0, got {D0}")
    warned = False
    bound = minorizing_constraint_bound(cfg)
    if D0 > 0 and D0 >= bound:
        warnings.warn(
            f"D0={D0} is not below the survival constraint {bound:.4g}; "
            "the uniform survival lower bound is not guaranteed",
            stacklevel=2,
        )
        warned = True
    cfg_min = _minorizing_cfg(cfg, D0)
    if is_fast_eligible(cfg_min):
        res = simulate_fast(cfg_min, start_mass, _scalar_trait(cfg, y0), rng, checkpoints=checkpoints)
        return MinorizingRun(
            terminal_mass=res.terminal_mass,
            min_mass=res.min_count / cfg.n,
            checkpoint_masses=res.checkpoint_counts / cfg.n,
            warned=warned,
        )
    # general fallback: thinning loop over lineages (trait- or age-dependent r)
    from .particle_system import InitialSpec, make_initial, simulate

    init = make_initial(cfg_min, InitialSpec(m0=start_mass, law="point", trait=y0), rng)
    cps = sorted(checkpoints)
    state, log = simulate(cfg_min, init, rng)
    counts = []
    N = len(init.atoms)
    min_n = N
    ci = 0
    out = np.empty(len(cps))
    for ev in log.events:
        while ci < len(cps) and ev.time > cps[ci]:
            out[ci] = N
            ci += 1
        N += -1 if ev.kind == "death" else 1
        min_n = min(min_n, N)
    while ci < len(cps):
        out[ci] = N
        ci += 1
    return MinorizingRun(
        terminal_mass=state.mass,
        min_mass=min_n / cfg.n,
        checkpoint_masses=out / cfg.n,
        warned=warned,
    )


def _scalar_trait(cfg: ModelConfig, y0) -> float:
    pt = as_point(cfg.space, y0)
    return pt[0] if isinstance(pt, tuple) else float(pt)


def estimate_survival(
    cfg: ModelConfig,
    D0: float,
    epsilon: float,
    T: float,
    replicates: int,
    rng: np.random.Generator,
    start_mass: float | None = None,
    y0=None,
) -> dict:
    """Monte Carlo bound surrogate: P(inf mass over [0, T] > epsilon / 2).

    The conditional start of the proof is emulated by launching the minorizing
    process from mass ``epsilon`` (configurable), matching the regime where
    the stopping time has just fired.
    """
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    start = epsilon if start_mass is None else start_mass
    if round(start * cfg.n) < 1:
        raise ConfigError(
            f"start mass {start} holds no individuals at n={cfg.n}; increase n or the mass"
        )
    cfg_T = replace(cfg, horizon=T)
    if y0 is None:
        y0 = 0.0 if cfg.space.kind == "euclidean" else (
            cfg.space.points[0] if cfg.space.kind == "finite" else cfg.space.lo
        )
    hits = 0
    warned = False
    with warnings.catch_warnings():
        warnings.simplefilter("once")
        for _ in range(replicates):
            run = run_minorizing(cfg_T, start, y0, D0, rng)
            warned = warned or run.warned
            if run.min_mass > epsilon / 2.0:
                hits += 1
    lo, hi = wilson_interval(hits, replicates)
    return {
        "estimate": hits / replicates,
        "ci_low": lo,
        "ci_high": hi,
        "replicates": replicates,
        "constraint_warned": warned,
    }


# --- spine pair -------------------------------------------------------------


@dataclass(frozen=True)
class SpinePair:
    Y: Lineage
    Y_bar: Lineage
    jumps_Y: int
    jumps_Y_bar: int
    inter_jump_Y: tuple
    inter_jump_Y_bar: tuple


def spine_pair(cfg: ModelConfig, y0, rng: np.random.Generator, cap: int = 10_000_000) -> SpinePair:
    """One coupled draw of the spine and its constant-rate dominating spine.

    Both processes consume one shared sequence of unit exponentials and jump
    destinations; the dominating spine divides each variate by the constant
    rate bound instead of the state-dependent rate, so its inter-jump times
    are pathwise no longer.  Requires a rate form that is constant between
    jumps (constant or trait-dependent).
    """
    if cfg.r.form == "age":
        raise ConfigError(
            "spine_pair needs a rate constant between jumps; age-dependent growth is not supported"
        )
    n = cfg.n
    T = cfg.horizon
    lam_bar = 2.0 * n * cfg.r_hi + cfg.b_hi
    x = as_point(cfg.space, y0)
    tY = 0.0
    tB = 0.0
    recs_Y = [(0.0, x)]
    recs_B = [(0.0, x)]
    taus_Y = []
    taus_B = []
    nY = nB = 0
    trait = x
    steps = 0
    while tY <= T or tB <= T:
        steps += 1
        if steps > cap:
            raise CapacityError("spine pair exceeded its jump budget")
        probe = constant_lineage(cfg.space, trait)
        lam = 2.0 * n * rate_value(cfg.r, cfg.space, tY, probe) + cfg.b_hi
        if lam > lam_bar * (1 + 1e-12):
            raise CouplingViolationError(f"spine rate {lam} exceeds its constant bound {lam_bar}")
        E = rng.exponential()
        dest = sample_spine_jump(cfg.kernel, n, cfg.p, trait, rng)
        tau = E / lam
        tau_bar = E / lam_bar
        taus_Y.append(tau)
        taus_B.append(tau_bar)
        if tY <= T:
            tY += tau
            if tY <= T:
                nY += 1
                recs_Y.append((tY, dest))
        if tB <= T:
            tB += tau_bar
            if tB <= T:
                nB += 1
                recs_B.append((tB, dest))
        trait = dest
    return SpinePair(
        Y=lineage(cfg.space, recs_Y),
        Y_bar=lineage(cfg.space, recs_B),
        jumps_Y=nY,
        jumps_Y_bar=nB,
        inter_jump_Y=tuple(taus_Y),
        inter_jump_Y_bar=tuple(taus_B),
    )
