"""Exact event-driven simulation of the scaled historical population.

Every individual carries its full lineage.  Birth candidates are proposed at
the per-individual majorant rate ``n*R_hi + B_hi`` and death candidates at
``n*R_hi + D_hi + U_hi * W * M_hat`` (``W`` the total interaction weight,
``M_hat`` the running maximum mass, refreshed after every accepted event), and
accepted with probability true-rate / majorant, which makes the trajectory
exact in distribution for the bounded rates the model assumes.

The death rate integrates the interaction kernel against the population as it
stood one lag earlier for each atom of the delay measure; between events the
population is constant, so those history integrals are finite sums over
snapshot views advanced lazily with the clock.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .compact import CompactSetSpec
from .errors import CapacityError, ConfigError, HistoryError
from .mutation import MutationKernelSpec, kernel_from_dict, kernel_to_dict, sample_offspring_trait
from .path_core import Lineage, constant_lineage, extend, in_compact_set, lineage_from_dict, lineage_to_dict
from .rates import (
    InteractionSpec,
    RateSpec,
    interaction_bound,
    interaction_from_dict,
    interaction_to_dict,
    interaction_value,
    rate_bounds,
    rate_from_dict,
    rate_to_dict,
    rate_value,
)
from .trait_space import TraitSpace, as_point, space_from_dict, space_to_dict

__all__ = [
    "ModelConfig",
    "InitialSpec",
    "PopulationState",
    "Event",
    "EventLog",
    "validate_config",
    "make_initial",
    "birth_rate",
    "death_rate",
    "simulate",
    "measure_outside",
    "replay",
]

DEFAULT_EVENT_CAP = 10_000_000


@dataclass(frozen=True)
class ModelConfig:
    """All rate data of one approximation step, with declared bounds."""

    n: int
    space: TraitSpace
    r: RateSpec
    b: RateSpec
    D: RateSpec
    U: InteractionSpec | None
    nu_d: tuple[tuple[float, float], ...]  # (lag, weight), weights > 0
    p: float
    kernel: MutationKernelSpec
    horizon: float
    r_lo: float = 0.0
    r_hi: float = 0.0
    b_hi: float = 0.0
    D_hi: float = 0.0
    U_hi: float = 0.0
    event_cap: int = DEFAULT_EVENT_CAP

    @property
    def interaction_weight(self) -> float:
        return sum(w for _, w in self.nu_d) if self.U is not None else 0.0


def model_config(
    n,
    space,
    r,
    b,
    D,
    kernel,
    horizon,
    p,
    U=None,
    nu_d=(),
    r_lo=None,
    r_hi=None,
    b_hi=None,
    D_hi=None,
    U_hi=None,
    event_cap=DEFAULT_EVENT_CAP,
) -> ModelConfig:
    """Assemble and sanity-check a model configuration.

    Bounds default to the exact bounds of the named rate forms; explicit
    values may only widen them.
    """
    r_auto = rate_bounds(r)
    b_auto = rate_bounds(b)
    D_auto = rate_bounds(D)
    r_lo = r_auto[0] if r_lo is None else float(r_lo)
    r_hi = r_auto[1] if r_hi is None else float(r_hi)
    b_hi = b_auto[1] if b_hi is None else float(b_hi)
    # strict upper bounds for D and U per the model assumptions
    D_hi_auto = D_auto[1] + (1.0 if D_auto[1] == 0 else 0.5 * max(D_auto[1], 1e-9))
    U_hi_auto = 0.0
    if U is not None:
        ub = interaction_bound(U)
        U_hi_auto = ub + (1.0 if ub == 0 else 0.5 * max(ub, 1e-9))
    D_hi = D_hi_auto if D_hi is None else float(D_hi)
    U_hi = U_hi_auto if U_hi is None else float(U_hi)
    cfg = ModelConfig(
        n=int(n),
        space=space,
        r=r,
        b=b,
        D=D,
        U=U,
        nu_d=tuple((float(s), float(w)) for s, w in nu_d),
        p=float(p),
        kernel=kernel,
        horizon=float(horizon),
        r_lo=r_lo,
        r_hi=r_hi,
        b_hi=b_hi,
        D_hi=D_hi,
        U_hi=U_hi,
        event_cap=int(event_cap),
    )
    _check_static(cfg)
    return cfg


def _check_static(cfg: ModelConfig) -> None:
    if cfg.n < 1:
        raise ConfigError(f"scaling index n must be >= 1, got {cfg.n}")
    if not 0.0 <= cfg.p <= 1.0:
        raise ConfigError(f"mutation probability p must be in [0, 1], got {cfg.p}")
    if cfg.horizon <= 0:
        raise ConfigError(f"horizon must be > 0, got {cfg.horizon}")
    if cfg.r_lo <= 0:
        raise ConfigError(f"lower growth bound must be > 0, got r_lo={cfg.r_lo}")
    if cfg.r_lo > cfg.r_hi:
        raise ConfigError(f"growth bounds inverted: r_lo={cfg.r_lo} > r_hi={cfg.r_hi}")
    if cfg.b_hi < 0 or cfg.D_hi < 0 or cfg.U_hi < 0:
        raise ConfigError("declared rate bounds must be >= 0")
    for s, w in cfg.nu_d:
        if s < 0:
            raise ConfigError(f"delay lag must be >= 0, got {s}")
        if w <= 0:
            raise ConfigError(f"delay weight must be > 0, got {w}")
    if cfg.U is not None and not cfg.nu_d:
        raise ConfigError("an interaction kernel needs a nonempty delay measure nu_d")
    if cfg.kernel.space != cfg.space:
        raise ConfigError("mutation kernel bound to a different trait space")
    if cfg.event_cap < 1:
        raise ConfigError("event cap must be >= 1")


def validate_config(cfg: ModelConfig, rng: np.random.Generator, probes: int = 200) -> None:
    """Probe the declared bounds at random (time, lineage) pairs.

    The rate forms carry exact bounds, but configs arrive from JSON with
    declared constants, so the declared ones are what gets checked.
    """
    _check_static(cfg)
    space = cfg.space
    for _ in range(probes):
        t = float(rng.uniform(0.0, cfg.horizon))
        y = _random_probe_lineage(cfg, rng, t)
        rv = rate_value(cfg.r, space, t, y)
        if not (0.0 < cfg.r_lo <= rv <= cfg.r_hi):
            raise ConfigError(
                f"growth rate r={rv} at t={t} violates declared bounds [{cfg.r_lo}, {cfg.r_hi}]"
            )
        bv = rate_value(cfg.b, space, t, y)
        if not 0.0 <= bv <= cfg.b_hi:
            raise ConfigError(f"extra birth rate b={bv} at t={t} violates bound {cfg.b_hi}")
        Dv = rate_value(cfg.D, space, t, y)
        if not 0.0 <= Dv < cfg.D_hi:
            raise ConfigError(f"natural death rate D={Dv} at t={t} violates strict bound {cfg.D_hi}")
        if cfg.U is not None:
            y2 = _random_probe_lineage(cfg, rng, t)
            Uv = interaction_value(cfg.U, space, t, y, y2)
            if not 0.0 <= Uv < cfg.U_hi:
                raise ConfigError(f"interaction U={Uv} at t={t} violates strict bound {cfg.U_hi}")


def _random_probe_lineage(cfg: ModelConfig, rng: np.random.Generator, t: float) -> Lineage:
    space = cfg.space
    if space.kind == "finite":
        x0 = space.points[int(rng.integers(len(space.points)))]
    elif space.kind == "interval":
        x0 = float(rng.uniform(space.lo, space.hi))
    else:
        x0 = tuple(float(v) for v in rng.normal(size=space.dim))
    y = constant_lineage(space, x0)
    for _ in range(int(rng.integers(0, 3))):
        s = float(rng.uniform(0, max(t, 1e-6)))
        if s > y.head.time:
            trait, _ = sample_offspring_trait(cfg.kernel, cfg.n, 1.0, y.head.trait, rng)
            y = extend(y, s, trait)
    return y


# --- population state and event log -----------------------------------------


@dataclass
class PopulationState:
    """Finite weighted atom collection over lineages at one time."""

    time: float
    n: int
    atoms: dict  # label -> Lineage

    @property
    def mass(self) -> float:
        return len(self.atoms) / self.n

    def copy(self) -> "PopulationState":
        return PopulationState(self.time, self.n, dict(self.atoms))


@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # "birth_clone" | "birth_mutant" | "death"
    parent: int | None
    child: int | None
    trait: object = None
    audit: tuple = ()  # (candidate majorant, true rate)


@dataclass
class EventLog:
    """Ordered event record; replaying it reconstructs every past alive-set."""

    n: int
    space: TraitSpace
    initial: tuple  # ((label, Lineage), ...)
    events: list = field(default_factory=list)

    def replay(self, to_time: float | None = None, strict_before: bool = False) -> PopulationState:
        atoms = {lab: lin for lab, lin in self.initial}
        t = 0.0
        for ev in self.events:
            if to_time is not None and (ev.time >= to_time if strict_before else ev.time > to_time):
                break
            if ev.kind == "death":
                if ev.parent not in atoms:
                    raise HistoryError(f"death of unknown label {ev.parent} at t={ev.time}")
                del atoms[ev.parent]
            else:
                parent = atoms.get(ev.parent)
                if parent is None:
                    raise HistoryError(f"birth from unknown label {ev.parent} at t={ev.time}")
                atoms[ev.child] = extend(parent, ev.time, ev.trait)
            t = ev.time
        return PopulationState(time=t if to_time is None else to_time, n=self.n, atoms=atoms)

    def alive_before(self, t: float) -> dict:
        """Alive map of the left limit at ``t`` (events strictly before)."""
        return self.replay(to_time=t, strict_before=True).atoms

    def to_ndjson(self, path) -> None:
        with open(path, "w") as fh:
            header = {
                "n": self.n,
                "space": space_to_dict(self.space),
                "initial": [[lab, lineage_to_dict(lin)] for lab, lin in self.initial],
            }
            fh.write(json.dumps(header) + "\n")
            for ev in self.events:
                trait = list(ev.trait) if isinstance(ev.trait, tuple) else ev.trait
                fh.write(
                    json.dumps(
                        {
                            "t": ev.time,
                            "kind": ev.kind,
                            "parent": ev.parent,
                            "child": ev.child,
                            "trait": trait,
                            "audit": list(ev.audit),
                        }
                    )
                    + "\n"
                )

    @staticmethod
    def from_ndjson(path) -> "EventLog":
        with open(path) as fh:
            header = json.loads(fh.readline())
            space = space_from_dict(header["space"])
            initial = tuple(
                (int(lab), lineage_from_dict(space, d)) for lab, d in header["initial"]
            )
            log = EventLog(n=header["n"], space=space, initial=initial)
            for line in fh:
                d = json.loads(line)
                trait = d["trait"]
                if isinstance(trait, list):
                    trait = tuple(trait)
                log.events.append(
                    Event(
                        time=d["t"],
                        kind=d["kind"],
                        parent=d["parent"],
                        child=d["child"],
                        trait=trait,
                        audit=tuple(d.get("audit", ())),
                    )
                )
        return log


# --- initial populations ------------------------------------------------------


@dataclass(frozen=True)
class InitialSpec:
    """Initial condition: ``round(m0 * n)`` individuals with a simple trait law.

    The deterministic count and compact-supported laws keep the second moment
    of the initial mass bounded uniformly in n by construction.
    """

    m0: float
    law: str = "point"  # "point" | "uniform" | "support"
    trait: object = None
    lo: float = 0.0
    hi: float = 0.0
    traits: tuple = ()
    weights: tuple = ()

    def to_dict(self) -> dict:
        d = {"m0": self.m0, "law": self.law}
        if self.law == "point":
            d["trait"] = list(self.trait) if isinstance(self.trait, tuple) else self.trait
        elif self.law == "uniform":
            d["lo"], d["hi"] = self.lo, self.hi
        else:
            d["traits"] = [list(x) if isinstance(x, tuple) else x for x in self.traits]
            d["weights"] = list(self.weights)
        return d

    @staticmethod
    def from_dict(d: dict) -> "InitialSpec":
        law = d.get("law", "point")
        if law == "point":
            trait = d["trait"]
            if isinstance(trait, list):
                trait = tuple(trait)
            return InitialSpec(m0=float(d["m0"]), law="point", trait=trait)
        if law == "uniform":
            return InitialSpec(m0=float(d["m0"]), law="uniform", lo=float(d["lo"]), hi=float(d["hi"]))
        if law == "support":
            traits = tuple(tuple(x) if isinstance(x, list) else x for x in d["traits"])
            return InitialSpec(m0=float(d["m0"]), law="support", traits=traits, weights=tuple(d["weights"]))
        raise ConfigError(f"unknown initial law {law!r}")


def make_initial(cfg: ModelConfig, spec: InitialSpec, rng: np.random.Generator) -> PopulationState:
    if spec.m0 < 0:
        raise ConfigError(f"initial mass must be >= 0, got {spec.m0}")
    count = int(round(spec.m0 * cfg.n))
    atoms = {}
    for lab in range(count):
        if spec.law == "point":
            x = as_point(cfg.space, spec.trait)
        elif spec.law == "uniform":
            v = float(rng.uniform(spec.lo, spec.hi))
            x = as_point(cfg.space, v)
        elif spec.law == "support":
            w = np.asarray(spec.weights, dtype=float)
            idx = int(rng.choice(len(spec.traits), p=w / w.sum()))
            x = as_point(cfg.space, spec.traits[idx])
        else:
            raise ConfigError(f"unknown initial law {spec.law!r}")
        atoms[lab] = constant_lineage(cfg.space, x)
    return PopulationState(time=0.0, n=cfg.n, atoms=atoms)


# --- rates --------------------------------------------------------------------


def birth_rate(cfg: ModelConfig, t: float, y: Lineage) -> float:
    """Total birth rate ``n r + b``; checked against the declared envelope."""
    v = cfg.n * rate_value(cfg.r, cfg.space, t, y) + rate_value(cfg.b, cfg.space, t, y)
    hi = cfg.n * cfg.r_hi + cfg.b_hi
    lo = cfg.n * cfg.r_lo
    if not (lo - 1e-9 <= v <= hi + 1e-9):
        raise ConfigError(f"birth rate {v} escapes [{lo}, {hi}]; declared bounds are wrong")
    return v


class _LagView:
    """Alive-set of the population one fixed lag in the past, advanced lazily."""

    __slots__ = ("lag", "idx", "atoms")

    def __init__(self, lag: float, initial_atoms: dict):
        self.lag = lag
        self.idx = 0
        self.atoms = dict(initial_atoms)

    def advance(self, events: list, now: float) -> None:
        cutoff = now - self.lag
        while self.idx < len(events) and events[self.idx].time < cutoff:
            ev = events[self.idx]
            if ev.kind == "death":
                self.atoms.pop(ev.parent, None)
            else:
                parent = self.atoms.get(ev.parent)
                if parent is not None:
                    self.atoms[ev.child] = extend(parent, ev.time, ev.trait)
            self.idx += 1


def _interaction_sum(cfg: ModelConfig, t: float, y: Lineage, views: list) -> float:
    if cfg.U is None:
        return 0.0
    total = 0.0
    for (lag, weight), view in zip(cfg.nu_d, views):
        if lag > t:
            continue
        s = 0.0
        if cfg.U.form == "constant":
            s = cfg.U.value * len(view.atoms)
        else:
            for y2 in view.atoms.values():
                s += interaction_value(cfg.U, cfg.space, t, y, y2)
        total += weight * s / cfg.n
    return total


def death_rate(cfg: ModelConfig, t: float, y: Lineage, history: EventLog) -> float:
    """Death rate ``n r + D + history integral`` evaluated from an event log.

    Reconstructs the lagged populations by replaying the log, independently of
    the simulator's internal lag caches; the caches are cross-checked against
    this in the tests.
    """
    base = cfg.n * rate_value(cfg.r, cfg.space, t, y) + rate_value(cfg.D, cfg.space, t, y)
    if cfg.U is None:
        return base
    if history is None:
        raise HistoryError("death rate with interaction needs the event history")
    total = 0.0
    for lag, weight in cfg.nu_d:
        if lag > t:
            continue
        past = history.alive_before(t - lag)
        if cfg.U.form == "constant":
            s = cfg.U.value * len(past)
        else:
            s = sum(interaction_value(cfg.U, cfg.space, t, y, y2) for y2 in past.values())
        total += weight * s / cfg.n
    return base + total


# --- the simulator --------------------------------------------------------------


def simulate(
    cfg: ModelConfig,
    initial: PopulationState,
    rng: np.random.Generator,
) -> tuple[PopulationState, EventLog]:
    """Run the thinning simulator from ``initial`` to the horizon."""
    n = cfg.n
    T = cfg.horizon
    W = cfg.interaction_weight
    atoms = dict(initial.atoms)
    labels = list(atoms.keys())
    pos = {lab: i for i, lab in enumerate(labels)}
    next_label = max(labels, default=-1) + 1
    log = EventLog(n=n, space=cfg.space, initial=tuple((lab, lin) for lab, lin in atoms.items()))
    events = log.events
    views = [_LagView(lag, atoms) for lag, _ in cfg.nu_d] if cfg.U is not None else []
    m_hat = len(atoms) / n
    t = initial.time
    proposals = 0
    proposal_cap = 200 * cfg.event_cap
    Lb = n * cfg.r_hi + cfg.b_hi
    while labels:
        Ld = n * cfg.r_hi + cfg.D_hi + cfg.U_hi * W * m_hat
        lam_tot = len(labels) * (Lb + Ld)
        t += rng.exponential() / lam_tot
        if t >= T:
            break
        proposals += 1
        if proposals > proposal_cap:
            raise CapacityError(f"proposal budget {proposal_cap} exhausted")
        lab = labels[int(rng.integers(len(labels)))]
        y = atoms[lab]
        if rng.random() * (Lb + Ld) < Lb:
            # birth candidate
            bn = birth_rate(cfg, t, y)
            if rng.random() * Lb < bn:
                parent_trait = y.head.trait
                trait, is_mutant = sample_offspring_trait(cfg.kernel, n, cfg.p, parent_trait, rng)
                child = extend(y, t, trait)
                clab = next_label
                next_label += 1
                atoms[clab] = child
                pos[clab] = len(labels)
                labels.append(clab)
                events.append(
                    Event(t, "birth_mutant" if is_mutant else "birth_clone", lab, clab, trait, (Lb, bn))
                )
                m_hat = max(m_hat, len(labels) / n)
        else:
            # death candidate
            for view in views:
                view.advance(events, t)
            dn = (
                n * rate_value(cfg.r, cfg.space, t, y)
                + rate_value(cfg.D, cfg.space, t, y)
                + _interaction_sum(cfg, t, y, views)
            )
            if dn > Ld * (1 + 1e-9):
                raise ConfigError(
                    f"death rate {dn} exceeds its majorant {Ld}; declared bounds are wrong"
                )
            if rng.random() * Ld < dn:
                events.append(Event(t, "death", lab, None, None, (Ld, dn)))
                i = pos.pop(lab)
                last = labels.pop()
                if last != lab:
                    labels[i] = last
                    pos[last] = i
                del atoms[lab]
        if len(events) >= cfg.event_cap:
            raise CapacityError(f"event cap {cfg.event_cap} reached at t={t}")
    return PopulationState(time=T, n=n, atoms=atoms), log


def replay(log: EventLog) -> PopulationState:
    """Reconstruct the terminal state from the log alone."""
    return log.replay()


def measure_outside(state: PopulationState, K: CompactSetSpec, t: float) -> float:
    """Mass of atoms whose stopped lineage falls outside the compact set."""
    if abs(t - state.time) > 1e-12:
        raise ConfigError(f"measure_outside must be queried at the state time {state.time}, got {t}")
    bad = sum(0 if in_compact_set(y, K, t) else 1 for y in state.atoms.values())
    return bad / state.n


def mass_at(log: EventLog, t: float) -> float:
    """Population mass just after time ``t`` (replay-based, for audits)."""
    return log.replay(to_time=t).mass
