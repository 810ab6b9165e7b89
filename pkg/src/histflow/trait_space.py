"""Concrete Polish trait spaces and compact regions.

Three instantiable space kinds are supported:

* ``euclidean(d)`` -- points are d-tuples of floats with the Euclidean metric;
* ``finite(points, table)`` -- a finite label set with an explicit symmetric
  distance table (lets non-Euclidean examples be exercised);
* ``interval(lo, hi)`` -- a closed real interval with ``|a - b|``.

Spaces and regions are immutable after construction and safe to share across
threads and replicates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .errors import ConfigError, InvalidPointError

__all__ = [
    "TraitSpace",
    "CompactRegion",
    "euclidean",
    "finite",
    "interval",
    "distance",
    "region_contains",
    "ball",
    "box",
    "all_points",
    "space_to_dict",
    "space_from_dict",
    "region_to_dict",
    "region_from_dict",
]


@dataclass(frozen=True)
class TraitSpace:
    kind: str  # "euclidean" | "finite" | "interval"
    dim: int = 1
    points: tuple[str, ...] = ()
    table: tuple[tuple[float, ...], ...] = ()
    lo: float = 0.0
    hi: float = 0.0
    index: dict = field(default_factory=dict, repr=False, compare=False)


def euclidean(dim: int) -> TraitSpace:
    if dim < 1:
        raise ConfigError(f"euclidean dimension must be >= 1, got {dim}")
    return TraitSpace(kind="euclidean", dim=int(dim))


def finite(points, table) -> TraitSpace:
    """Finite space from labels and a full symmetric distance matrix.

    The matrix is validated exhaustively against all metric axioms, which is
    feasible because the space is finite.
    """
    labels = tuple(str(p) for p in points)
    if len(set(labels)) != len(labels):
        raise ConfigError("finite space labels must be distinct")
    m = len(labels)
    tab = tuple(tuple(float(v) for v in row) for row in table)
    if len(tab) != m or any(len(row) != m for row in tab):
        raise ConfigError(f"distance table must be {m}x{m}")
    for i in range(m):
        if tab[i][i] != 0.0:
            raise ConfigError(f"distance table diagonal must be 0 (point {labels[i]})")
        for j in range(m):
            if tab[i][j] < 0.0:
                raise ConfigError("distances must be nonnegative")
            if tab[i][j] != tab[j][i]:
                raise ConfigError(f"distance table not symmetric at ({labels[i]},{labels[j]})")
            if i != j and tab[i][j] == 0.0:
                raise ConfigError(f"distinct points {labels[i]},{labels[j]} at distance 0")
    for i, j, k in itertools.product(range(m), repeat=3):
        if tab[i][j] > tab[i][k] + tab[k][j] + 1e-12:
            raise ConfigError(
                f"triangle inequality fails: d({labels[i]},{labels[j]}) > "
                f"d({labels[i]},{labels[k]}) + d({labels[k]},{labels[j]})"
            )
    return TraitSpace(
        kind="finite",
        dim=1,
        points=labels,
        table=tab,
        index={lab: i for i, lab in enumerate(labels)},
    )


def interval(lo: float, hi: float) -> TraitSpace:
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ConfigError(f"interval requires lo < hi, got [{lo}, {hi}]")
    return TraitSpace(kind="interval", lo=lo, hi=hi)


def as_point(space: TraitSpace, x):
    """Normalize and validate a raw value as a point of ``space``."""
    if space.kind == "euclidean":
        if isinstance(x, (int, float)):
            if space.dim != 1:
                raise InvalidPointError(f"scalar given for euclidean({space.dim}) point")
            return (float(x),)
        pt = tuple(float(v) for v in x)
        if len(pt) != space.dim:
            raise InvalidPointError(f"point of length {len(pt)} for euclidean({space.dim})")
        return pt
    if space.kind == "interval":
        v = float(x)
        if not (space.lo <= v <= space.hi):
            raise InvalidPointError(f"{v} outside interval [{space.lo}, {space.hi}]")
        return v
    if space.kind == "finite":
        lab = str(x)
        if lab not in space.index:
            raise InvalidPointError(f"unknown label {lab!r} for finite space")
        return lab
    raise ConfigError(f"unknown space kind {space.kind!r}")


def distance(space: TraitSpace, a, b) -> float:
    """Metric of the space; raises InvalidPointError on a point mismatch."""
    if space.kind == "euclidean":
        a = as_point(space, a)
        b = as_point(space, b)
        return math.dist(a, b)
    if space.kind == "interval":
        return abs(as_point(space, a) - as_point(space, b))
    if space.kind == "finite":
        ia = space.index.get(str(a))
        ib = space.index.get(str(b))
        if ia is None or ib is None:
            raise InvalidPointError(f"labels {a!r},{b!r} not both in finite space")
        return space.table[ia][ib]
    raise ConfigError(f"unknown space kind {space.kind!r}")


@dataclass(frozen=True)
class CompactRegion:
    """Closed compact region of a trait space.

    ``ball`` works on every space kind (via the metric), ``box`` on euclidean
    and interval spaces, ``all_points`` only on finite spaces.
    """

    kind: str  # "ball" | "box" | "all_points"
    space: TraitSpace
    center: object = None
    radius: float = 0.0
    bounds: tuple[tuple[float, float], ...] = ()


def ball(space: TraitSpace, center, radius: float) -> CompactRegion:
    if radius < 0:
        raise ConfigError(f"ball radius must be >= 0, got {radius}")
    return CompactRegion(kind="ball", space=space, center=as_point(space, center), radius=float(radius))


def box(space: TraitSpace, bounds) -> CompactRegion:
    if space.kind == "finite":
        raise ConfigError("box regions are not defined on finite spaces")
    bnds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    want = space.dim if space.kind == "euclidean" else 1
    if len(bnds) != want:
        raise ConfigError(f"box needs {want} coordinate bounds, got {len(bnds)}")
    for lo, hi in bnds:
        if lo > hi:
            raise ConfigError(f"box bound ({lo}, {hi}) has lo > hi")
    return CompactRegion(kind="box", space=space, bounds=bnds)


def all_points(space: TraitSpace) -> CompactRegion:
    if space.kind != "finite":
        raise ConfigError("all_points region only exists for finite spaces")
    return CompactRegion(kind="all_points", space=space)


def region_contains(region: CompactRegion, x) -> bool:
    """Closed-region membership (boundaries included)."""
    space = region.space
    if region.kind == "ball":
        return distance(space, region.center, x) <= region.radius
    if region.kind == "box":
        pt = as_point(space, x)
        coords = pt if space.kind == "euclidean" else (pt,)
        return all(lo <= c <= hi for c, (lo, hi) in zip(coords, region.bounds))
    if region.kind == "all_points":
        as_point(space, x)
        return True
    raise ConfigError(f"unknown region kind {region.kind!r}")


# --- JSON codecs (experiment configs) ------------------------------------


def space_to_dict(space: TraitSpace) -> dict:
    if space.kind == "euclidean":
        return {"kind": "euclidean", "dim": space.dim}
    if space.kind == "interval":
        return {"kind": "interval", "lo": space.lo, "hi": space.hi}
    return {
        "kind": "finite",
        "points": list(space.points),
        "table": [list(row) for row in space.table],
    }


def space_from_dict(d: dict) -> TraitSpace:
    kind = d.get("kind")
    if kind == "euclidean":
        return euclidean(d["dim"])
    if kind == "interval":
        return interval(d["lo"], d["hi"])
    if kind == "finite":
        return finite(d["points"], d["table"])
    raise ConfigError(f"unknown space kind in config: {kind!r}")


def region_to_dict(region: CompactRegion) -> dict:
    if region.kind == "ball":
        center = list(region.center) if isinstance(region.center, tuple) else region.center
        return {"kind": "ball", "center": center, "radius": region.radius}
    if region.kind == "box":
        return {"kind": "box", "bounds": [list(b) for b in region.bounds]}
    return {"kind": "all_points"}


def region_from_dict(space: TraitSpace, d: dict) -> CompactRegion:
    kind = d.get("kind")
    if kind == "ball":
        return ball(space, d["center"], d["radius"])
    if kind == "box":
        return box(space, d["bounds"])
    if kind == "all_points":
        return all_points(space)
    raise ConfigError(f"unknown region kind in config: {kind!r}")
