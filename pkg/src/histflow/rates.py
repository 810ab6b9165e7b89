"""Named bounded rate-function forms and interaction kernels.

Rates may depend on time and on the whole lineage in principle; the forms
exposed here are the named ones the models use: a constant, a clipped affine
function of the current trait's distance to a reference point, and a two-level
function of the age since the last trait record.  Every form carries exact
lower/upper bounds, which the thinning simulator relies on.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

from .errors import ConfigError
from .path_core import Lineage
from .trait_space import TraitSpace, as_point, distance

__all__ = [
    "RateSpec",
    "InteractionSpec",
    "constant_rate",
    "trait_rate",
    "age_rate",
    "rate_value",
    "rate_bounds",
    "constant_interaction",
    "distance_interaction",
    "interaction_value",
    "interaction_bound",
    "rate_to_dict",
    "rate_from_dict",
    "interaction_to_dict",
    "interaction_from_dict",
]


@dataclass(frozen=True)
class RateSpec:
    form: str  # "constant" | "trait" | "age"
    value: float = 0.0
    base: float = 0.0
    slope: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    ref: object = None
    young: float = 0.0
    old: float = 0.0
    threshold: float = 0.0


def constant_rate(value: float) -> RateSpec:
    if value < 0:
        raise ConfigError(f"rates must be >= 0, got {value}")
    return RateSpec(form="constant", value=float(value))


def trait_rate(base: float, slope: float, lo: float, hi: float, ref) -> RateSpec:
    """clip(base + slope * d(current trait, ref), lo, hi)."""
    if not 0 <= lo <= hi:
        raise ConfigError(f"trait rate clip range [{lo}, {hi}] invalid")
    return RateSpec(form="trait", base=float(base), slope=float(slope), lo=float(lo), hi=float(hi), ref=ref)


def age_rate(young: float, old: float, threshold: float) -> RateSpec:
    """``young`` while the time since the last record is below ``threshold``."""
    if young < 0 or old < 0 or threshold <= 0:
        raise ConfigError("age rate needs young, old >= 0 and threshold > 0")
    return RateSpec(form="age", young=float(young), old=float(old), threshold=float(threshold))


def rate_value(spec: RateSpec, space: TraitSpace, t: float, y: Lineage) -> float:
    if spec.form == "constant":
        return spec.value
    if spec.form == "trait":
        times, traits = y._materialize()
        x = traits[bisect_right(times, t) - 1]
        v = spec.base + spec.slope * distance(space, x, as_point(space, spec.ref))
        return min(max(v, spec.lo), spec.hi)
    if spec.form == "age":
        times, _ = y._materialize()
        last = times[bisect_right(times, t) - 1]
        return spec.young if t - last < spec.threshold else spec.old
    raise ConfigError(f"unknown rate form {spec.form!r}")


def rate_bounds(spec: RateSpec) -> tuple[float, float]:
    if spec.form == "constant":
        return spec.value, spec.value
    if spec.form == "trait":
        return spec.lo, spec.hi
    if spec.form == "age":
        return min(spec.young, spec.old), max(spec.young, spec.old)
    raise ConfigError(f"unknown rate form {spec.form!r}")


@dataclass(frozen=True)
class InteractionSpec:
    form: str  # "constant" | "distance"
    value: float = 0.0
    scale: float = 1.0  # distance form: value * exp(-d^2 / (2 scale^2))


def constant_interaction(value: float) -> InteractionSpec:
    if value < 0:
        raise ConfigError(f"interaction strength must be >= 0, got {value}")
    return InteractionSpec(form="constant", value=float(value))


def distance_interaction(value: float, scale: float) -> InteractionSpec:
    if value < 0 or scale <= 0:
        raise ConfigError("distance interaction needs value >= 0 and scale > 0")
    return InteractionSpec(form="distance", value=float(value), scale=float(scale))


def interaction_value(spec: InteractionSpec, space: TraitSpace, t: float, y: Lineage, y2: Lineage) -> float:
    if spec.form == "constant":
        return spec.value
    if spec.form == "distance":
        times, traits = y._materialize()
        x1 = traits[bisect_right(times, t) - 1]
        times2, traits2 = y2._materialize()
        x2 = traits2[bisect_right(times2, t) - 1]
        d = distance(space, x1, x2)
        return spec.value * math.exp(-0.5 * (d / spec.scale) ** 2)
    raise ConfigError(f"unknown interaction form {spec.form!r}")


def interaction_bound(spec: InteractionSpec) -> float:
    return spec.value


def rate_to_dict(spec: RateSpec) -> dict:
    if spec.form == "constant":
        return {"form": "constant", "value": spec.value}
    if spec.form == "trait":
        ref = list(spec.ref) if isinstance(spec.ref, tuple) else spec.ref
        return {
            "form": "trait",
            "base": spec.base,
            "slope": spec.slope,
            "lo": spec.lo,
            "hi": spec.hi,
            "ref": ref,
        }
    return {
        "form": "age",
        "young": spec.young,
        "old": spec.old,
        "threshold": spec.threshold,
    }


def rate_from_dict(d: dict) -> RateSpec:
    form = d.get("form", "constant")
    if form == "constant":
        return constant_rate(d["value"])
    if form == "trait":
        return trait_rate(d["base"], d["slope"], d["lo"], d["hi"], d["ref"])
    if form == "age":
        return age_rate(d["young"], d["old"], d["threshold"])
    raise ConfigError(f"unknown rate form in config: {form!r}")


def interaction_to_dict(spec: InteractionSpec) -> dict:
    if spec.form == "constant":
        return {"form": "constant", "value": spec.value}
    return {"form": "distance", "value": spec.value, "scale": spec.scale}


def interaction_from_dict(d: dict) -> InteractionSpec:
    form = d.get("form", "constant")
    if form == "constant":
        return constant_interaction(d["value"])
    if form == "distance":
        return distance_interaction(d["value"], d["scale"])
    raise ConfigError(f"unknown interaction form in config: {form!r}")
