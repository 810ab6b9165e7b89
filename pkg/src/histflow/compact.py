"""Compact path-set specifications.

A ``CompactSetSpec`` cuts a relatively compact subset of step paths out of the
path space by a compact trait region together with a modulus envelope on a
finite grid of gap widths: a stopped path belongs to the set when every value
it attains lies in the region and its modulus of continuity at each grid width
stays below the envelope bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .trait_space import CompactRegion, region_from_dict, region_to_dict

__all__ = ["CompactSetSpec"]


@dataclass(frozen=True)
class CompactSetSpec:
    horizon: float
    region: CompactRegion
    envelope: tuple[tuple[float, float], ...]  # (delta, bound), deltas ascending

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigError(f"horizon must be > 0, got {self.horizon}")
        env = tuple((float(d), float(w)) for d, w in self.envelope)
        deltas = [d for d, _ in env]
        bounds = [w for _, w in env]
        if any(not (0.0 < d < 1.0) for d in deltas):
            raise ConfigError("envelope deltas must lie in (0, 1)")
        if deltas != sorted(deltas) or len(set(deltas)) != len(deltas):
            raise ConfigError("envelope deltas must be strictly increasing")
        if any(w < 0 for w in bounds if not math.isinf(w)):
            raise ConfigError("envelope bounds must be >= 0")
        if any(b2 < b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ConfigError("envelope bounds must be nondecreasing in delta")
        object.__setattr__(self, "envelope", env)

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "region": region_to_dict(self.region),
            "envelope": [[d, w] for d, w in self.envelope],
        }

    @staticmethod
    def from_dict(space, d: dict) -> "CompactSetSpec":
        return CompactSetSpec(
            horizon=float(d["horizon"]),
            region=region_from_dict(space, d["region"]),
            envelope=tuple((float(a), float(b)) for a, b in d["envelope"]),
        )
