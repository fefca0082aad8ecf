"""Rule-based assignment of layer units to the five layer clusters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .characterize import LayerProfile

KB = 1024
MB = 1024 * 1024
M = 1_000_000

EXACT = "exact-range"
FALLBACK = "nearest-fallback"


@dataclass(frozen=True)
class ClusterRange:
    cluster: int
    param_bytes: tuple[float, float]
    param_intensity: tuple[float, float]
    mac_count: tuple[float, float]

    def __post_init__(self):
        for lo, hi in (self.param_bytes, self.param_intensity, self.mac_count):
            if lo > hi:
                raise ValueError(f"cluster {self.cluster}: range lo {lo} > hi {hi}")

    def contains(self, param_bytes, intensity, macs) -> bool:
        return (self.param_bytes[0] <= param_bytes <= self.param_bytes[1]
                and self.param_intensity[0] <= intensity <= self.param_intensity[1]
                and self.mac_count[0] <= macs <= self.mac_count[1])

    def centroid(self) -> tuple[float, float, float]:
        """Geometric midpoint of each range, in log10 space.

        Lower bounds below 1 are lifted to 1 so the midpoint stays finite
        (only the intensity range of cluster 3 starts at 0).
        """
        return tuple(
            (math.log10(max(lo, 1)) + math.log10(max(hi, 1))) / 2
            for lo, hi in (self.param_bytes, self.param_intensity, self.mac_count))

    def to_json(self) -> dict:
        return {"cluster": self.cluster, "param_bytes": list(self.param_bytes),
                "param_intensity": list(self.param_intensity),
                "mac_count": list(self.mac_count)}

    @classmethod
    def from_json(cls, d: dict) -> "ClusterRange":
        return cls(d["cluster"], tuple(d["param_bytes"]),
                   tuple(d["param_intensity"]), tuple(d["mac_count"]))


DEFAULT_RANGES: tuple[ClusterRange, ...] = (
    ClusterRange(1, (1 * KB, 100 * KB), (780, 20_000), (30 * M, 200 * M)),
    ClusterRange(2, (100 * KB, 500 * KB), (81, 400), (20 * M, 100 * M)),
    # No stated intensity range; MVM units sit at exactly 1.
    ClusterRange(3, (0.9 * MB, 18 * MB), (0, 2), (0.1 * M, 10 * M)),
    ClusterRange(4, (0.5 * MB, 2.5 * MB), (25, 64), (5 * M, 25 * M)),
    ClusterRange(5, (1 * KB, 100 * KB), (49, 600), (0.5 * M, 5 * M)),
)


@dataclass(frozen=True)
class ClusterAssignment:
    unit_id: int
    cluster: int
    matched: str
    distance: float


def _features(p: LayerProfile) -> tuple[float, float, float]:
    return (math.log10(max(p.param_bytes, 1)),
            math.log10(max(p.param_intensity, 1)),
            math.log10(max(p.mac_count, 1)))


def _distance(p: LayerProfile, r: ClusterRange) -> float:
    return math.dist(_features(p), r.centroid())


def nearest_cluster(p: LayerProfile,
                    ranges: Sequence[ClusterRange] = DEFAULT_RANGES) -> tuple[int, float]:
    """Closest centroid in log10 (footprint, intensity, MACs) space.

    Ties go to the lowest cluster id.
    """
    best = min(ranges, key=lambda r: (_distance(p, r), r.cluster))
    return best.cluster, _distance(p, best)


def classify(p: LayerProfile,
             ranges: Sequence[ClusterRange] = DEFAULT_RANGES) -> ClusterAssignment:
    intensity = p.param_intensity
    hits = [r for r in ranges if r.contains(p.param_bytes, intensity, p.mac_count)]
    if hits:
        best = min(hits, key=lambda r: (_distance(p, r), r.cluster))
        return ClusterAssignment(p.unit_id, best.cluster, EXACT, 0.0)
    # every centroid lies inside its own range, so dist > 0 here
    cid, dist = nearest_cluster(p, ranges)
    return ClusterAssignment(p.unit_id, cid, FALLBACK, dist)


def classify_all(profiles: Iterable[LayerProfile],
                 ranges: Sequence[ClusterRange] = DEFAULT_RANGES) -> dict[int, ClusterAssignment]:
    return {p.unit_id: classify(p, ranges) for p in profiles}


@dataclass(frozen=True)
class ClusterStats:
    cluster: int
    count: int
    param_bytes: int
    mac_count: int
    mean_param_intensity: Fraction


def cluster_stats(assignments: Iterable[ClusterAssignment],
                  profiles: Iterable[LayerProfile],
                  clusters: Sequence[int] = (1, 2, 3, 4, 5)) -> dict[int, ClusterStats]:
    prof = {p.unit_id: p for p in profiles}
    members: dict[int, list[LayerProfile]] = {c: [] for c in clusters}
    for a in assignments:
        members.setdefault(a.cluster, []).append(prof[a.unit_id])
    out = {}
    for c, ps in sorted(members.items()):
        n = len(ps)
        out[c] = ClusterStats(
            c, n,
            sum(p.param_bytes for p in ps),
            sum(p.mac_count for p in ps),
            sum((p.param_intensity for p in ps), Fraction(0)) / n if n else Fraction(0),
        )
    return out
