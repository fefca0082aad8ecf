"""Two-phase layer-to-accelerator mapping.

Phase 1 routes every unit by its cluster alone. Phase 2 walks the edges once,
in consumer topological order, and pulls a consumer onto its producer's
accelerator when that is cheaper than paying the DRAM hand-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .accel import Platform
from .characterize import LayerProfile
from .cluster import ClusterAssignment
from .dataflow import IncompatibleDataflow
from .ir import LayerGraph
from .timing import Evaluator, transfer_cost  # noqa: F401  (re-export)

PHASE1 = "phase1"
REMAPPED = "remapped"


class SchedulingError(ValueError):
    pass


@dataclass(frozen=True)
class Mapping:
    accel: tuple[tuple[int, str], ...]
    phase: tuple[tuple[int, str], ...]

    def __getitem__(self, uid: int) -> str:
        return self.as_dict()[uid]

    def as_dict(self) -> dict[int, str]:
        return dict(self.accel)

    def phases(self) -> dict[int, str]:
        return dict(self.phase)

    @classmethod
    def build(cls, accel: dict[int, str], phase: dict[int, str] | None = None):
        phase = phase or {u: PHASE1 for u in accel}
        return cls(tuple(sorted(accel.items())), tuple(sorted(phase.items())))


def phase1_map(profiles: dict[int, LayerProfile] | list[LayerProfile],
               assignments: dict[int, ClusterAssignment],
               platform: Platform) -> Mapping:
    """Route each unit through the platform's cluster table.

    A unit whose routed accelerator cannot execute its kind (e.g. an LSTM cell
    join classified near a conv cluster) goes to the first accelerator, in
    platform order, that can.
    """
    if not isinstance(profiles, dict):
        profiles = {p.unit_id: p for p in profiles}
    route = platform.route
    ev = Evaluator(profiles, platform)
    out = {}
    for uid in sorted(profiles):
        cid = assignments[uid].cluster
        if cid not in route:
            raise SchedulingError(f"routing table has no entry for cluster {cid}")
        target = route[cid]
        if not ev.supports(uid, target):
            fallback = [a.name for a in platform.accelerators if ev.supports(uid, a.name)]
            if not fallback:
                raise SchedulingError(f"no accelerator in {platform.name} runs unit {uid}")
            target = fallback[0]
        out[uid] = target
    return Mapping.build(out)


def _cost(ev: Evaluator, uid: int, accel: str, lam: float) -> float:
    try:
        u = ev.get(uid, accel)
    except IncompatibleDataflow:
        return math.inf
    return float(u.latency) + lam * u.energy.total


@dataclass(frozen=True)
class Decision:
    producer: int
    consumer: int
    keep_accel: str
    move_accel: str
    cost_keep: float
    cost_move: float
    remapped: bool


def phase2_adjust(m: Mapping, graph: LayerGraph,
                  profiles: dict[int, LayerProfile] | list[LayerProfile],
                  platform: Platform, lam: float = 0.0,
                  log: list | None = None) -> Mapping:
    """Single forward pass over cross-accelerator edges.

    cost_keep = consumer on its own accelerator + DRAM hand-off
    cost_move = consumer on the producer's accelerator (inf if unsupported)
    Remap iff cost_move < cost_keep; a unit is remapped at most once.
    Decisions are appended to ``log`` when given.
    """
    if not isinstance(profiles, dict):
        profiles = {p.unit_id: p for p in profiles}
    ev = Evaluator(profiles, platform)
    order = {u: i for i, u in enumerate(graph.topological_order())}
    edges = sorted(graph.edges, key=lambda e: (order[e.dst], order[e.src]))
    cur = m.as_dict()
    phase = m.phases()
    for e in edges:
        i, j = e.src, e.dst
        if cur[i] == cur[j] or phase[j] == REMAPPED:
            continue
        xfer_s, xfer_j = ev.transfer(e.nbytes, cur[i], cur[j])
        keep = _cost(ev, j, cur[j], lam) + float(xfer_s) + lam * xfer_j
        move = _cost(ev, j, cur[i], lam)
        remap = move < keep
        if log is not None:
            log.append(Decision(i, j, cur[j], cur[i], keep, move, remap))
        if remap:
            cur[j] = cur[i]
            phase[j] = REMAPPED
    return Mapping.build(cur, phase)


def schedule(graph: LayerGraph, profiles, assignments, platform: Platform,
             lam: float = 0.0) -> tuple[Mapping, Mapping]:
    """Return (phase-1 mapping, final mapping)."""
    p1 = phase1_map(profiles, assignments, platform)
    return p1, phase2_adjust(p1, graph, profiles, platform, lam)
