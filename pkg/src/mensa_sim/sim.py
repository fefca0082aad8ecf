"""Event-driven execution of a mapped layer graph.

Each accelerator runs its units one at a time in topological order (FIFO, no
preemption). A unit starts once its accelerator is free and every input has
arrived; inputs produced on another accelerator arrive after a DRAM hand-off.
Hand-offs occupy no accelerator time.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import fmean

from . import ir
from .accel import Platform, platform_area
from .characterize import LayerProfile, layer_profile
from .cluster import ClusterAssignment, classify_all
from .dataflow import COST_FIELDS, DataflowCost, IncompatibleDataflow
from .energy import EnergyBreakdown, static_energy, sum_breakdowns
from .scheduler import Mapping, phase1_map, phase2_adjust
from .timing import Evaluator, transfer_energy, unit_latency  # noqa: F401


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRow:
    unit_id: int
    accel: str
    start: Fraction
    end: Fraction
    cost: DataflowCost


@dataclass(frozen=True)
class AccelStats:
    name: str
    units: int
    macs: int
    busy: Fraction
    utilization: float
    energy: EnergyBreakdown


@dataclass(frozen=True)
class SimReport:
    model: str
    platform: str
    latency: Fraction
    macs: int
    accels: tuple[AccelStats, ...]
    energy: EnergyBreakdown
    transfer_bytes: int
    transfers: int
    area: float
    trace: tuple[TraceRow, ...] = field(repr=False)

    @property
    def utilization(self) -> float:
        """Mean PE utilization over all accelerators of the platform."""
        return fmean(a.utilization for a in self.accels)

    @property
    def throughput(self) -> float:
        return float(self.macs / self.latency) if self.latency else 0.0

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "platform": self.platform,
            "latency_s": float(self.latency),
            "macs": self.macs,
            "throughput_flops": self.throughput,
            "utilization": self.utilization,
            "area_mm2": self.area,
            "transfers": self.transfers,
            "transfer_bytes": self.transfer_bytes,
            "energy_j": self.energy.to_json(),
            "accelerators": [
                {"name": a.name, "units": a.units, "macs": a.macs,
                 "busy_s": float(a.busy), "utilization": a.utilization,
                 "energy_j": a.energy.to_json()}
                for a in self.accels],
        }


TRACE_HEADER = ("unit_id", "accel", "start_s", "end_s") + COST_FIELDS


def trace_rows(r: SimReport):
    for t in r.trace:
        yield (t.unit_id, t.accel, repr(float(t.start)), repr(float(t.end))) + \
            tuple(getattr(t.cost, f) for f in COST_FIELDS)


def simulate(graph: ir.LayerGraph, mapping: Mapping | dict[int, str],
             platform: Platform,
             profiles: dict[int, LayerProfile] | None = None) -> SimReport:
    if any(l.kind == ir.LSTM for l in graph.layers):
        raise SimulationError("graph still contains LstmLayer nodes; lower it first")
    m = mapping.as_dict() if isinstance(mapping, Mapping) else dict(mapping)
    missing = [u for u in graph.ids if u not in m]
    if missing:
        raise SimulationError(f"mapping is not total: no accelerator for units {missing[:8]}")
    if profiles is None:
        profiles = {l.id: layer_profile(l) for l in graph.layers}
    ev = Evaluator(profiles, platform)
    accel_names = [a.name for a in platform.accelerators]
    for u, name in m.items():
        if name not in accel_names:
            raise SimulationError(f"unit {u} mapped to unknown accelerator {name!r}")

    preds: dict[int, list[ir.Edge]] = {u: [] for u in graph.ids}
    for e in graph.edges:
        preds[e.dst].append(e)

    order = graph.topological_order()
    # per-accelerator FIFO queues in topological order
    queues: dict[str, list[int]] = {n: [] for n in accel_names}
    for u in order:
        queues[m[u]].append(u)

    end: dict[int, Fraction] = {}
    arrival: dict[tuple[int, str], Fraction] = {}
    xfer_parts: list[EnergyBreakdown] = []
    xfer_bytes = 0
    free = {n: Fraction(0) for n in accel_names}
    head = {n: 0 for n in accel_names}
    pending: set[str] = set()
    trace: list[TraceRow] = []
    unit_energy: dict[str, list[EnergyBreakdown]] = {n: [] for n in accel_names}

    # event queue of (ready time, unit id): a unit is pushed once it heads its
    # accelerator queue and all its producers have finished
    events: list[tuple[Fraction, int]] = []

    def try_enqueue(name: str):
        nonlocal xfer_bytes
        q = queues[name]
        if name in pending or head[name] >= len(q):
            return
        u = q[head[name]]
        if any(e.src not in end for e in preds[u]):
            return
        ready = free[name]
        for e in preds[u]:
            src_acc = m[e.src]
            if src_acc == name:
                ready = max(ready, end[e.src])
                continue
            key = (e.src, name)
            if key not in arrival:
                lat, _ = ev.transfer(e.nbytes, src_acc, name)
                arrival[key] = end[e.src] + lat
                xfer_parts.append(transfer_energy(
                    e.nbytes, platform.accel(src_acc), platform.accel(name), platform.tech))
                xfer_bytes += e.nbytes
            ready = max(ready, arrival[key])
        heapq.heappush(events, (ready, u))
        head[name] += 1
        pending.add(name)

    for n in accel_names:
        try_enqueue(n)
    while events:
        start, u = heapq.heappop(events)
        name = m[u]
        try:
            uev = ev.get(u, name)
        except IncompatibleDataflow as exc:
            raise SimulationError(str(exc)) from exc
        end[u] = start + uev.latency
        free[name] = end[u]
        pending.discard(name)
        trace.append(TraceRow(u, name, start, end[u], uev.cost))
        unit_energy[name].append(uev.energy)
        # completion may unblock this accelerator and any consumer elsewhere
        for n in accel_names:
            try_enqueue(n)

    if len(end) != len(order):
        raise SimulationError("deadlock: per-accelerator order conflicts with dependencies")

    latency = max(end.values(), default=Fraction(0))
    leak = static_energy(platform, float(latency))
    stats = []
    for a in platform.accelerators:
        macs = sum(profiles[u].mac_count for u in queues[a.name])
        busy = sum((t.end - t.start for t in trace if t.accel == a.name), Fraction(0))
        cap = a.num_pes * a.frequency * latency
        util = float(Fraction(macs) / cap) if cap else 0.0
        e = sum_breakdowns(unit_energy[a.name] + [EnergyBreakdown(static_total=leak[a.name])])
        stats.append(AccelStats(a.name, len(queues[a.name]), macs, busy, util, e))

    all_parts = [x for n in accel_names for x in unit_energy[n]] + xfer_parts + \
        [EnergyBreakdown(static_total=v) for v in leak.values()]
    trace.sort(key=lambda t: (t.start, t.unit_id))
    return SimReport(
        model=graph.name,
        platform=platform.name,
        latency=latency,
        macs=sum(profiles[u].mac_count for u in graph.ids),
        accels=tuple(stats),
        energy=sum_breakdowns(all_parts),
        transfer_bytes=xfer_bytes,
        transfers=len(xfer_parts),
        area=platform_area(platform),
        trace=tuple(trace),
    )


@dataclass(frozen=True)
class PipelineResult:
    graph: ir.LayerGraph
    profiles: dict[int, LayerProfile]
    assignments: dict[int, ClusterAssignment]
    phase1: Mapping
    mapping: Mapping
    report: SimReport


def run_pipeline(graph: ir.LayerGraph, platform: Platform, lam: float = 0.0) -> PipelineResult:
    """Lower, characterize, classify, schedule and simulate one model."""
    g = ir.lower_lstm(graph)
    profiles = {l.id: layer_profile(l) for l in g.layers}
    assignments = classify_all(profiles.values(), platform.cluster_ranges)
    p1 = phase1_map(profiles, assignments, platform)
    final = phase2_adjust(p1, g, profiles, platform, lam)
    report = simulate(g, final, platform, profiles)
    return PipelineResult(g, profiles, assignments, p1, final, report)


@dataclass(frozen=True)
class ComparisonReport:
    model: str
    reports: tuple[SimReport, ...]

    def ratios(self) -> list[dict]:
        """Per-platform ratios normalized to the first platform."""
        base = self.reports[0]
        out = []
        for r in self.reports:
            out.append({
                "platform": r.platform,
                "energy_reduction": base.energy.total / r.energy.total,
                "throughput_gain": r.throughput / base.throughput,
                "utilization_gain": r.utilization / base.utilization,
                "latency_s": float(r.latency),
                "energy_j": r.energy.total,
                "throughput_flops": float(r.throughput),
                "utilization": r.utilization,
                "area_mm2": r.area,
            })
        return out


def compare(graph: ir.LayerGraph, platforms: list[Platform], lam: float = 0.0) -> ComparisonReport:
    if len(platforms) < 2:
        raise ValueError("compare needs at least two platforms")
    return ComparisonReport(graph.name,
                            tuple(run_pipeline(graph, p, lam).report for p in platforms))


def geomean(xs) -> float:
    xs = list(xs)
    return math.exp(fmean(math.log(x) for x in xs))
