"""Energy accounting and the throughput/energy rooflines."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from fractions import Fraction

from .accel import AcceleratorConfig, Platform, TechnologyTable, peak_throughput
from .dataflow import DataflowCost


@dataclass(frozen=True)
class EnergyBreakdown:
    pe_dynamic: float = 0.0
    buffer_dynamic: float = 0.0
    noc_dynamic: float = 0.0
    dram_dynamic: float = 0.0
    offchip_link: float = 0.0
    static_total: float = 0.0

    @property
    def components(self) -> tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    @property
    def total(self) -> float:
        return math.fsum(self.components)

    def __add__(self, other: "EnergyBreakdown") -> "EnergyBreakdown":
        return EnergyBreakdown(*(x + y for x, y in zip(self.components, other.components)))

    def to_json(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["total"] = self.total
        return d


COMPONENTS = tuple(f.name for f in fields(EnergyBreakdown))


def sum_breakdowns(parts) -> EnergyBreakdown:
    """Component-wise correctly rounded sum."""
    parts = list(parts)
    return EnergyBreakdown(*(math.fsum(p.components[i] for p in parts)
                             for i in range(len(COMPONENTS))))


def layer_energy(c: DataflowCost, macs: int, a: AcceleratorConfig,
                 t: TechnologyTable) -> EnergyBreakdown:
    """Dynamic energy of one unit; leakage is charged platform-wide."""
    dram = c.dram_bytes
    rf_capacity = a.pe_rf or t.buffer_energy[0][0]
    buffer = math.fsum((
        c.buf_param_accesses * t.buffer_access_energy(a.param_buffer)
        if c.buf_param_accesses else 0.0,
        c.buf_act_accesses * t.buffer_access_energy(a.act_buffer)
        if c.buf_act_accesses else 0.0,
        c.rf_accesses * t.buffer_access_energy(rf_capacity)
        if c.rf_accesses else 0.0,
    ))
    return EnergyBreakdown(
        pe_dynamic=macs * t.e_mac,
        buffer_dynamic=buffer,
        noc_dynamic=c.noc_bytes * t.e_noc,
        dram_dynamic=dram * t.dram_energy(a),
        offchip_link=dram * t.link_energy(a),
        static_total=0.0,
    )


def static_energy(platform: Platform, horizon: float) -> dict[str, float]:
    """Leakage of every accelerator over ``horizon`` seconds, busy or idle."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    return {a.name: platform.tech.leakage_power(a) * horizon
            for a in platform.accelerators}


def roofline_throughput(ai, a: AcceleratorConfig):
    """Attainable FLOP/s at arithmetic intensity ``ai`` FLOP/byte.

    Exact when ``ai`` is an int or Fraction.
    """
    if ai < 0:
        raise ValueError("arithmetic intensity must be >= 0")
    if isinstance(ai, float) and math.isinf(ai):
        return peak_throughput(a)
    return min(peak_throughput(a), ai * a.dram_bandwidth)


def ridge_point(a: AcceleratorConfig) -> Fraction:
    return Fraction(peak_throughput(a), a.dram_bandwidth)


def roofline_energy_efficiency(ai, t: TechnologyTable,
                               a: AcceleratorConfig | None = None) -> float:
    """FLOP/J at intensity ``ai``; memory energy is never hidden, so no ridge.

    With ``a`` given, the near-data DRAM/link discounts of the table apply.
    """
    if ai <= 0:
        raise ValueError("arithmetic intensity must be > 0")
    if a is None:
        per_byte = t.e_dram + t.e_offchip_link
    else:
        per_byte = t.dram_energy(a) + t.link_energy(a)
    if isinstance(ai, float) and math.isinf(ai):
        return 1.0 / t.e_mac
    return 1.0 / (t.e_mac + per_byte / float(ai))


def roofline_sweep(a: AcceleratorConfig, t: TechnologyTable, lo: float = 1 / 16,
                   hi: float = 4096, points_per_octave: int = 4):
    """Rows of (ai, attainable FLOP/s, FLOP/J) on a log2 grid."""
    rows = []
    steps = round(math.log2(hi / lo) * points_per_octave)
    for i in range(steps + 1):
        ai = lo * 2 ** (i / points_per_octave)
        rows.append((ai, float(roofline_throughput(ai, a)),
                     roofline_energy_efficiency(ai, t, a)))
    return rows
