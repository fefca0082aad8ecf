"""Per-unit latency, DRAM-synchronized transfers and a memoized unit evaluator."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .accel import AcceleratorConfig, Platform, TechnologyTable
from .characterize import LayerProfile
from .dataflow import DataflowCost, IncompatibleDataflow, dataflow_cost, supports
from .energy import EnergyBreakdown, layer_energy


def unit_latency(c: DataflowCost, a: AcceleratorConfig) -> Fraction:
    """Seconds for one unit, assuming compute and DRAM traffic fully overlap."""
    return max(Fraction(c.compute_cycles, a.frequency),
               Fraction(c.dram_bytes, a.dram_bandwidth))


def transfer_cost(nbytes: int, src: AcceleratorConfig, dst: AcceleratorConfig,
                  t: TechnologyTable) -> tuple[Fraction, float]:
    """(seconds, joules) to hand ``nbytes`` of activations from src to dst.

    The producer writes to DRAM and the consumer reads back, each at its own
    bandwidth; the off-chip link is paid only by on-chip endpoints.
    """
    if nbytes < 0:
        raise ValueError("byte count must be >= 0")
    if nbytes == 0 or src.name == dst.name:
        return Fraction(0), 0.0
    latency = Fraction(nbytes, src.dram_bandwidth) + Fraction(nbytes, dst.dram_bandwidth)
    return latency, transfer_energy(nbytes, src, dst, t).total


def transfer_energy(nbytes: int, src: AcceleratorConfig, dst: AcceleratorConfig,
                    t: TechnologyTable) -> EnergyBreakdown:
    if nbytes == 0 or src.name == dst.name:
        return EnergyBreakdown()
    return EnergyBreakdown(
        dram_dynamic=2 * nbytes * t.e_dram,
        offchip_link=nbytes * t.link_energy(src) + nbytes * t.link_energy(dst))


@dataclass(frozen=True)
class UnitEval:
    cost: DataflowCost
    latency: Fraction
    energy: EnergyBreakdown


class Evaluator:
    """Caches dataflow cost, latency and dynamic energy per (unit, accelerator)."""

    def __init__(self, profiles: dict[int, LayerProfile], platform: Platform):
        self.profiles = profiles
        self.platform = platform
        self._cache: dict[tuple[int, str], UnitEval | None] = {}

    def supports(self, uid: int, accel: str) -> bool:
        return supports(self.platform.accel(accel), self.profiles[uid].kind)

    def get(self, uid: int, accel: str) -> UnitEval:
        """Raises IncompatibleDataflow when ``accel`` cannot run the unit."""
        key = (uid, accel)
        if key not in self._cache:
            p = self.profiles[uid]
            a = self.platform.accel(accel)
            try:
                c = dataflow_cost(p, a, psum_width=self.platform.tech.psum_width)
            except IncompatibleDataflow:
                self._cache[key] = None
                raise
            self._cache[key] = UnitEval(
                c, unit_latency(c, a), layer_energy(c, p.mac_count, a, self.platform.tech))
        ev = self._cache[key]
        if ev is None:
            raise IncompatibleDataflow(f"unit {uid} cannot run on {accel}")
        return ev

    def transfer(self, nbytes: int, src: str, dst: str) -> tuple[Fraction, float]:
        return transfer_cost(nbytes, self.platform.accel(src),
                             self.platform.accel(dst), self.platform.tech)
