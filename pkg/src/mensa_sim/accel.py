"""Accelerator/platform configurations, technology table, peak and area."""

from __future__ import annotations

import bisect
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

from .cluster import DEFAULT_RANGES, ClusterRange

KB = 1024
MB = 1024 * KB
GB_S = 1_000_000_000  # bytes/s
PJ = 1e-12
UW = 1e-6

ON_CHIP = "on-chip"
NEAR_DATA = "near-data"
PLACEMENTS = (ON_CHIP, NEAR_DATA)

BASELINE_DF = "BaselineSystolic"
ACCEL_A_DF = "AccelA-DF"
ACCEL_B_DF = "AccelB-DF"
ACCEL_C_DF = "AccelC-DF"
DATAFLOWS = (BASELINE_DF, ACCEL_A_DF, ACCEL_B_DF, ACCEL_C_DF)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AcceleratorConfig:
    name: str
    pe_rows: int
    pe_cols: int
    frequency: int  # Hz
    param_buffer: int  # bytes; 0 means parameters stream straight into PE RFs
    act_buffer: int
    pe_rf: int  # bytes per PE
    dram_bandwidth: int  # bytes/s
    placement: str = ON_CHIP
    dataflow: str = BASELINE_DF
    hidden_refetch: bool = False  # AccelB-DF: stream W_h every timestep

    def __post_init__(self):
        for f in ("pe_rows", "pe_cols", "frequency", "dram_bandwidth"):
            if getattr(self, f) <= 0:
                raise ConfigError(f"{self.name}: {f} must be positive")
        for f in ("param_buffer", "act_buffer", "pe_rf"):
            if getattr(self, f) < 0:
                raise ConfigError(f"{self.name}: {f} must be >= 0")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"{self.name}: unknown placement {self.placement!r}")
        if self.dataflow not in DATAFLOWS:
            raise ConfigError(f"{self.name}: unknown dataflow {self.dataflow!r}")

    @property
    def num_pes(self) -> int:
        return self.pe_rows * self.pe_cols

    @property
    def near_data(self) -> bool:
        return self.placement == NEAR_DATA

    @property
    def buffer_bytes(self) -> int:
        return self.param_buffer + self.act_buffer + self.pe_rf * self.num_pes


def peak_throughput(a: AcceleratorConfig) -> int:
    """Peak FLOP/s (one FLOP per MAC)."""
    return a.pe_rows * a.pe_cols * a.frequency


def interpolate(rows: Sequence[tuple[float, float]], x: float, extrapolate: bool,
                what: str = "value") -> float:
    """Piecewise-linear lookup over (x, y) rows sorted by x; clamps when allowed."""
    xs = [r[0] for r in rows]
    if x < xs[0] or x > xs[-1]:
        if not extrapolate:
            raise ConfigError(f"no {what} row covers capacity {x} B "
                              f"(table spans {xs[0]}..{xs[-1]} B)")
        return rows[0][1] if x < xs[0] else rows[-1][1]
    i = bisect.bisect_left(xs, x)
    if xs[i] == x:
        return rows[i][1]
    (x0, y0), (x1, y1) = rows[i - 1], rows[i]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


@dataclass(frozen=True)
class TechnologyTable:
    """Energy, leakage and area coefficients (SI units: J, W, mm^2).

    Defaults are placeholders standing in for CACTI-style outputs; everything
    is overridable from a JSON file.
    """
    e_mac: float = 1.6 * PJ  # 0.2 pJ/bit x 8-bit operands
    e_dram: float = 32 * PJ  # per byte
    e_offchip_link: float = 8 * PJ
    e_noc: float = 0.5 * PJ
    # (capacity bytes, J per byte accessed); the 512 B row prices PE register files
    buffer_energy: tuple[tuple[int, float], ...] = (
        (512, 0.05 * PJ),
        (32 * KB, 0.3 * PJ),
        (128 * KB, 0.5 * PJ),
        (2 * MB, 1.5 * PJ),
        (4 * MB, 2.0 * PJ),
    )
    leak_per_pe: float = 0.2 * UW
    leak_per_kb: float = 1.5 * UW
    psum_width: int = 4
    area_per_pe: float = 0.01
    # (capacity bytes, mm^2 per KB); density from fit_buffer_density()
    area_per_kb: tuple[tuple[int, float], ...] = ((512, 0.0257), (4 * MB, 0.0257))
    near_data_dram_factor: float = 0.5
    near_data_link_factor: float = 0.0
    extrapolate: bool = True

    def __post_init__(self):
        scalars = ("e_mac", "e_dram", "e_offchip_link", "e_noc", "leak_per_pe",
                   "leak_per_kb", "area_per_pe", "near_data_dram_factor",
                   "near_data_link_factor")
        for f in scalars:
            if getattr(self, f) < 0:
                raise ConfigError(f"technology coefficient {f} must be >= 0")
        for name in ("buffer_energy", "area_per_kb"):
            rows = getattr(self, name)
            if not rows:
                raise ConfigError(f"{name} needs at least one row")
            caps = [c for c, _ in rows]
            if caps != sorted(caps) or len(set(caps)) != len(caps):
                raise ConfigError(f"{name} rows must have strictly increasing capacity")
            if any(v < 0 for _, v in rows):
                raise ConfigError(f"{name} values must be >= 0")
        energies = [v for _, v in self.buffer_energy]
        if energies != sorted(energies):
            raise ConfigError("buffer energy per byte must be non-decreasing in capacity")

    def buffer_access_energy(self, capacity: int) -> float:
        """J per byte accessed in a buffer of ``capacity`` bytes."""
        return interpolate(self.buffer_energy, capacity, self.extrapolate,
                           "buffer-energy")

    def dram_energy(self, a: AcceleratorConfig) -> float:
        return self.e_dram * (self.near_data_dram_factor if a.near_data else 1.0)

    def link_energy(self, a: AcceleratorConfig) -> float:
        return self.e_offchip_link * (self.near_data_link_factor if a.near_data else 1.0)

    def leakage_power(self, a: AcceleratorConfig) -> float:
        return a.num_pes * self.leak_per_pe + a.buffer_bytes / KB * self.leak_per_kb

    def to_json(self) -> dict:
        d = asdict(self)
        d["buffer_energy"] = [list(r) for r in self.buffer_energy]
        d["area_per_kb"] = [list(r) for r in self.area_per_kb]
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> "TechnologyTable":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown technology fields {sorted(unknown)}")
        kw = dict(d)
        for name in ("buffer_energy", "area_per_kb"):
            if name in kw:
                kw[name] = tuple((int(c), float(v)) for c, v in kw[name])
        return cls(**kw)


def buffer_area(capacity: int, t: TechnologyTable) -> float:
    if capacity == 0:
        return 0.0
    density = interpolate(t.area_per_kb, capacity, t.extrapolate, "area")
    return capacity / KB * density


def area(a: AcceleratorConfig, t: TechnologyTable) -> float:
    """Silicon area in mm^2: PEs plus every on-chip buffer (incl. PE RFs)."""
    buffers = (buffer_area(a.param_buffer, t) + buffer_area(a.act_buffer, t)
               + a.num_pes * buffer_area(a.pe_rf, t))
    return a.num_pes * t.area_per_pe + buffers


def buffer_area_share(a: AcceleratorConfig, t: TechnologyTable) -> float:
    total = area(a, t)
    return (total - a.num_pes * t.area_per_pe) / total


def fit_buffer_density(a: AcceleratorConfig, t: TechnologyTable,
                       share: float = 0.794) -> float:
    """mm^2/KB that makes buffers ``share`` of ``a``'s total area.

    Solves share = B*d / (B*d + PE area) for a flat density d.
    """
    pe_area = a.num_pes * t.area_per_pe
    kb = a.buffer_bytes / KB
    return share * pe_area / ((1 - share) * kb)


@dataclass(frozen=True)
class Platform:
    name: str
    accelerators: tuple[AcceleratorConfig, ...]
    tech: TechnologyTable = field(default_factory=TechnologyTable)
    routing: tuple[tuple[int, str], ...] = ()
    cluster_ranges: tuple[ClusterRange, ...] = DEFAULT_RANGES

    def __post_init__(self):
        names = [a.name for a in self.accelerators]
        if not names:
            raise ConfigError(f"platform {self.name}: no accelerators")
        if len(set(names)) != len(names):
            raise ConfigError(f"platform {self.name}: duplicate accelerator names")
        if not self.routing:
            object.__setattr__(self, "routing",
                               tuple((r.cluster, names[0]) for r in self.cluster_ranges))
        routed = dict(self.routing)
        for r in self.cluster_ranges:
            if r.cluster not in routed:
                raise ConfigError(f"platform {self.name}: routing misses cluster {r.cluster}")
        for c, n in self.routing:
            if n not in names:
                raise ConfigError(f"platform {self.name}: cluster {c} routed to unknown {n!r}")

    def accel(self, name: str) -> AcceleratorConfig:
        for a in self.accelerators:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def route(self) -> dict[int, str]:
        return dict(self.routing)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "accelerators": [asdict(a) for a in self.accelerators],
            "tech": self.tech.to_json(),
            "routing": {str(c): n for c, n in self.routing},
            "cluster_ranges": [r.to_json() for r in self.cluster_ranges],
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Platform":
        unknown = set(d) - {"name", "accelerators", "tech", "routing", "cluster_ranges"}
        if unknown:
            raise ConfigError(f"unknown platform fields {sorted(unknown)}")
        try:
            accels = tuple(AcceleratorConfig(**a) for a in d["accelerators"])
        except TypeError as exc:
            raise ConfigError(f"bad accelerator entry: {exc}") from exc
        tech = TechnologyTable.from_json(d.get("tech", {}))
        ranges = tuple(ClusterRange.from_json(r) for r in d.get("cluster_ranges", [])) \
            or DEFAULT_RANGES
        routing = tuple(sorted((int(c), n) for c, n in d.get("routing", {}).items()))
        return cls(d["name"], accels, tech, routing, ranges)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Platform":
        return cls.from_json(json.loads(text))


BASELINE = AcceleratorConfig(
    "Baseline", 64, 64, 500_000_000,
    param_buffer=4 * MB, act_buffer=2 * MB, pe_rf=0,
    dram_bandwidth=32 * GB_S, placement=ON_CHIP, dataflow=BASELINE_DF)

ACCEL_A = AcceleratorConfig(
    "Accel-A", 32, 32, 2_000_000_000,
    param_buffer=128 * KB, act_buffer=256 * KB, pe_rf=0,
    dram_bandwidth=32 * GB_S, placement=ON_CHIP, dataflow=ACCEL_A_DF)

ACCEL_B = AcceleratorConfig(
    "Accel-B", 8, 8, 2_000_000_000,
    param_buffer=0, act_buffer=128 * KB, pe_rf=512,
    dram_bandwidth=256 * GB_S, placement=NEAR_DATA, dataflow=ACCEL_B_DF)

ACCEL_C = AcceleratorConfig(
    "Accel-C", 16, 16, 2_000_000_000,
    param_buffer=128 * KB, act_buffer=128 * KB, pe_rf=0,
    dram_bandwidth=256 * GB_S, placement=NEAR_DATA, dataflow=ACCEL_C_DF)

MENSA_ROUTING = ((1, "Accel-A"), (2, "Accel-A"), (3, "Accel-B"),
                 (4, "Accel-C"), (5, "Accel-C"))


def builtin_platforms(tech: TechnologyTable | None = None) -> dict[str, Platform]:
    tech = tech or TechnologyTable()
    return {
        "baseline": Platform("Baseline", (BASELINE,), tech),
        "base-hb": Platform(
            "Base+HB", (replace(BASELINE, name="Base+HB", dram_bandwidth=256 * GB_S),),
            tech),
        "mensa": Platform("Mensa", (ACCEL_A, ACCEL_B, ACCEL_C), tech, MENSA_ROUTING),
    }


def load_platform(spec: str, tech: TechnologyTable | None = None) -> Platform:
    """Resolve a built-in name (baseline, base-hb, mensa) or a JSON file path."""
    builtins = builtin_platforms(tech)
    if spec.lower() in builtins:
        return builtins[spec.lower()]
    with open(spec) as fh:
        p = Platform.loads(fh.read())
    if tech is not None:
        p = replace(p, tech=tech)
    return p


def platform_area(p: Platform) -> float:
    return sum(area(a, p.tech) for a in p.accelerators)
