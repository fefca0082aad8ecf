"""Per-unit metrics: MACs, footprints and arithmetic intensity.

One FLOP is one MAC throughout, so every matrix-vector unit (FC layers and
LSTM gate units) has a parameter intensity of exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import ir
from .ir import LayerGraph, Layer, output_dims  # noqa: F401  (re-export)


@dataclass(frozen=True)
class LayerProfile:
    unit_id: int
    kind: str
    mac_count: int
    param_bytes: int
    in_act_bytes: int
    out_act_bytes: int
    out_elems: int
    out_spatial: int
    layer: Layer

    @property
    def param_intensity(self) -> Fraction:
        # Parameter-free units (cell joins) report 0 rather than dividing by 0.
        if self.param_bytes == 0:
            return Fraction(0)
        return Fraction(self.mac_count, self.param_bytes)

    @property
    def act_intensity(self) -> Fraction:
        act = self.in_act_bytes + self.out_act_bytes
        return Fraction(self.mac_count, act) if act else Fraction(0)

    @property
    def footprint(self) -> int:
        return self.param_bytes + self.in_act_bytes + self.out_act_bytes


def macs_and_params(layer: Layer) -> tuple[int, int]:
    """Return (MAC count, parameter element count). Bias terms are excluded."""
    s = layer.shape
    k = layer.kind
    if k in (ir.CONV, ir.POINTWISE):
        ho, wo = output_dims(s)
        params = s.kh * s.kw * s.cin * s.cout
        return ho * wo * params, params
    if k == ir.DEPTHWISE:
        ho, wo = output_dims(s)
        params = s.kh * s.kw * s.cin
        return ho * wo * params, params
    if k == ir.FC:
        n = s.in_features * s.out_features
        return n, n
    if k == ir.GATE:
        n = s.d_in * s.d_h + s.d_h * s.d_h
        return n, n
    if k == ir.JOIN:
        # c_t = f*c + i*g, h_t = o*tanh(c_t): three multiplies per element
        return 3 * s.d_h, 0
    if k == ir.LSTM:
        n = s.gates * s.timesteps * (s.d_in * s.d_h + s.d_h * s.d_h)
        return n + 3 * s.d_h * s.timesteps, s.gates * (s.d_in * s.d_h + s.d_h * s.d_h)
    raise ValueError(f"unknown kind {k}")


def layer_profile(unit: Layer) -> LayerProfile:
    macs, params = macs_and_params(unit)
    out_elems = ir.out_act_elems(unit)
    return LayerProfile(
        unit_id=unit.id,
        kind=unit.kind,
        mac_count=macs,
        param_bytes=params * unit.datum,
        in_act_bytes=ir.in_act_elems(unit) * unit.datum,
        out_act_bytes=out_elems * unit.datum,
        out_elems=out_elems,
        out_spatial=ir.out_spatial(unit),
        layer=unit,
    )


@dataclass(frozen=True)
class ModelSummary:
    profiles: tuple[LayerProfile, ...]
    mac_count: int
    param_bytes: int
    in_act_bytes: int
    out_act_bytes: int

    def by_id(self) -> dict[int, LayerProfile]:
        return {p.unit_id: p for p in self.profiles}


def model_summary(g: LayerGraph) -> ModelSummary:
    """Profile every schedulable unit of ``g`` (LSTM layers are lowered first)."""
    g = ir.lower_lstm(g)
    profiles = tuple(layer_profile(l) for l in g.layers)
    return ModelSummary(
        profiles,
        mac_count=sum(p.mac_count for p in profiles),
        param_bytes=sum(p.param_bytes for p in profiles),
        in_act_bytes=sum(p.in_act_bytes for p in profiles),
        out_act_bytes=sum(p.out_act_bytes for p in profiles),
    )


CSV_HEADER = ("unit_id", "kind", "macs", "param_bytes", "in_act_bytes",
              "out_act_bytes", "param_intensity", "act_intensity")


def fmt_fraction(x: Fraction) -> str:
    """Integers print bare; other rationals as num/den so values stay exact."""
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def profile_row(p: LayerProfile) -> tuple:
    return (p.unit_id, p.kind, p.mac_count, p.param_bytes, p.in_act_bytes,
            p.out_act_bytes, fmt_fraction(p.param_intensity),
            fmt_fraction(p.act_intensity))
