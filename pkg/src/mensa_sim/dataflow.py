"""Analytical traffic and cycle models for the four dataflows.

All counters are byte counts except ``compute_cycles``. NoC traffic is
counted once at injection, so a multicast costs one payload.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from . import ir
from .accel import (ACCEL_A_DF, ACCEL_B_DF, ACCEL_C_DF, BASELINE_DF,
                    AcceleratorConfig)
from .characterize import LayerProfile, macs_and_params

DEFAULT_PSUM_WIDTH = 4

COMPATIBLE = {
    BASELINE_DF: frozenset(ir.CONV_KINDS + (ir.FC, ir.GATE, ir.JOIN)),
    ACCEL_A_DF: frozenset(ir.CONV_KINDS + (ir.FC,)),
    ACCEL_B_DF: frozenset((ir.FC, ir.GATE, ir.JOIN)),
    ACCEL_C_DF: frozenset(ir.CONV_KINDS + (ir.FC,)),
}


class IncompatibleDataflow(ValueError):
    pass


def supports(a: AcceleratorConfig, kind: str) -> bool:
    return kind in COMPATIBLE[a.dataflow]


@dataclass(frozen=True)
class ParamResidency:
    """Where a unit sits among the invocations of its parent layer.

    ``working_set`` is the layer-level parameter bytes that must stay on chip
    for later invocations to skip DRAM (all gates of an LSTM layer).
    """
    working_set: int
    invocation: int = 0
    invocations: int = 1


def residency_for(p: LayerProfile) -> ParamResidency:
    layer = p.layer
    if layer.kind == ir.GATE:
        s = layer.shape
        return ParamResidency(4 * p.param_bytes, s.t, s.timesteps)
    return ParamResidency(p.param_bytes)


@dataclass(frozen=True)
class DataflowCost:
    dram_param_bytes: int = 0
    dram_in_act_bytes: int = 0
    dram_out_act_bytes: int = 0
    noc_param_bytes: int = 0
    noc_psum_bytes: int = 0
    noc_act_bytes: int = 0
    buf_param_accesses: int = 0
    buf_act_accesses: int = 0
    rf_accesses: int = 0
    compute_cycles: int = 0
    sequential_dram: bool = False

    @property
    def dram_bytes(self) -> int:
        return self.dram_param_bytes + self.dram_in_act_bytes + self.dram_out_act_bytes

    @property
    def noc_bytes(self) -> int:
        return self.noc_param_bytes + self.noc_psum_bytes + self.noc_act_bytes


COST_FIELDS = ("dram_param_bytes", "dram_in_act_bytes", "dram_out_act_bytes",
               "noc_param_bytes", "noc_psum_bytes", "noc_act_bytes",
               "buf_param_accesses", "buf_act_accesses", "rf_accesses",
               "compute_cycles")


def _spill(p: LayerProfile, a: AcceleratorConfig) -> tuple[int, int]:
    """Activations round-trip through DRAM when in+out do not fit the buffer."""
    if p.in_act_bytes + p.out_act_bytes <= a.act_buffer:
        return 0, 0
    return p.in_act_bytes, p.out_act_bytes


def accumulator_slots(a: AcceleratorConfig, datum: int = 1,
                      psum_width: int = DEFAULT_PSUM_WIDTH) -> int:
    """K: concurrent LSTM-cell partial sums one PE register file can hold.

    Each PE keeps its parameter element resident; the rest holds partial sums.
    """
    return max(1, (a.pe_rf - datum) // psum_width)


def _baseline(p, a, res, wp):
    n = a.num_pes
    m = p.mac_count
    fits = res.working_set <= a.param_buffer
    refetch = res.invocations == 1 or not fits or res.invocation == 0
    dram_param = p.param_bytes if refetch else 0
    # weights move buffer -> array on every invocation
    noc_param = p.param_bytes
    noc_act = p.in_act_bytes * math.ceil(p.out_elems / n)
    din, dout = _spill(p, a)
    return DataflowCost(
        dram_param_bytes=dram_param,
        dram_in_act_bytes=din,
        dram_out_act_bytes=dout,
        noc_param_bytes=noc_param,
        noc_psum_bytes=m * wp,
        noc_act_bytes=noc_act,
        buf_param_accesses=noc_param + dram_param,
        buf_act_accesses=noc_act + p.out_act_bytes,
        rf_accesses=m * p.layer.datum,
        compute_cycles=math.ceil(m / n) + a.pe_rows + a.pe_cols,
    )


def _accel_a(p, a, res, wp):
    n = a.num_pes
    m = p.mac_count
    passes = math.ceil(p.out_elems / n)
    noc_act = p.in_act_bytes * passes
    din, dout = _spill(p, a)
    return DataflowCost(
        dram_param_bytes=p.param_bytes,
        dram_in_act_bytes=din,
        dram_out_act_bytes=dout,
        noc_param_bytes=p.param_bytes,
        noc_psum_bytes=0,
        noc_act_bytes=noc_act,
        buf_param_accesses=2 * p.param_bytes,
        buf_act_accesses=noc_act + p.out_act_bytes,
        rf_accesses=2 * m * wp,
        compute_cycles=passes * math.ceil(m / p.out_elems),
    )


def _accel_b(p, a, res, wp):
    n = a.num_pes
    m = p.mac_count
    layer = p.layer
    if layer.kind == ir.GATE:
        s = layer.shape
        k = min(s.timesteps, accumulator_slots(a, layer.datum, wp))
        wx = s.d_in * s.d_h * layer.datum
        wh = s.d_h * s.d_h * layer.datum
        chunk_start = s.t % k == 0
        dram_param = (wx if chunk_start else 0) + \
                     (wh if chunk_start or a.hidden_refetch else 0)
    else:
        dram_param = p.param_bytes
    noc_act = p.in_act_bytes * math.ceil(p.out_elems / n)
    din, dout = _spill(p, a)
    return DataflowCost(
        dram_param_bytes=dram_param,
        dram_in_act_bytes=din,
        dram_out_act_bytes=dout,
        # parameters stream from DRAM straight into the PE register files
        noc_param_bytes=dram_param,
        noc_psum_bytes=0,
        noc_act_bytes=noc_act,
        buf_param_accesses=0,
        buf_act_accesses=noc_act + p.out_act_bytes,
        rf_accesses=2 * m * wp + m * layer.datum,
        compute_cycles=math.ceil(m / n),
        sequential_dram=True,
    )


def _accel_c(p, a, res, wp):
    m = p.mac_count
    din, dout = _spill(p, a)
    return DataflowCost(
        dram_param_bytes=p.param_bytes,
        dram_in_act_bytes=din,
        dram_out_act_bytes=dout,
        noc_param_bytes=p.param_bytes,
        noc_psum_bytes=m * wp,
        noc_act_bytes=p.in_act_bytes,
        buf_param_accesses=2 * p.param_bytes,
        buf_act_accesses=p.in_act_bytes + p.out_act_bytes,
        rf_accesses=m * p.layer.datum,
        compute_cycles=math.ceil(m / a.num_pes),
    )


_MODELS = {
    BASELINE_DF: _baseline,
    ACCEL_A_DF: _accel_a,
    ACCEL_B_DF: _accel_b,
    ACCEL_C_DF: _accel_c,
}


def dataflow_cost(p: LayerProfile, a: AcceleratorConfig,
                  residency: ParamResidency | None = None,
                  psum_width: int = DEFAULT_PSUM_WIDTH) -> DataflowCost:
    if not supports(a, p.kind):
        raise IncompatibleDataflow(f"{p.kind} unit {p.unit_id} cannot run on "
                                   f"{a.name} ({a.dataflow})")
    if residency is None:
        residency = residency_for(p)
    return _MODELS[a.dataflow](p, a, residency, psum_width)


def lstm_layer_param_traffic(layer: ir.Layer, a: AcceleratorConfig, mode: str,
                             psum_width: int = DEFAULT_PSUM_WIDTH) -> int:
    """DRAM parameter bytes for one whole LSTM layer.

    ``naive`` applies the all-or-nothing buffer residency rule per timestep;
    ``decoupled`` fetches the gate matrices once per K-timestep chunk.
    """
    if layer.kind != ir.LSTM:
        raise ValueError(f"layer {layer.id} is not an LstmLayer")
    s = layer.shape
    _, params = macs_and_params(layer)
    footprint = params * layer.datum
    if mode == "naive":
        if s.timesteps == 1 or footprint <= a.param_buffer:
            return footprint
        return footprint * s.timesteps
    if mode == "decoupled":
        k = min(s.timesteps, accumulator_slots(a, layer.datum, psum_width))
        chunks = math.ceil(s.timesteps / k)
        if a.hidden_refetch:
            wx = s.gates * s.d_in * s.d_h * layer.datum
            return wx * chunks + (footprint - wx) * s.timesteps
        return footprint * chunks
    raise ValueError(f"unknown mode {mode!r}")


def reuse_factor(p: LayerProfile, variant: str, n: int) -> Fraction:
    """Cycles each parameter is reused: W*H/N replicated, W*H stationary."""
    if not (p.layer.is_conv or p.kind == ir.FC):
        raise ValueError(f"reuse factor undefined for {p.kind}")
    if variant == "replicated":
        return Fraction(p.out_spatial, n)
    if variant == "stationary":
        return Fraction(p.out_spatial)
    raise ValueError(f"unknown variant {variant!r}")
