"""Deterministic synthetic model generators for four archetypes.

The dimension palettes below are fixed constants chosen so that generated
layers land inside the five cluster ranges (see cluster.DEFAULT_RANGES):

  cnn stem        3x3 conv, 56x56, shallow channels      -> cluster 1
  cnn mid         3x3 conv / pointwise at 14x14          -> cluster 2
  cnn depthwise   3x3 depthwise at 14x14, >=448 channels -> cluster 5
  cnn deep        3x3 conv on 7x7/5x5, 256+ channels     -> cluster 4
  cnn head / lstm FC layers and LSTM gates, d >= 1000    -> cluster 3

The seed only picks among palette variants, so every seed keeps the same
cluster mix for a given depth.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import ir
from .ir import ConvShape, FCShape, Layer, LayerGraph, LstmShape

ARCHETYPES = ("cnn", "lstm", "transducer", "rcnn")

# (variant choices per stage); channel counts are multiplied by ``scale``
STEM_CHANNELS = (32, 36)
MID_CHANNELS = (256, 320)
DW_CHANNELS = (448, 512)
DEEP_CHANNELS = (256, 288)
HEAD_WIDTH = (1000, 1024)
LSTM_HIDDEN = (1000, 1024, 1280)
LSTM_STEPS = 100
PRED_STEPS = 20  # transducer prediction network runs over labels, not frames
JOINT_OUT = 512
RCNN_FRAMES = 200


@dataclass(frozen=True)
class SyntheticSpec:
    archetype: str
    depth: int
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.archetype!r}")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        if self.archetype == "transducer" and self.depth < 4:
            raise ValueError("transducer needs depth >= 4 (3 LSTM blocks + joint)")
        if self.archetype == "rcnn" and self.depth < 2:
            raise ValueError("rcnn needs depth >= 2 (conv front end + LSTM)")


class _Builder:
    def __init__(self, scale: float):
        self.scale = scale
        self.layers: list[Layer] = []
        self.pairs: list[tuple[int, int]] = []

    def ch(self, c: int) -> int:
        return max(1, round(c * self.scale))

    def add(self, kind: str, shape, after: int | list[int] | None = None) -> int:
        uid = len(self.layers)
        self.layers.append(Layer(uid, kind, shape))
        if after is None:
            after = [uid - 1] if uid else []
        elif isinstance(after, int):
            after = [after]
        self.pairs.extend((p, uid) for p in after)
        return uid


def _cnn_plan(rng: random.Random, depth: int) -> tuple[int, list[tuple]]:
    """Input channels and a stage list of (kind, k, stride, padding, cout)."""
    stem = rng.choice(STEM_CHANNELS)
    mid = rng.choice(MID_CHANNELS)
    dw = rng.choice(DW_CHANNELS)
    deep = rng.choice(DEEP_CHANNELS)
    head = rng.choice(HEAD_WIDTH)
    plan = [
        (ir.CONV, 3, 1, 1, stem * 2),       # 56x56                 C1
        (ir.CONV, 3, 2, 1, stem * 4),       # 56 -> 28              C1
        (ir.CONV, 3, 2, 1, mid),            # 28 -> 14              C2
        (ir.POINTWISE, 1, 1, 0, dw),        # 14x14                 C2
        (ir.DEPTHWISE, 3, 1, 1, None),      # 14x14                 C5
        (ir.POINTWISE, 1, 1, 0, dw),        # 14x14                 C2
        (ir.CONV, 3, 2, 1, deep),           # 14 -> 7
        (ir.CONV, 3, 1, 0, deep),           # 7 -> 5                C4
        (ir.CONV, 3, 1, 1, deep + 64),      # 5x5                   C4
        (ir.FC, None, None, None, head),    #                       C3
        (ir.FC, None, None, None, head),    #                       C3
        (ir.FC, None, None, None, head),    #                       C3
    ]
    if depth <= len(plan):
        return stem, plan[:depth]
    # deeper models repeat the 14x14 depthwise/pointwise block
    extra = depth - len(plan)
    block = [plan[4], plan[5]]
    reps = [block[i % 2] for i in range(extra)]
    return stem, plan[:6] + reps + plan[6:]


def _gen_cnn(spec: SyntheticSpec, rng: random.Random) -> LayerGraph:
    b = _Builder(spec.scale)
    h = w = 56
    stem, plan = _cnn_plan(rng, spec.depth)
    c = b.ch(stem)
    flat = None
    for kind, k, stride, pad, cout in plan:
        if kind == ir.FC:
            fin = flat if flat is not None else h * w * c
            fout = b.ch(cout)
            b.add(ir.FC, FCShape(fin, fout))
            flat = fout
            continue
        cout = c if kind == ir.DEPTHWISE else b.ch(cout)
        shape = ConvShape(h, w, c, cout, k, k, stride, pad)
        b.add(kind, shape)
        h, w = ir.output_dims(shape)
        c = cout
    return ir.build_graph(f"cnn-d{spec.depth}-s{spec.seed}", b.layers, b.pairs)


def _lstm_stack(b: _Builder, n: int, d_in: int, d_h: int, steps: int,
                after: int | None) -> int:
    last = after
    for i in range(n):
        last = b.add(ir.LSTM, LstmShape(d_in if i == 0 else d_h, d_h, steps),
                     after=[] if last is None else last)
    return last


def _gen_lstm(spec: SyntheticSpec, rng: random.Random) -> LayerGraph:
    b = _Builder(spec.scale)
    d = b.ch(rng.choice(LSTM_HIDDEN))
    _lstm_stack(b, spec.depth, d, d, LSTM_STEPS, None)
    return ir.build_graph(f"lstm-d{spec.depth}-s{spec.seed}", b.layers, b.pairs)


def _gen_transducer(spec: SyntheticSpec, rng: random.Random) -> LayerGraph:
    """Encoder (two stacked blocks) and prediction network feed one joint FC."""
    b = _Builder(spec.scale)
    d_enc = b.ch(rng.choice(LSTM_HIDDEN))
    d_pred = b.ch(LSTM_HIDDEN[0])
    n = spec.depth - 1
    n_pred = max(1, n // 4)
    n_enc2 = max(1, (n - n_pred) // 2)
    n_enc1 = n - n_pred - n_enc2
    enc1 = _lstm_stack(b, n_enc1, d_enc, d_enc, LSTM_STEPS, None)
    enc2 = _lstm_stack(b, n_enc2, d_enc, d_enc, LSTM_STEPS, enc1)
    pred = _lstm_stack(b, n_pred, d_pred, d_pred, PRED_STEPS, None)
    b.add(ir.FC, FCShape(d_enc + d_pred, b.ch(JOINT_OUT) * 2), after=[enc2, pred])
    return ir.build_graph(f"transducer-d{spec.depth}-s{spec.seed}", b.layers, b.pairs)


def _gen_rcnn(spec: SyntheticSpec, rng: random.Random) -> LayerGraph:
    """Conv front end over a (freq x frames) map; each frame feeds one LSTM step."""
    b = _Builder(spec.scale)
    n_conv = max(1, spec.depth * 2 // 3)
    n_lstm = spec.depth - n_conv
    h, w = 40, RCNN_FRAMES
    c = 1
    couts = [b.ch(x) for x in (32, 64, 128, 128)]
    for i in range(n_conv):
        stride = 2 if i in (1, 2) else 1
        cout = couts[min(i, len(couts) - 1)]
        shape = ConvShape(h, w, c, cout, 3, 3, stride, 1)
        b.add(ir.CONV, shape)
        h, w = ir.output_dims(shape)
        c = cout
    d_h = b.ch(rng.choice(LSTM_HIDDEN))
    _lstm_stack(b, n_lstm, h * c, d_h, w, len(b.layers) - 1)
    return ir.build_graph(f"rcnn-d{spec.depth}-s{spec.seed}", b.layers, b.pairs)


_GENERATORS = {
    "cnn": _gen_cnn,
    "lstm": _gen_lstm,
    "transducer": _gen_transducer,
    "rcnn": _gen_rcnn,
}


def generate_synthetic(spec: SyntheticSpec) -> LayerGraph:
    rng = random.Random(f"{spec.archetype}:{spec.seed}")
    return _GENERATORS[spec.archetype](spec, rng)


# 4 cnn + 2 lstm + 2 transducer + 1 rcnn, seeds 0-8
MIXED_SUITE = (
    SyntheticSpec("cnn", 12, 0),
    SyntheticSpec("cnn", 12, 1),
    SyntheticSpec("cnn", 14, 2),
    SyntheticSpec("cnn", 16, 3),
    SyntheticSpec("lstm", 2, 4),
    SyntheticSpec("lstm", 3, 5),
    SyntheticSpec("transducer", 8, 6),
    SyntheticSpec("transducer", 6, 7),
    SyntheticSpec("rcnn", 6, 8),
)


def mixed_suite() -> list[LayerGraph]:
    return [generate_synthetic(s) for s in MIXED_SUITE]
