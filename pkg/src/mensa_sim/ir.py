"""Layer-graph representation, model-file parsing and LSTM lowering.

A model is a DAG of typed layers. Only shapes and counts are tracked; there is
no tensor data. Edge activation byte counts are always derived from the
producer's output footprint.
"""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field, fields
from typing import Iterable, Union

log = logging.getLogger(__name__)

CONV = "Conv"
DEPTHWISE = "Depthwise"
POINTWISE = "Pointwise"
FC = "FullyConnected"
LSTM = "LstmLayer"
GATE = "LstmGateUnit"
JOIN = "LstmCellJoin"

CONV_KINDS = (CONV, DEPTHWISE, POINTWISE)
KINDS = (CONV, DEPTHWISE, POINTWISE, FC, LSTM, GATE, JOIN)


class ModelFileError(ValueError):
    """Raised when a model file cannot be turned into a valid graph."""


@dataclass(frozen=True)
class ConvShape:
    hi: int
    wi: int
    cin: int
    cout: int
    kh: int
    kw: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class FCShape:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class LstmShape:
    d_in: int
    d_h: int
    timesteps: int
    gates: int = 4


@dataclass(frozen=True)
class GateShape:
    d_in: int
    d_h: int
    t: int
    gate: int
    timesteps: int = 1
    layer: int = -1  # id of the LstmLayer this unit was lowered from


@dataclass(frozen=True)
class JoinShape:
    d_h: int
    t: int
    gates: int = 4
    timesteps: int = 1
    layer: int = -1


Shape = Union[ConvShape, FCShape, LstmShape, GateShape, JoinShape]

SHAPE_FOR_KIND = {
    CONV: ConvShape,
    DEPTHWISE: ConvShape,
    POINTWISE: ConvShape,
    FC: FCShape,
    LSTM: LstmShape,
    GATE: GateShape,
    JOIN: JoinShape,
}


@dataclass(frozen=True)
class Layer:
    id: int
    kind: str
    shape: Shape
    datum: int = 1

    @property
    def is_conv(self) -> bool:
        return self.kind in CONV_KINDS


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    nbytes: int


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


# -- geometry ---------------------------------------------------------------


def output_dims(shape: ConvShape) -> tuple[int, int]:
    """Return (Ho, Wo) of a convolution window sweep."""
    ph = shape.hi + 2 * shape.padding
    pw = shape.wi + 2 * shape.padding
    if ph < shape.kh or pw < shape.kw:
        raise ValueError(
            f"kernel {shape.kh}x{shape.kw} larger than padded input {ph}x{pw}")
    return ((ph - shape.kh) // shape.stride + 1,
            (pw - shape.kw) // shape.stride + 1)


def in_act_elems(layer: Layer) -> int:
    s = layer.shape
    if layer.is_conv:
        return s.hi * s.wi * s.cin
    if layer.kind == FC:
        return s.in_features
    if layer.kind == LSTM:
        return s.d_in * s.timesteps
    if layer.kind == GATE:
        # x_t and h_{t-1}
        return s.d_in + s.d_h
    if layer.kind == JOIN:
        # one output per gate plus c_{t-1}
        return (s.gates + 1) * s.d_h
    raise ValueError(f"unknown kind {layer.kind}")


def out_act_elems(layer: Layer) -> int:
    s = layer.shape
    if layer.is_conv:
        ho, wo = output_dims(s)
        return ho * wo * s.cout
    if layer.kind == FC:
        return s.out_features
    if layer.kind == LSTM:
        return s.d_h * s.timesteps
    if layer.kind in (GATE, JOIN):
        return s.d_h
    raise ValueError(f"unknown kind {layer.kind}")


def out_spatial(layer: Layer) -> int:
    """Number of output positions a single filter is swept over (Ho*Wo)."""
    if layer.is_conv:
        ho, wo = output_dims(layer.shape)
        return ho * wo
    return 1


def out_act_bytes(layer: Layer) -> int:
    return out_act_elems(layer) * layer.datum


# -- graph ------------------------------------------------------------------


@dataclass(frozen=True)
class LayerGraph:
    name: str
    layers: tuple[Layer, ...]
    edges: tuple[Edge, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False,
                         hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {l.id: l for l in self.layers})

    def layer(self, uid: int) -> Layer:
        return self._index[uid]

    def __contains__(self, uid: int) -> bool:
        return uid in self._index

    @property
    def ids(self) -> list[int]:
        return [l.id for l in self.layers]

    def preds(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {l.id: [] for l in self.layers}
        for e in self.edges:
            out[e.dst].append(e.src)
        return out

    def succs(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {l.id: [] for l in self.layers}
        for e in self.edges:
            out[e.src].append(e.dst)
        return out

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, smallest ready id first.

        Raises ValueError if the graph has a cycle.
        """
        indeg = {l.id: 0 for l in self.layers}
        succ = self.succs()
        for e in self.edges:
            indeg[e.dst] += 1
        ready = [uid for uid, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            uid = heapq.heappop(ready)
            order.append(uid)
            for v in succ[uid]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    heapq.heappush(ready, v)
        if len(order) != len(self.layers):
            stuck = sorted(uid for uid, d in indeg.items() if d > 0)
            raise ValueError(f"cycle detected among layers {stuck}")
        return order


def build_graph(name: str, layers: Iterable[Layer],
                pairs: Iterable[tuple[int, int]]) -> LayerGraph:
    """Build a graph, deriving each edge's byte count from its producer.

    Dangling endpoints get nbytes=0 so that validate_graph can report them.
    """
    layers = tuple(layers)
    index = {l.id: l for l in layers}
    edges = []
    for src, dst in pairs:
        prod = index.get(src)
        try:
            nbytes = out_act_bytes(prod) if prod is not None else 0
        except ValueError:
            nbytes = 0
        edges.append(Edge(src, dst, nbytes))
    return LayerGraph(name, layers, tuple(edges))


def _shape_violations(layer: Layer) -> list[Violation]:
    out = []
    s = layer.shape
    ref = f"layer {layer.id}"
    expected = SHAPE_FOR_KIND.get(layer.kind)
    if expected is None:
        return [Violation("kind", f"{ref}: unknown kind {layer.kind!r}")]
    if not isinstance(s, expected):
        return [Violation("shape", f"{ref}: {layer.kind} needs {expected.__name__}")]
    if layer.datum < 1:
        out.append(Violation("shape", f"{ref}: datum must be >= 1"))
    for f in fields(s):
        v = getattr(s, f.name)
        if f.name == "padding":
            if v < 0:
                out.append(Violation("shape", f"{ref}: padding must be >= 0"))
        elif f.name in ("t", "gate"):
            if v < 0:
                out.append(Violation("shape", f"{ref}: {f.name} must be >= 0"))
        elif f.name == "layer":
            continue
        elif v < 1:
            out.append(Violation("shape", f"{ref}: {f.name} must be >= 1"))
    if out:
        return out
    if layer.kind == POINTWISE and (s.kh != 1 or s.kw != 1):
        out.append(Violation("shape", f"{ref}: Pointwise requires Kh=Kw=1"))
    if layer.kind == DEPTHWISE and s.cout != s.cin:
        out.append(Violation("shape", f"{ref}: Depthwise requires Cout=Cin"))
    if layer.is_conv:
        try:
            output_dims(s)
        except ValueError as exc:
            out.append(Violation("shape", f"{ref}: {exc}"))
    if layer.kind == GATE and (s.gate >= 4 or s.t >= s.timesteps):
        out.append(Violation("shape", f"{ref}: gate/timestep index out of range"))
    if layer.kind == JOIN and s.t >= s.timesteps:
        out.append(Violation("shape", f"{ref}: timestep index out of range"))
    return out


def validate_graph(g: LayerGraph) -> list[Violation]:
    """Return every invariant violation in ``g``; an empty list means valid."""
    out: list[Violation] = []
    seen: set[int] = set()
    for layer in g.layers:
        if layer.id in seen:
            out.append(Violation("duplicate-id", f"layer id {layer.id} repeated"))
        seen.add(layer.id)
        out.extend(_shape_violations(layer))
    dangling = False
    for e in g.edges:
        for end in (e.src, e.dst):
            if end not in seen:
                dangling = True
                out.append(Violation(
                    "dangling-edge",
                    f"edge ({e.src},{e.dst}) references missing id {end}"))
        if e.src == e.dst:
            out.append(Violation("cycle", f"self-edge ({e.src},{e.dst})"))
    if out:
        return out
    try:
        g.topological_order()
    except ValueError as exc:
        out.append(Violation("cycle", str(exc)))
    for e in g.edges:
        want = out_act_bytes(g.layer(e.src))
        if e.nbytes != want:
            out.append(Violation(
                "edge-bytes",
                f"edge ({e.src},{e.dst}) carries {e.nbytes} B, producer emits {want} B"))
    return out


# -- model files ------------------------------------------------------------

_SHAPE_FIELDS = {
    kind: [f.name for f in fields(cls)] for kind, cls in SHAPE_FOR_KIND.items()
}
_OPTIONAL = {"stride", "padding", "gates", "timesteps", "layer"}


def _layer_from_json(obj) -> Layer:
    if not isinstance(obj, dict):
        raise ModelFileError(f"layer entry must be an object, got {obj!r}")
    uid = obj.get("id")
    if not isinstance(uid, int) or isinstance(uid, bool):
        raise ModelFileError(f"layer entry without integer id: {obj!r}")
    kind = obj.get("kind")
    if kind not in SHAPE_FOR_KIND:
        raise ModelFileError(f"layer {uid}: unknown layer kind {kind!r}")
    names = _SHAPE_FIELDS[kind]
    unknown = set(obj) - set(names) - {"id", "kind", "datum"}
    if unknown:
        raise ModelFileError(f"layer {uid}: unknown fields {sorted(unknown)}")
    kwargs = {}
    for n in names:
        if n in obj:
            v = obj[n]
            if not isinstance(v, int) or isinstance(v, bool):
                raise ModelFileError(f"layer {uid}: field {n!r} must be an integer")
            kwargs[n] = v
        elif kind == POINTWISE and n in ("kh", "kw"):
            kwargs[n] = 1
        elif n not in _OPTIONAL:
            raise ModelFileError(f"layer {uid}: missing field {n!r}")
    datum = obj.get("datum", 1)
    if not isinstance(datum, int) or isinstance(datum, bool):
        raise ModelFileError(f"layer {uid}: datum must be an integer")
    return Layer(uid, kind, SHAPE_FOR_KIND[kind](**kwargs), datum)


def parse_model(contents: bytes | str) -> LayerGraph:
    """Parse and validate a JSON model file.

    Raises ModelFileError naming the offending layer or edge.
    """
    try:
        doc = json.loads(contents)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFileError("model file must be a JSON object")
    unknown = set(doc) - {"name", "layers", "edges"}
    if unknown:
        raise ModelFileError(f"unknown top-level fields {sorted(unknown)}")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ModelFileError("name must be a string")
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list):
        raise ModelFileError("layers must be a list")
    layers = [_layer_from_json(o) for o in raw_layers]

    pairs = []
    for e in doc.get("edges", []):
        if (not isinstance(e, list) or len(e) not in (2, 3)
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
            raise ModelFileError(f"malformed edge {e!r}")
        if len(e) == 3:
            log.warning("edge (%d,%d): user-supplied byte count %d ignored; "
                        "derived from producer", e[0], e[1], e[2])
        pairs.append((e[0], e[1]))

    g = build_graph(name, layers, pairs)
    problems = validate_graph(g)
    if problems:
        raise ModelFileError("; ".join(str(p) for p in problems))
    return g


def _layer_to_json(layer: Layer) -> dict:
    d = {"id": layer.id, "kind": layer.kind, "datum": layer.datum}
    for f in fields(layer.shape):
        d[f.name] = getattr(layer.shape, f.name)
    return d


def to_json(g: LayerGraph) -> dict:
    return {
        "name": g.name,
        "layers": [_layer_to_json(l) for l in g.layers],
        "edges": sorted([e.src, e.dst] for e in g.edges),
    }


def serialize(g: LayerGraph) -> bytes:
    """Canonical byte-exact serialization (sorted keys, sorted edges)."""
    return (json.dumps(to_json(g), sort_keys=True, indent=1) + "\n").encode()


def normalize(contents: bytes | str) -> bytes:
    return serialize(parse_model(contents))


# -- LSTM lowering ----------------------------------------------------------


def lower_lstm(g: LayerGraph) -> LayerGraph:
    """Replace every LstmLayer by T*4 gate units and T cell-join nodes.

    Gates of timestep t depend on the join of t-1; the join of t depends on
    all four gates of t. A stacked LSTM with the same T feeds join(t) of the
    lower layer to the gates of t in the upper layer; any other producer feeds
    the gates of t=0 and any consumer reads the final join.
    """
    lstm_ids = [l.id for l in g.layers if l.kind == LSTM]
    if not lstm_ids:
        return g

    next_id = max(g.ids) + 1
    new_layers: list[Layer] = []
    gates: dict[int, list[list[int]]] = {}  # layer -> [t][g] -> unit id
    joins: dict[int, list[int]] = {}
    for layer in g.layers:
        if layer.kind != LSTM:
            new_layers.append(layer)
            continue
        s = layer.shape
        gates[layer.id] = []
        joins[layer.id] = []
        for t in range(s.timesteps):
            row = []
            for gi in range(s.gates):
                row.append(next_id)
                new_layers.append(Layer(
                    next_id, GATE,
                    GateShape(s.d_in, s.d_h, t, gi, s.timesteps, layer.id),
                    layer.datum))
                next_id += 1
            gates[layer.id].append(row)
            joins[layer.id].append(next_id)
            new_layers.append(Layer(
                next_id, JOIN, JoinShape(s.d_h, t, s.gates, s.timesteps, layer.id),
                layer.datum))
            next_id += 1

    pairs: list[tuple[int, int]] = []
    for lid in lstm_ids:
        for t, row in enumerate(gates[lid]):
            for u in row:
                if t > 0:
                    pairs.append((joins[lid][t - 1], u))
                pairs.append((u, joins[lid][t]))

    for e in g.edges:
        src_lstm = e.src in gates
        dst_lstm = e.dst in gates
        if not dst_lstm:
            src = joins[e.src][-1] if src_lstm else e.src
            pairs.append((src, e.dst))
            continue
        dst_rows = gates[e.dst]
        if src_lstm and len(joins[e.src]) == len(dst_rows):
            for t, row in enumerate(dst_rows):
                pairs.extend((joins[e.src][t], u) for u in row)
        else:
            src = joins[e.src][-1] if src_lstm else e.src
            pairs.extend((src, u) for u in dst_rows[0])

    return build_graph(g.name, new_layers, pairs)
