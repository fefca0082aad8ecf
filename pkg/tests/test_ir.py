import json
import logging

import pytest
from hypothesis import given, settings, strategies as st

from mensa_sim import ir
from mensa_sim.ir import ConvShape, FCShape, Layer, LstmShape
from mensa_sim.synth import SyntheticSpec, generate_synthetic

import oracles


def _doc(layers, edges=()):
    return json.dumps({"name": "m", "layers": layers, "edges": [list(e) for e in edges]})


FC4 = {"id": 0, "kind": "FullyConnected", "in_features": 4, "out_features": 4}


def test_parse_single_fc():
    g = ir.parse_model(_doc([FC4]))
    assert len(g.layers) == 1
    assert g.edges == ()
    assert g.layer(0).shape == FCShape(4, 4)


def test_parse_conv_fc_edge_bytes():
    conv = {"id": 0, "kind": "Conv", "hi": 56, "wi": 56, "cin": 64, "cout": 256,
            "kh": 3, "kw": 3, "stride": 1, "padding": 1}
    fc = {"id": 1, "kind": "FullyConnected", "in_features": 56 * 56 * 256, "out_features": 10}
    g = ir.parse_model(_doc([conv, fc], [(0, 1)]))
    assert len(g.edges) == 1
    expected = oracles.conv_out_elems(56, 56, 256, 3, 3, 1, 1)
    assert expected == 802816
    assert g.edges[0].nbytes == expected


def test_user_edge_bytes_overwritten(caplog):
    conv = {"id": 0, "kind": "Pointwise", "hi": 4, "wi": 4, "cin": 2, "cout": 3}
    fc = {"id": 1, "kind": "FullyConnected", "in_features": 48, "out_features": 2}
    with caplog.at_level(logging.WARNING):
        g = ir.parse_model(_doc([conv, fc], [(0, 1, 999)]))
    assert g.edges[0].nbytes == 48
    assert "ignored" in caplog.text


def test_dangling_edge_names_id():
    with pytest.raises(ir.ModelFileError, match="7"):
        ir.parse_model(_doc([FC4], [(0, 7)]))


@pytest.mark.parametrize("text, needle", [
    ("{not json", "malformed"),
    (_doc([{"id": 0, "kind": "Transformer"}]), "unknown layer kind"),
    (_doc([dict(FC4, colour=3)]), "unknown fields"),
    (_doc([{"id": 0, "kind": "FullyConnected", "in_features": 4}]), "missing field"),
    (json.dumps({"name": "m", "layers": [], "extra": 1}), "unknown top-level"),
])
def test_parse_errors(text, needle):
    with pytest.raises(ir.ModelFileError, match=needle):
        ir.parse_model(text)


def test_parse_cycle_reported():
    a = dict(FC4)
    b = dict(FC4, id=1)
    with pytest.raises(ir.ModelFileError, match="cycle"):
        ir.parse_model(_doc([a, b], [(0, 1), (1, 0)]))


def test_validate_ok_and_violations():
    ok = ir.build_graph("g", [Layer(0, ir.FC, FCShape(2, 2))], [])
    assert ir.validate_graph(ok) == []

    self_edge = ir.build_graph("g", [Layer(3, ir.FC, FCShape(2, 2))], [(3, 3)])
    assert "cycle" in {v.code for v in ir.validate_graph(self_edge)}

    dw = ir.build_graph("g", [Layer(0, ir.DEPTHWISE, ConvShape(8, 8, 4, 5, 3, 3))], [])
    assert "shape" in {v.code for v in ir.validate_graph(dw)}

    pw = ir.build_graph("g", [Layer(0, ir.POINTWISE, ConvShape(8, 8, 4, 5, 3, 3))], [])
    assert "shape" in {v.code for v in ir.validate_graph(pw)}


def test_validate_is_pure():
    g = ir.build_graph("g", [Layer(0, ir.FC, FCShape(2, 2))], [(0, 9)])
    before = ir.serialize(g)
    assert ir.validate_graph(g)
    assert ir.serialize(g) == before


def test_output_dims_examples():
    assert ir.output_dims(ConvShape(56, 56, 1, 1, 3, 3, 1, 1)) == (56, 56)
    assert ir.output_dims(ConvShape(56, 56, 1, 1, 3, 3, 2, 1)) == (28, 28)
    assert oracles.conv_out_dims(56, 56, 3, 3, 2, 1) == (28, 28)
    with pytest.raises(ValueError):
        ir.output_dims(ConvShape(5, 5, 1, 1, 7, 7, 1, 0))


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 5), st.integers(1, 5),
       st.integers(1, 3), st.integers(0, 2))
def test_output_dims_matches_window_enumeration(hi, wi, kh, kw, stride, pad):
    if hi + 2 * pad < kh or wi + 2 * pad < kw:
        return
    assert ir.output_dims(ConvShape(hi, wi, 1, 1, kh, kw, stride, pad)) == \
        oracles.conv_out_dims(hi, wi, kh, kw, stride, pad)


# -- synthetic generation ------------------------------------------------------


def test_synth_lstm_structure():
    g = generate_synthetic(SyntheticSpec("lstm", 2, 0))
    assert [l.kind for l in g.layers] == [ir.LSTM, ir.LSTM]
    assert [(e.src, e.dst) for e in g.edges] == [(0, 1)]


def test_synth_rcnn_structure():
    g = generate_synthetic(SyntheticSpec("rcnn", 6, 1))
    kinds = [l.kind for l in g.layers]
    assert kinds[0] == ir.CONV
    assert kinds[-1] == ir.LSTM
    first_lstm = kinds.index(ir.LSTM)
    assert all(k in ir.CONV_KINDS for k in kinds[:first_lstm])
    assert all(k == ir.LSTM for k in kinds[first_lstm:])


def test_synth_transducer_joint():
    g = generate_synthetic(SyntheticSpec("transducer", 8, 6))
    joint = g.layers[-1]
    assert joint.kind == ir.FC
    assert len(g.preds()[joint.id]) == 2
    assert sum(1 for l in g.layers if l.kind == ir.LSTM) == 7


@pytest.mark.parametrize("arch, depth", [("cnn", 12), ("cnn", 16), ("lstm", 3),
                                          ("transducer", 6), ("rcnn", 6)])
def test_synth_valid_and_deterministic(arch, depth):
    a = generate_synthetic(SyntheticSpec(arch, depth, 3))
    b = generate_synthetic(SyntheticSpec(arch, depth, 3))
    assert ir.validate_graph(a) == []
    assert ir.serialize(a) == ir.serialize(b)
    assert len(a.layers) == depth


def test_synth_rejects_bad_spec():
    with pytest.raises(ValueError):
        SyntheticSpec("gpt", 3)
    with pytest.raises(ValueError):
        SyntheticSpec("cnn", 0)
    with pytest.raises(ValueError):
        SyntheticSpec("transducer", 3)


# -- LSTM lowering -------------------------------------------------------------


def _lstm_graph(t, d_in=4, d_h=3):
    return ir.build_graph("l", [Layer(0, ir.LSTM, LstmShape(d_in, d_h, t))], [])


def test_lower_t1_gates_independent():
    g = ir.lower_lstm(_lstm_graph(1))
    gates = [l.id for l in g.layers if l.kind == ir.GATE]
    joins = [l.id for l in g.layers if l.kind == ir.JOIN]
    assert len(gates) == 4 and len(joins) == 1
    pairs = {(e.src, e.dst) for e in g.edges}
    assert not any((a, b) in pairs for a in gates for b in gates)
    assert all((u, joins[0]) in pairs for u in gates)


def _reachable(g, src):
    succ = g.succs()
    seen, stack = set(), [src]
    while stack:
        u = stack.pop()
        for v in succ[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def test_lower_t3_counts_and_chain():
    g = ir.lower_lstm(_lstm_graph(3))
    gates = [l for l in g.layers if l.kind == ir.GATE]
    joins = sorted((l for l in g.layers if l.kind == ir.JOIN), key=lambda l: l.shape.t)
    assert len(gates) == 12 and len(joins) == 3
    for t in range(3):
        for gl in gates:
            if gl.shape.t == t:
                assert joins[t].id in _reachable(g, gl.id)
        if t:
            assert joins[t].id in _reachable(g, joins[t - 1].id)


def test_lower_identity_without_lstm():
    g = generate_synthetic(SyntheticSpec("cnn", 12, 0))
    assert ir.lower_lstm(g) is g


def test_lower_stacked_and_consumer_wiring():
    layers = [Layer(0, ir.LSTM, LstmShape(4, 3, 2)), Layer(1, ir.LSTM, LstmShape(3, 3, 2)),
              Layer(2, ir.FC, FCShape(3, 5))]
    g = ir.lower_lstm(ir.build_graph("s", layers, [(0, 1), (1, 2)]))
    joins = {(l.shape.layer, l.shape.t): l.id for l in g.layers if l.kind == ir.JOIN}
    gates = {}
    for l in g.layers:
        if l.kind == ir.GATE:
            gates.setdefault((l.shape.layer, l.shape.t), []).append(l.id)
    pairs = {(e.src, e.dst) for e in g.edges}
    for t in range(2):
        assert all((joins[(0, t)], u) in pairs for u in gates[(1, t)])
    assert (joins[(1, 1)], 2) in pairs
    assert ir.validate_graph(g) == []


@given(st.integers(1, 6), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_lower_properties(t, stack):
    layers = [Layer(i, ir.LSTM, LstmShape(3, 3, t)) for i in range(stack)]
    g = ir.build_graph("p", layers, [(i, i + 1) for i in range(stack - 1)])
    low = ir.lower_lstm(g)
    assert len(low.layers) == stack * 5 * t
    low.topological_order()  # raises on a cycle
    assert ir.lower_lstm(low) is low
    assert ir.validate_graph(low) == []


# -- serialization -------------------------------------------------------------


def _conv_layer(draw, uid):
    kind = draw(st.sampled_from(ir.CONV_KINDS))
    hi = draw(st.integers(3, 10))
    wi = draw(st.integers(3, 10))
    cin = draw(st.integers(1, 6))
    k = 1 if kind == ir.POINTWISE else draw(st.integers(1, 3))
    cout = cin if kind == ir.DEPTHWISE else draw(st.integers(1, 6))
    return Layer(uid, kind, ConvShape(hi, wi, cin, cout, k, k,
                                      draw(st.integers(1, 2)), draw(st.integers(0, 1))))


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 6))
    layers = []
    for uid in range(n):
        if draw(st.booleans()):
            layers.append(_conv_layer(draw, uid))
        else:
            layers.append(Layer(uid, ir.FC, FCShape(draw(st.integers(1, 20)),
                                                    draw(st.integers(1, 20)))))
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if draw(st.booleans())]
    return ir.build_graph("h", layers, pairs)


@given(graphs())
@settings(max_examples=60, deadline=None)
def test_serialize_round_trip(g):
    text = ir.serialize(g)
    g2 = ir.parse_model(text)
    assert ir.serialize(g2) == text
    assert ir.normalize(text) == text
    # normalization is insensitive to key order and edge order
    doc = json.loads(text)
    doc["edges"].reverse()
    shuffled = json.dumps(doc, sort_keys=False)
    assert ir.normalize(shuffled) == text
