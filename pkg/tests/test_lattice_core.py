import json

import numpy as np
import pytest

from crystalwalk.errors import GraphFormatError, ParameterError
from crystalwalk.lattice_core import (BUILTIN_KEYS, build_builtin, graph_to_json, load_graph,
                                      make_graph, read_graph, reversal_multisets, save_graph,
                                      validate, write_graph)


@pytest.mark.parametrize("name", sorted(BUILTIN_KEYS))
def test_builtin_simple_walks_validate(name):
    g = build_builtin(name)
    assert validate(g).ok
    np.testing.assert_allclose(g.transition_matrix().sum(axis=1), 1.0, atol=1e-15)


def test_builtin_vertex_order_and_base():
    g = build_builtin("hexagonal")
    assert g.vertices == ("x1", "x2")
    assert g.base_vertex == "x1"
    assert {e.id for e in g.edges} == {"e1", "e1bar", "e2", "e2bar", "e3", "e3bar"}


def test_builtin_rejects_unknown_and_unnormalized():
    with pytest.raises(ParameterError, match="unknown builtin"):
        build_builtin("kagome")
    with pytest.raises(ParameterError, match="unknown parameter"):
        build_builtin("square", {"gamma": 0.1})
    with pytest.raises(ParameterError, match="normalization"):
        build_builtin("square", {"alpha": 0.5})
    with pytest.raises(ParameterError, match="nonnegative"):
        build_builtin("square", {"alpha": -0.25, "alpha_p": 0.75})


def test_inverse_translations_negate():
    g = build_builtin("triangular")
    for e in g.edges:
        assert g.edge(e.inverse).translation == tuple(-t for t in e.translation)
    left, right = reversal_multisets(g)
    assert left == right


def test_validate_reports_row_sum_and_positivity():
    g = make_graph(1, ["x"], [("a", "x", "x", (1,), 0.9, "b"), ("b", "x", "x", (-1,), 0.0, "a")])
    report = validate(g)
    assert not report.ok
    assert any("row sum" in v and "at x" in v for v in report.violations)


def test_validate_zero_pair_probability():
    g = make_graph(1, ["x"], [("a", "x", "x", (1,), 0.0, "b"), ("b", "x", "x", (-1,), 0.0, "a"),
                              ("c", "x", "x", (1,), 0.5, "d"), ("d", "x", "x", (-1,), 0.5, "c")])
    assert "p(e)+p(ē)>0 violated at a" in validate(g).violations


def test_validate_self_inverse_edge():
    g = make_graph(1, ["x"], [("a", "x", "x", (0,), 1.0, "a")])
    assert any("self-inverse" in v for v in validate(g).violations)


def test_validate_irreducibility():
    g = make_graph(1, ["u", "v"], [("a", "u", "v", (0,), 1.0, "b"), ("b", "v", "u", (0,), 0.0, "a"),
                                   ("c", "v", "v", (1,), 0.5, "d"), ("d", "v", "v", (-1,), 0.5, "c")])
    assert "quotient walk is not irreducible" in validate(g).violations


def test_structural_errors_carry_location():
    with pytest.raises(GraphFormatError) as exc:
        make_graph(2, ["x"], [("a", "x", "x", (1, 0), 1.0, "missing")])
    assert "dangling inverse" in str(exc.value)
    assert exc.value.location == "edges[0].inverse"
    with pytest.raises(GraphFormatError, match="unknown vertex"):
        make_graph(1, ["x"], [("a", "x", "y", (1,), 1.0, "a")])
    with pytest.raises(GraphFormatError, match="duplicate edge id"):
        make_graph(1, ["x"], [("a", "x", "x", (1,), 0.5, "a"), ("a", "x", "x", (1,), 0.5, "a")])


def test_load_graph_dimension_mismatch():
    doc = {"dim": 2, "vertices": ["x"],
           "edges": [{"id": "a", "from": "x", "to": "x", "translation": [1], "p": 1, "inverse": "a"}]}
    with pytest.raises(GraphFormatError, match="dimension mismatch") as exc:
        load_graph(doc)
    assert exc.value.location == "edges[0].translation"


def test_load_graph_rationals_and_json_errors():
    doc = save_graph(build_builtin("square"))
    for e in doc["edges"]:
        e["p"] = "1/4"
    assert load_graph(doc) == build_builtin("square")
    with pytest.raises(GraphFormatError, match="cannot parse probability"):
        load_graph({**doc, "edges": [{**doc["edges"][0], "p": "x/y"}] + doc["edges"][1:]})
    with pytest.raises(GraphFormatError) as exc:
        load_graph("{not json")
    assert "line 1" in exc.value.location
    with pytest.raises(GraphFormatError, match="missing field 'dim'"):
        load_graph({"vertices": [], "edges": []})


@pytest.mark.parametrize("name", sorted(BUILTIN_KEYS))
def test_json_round_trip(name, tmp_path):
    g = build_builtin(name, None)
    assert load_graph(graph_to_json(g)) == g
    path = tmp_path / "g.json"
    write_graph(g, str(path))
    assert read_graph(str(path)) == g
    assert json.loads(path.read_text())["dim"] == 2


def test_with_probabilities_keeps_structure():
    g = build_builtin("square")
    h = g.with_probabilities([0.4, 0.1, 0.3, 0.2])
    assert h.vertices == g.vertices and [e.id for e in h.edges] == [e.id for e in g.edges]
    np.testing.assert_allclose(h.prob, [0.4, 0.1, 0.3, 0.2])
    assert h != g
