import numpy as np
import pytest

from provgraph.errors import InvalidGroundTruth
from provgraph.graph import ProvenanceGraph
from provgraph.metrics import METRIC_NAMES, EvalReport, SizeClass, aggregate, format_table, score

from oracles import random_graph, veo


def g(nodes, edges):
    return ProvenanceGraph.from_edges(nodes, edges)


def test_perfect_prediction():
    t = g("123", [("1", "2"), ("2", "3")])
    r = score(t, t)
    assert [getattr(r, m) for m in METRIC_NAMES] == [1.0] * 5


def test_veo_fixture():
    r = score(g("123", [("1", "2"), ("1", "3")]), g("123", [("1", "2"), ("2", "3")]))
    assert (r.precision_nodes, r.recall_nodes) == (1.0, 1.0)
    assert (r.precision_edges, r.recall_edges) == (0.5, 0.5)
    assert r.veo == 0.8


def test_node_precision_fixture():
    r = score(g("abcd", []), g("abe", []))
    assert r.precision_nodes == 0.5
    assert abs(r.recall_nodes - 2 / 3) <= 1e-12


def test_empty_truth_rejected():
    with pytest.raises(InvalidGroundTruth):
        score(g("a", []), g("", []))


def test_empty_prediction_precision_zero():
    r = score(g("", []), g("ab", [("a", "b")]))
    assert r.precision_nodes == 0.0 and r.precision_edges == 0.0 and r.veo == 0.0


def test_size_classes():
    assert SizeClass.of(12) is SizeClass.SMALL
    assert SizeClass.of(13) is SizeClass.MEDIUM
    assert SizeClass.of(20) is SizeClass.MEDIUM
    assert SizeClass.of(21) is SizeClass.LARGE


@pytest.mark.parametrize("seed", range(25))
def test_random_pairs_against_oracle(seed):
    rng = np.random.default_rng(seed)
    pn, pe = random_graph(rng)
    tn, te = random_graph(rng)
    p, t = g(pn, pe), g(tn, te)
    r, back = score(p, t), score(t, p)
    assert abs(r.veo - veo(pn, pe, tn, te)) <= 1e-12
    assert abs(r.veo - back.veo) <= 1e-12
    assert abs(r.precision_nodes - back.recall_nodes) <= 1e-12


def _report(v, n=5):
    return EvalReport(1.0, 1.0, v, v, v, SizeClass.of(n))


def test_aggregate_single():
    table = aggregate([_report(0.7)])
    assert table["Small"]["veo"] == {"mean": 0.7, "std": 0.0}
    assert table["Medium"] is None and table["Large"] is None


def test_aggregate_sample_std():
    row = aggregate([_report(0.8), _report(0.6)])["Overall"]
    assert row["veo"]["mean"] == pytest.approx(0.7)
    assert row["veo"]["std"] == pytest.approx(0.1414213562, abs=1e-9)


def test_aggregate_all_classes():
    table = aggregate([_report(0.5, 4), _report(0.6, 15), _report(0.9, 30)])
    assert [k for k, v in table.items() if v] == ["Small", "Medium", "Large", "Overall"]
    assert table["Overall"]["count"] == 3


def test_format_table_marks_absent():
    text = format_table(aggregate([_report(0.5)] * 5))
    assert "absent" in text
    small = next(line for line in text.splitlines() if line.startswith("Small"))
    assert "0.50 ∓0.00" in small


def test_aggregate_needs_reports():
    with pytest.raises(ValueError):
        aggregate([])
