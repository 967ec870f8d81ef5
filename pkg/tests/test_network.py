"""Topology parsing, dimension accounting, and feedforward analysis."""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ttlnet import (
    BudgetExceededError,
    TopologyError,
    analyze,
    fundamental_rate,
    parse_topology,
    state_space_size,
    superpose,
)

LINE2 = {
    "nodes": [
        {"id": "C1", "policy": "Sigma", "ttl": {"exp": 1.0}},
        {"id": "C2", "policy": "Sigma", "ttl": {"exp": 1.0}, "children": ["C1"]},
    ],
    "arrivals": {"C1": {"poisson": 1.0}},
}

TREE3 = {
    "nodes": [
        {"id": "C1", "policy": "Sigma", "ttl": {"exp": 1.0}},
        {"id": "C2", "policy": "Sigma", "ttl": {"exp": 1.0}},
        {"id": "C3", "policy": "Sigma", "ttl": {"exp": 1.0}, "children": ["C1", "C2"]},
    ],
    "arrivals": {"C1": {"poisson": 1.0}, "C2": {"poisson": 1.0}},
}


class TestParsing:
    def test_line_document(self):
        topo = parse_topology(json.dumps(LINE2))
        assert topo.node_order == ["C1", "C2"]
        assert topo.leaves == ["C1"]
        assert topo.sinks == ["C2"]
        assert len(topo.objects) == 1

    def test_tree_document(self):
        topo = parse_topology(TREE3)
        assert topo.leaves == ["C1", "C2"]
        assert topo.parents_of("C1") == ["C3"]

    def test_split_not_stochastic(self):
        doc = {
            "nodes": [
                {"id": "a", "policy": "R", "ttl": {"exp": 1.0}, "split": [0.5, 0.6]},
                {"id": "b", "policy": "R", "ttl": {"exp": 1.0}, "children": ["a"]},
                {"id": "c", "policy": "R", "ttl": {"exp": 1.0}, "children": ["a"]},
            ],
            "arrivals": {"a": {"poisson": 1.0}},
        }
        with pytest.raises(TopologyError, match="split not stochastic"):
            parse_topology(doc)

    def test_cycle_detected(self):
        doc = {
            "nodes": [
                {"id": "a", "policy": "R", "ttl": {"exp": 1.0}, "children": ["b"]},
                {"id": "b", "policy": "R", "ttl": {"exp": 1.0}, "children": ["a"]},
            ],
            "arrivals": {},
        }
        with pytest.raises(TopologyError, match="cyclic"):
            parse_topology(doc)

    def test_dangling_child(self):
        doc = {
            "nodes": [{"id": "a", "policy": "R", "ttl": {"exp": 1.0}, "children": ["zz"]}],
            "arrivals": {},
        }
        with pytest.raises(TopologyError, match="dangling"):
            parse_topology(doc)

    def test_schema_violation_is_path_qualified(self):
        doc = {"nodes": [{"id": "a", "policy": "LRU", "ttl": {"exp": 1.0}}], "arrivals": {}}
        with pytest.raises(TopologyError, match=r"\$\.nodes\[0\]"):
            parse_topology(doc)

    def test_min_policy_requires_second_ttl(self):
        doc = {
            "nodes": [{"id": "a", "policy": "MinSigmaR", "ttl": {"exp": 1.0}}],
            "arrivals": {"a": {"poisson": 1.0}},
        }
        with pytest.raises(TopologyError, match="ttl_r"):
            parse_topology(doc)

    def test_missing_arrivals_for_leaf(self):
        doc = {
            "nodes": [{"id": "a", "policy": "R", "ttl": {"exp": 1.0}}],
            "arrivals": {},
        }
        with pytest.raises(TopologyError, match="no arrival process"):
            parse_topology(doc)

    def test_multi_parent_requires_split(self):
        doc = {
            "nodes": [
                {"id": "a", "policy": "R", "ttl": {"exp": 1.0}},
                {"id": "p1", "policy": "R", "ttl": {"exp": 1.0}, "children": ["a"]},
                {"id": "p2", "policy": "R", "ttl": {"exp": 1.0}, "children": ["a"]},
            ],
            "arrivals": {"a": {"poisson": 1.0}},
        }
        with pytest.raises(TopologyError, match="split"):
            parse_topology(doc)

    def test_objects_with_overrides(self):
        doc = dict(LINE2)
        doc["objects"] = ["hot", {"id": "cold", "arrivals": {"C1": {"poisson": 0.1}}}]
        topo = parse_topology(doc)
        assert [o.id for o in topo.objects] == ["hot", "cold"]
        assert topo.arrival_for(topo.objects[1], "C1").rate == 0.1
        assert topo.arrival_for(topo.objects[0], "C1").rate == 1.0


class TestDimensions:
    def test_single_node(self):
        doc = {
            "nodes": [{"id": "a", "policy": "R", "ttl": {"exp": 2.0}}],
            "arrivals": {"a": {"poisson": 1.0}},
        }
        dims = state_space_size(parse_topology(doc))
        assert dims == {"a": {"input": 1, "output": 2}}

    def test_height_two_tree_root_is_eight(self):
        dims = state_space_size(parse_topology(TREE3))
        assert dims["C3"] == {"input": 4, "output": 8}

    def test_height_three_binary_tree(self):
        nodes = [
            {"id": f"l{i}", "policy": "Sigma", "ttl": {"exp": 1.0}} for i in range(4)
        ]
        nodes += [
            {"id": "m0", "policy": "Sigma", "ttl": {"exp": 1.0}, "children": ["l0", "l1"]},
            {"id": "m1", "policy": "Sigma", "ttl": {"exp": 1.0}, "children": ["l2", "l3"]},
            {"id": "root", "policy": "Sigma", "ttl": {"exp": 1.0}, "children": ["m0", "m1"]},
        ]
        doc = {
            "nodes": nodes,
            "arrivals": {f"l{i}": {"poisson": 1.0} for i in range(4)},
        }
        dims = state_space_size(parse_topology(doc))
        assert dims["l0"] == {"input": 1, "output": 2}
        assert dims["m0"] == {"input": 4, "output": 8}
        assert dims["root"] == {"input": 64, "output": 128}

    def test_min_policy_dimension(self):
        doc = {
            "nodes": [
                {
                    "id": "a",
                    "policy": "MinSigmaR",
                    "ttl": {"erlang": {"stages": 2, "rate": 1.0}},
                    "ttl_r": {"erlang": {"stages": 3, "rate": 1.0}},
                }
            ],
            "arrivals": {"a": {"mmpp": {"q": [[-1.0, 1.0], [1.0, -1.0]], "rates": [1.0, 2.0]}}},
        }
        dims = state_space_size(parse_topology(doc))
        assert dims["a"] == {"input": 2, "output": 2 * (6 + 1)}


class TestAnalyze:
    def test_line_metrics(self):
        res = analyze(parse_topology(LINE2))
        assert_allclose(res.metrics["C1"].hit_probability, 0.5, rtol=1e-12)
        assert res.dimensions["C2"] == {"input": 2, "output": 4}
        # the second cache sees the hypoexponential miss stream, not Poisson
        assert res.metrics["C2"].miss_rate < res.metrics["C1"].miss_rate
        assert_allclose(res.origin_miss_rate, res.metrics["C2"].miss_rate, rtol=0)

    def test_tree_root_dimensions_and_rates(self):
        res = analyze(parse_topology(TREE3))
        assert res.dimensions["C3"]["output"] == 8
        assert_allclose(
            res.metrics["C3"].input_rate,
            res.metrics["C1"].miss_rate + res.metrics["C2"].miss_rate,
            rtol=1e-9,
        )

    def test_budget_refusal_names_offender(self):
        with pytest.raises(BudgetExceededError) as err:
            analyze(parse_topology(TREE3), budget=4)
        assert err.value.node_id == "C3"
        assert err.value.dimension == 8

    def test_analyzed_dimensions_match_prediction(self):
        topo = parse_topology(TREE3)
        res = analyze(topo)
        assert res.dimensions == state_space_size(topo)

    def test_monotone_miss_rate_along_line(self):
        doc = {
            "nodes": [
                {"id": "c1", "policy": "R", "ttl": {"exp": 0.7}},
                {"id": "c2", "policy": "Sigma", "ttl": {"erlang": {"stages": 2, "rate": 2.0}}, "children": ["c1"]},
                {"id": "c3", "policy": "MinSigmaR", "ttl": {"exp": 1.0}, "ttl_r": {"exp": 2.0}, "children": ["c2"]},
            ],
            "arrivals": {"c1": {"poisson": 1.3}},
        }
        res = analyze(parse_topology(doc))
        rates = [res.metrics[n].miss_rate for n in ("c1", "c2", "c3")]
        assert rates[0] >= rates[1] >= rates[2]

    def test_split_conserves_rates(self):
        doc = {
            "nodes": [
                {"id": "leaf", "policy": "Sigma", "ttl": {"exp": 1.0}, "split": [0.3, 0.7]},
                {"id": "p1", "policy": "Sigma", "ttl": {"exp": 1.0}, "children": ["leaf"]},
                {"id": "p2", "policy": "Sigma", "ttl": {"exp": 2.0}, "children": ["leaf"]},
            ],
            "arrivals": {"leaf": {"poisson": 2.0}},
        }
        res = analyze(parse_topology(doc))
        assert_allclose(
            res.metrics["p1"].input_rate + res.metrics["p2"].input_rate,
            res.metrics["leaf"].miss_rate,
            rtol=1e-9,
        )
        assert_allclose(res.metrics["p1"].input_rate / res.metrics["p2"].input_rate,
                        0.3 / 0.7, rtol=1e-9)

    def test_deterministic_ttl_goes_through_erlang_surrogate(self):
        doc = {
            "nodes": [{"id": "a", "policy": "Sigma", "ttl": {"det": 1.0}}],
            "arrivals": {"a": {"poisson": 1.0}},
        }
        topo = parse_topology(doc)
        dims = state_space_size(topo)
        assert dims["a"]["output"] == 21  # 20-stage surrogate plus the absorbing layer
        res = analyze(topo)
        # exact value is 0.5; the surrogate is close but not exact
        assert abs(res.metrics["a"].hit_probability - 0.5) < 0.02

    def test_result_round_trips_through_json(self):
        from ttlnet import AnalysisResult

        res = analyze(parse_topology(TREE3))
        payload = json.loads(json.dumps(res.to_dict()))
        back = AnalysisResult.from_dict(payload)
        assert back.object_id == res.object_id
        assert back.metrics == res.metrics
        assert back.dimensions == res.dimensions


class TestSplitMergeRoundTrip:
    def test_round_trip_preserves_rate(self, rng):
        from conftest import random_map
        from ttlnet import ProbabilityVector, split

        for _ in range(10):
            m = random_map(rng, 3)
            p = ProbabilityVector(rng.dirichlet(np.ones(3) * 2.0))
            merged = superpose(split(m, p))
            assert_allclose(fundamental_rate(merged), fundamental_rate(m), rtol=1e-9)
