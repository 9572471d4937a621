import json
import math

import numpy as np
import pytest

from id_milp.diagram import (
    DecisionStrategy,
    DiagramError,
    InfluenceDiagram,
    Node,
    StrategySpaceOverflow,
    load_diagram,
    observation_set,
    observed_chance_nodes,
    renormalize_rows,
    save_diagram,
    strategy_space_size,
    topological_order,
    validate_diagram,
)
from id_milp.instances import generate


def _chance(name, k=2):
    return Node(name, "chance", tuple(f"s{i}" for i in range(k)))


class TestValidation:
    def test_generated_oil_is_clean(self, oil1):
        report = validate_diagram(oil1)
        assert report.ok
        assert report.findings == []

    def test_two_node_cycle(self):
        d = InfluenceDiagram([_chance("A"), _chance("B")], [("A", "B"), ("B", "A")])
        report = validate_diagram(d)
        assert "cycle" in report.categories()
        assert not report.ok

    def test_row_sum_finding_names_the_sum(self):
        d = InfluenceDiagram([_chance("A")], [], {"A": [[0.5, 0.4]]})
        report = validate_diagram(d)
        assert "cpt-row-sum" in report.categories()
        assert any("sums to 0.9" in str(f) for f in report.findings)

    def test_self_loop_and_unknown_node(self):
        d = InfluenceDiagram([_chance("A")], [("A", "A"), ("A", "Z")], {"A": [[0.5, 0.5]]})
        cats = validate_diagram(d).categories()
        assert {"cycle", "unknown-node"} <= cats

    def test_value_node_rules(self):
        nodes = [_chance("A"), Node("U", "value", ("x",)), Node("V", "value")]
        d = InfluenceDiagram(nodes, [("A", "U"), ("V", "A")], {"A": [[1.0, 0.0]]})
        cats = validate_diagram(d).categories()
        assert "states" in cats
        assert "value-node-outgoing" in cats

    def test_duplicates(self):
        d = InfluenceDiagram([_chance("A"), _chance("A")], [("A", "A")])
        assert "duplicate-name" in validate_diagram(d).categories()
        d = InfluenceDiagram([_chance("A"), _chance("B")], [("A", "B"), ("A", "B")])
        assert "duplicate-arc" in validate_diagram(d).categories()

    def test_table_shapes(self, tiny):
        bad = tiny.with_tables(cpts={"C": [[0.5, 0.5], [0.5, 0.5]]})
        assert "cpt-shape" in validate_diagram(bad).categories()
        bad = tiny.with_tables(utilities={"U": [1.0, 2.0]})
        assert "utility-shape" in validate_diagram(bad).categories()
        bad = tiny.with_tables(utilities={"U": [1.0, np.inf, 0.0, 0.0]})
        assert "utility-nonfinite" in validate_diagram(bad).categories()

    def test_missing_tables(self, tiny):
        assert "cpt-missing" in validate_diagram(tiny.with_tables(cpts={})).categories()
        assert "utility-missing" in validate_diagram(tiny.with_tables(utilities={})).categories()

    def test_negative_probability(self, tiny):
        bad = tiny.with_tables(cpts={"C": [[1.2, -0.2]]})
        assert "cpt-range" in validate_diagram(bad).categories()

    def test_require_valid_raises(self):
        d = InfluenceDiagram([_chance("A"), _chance("B")], [("A", "B"), ("B", "A")])
        with pytest.raises(DiagramError):
            d.require_valid()


class TestRenormalization:
    def test_rows_within_tolerance_are_rescaled(self):
        t = renormalize_rows(np.array([[0.5, 0.5 + 5e-10], [0.5, 0.4]]))
        assert t[0].sum() == pytest.approx(1.0, abs=1e-15)
        assert t[1].sum() == pytest.approx(0.9)

    def test_from_dict_renormalizes(self, tiny):
        data = tiny.to_dict()
        data["cpts"]["C"] = [[0.7, 0.3 + 4e-10]]
        d = InfluenceDiagram.from_dict(data)
        assert validate_diagram(d).ok


class TestTopologicalOrder:
    def test_chain(self):
        nodes = [_chance("C1"), Node("D1", "decision", ("a", "b")), Node("V1", "value")]
        d = InfluenceDiagram(nodes, [("C1", "D1"), ("D1", "V1")])
        assert topological_order(d) == ["C1", "D1", "V1"]

    def test_declaration_tie_break(self):
        d = InfluenceDiagram([_chance("B"), _chance("A")], [])
        assert topological_order(d) == ["B", "A"]

    def test_cycle_raises(self):
        d = InfluenceDiagram([_chance("A"), _chance("B")], [("A", "B"), ("B", "A")])
        with pytest.raises(DiagramError):
            topological_order(d)

    def test_parents_precede_children(self):
        d = generate("turbine", 2, 0)
        order = topological_order(d)
        pos = {n: i for i, n in enumerate(order)}
        assert all(pos[a] < pos[b] for a, b in d.arcs)


class TestObservationSet:
    def test_oil(self, oil1):
        assert observation_set(oil1) == ["T1", "R1", "D"]
        assert observed_chance_nodes(oil1) == ["R1"]

    def test_turbine(self):
        d = generate("turbine", 2, 0)
        assert set(observation_set(d)) == {"FH", "SE", "TE", "IN", "SR", "TR", "M"}

    def test_no_decisions(self):
        d = InfluenceDiagram([_chance("A")], [], {"A": [[0.5, 0.5]]})
        assert observation_set(d) == []


class TestStrategySpace:
    def test_water_k3(self, water3):
        assert strategy_space_size(water3) == 3 * 3**3 == 81

    def test_oil_m1(self, oil1):
        assert strategy_space_size(oil1) == 2 * 2**4 == 32

    def test_single_decision(self):
        d = InfluenceDiagram([Node("D", "decision", tuple("abcde"))], [])
        assert strategy_space_size(d) == 5

    def test_overflow_reports_log2(self):
        d = generate("oil", 3, 0)
        with pytest.raises(StrategySpaceOverflow) as err:
            strategy_space_size(d)
        assert err.value.log2_size == pytest.approx(3 + 64)


class TestStrategy:
    def test_one_hot_rows(self, oil1):
        s = DecisionStrategy.from_arrays({"T1": [1], "D": [0, 1, 1, 0]})
        s.check(oil1)
        oh = s.one_hot(oil1)
        assert oh["D"].shape == (4, 2)
        assert (oh["D"].sum(axis=1) == 1).all()
        assert s.to_json(oil1) == {"T1": ["no"], "D": ["yes", "no", "no", "yes"]}

    @pytest.mark.parametrize("rules", [{"T1": [0]}, {"T1": [2], "D": [0, 0, 0, 0]}, {"T1": [0], "D": [0]}])
    def test_check_rejects(self, oil1, rules):
        with pytest.raises(DiagramError):
            DecisionStrategy.from_arrays(rules).check(oil1)


class TestSerialization:
    def test_round_trip(self, tmp_path, oil1):
        p = tmp_path / "oil.json"
        save_diagram(oil1, p)
        assert load_diagram(p) == oil1
        data = json.loads(p.read_text())
        assert [n["name"] for n in data["nodes"]] == oil1.names

    def test_ragged_cpt_is_reported(self, tmp_path, tiny):
        data = tiny.to_dict()
        data["cpts"]["C"] = [[0.5, 0.5], [1.0]]
        d = InfluenceDiagram.from_dict(data)
        assert "cpt-shape" in validate_diagram(d).categories()

    def test_tables_are_read_only(self, tiny):
        with pytest.raises(ValueError):
            tiny.cpts["C"][0, 0] = 0.1

    def test_info_index_mixed_radix(self):
        d = generate("oil", 2, 0)
        # D observes R1 (4 states) then R2 (4 states); the last parent varies fastest
        assert d.parents("D") == ("R1", "R2")
        assert d.info_index("D", {"R1": 2, "R2": 3}) == 2 * 4 + 3
        assert d.n_info_states("D") == 16 == math.prod(d.sizes(["R1", "R2"]))
