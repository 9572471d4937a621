import numpy as np
import pytest

from id_milp.diagram import InfluenceDiagram, Node
from id_milp.instances import generate


def tiny_diagram(p_bad=0.3, utilities=(5.0, -2.0, -10.0, 1.0)):
    """C (good/bad) observed by D (go/stop); U(C, D)."""
    nodes = [
        Node("C", "chance", ("good", "bad")),
        Node("D", "decision", ("go", "stop")),
        Node("U", "value"),
    ]
    arcs = [("C", "D"), ("C", "U"), ("D", "U")]
    return InfluenceDiagram(nodes, arcs, {"C": [[1 - p_bad, p_bad]]}, {"U": list(utilities)})


def two_stage_diagram():
    """D1 -> C -> D2 with D2 seeing C but not D1; U(D1, C, D2)."""
    nodes = [
        Node("D1", "decision", ("a", "b")),
        Node("C", "chance", ("lo", "hi")),
        Node("D2", "decision", ("x", "y")),
        Node("U", "value"),
    ]
    arcs = [("D1", "C"), ("C", "D2"), ("D1", "U"), ("C", "U"), ("D2", "U")]
    cpts = {"C": [[0.8, 0.2], [0.3, 0.7]]}
    # rows in (D1, C, D2) mixed radix, D2 fastest
    utils = {"U": [3.0, 1.0, -4.0, 6.0, 0.0, 2.0, 5.0, -1.0]}
    return InfluenceDiagram(nodes, arcs, cpts, utils)


@pytest.fixture
def tiny():
    return tiny_diagram()


@pytest.fixture
def two_stage():
    return two_stage_diagram()


@pytest.fixture(scope="session")
def oil1():
    return generate("oil", 1, 0)


@pytest.fixture(scope="session")
def water2():
    return generate("water", 2, 0)


@pytest.fixture(scope="session")
def water3():
    return generate("water", 3, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.SUMMARY:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.SUMMARY):
        terminalreporter.write_line(mod.SUMMARY[k])
