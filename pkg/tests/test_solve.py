import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from id_milp.backend import (
    BackendError,
    BackendSolution,
    check_integrality,
    cross_check,
    extract_strategy,
    format_solution,
    parse_solution,
    solve_in_process,
    solve_with_backend,
    unshifted_objective,
)
from id_milp.bnb import solve_branch_and_bound
from id_milp.diagram import DecisionStrategy, InfluenceDiagram, Node
from id_milp.enumeration import iter_strategies, solve_by_enumeration
from id_milp.evaluate import (
    cvar_batch,
    cvar_of_distribution,
    expected_utility_of_strategy,
    utility_distribution_of_strategy,
)
from id_milp.formulations import ChanceConstraintSpec, build_dpr_model
from id_milp.instances import generate
from id_milp.lpformat import LPParseError, export_lp, parse_lp
from id_milp.model import BINARY, MilpModel
from id_milp.results import CAP_EXCEEDED, FEASIBLE, INFEASIBLE, OPTIMAL, TIMEOUT
from id_milp.solve import BACKEND_ENV, resolve_backend, solve

from test_formulations import point


def _rules(strategy: DecisionStrategy):
    return {k: tuple(v) for k, v in strategy.rules.items()}


class TestEvaluate:
    def test_no_decisions(self):
        nodes = [Node("A", "chance", ("x", "y")), Node("U", "value")]
        d = InfluenceDiagram(nodes, [("A", "U")], {"A": [[0.5, 0.5]]}, {"U": [2.0, 6.0]})
        assert expected_utility_of_strategy(d, DecisionStrategy({})) == 4.0

    def test_deterministic(self, tiny):
        d = tiny.with_tables(cpts={"C": [[0.0, 1.0]]})
        s = DecisionStrategy.from_arrays({"D": [0, 1]})
        assert expected_utility_of_strategy(d, s) == 1.0
        assert utility_distribution_of_strategy(d, s) == [(1.0, 1.0)]

    def test_matches_segment_sum(self, oil1):
        pd = oracle.all_paths(oil1)
        for s in iter_strategies(oil1):
            assert expected_utility_of_strategy(oil1, s) == pytest.approx(
                oracle.expected_utility(pd, _rules(s)), abs=1e-9
            )

    def test_distribution_against_path_scan(self, water2):
        pd = oracle.all_paths(water2)
        s = DecisionStrategy.from_arrays({"M": [1], "D": [0, 1]})
        got = utility_distribution_of_strategy(water2, s)
        want = oracle.distribution(pd, _rules(s))
        assert len(got) == len(want)
        for (u1, q1), (u2, q2) in zip(got, want):
            assert u1 == pytest.approx(u2)
            assert q1 == pytest.approx(q2, abs=1e-14)
        mean = sum(u * q for u, q in got)
        assert mean == pytest.approx(expected_utility_of_strategy(water2, s))

    def test_cvar_hand_value(self):
        assert cvar_of_distribution([(0.0, 0.5), (10.0, 0.5)], 0.75) == pytest.approx(10 / 3)

    def test_cvar_edges(self):
        dist = [(-3.0, 0.2), (1.0, 0.3), (7.0, 0.5)]
        assert cvar_of_distribution(dist, 1.0) == pytest.approx(-0.6 + 0.3 + 3.5)
        assert cvar_of_distribution([(4.0, 1.0)], 0.1) == 4.0
        with pytest.raises(ValueError):
            cvar_of_distribution(dist, 0.0)

    def test_cvar_batch_matches_scalar(self, rng):
        levels = np.array([-2.0, 0.0, 3.0, 8.0])
        q = rng.dirichlet(np.ones(4), size=20)
        for alpha in (0.05, 0.3, 1.0):
            got = cvar_batch(levels, q, alpha)
            want = [oracle.cvar(list(zip(levels, row)), alpha) for row in q]
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


class TestEnumeration:
    def test_oil_scans_all_strategies(self, oil1):
        pd = oracle.all_paths(oil1)
        best, _ = oracle.best(oil1, lambda r: oracle.expected_utility(pd, r))
        res = solve_by_enumeration(oil1)
        assert res.status == OPTIMAL
        assert res.info["strategies"] == 32
        assert res.objective == pytest.approx(best, rel=1e-12)

    def test_water_k3(self, water3):
        res = solve_by_enumeration(water3)
        assert res.info["strategies"] == 81
        assert res.objective == pytest.approx(solve(water3, "dpr", "highs").objective, rel=1e-9)

    def test_cvar(self, water2):
        pd = oracle.all_paths(water2)
        best, _ = oracle.best(water2, lambda r: oracle.cvar(oracle.distribution(pd, r), 0.2))
        res = solve_by_enumeration(water2, "cvar", alpha=0.2)
        assert res.objective == pytest.approx(best, rel=1e-9)

    def test_infeasible_chance(self, tiny):
        spec = ChanceConstraintSpec(["C"], [(1,)], 0.0)
        assert solve_by_enumeration(tiny, chance_specs=[spec]).status == INFEASIBLE

    def test_cap(self):
        d = generate("oil", 2, 0)
        res = solve_by_enumeration(d, cap=1000)
        assert res.status == CAP_EXCEEDED
        assert res.strategy is None

    @pytest.mark.parametrize("family, size", [("oil", 1), ("oil", 2), ("water", 3)])
    def test_decompose_matches_full(self, family, size):
        d = generate(family, size, 4)
        full = solve_by_enumeration(d)
        fast = solve_by_enumeration(d, decompose=True)
        assert fast.objective == pytest.approx(full.objective, rel=1e-12)
        assert "collapsed_decision" in fast.info

    def test_strategy_order(self, oil1):
        first = next(iter_strategies(oil1))
        assert first.rules == {"T1": (0,), "D": (0, 0, 0, 0)}
        assert sum(1 for _ in iter_strategies(oil1)) == 32


class TestBranchAndBound:
    @pytest.mark.parametrize("family, size, seed", [("oil", 1, 0), ("oil", 2, 2), ("water", 2, 1), ("water", 3, 5)])
    def test_equals_enumeration(self, family, size, seed):
        d = generate(family, size, seed)
        ref = solve_by_enumeration(d, decompose=True)
        for collapse in (True, False):
            res = solve_branch_and_bound(d, collapse_last=collapse)
            assert res.status == OPTIMAL
            assert res.objective == pytest.approx(ref.objective, rel=1e-9)
            assert expected_utility_of_strategy(d, res.strategy) == pytest.approx(ref.objective, rel=1e-9)

    def test_single_row_is_exact(self):
        nodes = [Node("D", "decision", ("a", "b", "c")), Node("U", "value")]
        d = InfluenceDiagram(nodes, [("D", "U")], {}, {"U": [1.0, 3.0, 2.0]})
        res = solve_branch_and_bound(d, collapse_last=False)
        assert res.objective == 3.0
        assert res.info["backtracks"] == 0

    def test_deterministic_leaf_count(self, two_stage):
        d = two_stage.with_tables(cpts={"C": [[1.0, 0.0], [0.0, 1.0]]})
        res = solve_branch_and_bound(d, collapse_last=False)
        n = 2 * 2**2
        assert res.info["leaves"] <= n

    def test_bounds_never_increase_along_a_branch(self, oil1):
        res = solve_branch_and_bound(oil1, trace=True, collapse_last=False)
        bound = {fixed: b for fixed, b in res.info["trace"]}
        for fixed, b in res.info["trace"]:
            if fixed:
                assert b <= bound[fixed[:-1]] + 1e-9

    def test_root_bound_dominates_optimum(self, oil1):
        res = solve_branch_and_bound(oil1, trace=True)
        shift = 1.0 - min(oracle.all_paths(oil1).util)
        assert res.info["trace"][0][1] >= res.objective + shift - 1e-9

    def test_anytime(self):
        d = generate("turbine", 2, 1)
        res = solve_branch_and_bound(d, time_limit=0.05)
        assert res.status in (FEASIBLE, TIMEOUT, OPTIMAL)
        if res.status == FEASIBLE:
            assert res.objective == pytest.approx(expected_utility_of_strategy(d, res.strategy))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_bnb_and_enumeration_agree_on_random_diagrams(seed):
    d = oracle.random_diagram(seed, max_nodes=4)
    if math.prod(d.n_states(dn) ** d.n_info_states(dn) for dn in d.decision_nodes) > 5000:
        return
    pd = oracle.all_paths(d)
    best, _ = oracle.best(d, lambda r: oracle.expected_utility(pd, r))
    assert solve_by_enumeration(d).objective == pytest.approx(best, rel=1e-9, abs=1e-9)
    assert solve_by_enumeration(d, decompose=True).objective == pytest.approx(best, rel=1e-9, abs=1e-9)
    assert solve_branch_and_bound(d).objective == pytest.approx(best, rel=1e-9, abs=1e-9)


class TestLPFormat:
    def test_empty_model(self):
        text = export_lp(MilpModel())
        assert text.rstrip().endswith("End")
        assert "Maximize" in text

    def test_oil_dpr_counts(self, oil1):
        model, _ = build_dpr_model(oil1)
        back = parse_lp(export_lp(model))
        assert back.n_vars == 26
        assert sum(1 for t in back.vtype if t == BINARY) == 10
        assert back.n_constraints == 5 + 10 + 4

    @pytest.mark.parametrize("family, size", [("oil", 1), ("water", 2)])
    def test_round_trip(self, family, size):
        model, _ = build_dpr_model(generate(family, size, 0))
        back = parse_lp(export_lp(model))
        assert back.var_names == model.var_names
        assert (back.matrix() != model.matrix()).nnz == 0
        np.testing.assert_array_equal(back.objective_vector(), model.objective_vector())
        for a, b in zip(back.row_bounds(), model.row_bounds()):
            np.testing.assert_array_equal(a, b)
        assert back.vtype == model.vtype
        assert back.lb == model.lb and back.ub == model.ub

    def test_free_and_negative_bounds(self):
        m = MilpModel()
        a = m.add_var("a", -np.inf, np.inf)
        b = m.add_var("b", -2.5, 4.0)
        m.add_constraint("r", [a, b], [1.0, -3.0], ">=", -7.0)
        m.set_objective([a, b], [0.0, 1.0])
        back = parse_lp(export_lp(m))
        assert back.lb == [-np.inf, -2.5] and back.ub == [np.inf, 4.0]
        assert back.constraints[0].sense == ">="

    @pytest.mark.parametrize("text", ["Subject To\n r: x + <= 3\nEnd", "Maximize\n obj: 2 x\nSubject To\n r: x ?? 1\nEnd"])
    def test_parse_errors(self, text):
        with pytest.raises(LPParseError):
            parse_lp(text)


def _fixture_backend(tmp_path, solution_text):
    sol = tmp_path / "fixed.sol"
    sol.write_text(solution_text)
    script = tmp_path / "echo_backend.py"
    script.write_text(
        "import shutil, sys\n"
        f"shutil.copyfile({str(sol)!r}, sys.argv[2])\n"
    )
    return f"{sys.executable} {script}"


class TestBackend:
    def test_echoed_oracle_solution(self, tmp_path, oil1):
        pd = oracle.all_paths(oil1)
        best, rules = oracle.best(oil1, lambda r: oracle.expected_utility(pd, r))
        model, vm = build_dpr_model(oil1)
        x = point(model, vm, oil1, rules)
        sol = BackendSolution(OPTIMAL, model.evaluate(x), dict(zip(model.var_names, x.tolist())))
        cmd = _fixture_backend(tmp_path, format_solution(sol))
        got = solve_with_backend(model, cmd)
        strategy = extract_strategy(got, vm, model)
        assert _rules(strategy) == rules
        assert unshifted_objective(got, vm) == pytest.approx(best, rel=1e-12)
        res = solve(oil1, "dpr", f"backend:{cmd}")
        assert res.objective == pytest.approx(best, rel=1e-12)
        assert res.info["objective_consistent"]

    def test_infeasible_status(self, tmp_path, oil1):
        cmd = _fixture_backend(tmp_path, "status infeasible\nobjective nan\n")
        model, vm = build_dpr_model(oil1)
        assert solve_with_backend(model, cmd).status == INFEASIBLE
        assert solve(oil1, "dpr", f"backend:{cmd}").status == INFEASIBLE

    def test_non_integral_binary(self, tmp_path, oil1):
        model, vm = build_dpr_model(oil1)
        name = model.var_names[vm.z["T1"][0, 0]]
        cmd = _fixture_backend(tmp_path, f"status optimal\nobjective 1\n{name} 0.4\n")
        with pytest.raises(BackendError, match="non-integral"):
            solve_with_backend(model, cmd)

    def test_failing_command(self, oil1):
        model, _ = build_dpr_model(oil1)
        with pytest.raises(BackendError, match="exited with code"):
            solve_with_backend(model, f"{sys.executable} -c 'import sys; sys.exit(3)'")
        with pytest.raises(BackendError, match="not found"):
            solve_with_backend(model, "/nonexistent/solver")

    def test_bundled_backend_and_env(self, oil1, monkeypatch):
        ref = solve(oil1, "dpr", "highs").objective
        monkeypatch.delenv(BACKEND_ENV, raising=False)
        assert solve(oil1, "dpr", "backend").objective == pytest.approx(ref, rel=1e-9)
        monkeypatch.setenv(BACKEND_ENV, "my-solver --flag")
        assert resolve_backend("backend") == "my-solver --flag"
        assert resolve_backend("backend:other") == "other"
        assert resolve_backend("highs") is None

    def test_solution_text_round_trip(self):
        sol = BackendSolution(FEASIBLE, None, {"a": 1.0, "b": 0.25})
        back = parse_solution(format_solution(sol))
        assert back.status == FEASIBLE and back.objective is None and back.values == sol.values
        with pytest.raises(BackendError):
            parse_solution("objective 3\n")

    def test_extract_rejects_zero_row(self, oil1):
        model, vm = build_dpr_model(oil1)
        values = {n: 0.0 for n in model.var_names}
        with pytest.raises(BackendError, match="not one-hot"):
            extract_strategy(BackendSolution(OPTIMAL, 0.0, values), vm, model)

    def test_extract_hand_built(self, oil1):
        model, vm = build_dpr_model(oil1)
        rules = {"T1": (1,), "D": (0, 1, 0, 1)}
        x = point(model, vm, oil1, rules)
        sol = check_integrality(BackendSolution(OPTIMAL, 0.0, dict(zip(model.var_names, x.tolist()))), model)
        assert _rules(extract_strategy(sol, vm, model)) == rules

    def test_cross_check(self, oil1):
        model, vm = build_dpr_model(oil1)
        sol = solve_in_process(model)
        strategy = extract_strategy(sol, vm, model)
        eu, reported, ok = cross_check(oil1, strategy, sol, vm)
        assert ok and eu == pytest.approx(reported)


class TestSolveEntry:
    @pytest.mark.parametrize("formulation", ["dp", "dpr", "dpr-nocuts"])
    def test_routes_agree(self, oil1, formulation):
        ref = solve(oil1, formulation, "enum").objective
        res = solve(oil1, formulation, "highs")
        assert res.status == OPTIMAL
        assert res.objective == pytest.approx(ref, rel=1e-9)
        assert res.info["recomputed_eu"] == pytest.approx(ref, rel=1e-9)
        assert res.tau_t == pytest.approx(res.tau_p + res.tau_s)

    def test_zero_time_limit(self, oil1):
        assert solve(oil1, "dpr", "highs", time_limit=0).status == TIMEOUT

    def test_unknown_names(self, oil1):
        with pytest.raises(ValueError):
            solve(oil1, "rjt", "highs")
        with pytest.raises(ValueError):
            solve(oil1, "dpr", "gurobi")
        with pytest.raises(ValueError):
            solve(oil1, "cvar", "bnb", alpha=0.5)

    def test_cvar_needs_alpha(self, water2):
        with pytest.raises(ValueError):
            solve(water2, "cvar", "highs")

    def test_result_json(self, oil1):
        out = solve(oil1, "dpr", "enum").to_json(oil1)
        assert set(out) >= {"status", "objective", "strategy", "distribution", "tau_p", "tau_s", "tau_t"}
        assert out["strategy"]["T1"][0] in ("yes", "no")
        assert sum(q for _, q in out["distribution"]) == pytest.approx(1.0)
