import networkx as nx
import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.sparse import lil_matrix

from _instances import random_pair
from multidraft.coupling import (
    build_flow,
    coupling_marginal_errors,
    max_flow,
    membership_cost,
    optimal_acceptance,
    optimal_plan,
    otm_accept_rule,
    plan_cost,
    plan_output_dist,
    reconstruct_full_coupling,
    spechub_plan,
)
from multidraft.draftjoint import hub_joint, independent_joint, sample_pair, wor_joint
from multidraft.errors import InvalidArgument, ResourceLimit
from multidraft.verify import analytic_rates_spechub, hub_acceptance

P = np.array([0.1, 0.6, 0.3])
Q = np.array([0.5, 0.3, 0.2])
JOINTS = {"independent": independent_joint, "wor": wor_joint, "hub": hub_joint}


def lp_optimum(joint, p):
    """Acceptance-only LP: two entries per support pair, capped by pair and target mass."""
    x1, x2, mass = joint.support()
    n = mass.size
    V = p.size
    A = lil_matrix((n + V, 2 * n))
    for i in range(n):
        A[i, i] = 1
        A[i, n + i] = 1
        A[n + x1[i], i] += 1
        A[n + x2[i], n + i] += 1
    b = np.concatenate([mass, p])
    res = linprog(-np.ones(2 * n), A_ub=A.tocsr(), b_ub=b, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0
    return -res.fun


def literal_network_value(joint, p):
    """Max flow on the token graph itself (no node splitting), via networkx."""
    g = nx.DiGraph()
    fm = joint.first_marginal()
    for u in range(p.size):
        g.add_edge("s", u, capacity=float(fm[u]))
        g.add_edge(u, "t", capacity=float(p[u]))
    x1, x2, mass = joint.support()
    for u, v, m in zip(x1, x2, mass):
        if u != v:
            g.add_edge(int(u), int(v), capacity=float(m))
    return nx.maximum_flow_value(g, "s", "t")


class TestHandInstances:
    def test_two_token_point_target(self):
        assert optimal_acceptance(independent_joint([0.5, 0.5]), [1.0, 0.0]) == 0.75

    def test_worked_instance(self):
        assert optimal_acceptance(hub_joint(Q), P) == pytest.approx(1.0, abs=1e-15)
        assert optimal_acceptance(wor_joint(Q), P) == pytest.approx(1.0, abs=1e-15)
        # value confirmed against the LP oracle in the parametrized test below
        assert lp_optimum(independent_joint(Q), P) == pytest.approx(0.85, abs=1e-9)
        assert optimal_acceptance(independent_joint(Q), P) == pytest.approx(0.85, abs=1e-12)

    def test_identical(self):
        p = np.array([0.2, 0.3, 0.5])
        for make in JOINTS.values():
            assert optimal_acceptance(make(p), p) == pytest.approx(1.0, abs=1e-15)

    def test_size_mismatch(self):
        with pytest.raises(InvalidArgument):
            build_flow(independent_joint([0.5, 0.5]), [1.0, 0.0, 0.0])


@pytest.mark.parametrize("name", list(JOINTS))
def test_flow_matches_lp_and_literal_graph(name):
    rng = np.random.default_rng(100)
    for _ in range(40):
        V = int(rng.integers(2, 13))
        p, q = random_pair(rng, V)
        joint = JOINTS[name](q)
        value = optimal_acceptance(joint, p)
        assert value == pytest.approx(lp_optimum(joint, p), abs=1e-9)
        assert value == pytest.approx(literal_network_value(joint, p), abs=1e-9)


@pytest.mark.parametrize("name", list(JOINTS))
def test_plan_is_feasible_and_optimal(name):
    rng = np.random.default_rng(200)
    for _ in range(40):
        V = int(rng.integers(2, 15))
        p, q = random_pair(rng, V)
        plan, flow = optimal_plan(JOINTS[name](q), p)
        assert plan.violations() == []
        assert plan.total() == pytest.approx(flow.value, abs=1e-12)
        assert plan_cost(plan) == pytest.approx(1 - flow.value, abs=1e-12)


def test_flow_conservation():
    rng = np.random.default_rng(1)
    p, q = random_pair(rng, 10)
    net = build_flow(wor_joint(q), p)
    f = max_flow(net)
    assert np.all(f.edge_flow <= net.edge_cap + 1e-15)
    assert np.all(f.source_flow <= net.source_cap + 1e-15)
    assert np.all(f.sink_flow <= net.sink_cap + 1e-15)
    assert f.source_flow.sum() == pytest.approx(f.value, abs=1e-15)
    assert f.sink_flow.sum() == pytest.approx(f.value, abs=1e-15)


class TestSpechubPlan:
    def test_worked_instance_entries(self):
        plan = spechub_plan(P, Q)
        assert plan.violations() == []
        assert plan.entry(1, 0) == pytest.approx((0.3, 0.3, 0.0))
        assert plan.entry(0, 2) == pytest.approx((0.2, 0.1, 0.1))
        assert plan.total() == pytest.approx(1.0)

    def test_matches_closed_form_rates(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            p, q = random_pair(rng, int(rng.integers(2, 30)))
            plan = spechub_plan(p, q)
            assert plan.violations() == []
            assert plan.total() == pytest.approx(analytic_rates_spechub(p, q).total, abs=1e-12)
            np.testing.assert_allclose(plan.accepted_per_token(), hub_acceptance(p, q).per_token, atol=1e-12)
            assert plan.total() <= optimal_acceptance(hub_joint(q), p) + 1e-9


class TestReconstruction:
    @pytest.mark.parametrize("name", list(JOINTS))
    def test_marginals_and_cost(self, name):
        rng = np.random.default_rng(300)
        for _ in range(25):
            p, q = random_pair(rng, int(rng.integers(2, 10)))
            joint = JOINTS[name](q)
            plan, flow = optimal_plan(joint, p)
            pi = reconstruct_full_coupling(plan)
            assert np.all(pi >= 0)
            e_pair, e_target = coupling_marginal_errors(pi, joint, p)
            assert e_pair < 1e-12 and e_target < 1e-12
            assert membership_cost(pi) == pytest.approx(1 - flow.value, abs=1e-12)

    def test_suboptimal_plan_still_couples(self):
        # the hub plan on an independent-draft instance is not optimal there,
        # but its own reconstruction must still have the right marginals
        rng = np.random.default_rng(8)
        for _ in range(20):
            p, q = random_pair(rng, 6)
            plan = spechub_plan(p, q)
            pi = reconstruct_full_coupling(plan)
            e_pair, e_target = coupling_marginal_errors(pi, plan.joint, p)
            assert max(e_pair, e_target) < 1e-12
            assert membership_cost(pi) == pytest.approx(plan_cost(plan), abs=1e-12)

    def test_size_cap(self):
        q = np.full(17, 1 / 17)
        with pytest.raises(ResourceLimit):
            reconstruct_full_coupling(optimal_plan(hub_joint(q), q)[0])


class TestAcceptRule:
    def test_output_law_exact(self):
        rng = np.random.default_rng(12)
        for name, make in JOINTS.items():
            for _ in range(20):
                p, q = random_pair(rng, 7)
                plan, _ = optimal_plan(make(q), p)
                np.testing.assert_allclose(plan_output_dist(plan), p, atol=1e-12)

    def test_sampled_law(self):
        p = np.array([0.05, 0.4, 0.1, 0.25, 0.2])
        q = np.array([0.3, 0.1, 0.35, 0.05, 0.2])
        joint = independent_joint(q)
        plan, flow = optimal_plan(joint, p)
        rng = np.random.default_rng(0)
        n = 30000
        toks = np.zeros(5)
        accepted = 0
        for _ in range(n):
            out = otm_accept_rule(plan, sample_pair(joint, rng), rng)
            toks[out.token] += 1
            accepted += out.accepted is not None
        assert np.all(np.abs(toks / n - p) <= 5 * np.sqrt(p * (1 - p) / n))
        assert abs(accepted / n - flow.value) <= 5 * np.sqrt(flow.value * (1 - flow.value) / n)

    def test_zero_mass_pair(self):
        plan, _ = optimal_plan(hub_joint(Q), P)
        with pytest.raises(InvalidArgument):
            otm_accept_rule(plan, (1, 2), np.random.default_rng(0))


def test_large_hub_network_runs():
    rng = np.random.default_rng(2)
    V = 5000
    p, q = rng.dirichlet(np.ones(V)), rng.dirichlet(np.ones(V))
    value = optimal_acceptance(hub_joint(q), p)
    assert value >= analytic_rates_spechub(p, q).total - 1e-9
