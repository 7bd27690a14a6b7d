import numpy as np
import pytest

from ledger_emd import (
    AggregationPolicy,
    DistanceMatrix,
    InfeasibleError,
    MassMismatchError,
    MetricChoice,
    SubtreeKind,
    ValidationError,
    company_distance,
    distance_matrix,
    emd_lp_oracle,
    emd_tree_distance,
    explain_distance,
    sbsd_distance,
    ygdm_distance,
)
from ledger_emd.emd import subtree_sums

from conftest import random_chart, random_weight_pair, subtrees_from, weights_on


def node_balance_residual(report, chart, balance):
    """Max violation of: net flow out of each node equals its imbalance."""
    net = np.zeros(chart.n_nodes)
    for child, parent, flow in report.edges:
        net[child] += flow
        net[parent] -= flow
    # Roots have no own edge; their balance is implied by the others summing
    # to zero within each side, so check non-root nodes.
    residual = 0.0
    for v in range(chart.n_nodes):
        if chart.parent[v] >= 0:
            residual = max(residual, abs(net[v] - balance[v]))
    return residual


class TestTreeDistance:
    def test_identity_is_zero(self, three_node_chart):
        w = weights_on(three_node_chart, None, {"A": 0.3, "B": 0.7})
        assert emd_tree_distance(w, w, three_node_chart) == 0.0

    def test_disjoint_leaves_cost_two(self, three_node_chart):
        w1 = weights_on(three_node_chart, None, {"A": 1.0})
        w2 = weights_on(three_node_chart, None, {"B": 1.0})
        assert emd_tree_distance(w1, w2, three_node_chart) == 2.0

    def test_split_three_quarters_cost_one(self, three_node_chart):
        w1 = weights_on(three_node_chart, None, {"A": 0.75, "B": 0.25})
        w2 = weights_on(three_node_chart, None, {"A": 0.25, "B": 0.75})
        assert emd_tree_distance(w1, w2, three_node_chart) == 1.0

    def test_mass_mismatch_rejected(self, three_node_chart):
        w1 = weights_on(three_node_chart, None, {"A": 1.0})
        w2 = weights_on(three_node_chart, None, {"B": 0.5})
        with pytest.raises(MassMismatchError):
            emd_tree_distance(w1, w2, three_node_chart)

    def test_cross_side_balance_is_not_enough(self, star_chart):
        # Equal global mass but active vs passive mismatch: no feasible flow.
        w1 = weights_on(star_chart, None, {"A1": 1.0})
        w2 = weights_on(star_chart, None, {"P1": 1.0})
        with pytest.raises(MassMismatchError):
            emd_tree_distance(w1, w2, star_chart)

    def test_wrong_length_rejected(self, three_node_chart):
        with pytest.raises(ValidationError, match="length"):
            emd_tree_distance(np.ones(2), np.ones(2), three_node_chart)

    def test_negative_weights_rejected(self, three_node_chart):
        w = weights_on(three_node_chart, None, {"A": -1.0, "B": 2.0})
        with pytest.raises(ValidationError, match="nonnegative"):
            emd_tree_distance(w, w, three_node_chart)

    def test_metric_axioms_on_random_triples(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            chart = random_chart(rng, int(rng.integers(2, 15)), int(rng.integers(1, 10)))
            x, y = random_weight_pair(rng, chart, active_mass=0.5)
            z, _ = random_weight_pair(rng, chart, active_mass=0.5)
            dxy = emd_tree_distance(x, y, chart)
            dyx = emd_tree_distance(y, x, chart)
            dxz = emd_tree_distance(x, z, chart)
            dyz = emd_tree_distance(y, z, chart)
            assert dxy >= 0
            assert emd_tree_distance(x, x, chart) == 0.0
            assert dxy == dyx
            assert dxz <= dxy + dyz + 1e-9

    def test_upper_bound_twice_height(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            chart = random_chart(rng, int(rng.integers(2, 25)), 1)
            w1, w2 = random_weight_pair(rng, chart, active_mass=1.0)
            h = int(chart.depth.max())
            assert emd_tree_distance(w1, w2, chart) <= 2 * h + 1e-12


class TestLpOracle:
    def test_matches_hand_examples(self, three_node_chart):
        cases = [
            ({"A": 1.0}, {"B": 1.0}, 2.0),
            ({"A": 0.75, "B": 0.25}, {"A": 0.25, "B": 0.75}, 1.0),
            ({"A": 0.5, "B": 0.5}, {"A": 0.5, "B": 0.5}, 0.0),
        ]
        for m1, m2, expected in cases:
            w1 = weights_on(three_node_chart, None, m1)
            w2 = weights_on(three_node_chart, None, m2)
            cost, report = emd_lp_oracle(w1, w2, three_node_chart)
            assert cost == pytest.approx(expected, abs=1e-9)
            assert report.total_cost == pytest.approx(expected, abs=1e-9)

    def test_all_zero_vectors(self, three_node_chart):
        zero = np.zeros(three_node_chart.n_nodes)
        cost, report = emd_lp_oracle(zero, zero, three_node_chart)
        assert cost == 0.0
        assert report.edges == ()

    def test_infeasible_reported(self, three_node_chart):
        w1 = weights_on(three_node_chart, None, {"A": 1.0})
        w2 = weights_on(three_node_chart, None, {"B": 0.25})
        with pytest.raises(InfeasibleError):
            emd_lp_oracle(w1, w2, three_node_chart)

    def test_oracle_equals_closed_form_on_random_trees(self):
        rng = np.random.default_rng(1234)
        for _ in range(40):
            n_active = int(rng.integers(2, 18))
            n_passive = int(rng.integers(1, 8))
            chart = random_chart(rng, n_active, n_passive)
            w1, w2 = random_weight_pair(rng, chart)
            exact = emd_tree_distance(w1, w2, chart)
            cost, report = emd_lp_oracle(w1, w2, chart)
            assert abs(cost - exact) <= 1e-9
            assert abs(report.total_cost - exact) <= 1e-9
            assert node_balance_residual(report, chart, w1 - w2) <= 1e-9

    def test_flows_match_forced_subtree_imbalances(self, three_node_chart):
        w1 = weights_on(three_node_chart, None, {"A": 1.0})
        w2 = weights_on(three_node_chart, None, {"B": 1.0})
        _, report = emd_lp_oracle(w1, w2, three_node_chart)
        flows = {(c, p): f for c, p, f in report.edges}
        a = three_node_chart.code_to_id["A"]
        b = three_node_chart.code_to_id["B"]
        r = three_node_chart.code_to_id["r"]
        assert flows[(a, r)] == pytest.approx(1.0, abs=1e-9)
        assert flows[(b, r)] == pytest.approx(-1.0, abs=1e-9)


class TestCompanyDistance:
    def test_identity(self, three_node_chart):
        a = subtrees_from(
            three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 0.4, "B": 0.6}}
        )
        assert company_distance(a, a, three_node_chart) == 0.0

    def test_both_empty_kind_contributes_zero(self, three_node_chart):
        a = subtrees_from(three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        b = subtrees_from(three_node_chart, "b", {SubtreeKind.DEBIT_ACTIVE: {"B": 1.0}})
        # credit-passive empty on both sides: total is just the debit-active move
        assert company_distance(a, b, three_node_chart) == 2.0

    def test_single_empty_side_costs_path_to_root(self):
        from conftest import build_chart

        chart = build_chart(["r"], ["p", ("P1", "p"), ("P2", "P1")])
        a = subtrees_from(chart, "a", {SubtreeKind.DEBIT_PASSIVE: {"P2": 1.0}})
        b = subtrees_from(chart, "b", {})
        assert company_distance(a, b, chart) == 2.0
        assert company_distance(b, a, chart) == 2.0

    def test_kind_weights_respected(self, three_node_chart):
        a = subtrees_from(three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        b = subtrees_from(three_node_chart, "b", {SubtreeKind.DEBIT_ACTIVE: {"B": 1.0}})
        agg = AggregationPolicy(kind_weights={SubtreeKind.DEBIT_ACTIVE: 0.5})
        assert company_distance(a, b, three_node_chart, agg) == 1.0

    def test_chart_mismatch(self, three_node_chart, star_chart):
        a = subtrees_from(star_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A1": 1.0}})
        b = subtrees_from(three_node_chart, "b", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        with pytest.raises(ValidationError, match="chart mismatch"):
            company_distance(a, b, three_node_chart)


class TestExplainDistance:
    def test_identity_has_no_flows(self, three_node_chart):
        a = subtrees_from(three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        reports = explain_distance(a, a, three_node_chart)
        for report in reports.values():
            assert report.edges == ()
            assert report.total_cost == 0.0

    def test_three_node_flows(self, three_node_chart):
        a = subtrees_from(three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        b = subtrees_from(three_node_chart, "b", {SubtreeKind.DEBIT_ACTIVE: {"B": 1.0}})
        report = explain_distance(a, b, three_node_chart)[SubtreeKind.DEBIT_ACTIVE]
        flows = {(c, p): f for c, p, f in report.edges}
        ids = three_node_chart.code_to_id
        assert flows[(ids["A"], ids["r"])] == 1.0
        assert flows[(ids["B"], ids["r"])] == -1.0
        assert report.total_cost == 2.0

    def test_costs_sum_to_company_distance(self, star_chart):
        rng = np.random.default_rng(5)
        for _ in range(100):
            per_kind_a, per_kind_b = {}, {}
            for kind in SubtreeKind:
                codes = ["A1", "A2", "A3"] if kind.side.value == "active" else ["P1", "P2", "P3"]
                if rng.random() < 0.75:
                    w = rng.dirichlet(np.ones(len(codes)))
                    per_kind_a[kind] = dict(zip(codes, w))
                if rng.random() < 0.75:
                    w = rng.dirichlet(np.ones(len(codes)))
                    per_kind_b[kind] = dict(zip(codes, w))
            a = subtrees_from(star_chart, "a", per_kind_a)
            b = subtrees_from(star_chart, "b", per_kind_b)
            reports = explain_distance(a, b, star_chart)
            total = sum(r.total_cost for r in reports.values())
            assert total == pytest.approx(company_distance(a, b, star_chart), abs=1e-9)

    def test_flow_conservation_per_kind(self, star_chart):
        rng = np.random.default_rng(17)
        for _ in range(30):
            codes = ["A1", "A2", "A3", "A4"]
            wa = rng.dirichlet(np.ones(4))
            wb = rng.dirichlet(np.ones(4))
            a = subtrees_from(star_chart, "a", {SubtreeKind.DEBIT_ACTIVE: dict(zip(codes, wa))})
            b = subtrees_from(star_chart, "b", {SubtreeKind.DEBIT_ACTIVE: dict(zip(codes, wb))})
            report = explain_distance(a, b, star_chart)[SubtreeKind.DEBIT_ACTIVE]
            balance = (
                a.subtree_weights[SubtreeKind.DEBIT_ACTIVE]
                - b.subtree_weights[SubtreeKind.DEBIT_ACTIVE]
            )
            assert node_balance_residual(report, star_chart, balance) <= 1e-9
            assert report.total_cost == pytest.approx(
                sum(abs(f) for _, _, f in report.edges), abs=1e-12
            )


def random_subtrees(rng, chart, company_id):
    per_kind = {}
    for kind in SubtreeKind:
        if rng.random() < 0.8:
            idx = np.flatnonzero(chart.side_mask(kind.side))
            w = rng.dirichlet(np.full(len(idx), 0.8))
            per_kind[kind] = {chart.codes[i]: w[j] for j, i in enumerate(idx)}
    return subtrees_from(chart, company_id, per_kind)


class TestDistanceMatrix:
    def test_single_company(self, three_node_chart):
        a = subtrees_from(three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        d = distance_matrix([a], three_node_chart)
        assert d.values.shape == (1, 1)
        assert d.values[0, 0] == 0.0

    def test_duplicate_ids_rejected(self, three_node_chart):
        a = subtrees_from(three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        with pytest.raises(ValidationError, match="duplicate"):
            distance_matrix([a, a], three_node_chart)

    def test_duplicate_company_content_has_zero_distance(self, three_node_chart):
        a = subtrees_from(three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        b = subtrees_from(three_node_chart, "b", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        d = distance_matrix([a, b], three_node_chart)
        assert d.values[0, 1] == 0.0

    def test_matches_pairwise_company_distance(self, star_chart):
        rng = np.random.default_rng(77)
        companies = [random_subtrees(rng, star_chart, f"c{i}") for i in range(8)]
        d = distance_matrix(companies, star_chart, MetricChoice.EMD_GDM)
        for i in range(8):
            for j in range(8):
                assert d.values[i, j] == pytest.approx(
                    company_distance(companies[i], companies[j], star_chart), abs=1e-9
                )
        assert np.array_equal(d.values, d.values.T)

    def test_threads_do_not_change_result(self, star_chart):
        rng = np.random.default_rng(78)
        companies = [random_subtrees(rng, star_chart, f"c{i}") for i in range(12)]
        d1 = distance_matrix(companies, star_chart, threads=1)
        d4 = distance_matrix(companies, star_chart, threads=4)
        assert np.array_equal(d1.values, d4.values)

    def test_ygdm_and_sbsd_match_pair_functions(self, star_chart):
        rng = np.random.default_rng(79)
        companies = [random_subtrees(rng, star_chart, f"c{i}") for i in range(6)]
        dy = distance_matrix(companies, star_chart, MetricChoice.YGDM)
        ds = distance_matrix(companies, star_chart, MetricChoice.SBSD)
        for i in range(6):
            for j in range(6):
                assert dy.values[i, j] == ygdm_distance(companies[i], companies[j], star_chart)
                assert ds.values[i, j] == pytest.approx(
                    sbsd_distance(companies[i], companies[j]), abs=1e-12
                )

    def test_csv_round_trip(self, three_node_chart):
        a = subtrees_from(three_node_chart, "a", {SubtreeKind.DEBIT_ACTIVE: {"A": 1.0}})
        b = subtrees_from(three_node_chart, "b", {SubtreeKind.DEBIT_ACTIVE: {"B": 1.0}})
        d = distance_matrix([a, b], three_node_chart)
        text = d.to_csv()
        again = DistanceMatrix.from_csv(text)
        assert again.company_ids == d.company_ids
        np.testing.assert_allclose(again.values, d.values, rtol=1e-11)

    def test_matrix_validation(self):
        with pytest.raises(ValidationError, match="symmetric"):
            DistanceMatrix(["a", "b"], np.array([[0.0, 1.0], [2.0, 0.0]]))
        with pytest.raises(ValidationError, match="diagonal"):
            DistanceMatrix(["a", "b"], np.array([[1.0, 1.0], [1.0, 0.0]]))
        with pytest.raises(ValidationError, match="duplicate"):
            DistanceMatrix(["a", "a"], np.zeros((2, 2)))
        with pytest.raises(ValidationError, match="negative"):
            DistanceMatrix(["a", "b"], np.array([[0.0, -1.0], [-1.0, 0.0]]))


class TestSubtreeSums:
    def test_matches_bruteforce_subtree_accumulation(self):
        rng = np.random.default_rng(66)
        for _ in range(20):
            chart = random_chart(rng, int(rng.integers(2, 20)), int(rng.integers(1, 10)))
            w = rng.random(chart.n_nodes)
            s = subtree_sums(w, chart)
            for v in range(chart.n_nodes):
                members = [
                    u
                    for u in range(chart.n_nodes)
                    if _is_ancestor_or_self(chart, v, u)
                ]
                expected = 0.0 if chart.parent[v] < 0 else w[members].sum()
                assert s[v] == pytest.approx(expected, abs=1e-12)


def _is_ancestor_or_self(chart, anc, node):
    while node >= 0:
        if node == anc:
            return True
        node = int(chart.parent[node])
    return False
