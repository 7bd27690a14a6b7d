import numpy as np
import pytest

from ledger_emd import (
    AccountNode,
    ChartOfAccounts,
    Side,
    SubtreeKind,
    WeightedSubtrees,
)


def build_chart(active_parents, passive_parents=("p",)):
    """Build a chart from (code, parent_code) pairs per side; a bare code is a root.

    active_parents / passive_parents are sequences of either "code" (root) or
    ("code", "parent_code").
    """
    nodes = []
    code_to_id = {}

    def add(entries, side):
        for entry in entries:
            if isinstance(entry, tuple):
                code, parent_code = entry
                parent = code_to_id[parent_code]
            else:
                code, parent = entry, None
            node = AccountNode(id=len(nodes), code=code, name=code, parent=parent, side=side)
            code_to_id[code] = node.id
            nodes.append(node)

    add(active_parents, Side.ACTIVE)
    add(passive_parents, Side.PASSIVE)
    return ChartOfAccounts(nodes)


@pytest.fixture
def three_node_chart():
    """Active root r with children A and B, plus a bare passive root."""
    return build_chart(["r", ("A", "r"), ("B", "r")])


@pytest.fixture
def star_chart():
    """Both sides are stars: a root with four leaf children."""
    return build_chart(
        ["r", ("A1", "r"), ("A2", "r"), ("A3", "r"), ("A4", "r")],
        ["p", ("P1", "p"), ("P2", "p"), ("P3", "p"), ("P4", "p")],
    )


def weights_on(chart, kind, value_by_code):
    w = np.zeros(chart.n_nodes)
    for code, value in value_by_code.items():
        w[chart.code_to_id[code]] = value
    return w


def subtrees_from(chart, company_id, per_kind):
    """WeightedSubtrees from {kind: {code: weight}} with missing kinds empty."""
    weights = {kind: np.zeros(chart.n_nodes) for kind in SubtreeKind}
    for kind, mapping in per_kind.items():
        weights[kind] = weights_on(chart, kind, mapping)
    return WeightedSubtrees(company_id=company_id, subtree_weights=weights)


def random_chart(rng, n_active, n_passive):
    """Random tree per side: each non-root attaches to a random earlier node."""
    nodes = []
    for side, count, prefix in ((Side.ACTIVE, n_active, "a"), (Side.PASSIVE, n_passive, "b")):
        first = len(nodes)
        for i in range(count):
            parent = None if i == 0 else first + int(rng.integers(0, i))
            nodes.append(
                AccountNode(
                    id=len(nodes), code=f"{prefix}{i}", name=f"{prefix}{i}", parent=parent, side=side
                )
            )
    return ChartOfAccounts(nodes)


def random_weight_pair(rng, chart, active_mass=None):
    """Two nonnegative vectors with equal mass on each side of the chart."""
    if active_mass is None:
        active_mass = float(rng.uniform(0.2, 0.8))
    masses = {Side.ACTIVE: active_mass, Side.PASSIVE: 1.0 - active_mass}
    pair = []
    for _ in range(2):
        w = np.zeros(chart.n_nodes)
        for side, mass in masses.items():
            idx = np.flatnonzero(chart.side_mask(side))
            w[idx] = mass * rng.dirichlet(np.full(len(idx), 0.7))
        pair.append(w)
    return pair[0], pair[1]


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {status}", flush=True)
