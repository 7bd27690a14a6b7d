"""Earth mover's distance between vertex-weighted account trees.

On a tree every edge's optimal flow is forced: the edge above node v must
carry exactly the net imbalance of v's subtree, so the minimum total flow is
the sum of absolute subtree imbalances. That closed form is the production
path. The flow LP (minimize the sum of per-edge absolute flows subject to
node balance) is kept as an independent verification oracle and for small
problems where the full flow picture is wanted.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleError, MassMismatchError, SolverError, ValidationError
from .model import ChartOfAccounts, Side, SubtreeKind, WeightedSubtrees

MASS_TOL = 1e-9

KIND_ORDER = (
    SubtreeKind.DEBIT_ACTIVE,
    SubtreeKind.CREDIT_ACTIVE,
    SubtreeKind.CREDIT_PASSIVE,
    SubtreeKind.DEBIT_PASSIVE,
)


class MetricChoice(Enum):
    EMD_GDM = "emd"
    YGDM = "ygdm"
    SBSD = "sbsd"


@dataclass(frozen=True)
class AggregationPolicy:
    """How the four per-kind distances combine into one company distance."""

    kind_weights: Mapping[SubtreeKind, float] = field(
        default_factory=lambda: {kind: 1.0 for kind in SubtreeKind}
    )

    @classmethod
    def unweighted_sum(cls) -> "AggregationPolicy":
        return cls()


@dataclass(frozen=True)
class FlowReport:
    """Signed flows on child-to-parent edges plus their total absolute cost.

    A positive flow moves weight from the child toward its parent; a negative
    flow moves it down. Edges with exactly zero flow are omitted.
    """

    edges: tuple[tuple[int, int, float], ...]
    total_cost: float

    @classmethod
    def from_edge_flows(cls, flows: np.ndarray, chart: ChartOfAccounts) -> "FlowReport":
        edges = []
        for v in range(chart.n_nodes):
            p = int(chart.parent[v])
            if p >= 0 and flows[v] != 0.0:
                edges.append((v, p, float(flows[v])))
        return cls(edges=tuple(edges), total_cost=float(np.abs(flows).sum()))

    def to_json_dict(self, kind: SubtreeKind, chart: ChartOfAccounts) -> dict:
        return {
            "kind": kind.value,
            "total_cost": self.total_cost,
            "flows": [
                {"from": chart.codes[child], "to": chart.codes[parent], "flow": flow}
                for child, parent, flow in self.edges
            ],
        }


def subtree_sums(w: np.ndarray, chart: ChartOfAccounts) -> np.ndarray:
    """Per-node sums of w over each node's subtree, with the two roots zeroed.

    Entry v is the flow forced onto the edge between v and its parent when w
    is the node-balance vector, so the tree EMD of (w1, w2) is the L1 norm of
    subtree_sums(w1 - w2).
    """
    s = np.asarray(w, dtype=float).copy()
    parent = chart.parent
    for v in chart.postorder:
        p = parent[v]
        if p >= 0:
            s[p] += s[v]
    s[chart.root_active] = 0.0
    s[chart.root_passive] = 0.0
    return s


def _check_vectors(w1: np.ndarray, w2: np.ndarray, chart: ChartOfAccounts) -> tuple[np.ndarray, np.ndarray]:
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w1.shape != (chart.n_nodes,) or w2.shape != (chart.n_nodes,):
        raise ValidationError(
            f"weight vectors must have length {chart.n_nodes}, got {w1.shape} and {w2.shape}"
        )
    if (w1 < 0).any() or (w2 < 0).any():
        raise ValidationError("weight vectors must be nonnegative")
    return w1, w2


def _check_mass(w1: np.ndarray, w2: np.ndarray, chart: ChartOfAccounts) -> None:
    # Balance must hold side by side: the active and passive trees are
    # disconnected, so a cross-side imbalance has no feasible flow even when
    # the global totals agree.
    for side in Side:
        mask = chart.side_mask(side)
        diff = abs(float(w1[mask].sum()) - float(w2[mask].sum()))
        if diff > MASS_TOL:
            raise MassMismatchError(
                f"{side.value} mass differs by {diff:.3e} (tolerance {MASS_TOL})"
            )


def emd_tree_distance(w1: np.ndarray, w2: np.ndarray, chart: ChartOfAccounts) -> float:
    """Exact tree EMD: total weight that must cross edges to turn w1 into w2.

    Runs in O(n) after one post-order accumulation. Requires equal mass on
    each side of the chart within MASS_TOL.
    """
    w1, w2 = _check_vectors(w1, w2, chart)
    _check_mass(w1, w2, chart)
    return float(np.abs(subtree_sums(w1 - w2, chart)).sum())


def emd_lp_oracle(
    w1: np.ndarray, w2: np.ndarray, chart: ChartOfAccounts
) -> tuple[float, FlowReport]:
    """Solve the flow LP directly and return (optimal cost, flows).

    Variables are one signed flow per edge plus one absolute-value envelope
    per edge (g >= f, g >= -f); node balance is an equality per node. Meant
    for verification on trees up to a few hundred nodes, not production use.
    """
    w1, w2 = _check_vectors(w1, w2, chart)
    n = chart.n_nodes
    b = w1 - w2
    edge_children = [v for v in range(n) if chart.parent[v] >= 0]
    n_edges = len(edge_children)
    if n_edges == 0:
        if np.abs(b).max(initial=0.0) > MASS_TOL:
            raise InfeasibleError("no edges but node imbalance present")
        return 0.0, FlowReport(edges=(), total_cost=0.0)

    a_eq = np.zeros((n, 2 * n_edges))
    for e, child in enumerate(edge_children):
        a_eq[child, e] = 1.0
        a_eq[int(chart.parent[child]), e] = -1.0
    # f - g <= 0 and -f - g <= 0
    eye = np.eye(n_edges)
    a_ub = np.block([[eye, -eye], [-eye, -eye]])
    b_ub = np.zeros(2 * n_edges)
    cost_vec = np.concatenate([np.zeros(n_edges), np.ones(n_edges)])
    bounds = [(None, None)] * n_edges + [(0, None)] * n_edges

    res = linprog(
        c=cost_vec, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b, bounds=bounds, method="highs"
    )
    if res.status == 2:
        raise InfeasibleError("flow LP infeasible: the two weight vectors have unequal mass")
    if res.status != 0:
        raise SolverError(f"LP solver stopped with status {res.status}: {res.message}")

    flows = np.zeros(n)
    for e, child in enumerate(edge_children):
        flows[child] = res.x[e]
    return float(res.fun), FlowReport.from_edge_flows(flows, chart)


def _kind_vectors(
    a: WeightedSubtrees, b: WeightedSubtrees, chart: ChartOfAccounts, kind: SubtreeKind
) -> tuple[np.ndarray, np.ndarray]:
    wa = a.subtree_weights[kind]
    wb = b.subtree_weights[kind]
    if wa.shape != (chart.n_nodes,) or wb.shape != (chart.n_nodes,):
        raise ValidationError(
            f"chart mismatch: kind {kind.value} vectors have shapes {wa.shape} and "
            f"{wb.shape}, chart has {chart.n_nodes} nodes"
        )
    return wa, wb


def _kind_flows(
    a: WeightedSubtrees, b: WeightedSubtrees, chart: ChartOfAccounts, kind: SubtreeKind
) -> np.ndarray:
    """Forced edge flows for one kind, treating an empty side as all mass at
    the kind's root (so the nonempty distribution drains to, or fills from,
    the root)."""
    wa, wb = _kind_vectors(a, b, chart, kind)
    a_empty, b_empty = a.is_empty(kind), b.is_empty(kind)
    if a_empty and b_empty:
        return np.zeros(chart.n_nodes)
    if a_empty:
        return subtree_sums(-wb, chart)
    if b_empty:
        return subtree_sums(wa, chart)
    return subtree_sums(wa - wb, chart)


def company_distance(
    a: WeightedSubtrees,
    b: WeightedSubtrees,
    chart: ChartOfAccounts,
    agg: AggregationPolicy | None = None,
) -> float:
    """Aggregate tree EMD over the four subtree kinds.

    Kinds that are empty on both sides contribute zero; a kind empty on one
    side only costs the transport of the nonempty distribution to the kind's
    root. By default the four kind distances are summed unweighted.
    """
    agg = agg or AggregationPolicy.unweighted_sum()
    total = 0.0
    for kind in KIND_ORDER:
        cost = float(np.abs(_kind_flows(a, b, chart, kind)).sum())
        total += agg.kind_weights.get(kind, 1.0) * cost
    return total


def explain_distance(
    a: WeightedSubtrees, b: WeightedSubtrees, chart: ChartOfAccounts
) -> dict[SubtreeKind, FlowReport]:
    """Per-kind flow reports whose costs sum to company_distance(a, b).

    Flows come from the closed form, so the report is deterministic: each
    listed edge carries the subtree imbalance it is forced to move.
    """
    return {
        kind: FlowReport.from_edge_flows(_kind_flows(a, b, chart, kind), chart)
        for kind in KIND_ORDER
    }


@dataclass
class DistanceMatrix:
    """Symmetric pairwise distances with a company-id index."""

    company_ids: list[str]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.company_ids)
        if len(set(self.company_ids)) != n:
            raise ValidationError("duplicate company ids in distance matrix")
        if self.values.shape != (n, n):
            raise ValidationError(
                f"distance matrix shape {self.values.shape} does not match {n} company ids"
            )
        if not np.isfinite(self.values).all():
            raise ValidationError("distance matrix contains non-finite values")
        if (self.values < 0).any():
            raise ValidationError("distance matrix contains negative values")
        if not np.array_equal(self.values, self.values.T):
            raise ValidationError("distance matrix is not symmetric")
        if np.abs(np.diagonal(self.values)).max(initial=0.0) != 0.0:
            raise ValidationError("distance matrix diagonal is not zero")
        self._index = {cid: i for i, cid in enumerate(self.company_ids)}

    def index(self, company_id: str) -> int:
        try:
            return self._index[company_id]
        except KeyError:
            raise ValidationError(f"unknown company id {company_id!r}") from None

    def distance(self, a: str, b: str) -> float:
        return float(self.values[self.index(a), self.index(b)])

    def submatrix(self, ids: Sequence[str]) -> "DistanceMatrix":
        idx = [self.index(cid) for cid in ids]
        return DistanceMatrix(list(ids), self.values[np.ix_(idx, idx)])

    def to_csv(self) -> str:
        lines = ["company_id," + ",".join(self.company_ids)]
        for i, cid in enumerate(self.company_ids):
            cells = (f"{x:.12g}" for x in self.values[i])
            lines.append(cid + "," + ",".join(cells))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "DistanceMatrix":
        reader = csv.reader(io.StringIO(text))
        rows = [row for row in reader if row]
        if not rows:
            raise ValidationError("distance matrix file is empty")
        ids = rows[0][1:]
        if len(rows) - 1 != len(ids):
            raise ValidationError(
                f"distance matrix has {len(ids)} header ids but {len(rows) - 1} data rows"
            )
        values = np.zeros((len(ids), len(ids)))
        for i, row in enumerate(rows[1:]):
            if row[0] != ids[i]:
                raise ValidationError(
                    f"row {i + 2}: company id {row[0]!r} does not match header {ids[i]!r}"
                )
            if len(row) - 1 != len(ids):
                raise ValidationError(f"row {i + 2}: expected {len(ids)} cells, got {len(row) - 1}")
            try:
                values[i] = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise ValidationError(f"row {i + 2}: non-numeric cell ({exc})") from None
        return cls(list(ids), values)


def emd_feature_matrix(
    companies: Sequence[WeightedSubtrees], chart: ChartOfAccounts
) -> np.ndarray:
    """Stack each company's per-kind subtree-sum transforms into one row.

    The tree EMD between two companies (including the empty-kind root rule,
    whose transform is the zero vector) is exactly the L1 distance between
    their rows, which is what makes large pairwise matrices cheap.
    """
    n = chart.n_nodes
    features = np.zeros((len(companies), len(KIND_ORDER) * n))
    for i, ws in enumerate(companies):
        for j, kind in enumerate(KIND_ORDER):
            w = ws.subtree_weights[kind]
            if w.shape != (n,):
                raise ValidationError(
                    f"chart mismatch for company {ws.company_id!r}: vector length "
                    f"{w.shape} vs {n} chart nodes"
                )
            if w.any():
                features[i, j * n : (j + 1) * n] = subtree_sums(w, chart)
    return features


def sbsd_feature_matrix(companies: Sequence[WeightedSubtrees], chart: ChartOfAccounts) -> np.ndarray:
    n = chart.n_nodes
    features = np.zeros((len(companies), len(KIND_ORDER) * n))
    for i, ws in enumerate(companies):
        for j, kind in enumerate(KIND_ORDER):
            features[i, j * n : (j + 1) * n] = ws.subtree_weights[kind]
    return features


def _pairwise_l1(features: np.ndarray, threads: int) -> np.ndarray:
    n = features.shape[0]
    out = np.zeros((n, n))

    def fill(rows: range) -> None:
        for i in rows:
            out[i] = np.abs(features - features[i]).sum(axis=1)

    if threads > 1 and n > 1:
        blocks = np.array_split(range(n), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, [range(b[0], b[-1] + 1) for b in blocks if len(b)]))
    else:
        fill(range(n))
    np.fill_diagonal(out, 0.0)
    return out


def distance_matrix(
    companies: Sequence[WeightedSubtrees],
    chart: ChartOfAccounts,
    metric: MetricChoice = MetricChoice.EMD_GDM,
    threads: int = 1,
) -> DistanceMatrix:
    """Pairwise company distances under the chosen metric.

    Pairs are independent; rows may be computed by a thread pool, and the
    result is identical regardless of scheduling.
    """
    if not companies:
        raise ValidationError("need at least one company")
    ids = [ws.company_id for ws in companies]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate company ids")

    if metric is MetricChoice.EMD_GDM:
        values = _pairwise_l1(emd_feature_matrix(companies, chart), threads)
    elif metric is MetricChoice.SBSD:
        values = _pairwise_l1(sbsd_feature_matrix(companies, chart), threads)
    elif metric is MetricChoice.YGDM:
        from .baselines import ygdm_pairwise_matrix

        values = ygdm_pairwise_matrix(companies, chart)
    else:
        raise ValidationError(f"unsupported metric {metric!r}")
    return DistanceMatrix(ids, values)


def flow_reports_json(
    reports: Mapping[SubtreeKind, FlowReport], chart: ChartOfAccounts
) -> str:
    docs = [reports[kind].to_json_dict(kind, chart) for kind in KIND_ORDER]
    return json.dumps(docs, indent=2) + "\n"
