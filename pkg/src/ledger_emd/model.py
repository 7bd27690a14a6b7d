"""Chart-of-accounts tree, trial balances, and normalized vertex weights.

A balance sheet is modeled as two rooted trees of ledger accounts (an active
and a passive side). A company's trial balance books a signed monetary value
on some of those accounts. Each booked value is routed by side and sign into
one of four subtrees (debit-active, credit-active, credit-passive,
debit-passive) and every subtree's absolute values are normalized to a unit
weight vector, so a weight expresses the relative importance of an account
within its subtree.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import BinaryIO, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import ValidationError

NORMALIZATION_TOL = 1e-9


class Side(Enum):
    ACTIVE = "active"
    PASSIVE = "passive"


class SubtreeKind(Enum):
    DEBIT_ACTIVE = "debit_active"
    CREDIT_ACTIVE = "credit_active"
    CREDIT_PASSIVE = "credit_passive"
    DEBIT_PASSIVE = "debit_passive"

    @property
    def side(self) -> Side:
        if self in (SubtreeKind.DEBIT_ACTIVE, SubtreeKind.CREDIT_ACTIVE):
            return Side.ACTIVE
        return Side.PASSIVE


class SignConvention(Enum):
    """How stored signs map to debit/credit on the passive side.

    STANDARD_BELGIAN: active value > 0 books debit, < 0 books credit (e.g. a
    depreciation); passive value < 0 books credit, > 0 books debit.
    FLIPPED: passive signs are stored inverted, so passive value > 0 books
    credit and < 0 books debit. The active side is identical in both.
    """

    STANDARD_BELGIAN = "std"
    FLIPPED = "flipped"


@dataclass(frozen=True)
class AccountNode:
    id: int
    code: str
    name: str
    parent: int | None
    side: Side


class ChartOfAccounts:
    """Two rooted account trees (one per side) with dense integer node ids.

    Immutable after construction; safe to share across worker threads. The
    derived arrays (parent, depth, post-order) are what the distance code
    operates on.
    """

    def __init__(self, nodes: Sequence[AccountNode]):
        self.nodes: tuple[AccountNode, ...] = tuple(nodes)
        n = len(self.nodes)
        if n == 0:
            raise ValidationError("chart has no nodes")

        self.code_to_id: dict[str, int] = {}
        for node in self.nodes:
            if node.id != len(self.code_to_id):
                raise ValidationError(f"node ids must be dense document order, got {node.id}")
            if node.code in self.code_to_id:
                raise ValidationError(f"duplicate account code {node.code!r}")
            self.code_to_id[node.code] = node.id
        self.codes: tuple[str, ...] = tuple(node.code for node in self.nodes)

        self.parent = np.full(n, -1, dtype=np.int64)
        for node in self.nodes:
            if node.parent is not None:
                self.parent[node.id] = node.parent

        roots_by_side: dict[Side, list[int]] = {Side.ACTIVE: [], Side.PASSIVE: []}
        for node in self.nodes:
            if node.parent is None:
                roots_by_side[node.side].append(node.id)
            else:
                parent_node = self.nodes[node.parent]
                if parent_node.side is not node.side:
                    raise ValidationError(
                        f"side mismatch: account {node.code!r} is {node.side.value} "
                        f"but its parent {parent_node.code!r} is {parent_node.side.value}"
                    )
        for side, roots in roots_by_side.items():
            if len(roots) != 1:
                raise ValidationError(
                    f"chart must have exactly one {side.value} root, found {len(roots)}"
                )
        self.root_active: int = roots_by_side[Side.ACTIVE][0]
        self.root_passive: int = roots_by_side[Side.PASSIVE][0]

        self.depth = np.full(n, -1, dtype=np.int64)
        for root in (self.root_active, self.root_passive):
            self.depth[root] = 0
        # Repeated relaxation doubles as cycle detection: a node on a cycle
        # never receives a depth.
        for _ in range(n):
            changed = False
            for node in self.nodes:
                p = self.parent[node.id]
                if p >= 0 and self.depth[node.id] < 0 and self.depth[p] >= 0:
                    self.depth[node.id] = self.depth[p] + 1
                    changed = True
            if not changed:
                break
        if (self.depth < 0).any():
            bad = self.nodes[int(np.argmin(self.depth))].code
            raise ValidationError(f"cycle detected involving account {bad!r}")

        self.is_active = np.array([node.side is Side.ACTIVE for node in self.nodes])
        self.children: tuple[tuple[int, ...], ...] = tuple(
            tuple(c.id for c in self.nodes if c.parent == node.id) for node in self.nodes
        )
        # Children before parents; a plain reverse depth sort works on a forest.
        self.postorder = np.argsort(-self.depth, kind="stable").astype(np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def root_of(self, kind: SubtreeKind) -> int:
        return self.root_active if kind.side is Side.ACTIVE else self.root_passive

    def side_mask(self, side: Side) -> np.ndarray:
        return self.is_active if side is Side.ACTIVE else ~self.is_active

    def to_json_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "code": node.code,
                    "name": node.name,
                    "parent": None if node.parent is None else self.nodes[node.parent].code,
                    "side": node.side.value,
                }
                for node in self.nodes
            ]
        }


@dataclass(frozen=True)
class TrialBalance:
    """Raw booked values of one company, keyed by account code."""

    company_id: str
    values: Mapping[str, float]


@dataclass(frozen=True)
class WeightedSubtrees:
    """One company's four normalized weight vectors over the chart nodes.

    Every kind maps to a length-n vector: all zero when the subtree received
    no mass, otherwise nonnegative and summing to one. Active kinds are zero
    on passive nodes and vice versa.
    """

    company_id: str
    subtree_weights: dict[SubtreeKind, np.ndarray] = field(repr=False)

    def is_empty(self, kind: SubtreeKind) -> bool:
        return not self.subtree_weights[kind].any()


SourceType = Union[bytes, str, BinaryIO]


def _read_bytes(source: SourceType) -> bytes:
    if isinstance(source, bytes):
        return source
    if isinstance(source, str):
        return source.encode("utf-8")
    return source.read()


def parse_chart_of_accounts(source: SourceType) -> ChartOfAccounts:
    """Parse the chart JSON document into a validated ChartOfAccounts.

    Node ids are assigned in document order. Raises ValidationError naming
    the offending account code for duplicate codes, unknown parents, cycles,
    or side mismatches.
    """
    try:
        doc = json.loads(_read_bytes(source))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed chart document: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise ValidationError("malformed chart document: expected object with a 'nodes' list")

    raw_nodes = doc["nodes"]
    code_to_id: dict[str, int] = {}
    for i, raw in enumerate(raw_nodes):
        if not isinstance(raw, dict) or "code" not in raw or "side" not in raw:
            raise ValidationError(f"malformed chart node at index {i}: needs 'code' and 'side'")
        code = str(raw["code"])
        if code in code_to_id:
            raise ValidationError(f"duplicate account code {code!r}")
        code_to_id[code] = i

    nodes: list[AccountNode] = []
    for i, raw in enumerate(raw_nodes):
        code = str(raw["code"])
        side_str = str(raw["side"]).lower()
        try:
            side = Side(side_str)
        except ValueError:
            raise ValidationError(f"account {code!r} has unknown side {side_str!r}") from None
        parent_code = raw.get("parent")
        if parent_code is None:
            parent = None
        else:
            parent_code = str(parent_code)
            if parent_code not in code_to_id:
                raise ValidationError(
                    f"account {code!r} references missing parent {parent_code!r}"
                )
            parent = code_to_id[parent_code]
        nodes.append(AccountNode(id=i, code=code, name=str(raw.get("name", code)), parent=parent, side=side))
    return ChartOfAccounts(nodes)


def parse_trial_balance(source: SourceType, chart: ChartOfAccounts) -> list[TrialBalance]:
    """Parse the trial-balance CSV into one TrialBalance per company.

    Expected header: company_id,account_code,value. Companies appear in
    first-occurrence order. Unknown codes, non-numeric or non-finite values,
    and duplicate (company, code) rows are ValidationErrors naming the line.
    """
    text = _read_bytes(source).decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("trial balance file is empty") from None
    if [h.strip() for h in header] != ["company_id", "account_code", "value"]:
        raise ValidationError(
            f"trial balance header must be company_id,account_code,value, got {','.join(header)!r}"
        )

    per_company: dict[str, dict[str, float]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ValidationError(f"line {lineno}: expected 3 columns, got {len(row)}")
        company_id, code, value_str = row[0].strip(), row[1].strip(), row[2].strip()
        if code not in chart.code_to_id:
            raise ValidationError(f"line {lineno}: unknown account code {code!r}")
        try:
            value = float(value_str)
        except ValueError:
            raise ValidationError(f"line {lineno}: non-numeric value {value_str!r}") from None
        if not np.isfinite(value):
            raise ValidationError(f"line {lineno}: non-finite value {value_str!r}")
        values = per_company.setdefault(company_id, {})
        if code in values:
            raise ValidationError(
                f"line {lineno}: duplicate row for company {company_id!r}, account {code!r}"
            )
        values[code] = value
    return [TrialBalance(company_id=cid, values=vals) for cid, vals in per_company.items()]


def _routed_kind(side: Side, value: float, convention: SignConvention) -> SubtreeKind | None:
    if value == 0.0:
        return None
    if side is Side.ACTIVE:
        return SubtreeKind.DEBIT_ACTIVE if value > 0 else SubtreeKind.CREDIT_ACTIVE
    if convention is SignConvention.STANDARD_BELGIAN:
        return SubtreeKind.CREDIT_PASSIVE if value < 0 else SubtreeKind.DEBIT_PASSIVE
    return SubtreeKind.CREDIT_PASSIVE if value > 0 else SubtreeKind.DEBIT_PASSIVE


def build_weighted_subtrees(
    tb: TrialBalance,
    chart: ChartOfAccounts,
    convention: SignConvention = SignConvention.STANDARD_BELGIAN,
) -> WeightedSubtrees:
    """Route booked values into the four subtrees and normalize each to unit mass.

    Each value lands in exactly one kind according to its side and sign, its
    absolute value is taken, and every kind's vector is divided by its total
    (or left all-zero when the kind received nothing). Zero values contribute
    nowhere. Accounts absent from the trial balance carry weight zero.
    """
    n = chart.n_nodes
    raw = {kind: np.zeros(n) for kind in SubtreeKind}
    for code, value in tb.values.items():
        if code not in chart.code_to_id:
            raise ValidationError(f"unknown account code {code!r} for company {tb.company_id!r}")
        if not np.isfinite(value):
            raise ValidationError(f"non-finite value on account {code!r}")
        node_id = chart.code_to_id[code]
        kind = _routed_kind(chart.nodes[node_id].side, value, convention)
        if kind is not None:
            raw[kind][node_id] += abs(value)
    weights = {}
    for kind, vec in raw.items():
        total = vec.sum()
        weights[kind] = vec / total if total > 0 else vec
    return WeightedSubtrees(company_id=tb.company_id, subtree_weights=weights)


def write_chart_json(chart: ChartOfAccounts) -> str:
    return json.dumps(chart.to_json_dict(), indent=2) + "\n"


def write_trial_balances_csv(balances: Iterable[TrialBalance]) -> str:
    lines = ["company_id,account_code,value"]
    for tb in balances:
        for code, value in tb.values.items():
            lines.append(f"{tb.company_id},{code},{value!r}")
    return "\n".join(lines) + "\n"
