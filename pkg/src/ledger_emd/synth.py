"""Seeded synthetic charts, trial balances, and NACE metadata.

The generator plants the structure the evaluation relies on: companies of
the same industry book similar weight distributions over similar account
subsets. Each industry owns archetype weights over a shared backbone of
accounts plus a few signature account groups; a company perturbs the
archetype weights (Dirichlet concentration `noise`) and picks which leaves
inside each signature group it actually uses. Higher noise means both
tighter weights and fewer leaf substitutions, so in the high-noise limit
same-industry companies become near-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import CompanyMeta
from .errors import ValidationError
from .model import AccountNode, ChartOfAccounts, Side, SubtreeKind, TrialBalance

_BASE36 = "123456789abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_companies: int = 1000
    n_industries: int = 12
    noise: float = 50.0
    codes_per_company: tuple[int, int] = (1, 4)


def generate_chart(seed: int, depth: int = 3, branching: int = 3) -> ChartOfAccounts:
    """Balanced active and passive trees of the given shape.

    Each side holds sum(branching^l for l in 0..depth) nodes; codes nest the
    parent code plus one digit per level. The layout is fully determined by
    the shape, so any seed reproduces the same chart.
    """
    if depth < 1 or branching < 1:
        raise ValidationError(f"depth and branching must be >= 1, got {depth}, {branching}")
    if branching > len(_BASE36):
        raise ValidationError(f"branching > {len(_BASE36)} not supported")
    nodes: list[AccountNode] = []

    def grow(code: str, side: Side, parent: int | None, level: int) -> None:
        node_id = len(nodes)
        nodes.append(
            AccountNode(id=node_id, code=code, name=f"account {code}", parent=parent, side=side)
        )
        if level < depth:
            for b in range(branching):
                grow(code + _BASE36[b], side, node_id, level + 1)

    grow("A", Side.ACTIVE, None, 0)
    grow("P", Side.PASSIVE, None, 0)
    return ChartOfAccounts(nodes)


def _leaf_groups(chart: ChartOfAccounts, side: Side) -> list[tuple[int, list[int]]]:
    """Parents of leaves on one side, each with its leaf children, in code order."""
    groups = []
    for node in chart.nodes:
        if node.side is not side:
            continue
        kids = [c for c in chart.children[node.id] if not chart.children[c]]
        if kids and len(kids) == len(chart.children[node.id]):
            groups.append((node.id, sorted(kids, key=lambda c: chart.codes[c])))
    groups.sort(key=lambda g: chart.codes[g[0]])
    return groups


_KIND_SIGN = {
    SubtreeKind.DEBIT_ACTIVE: 1.0,
    SubtreeKind.CREDIT_ACTIVE: -1.0,
    SubtreeKind.CREDIT_PASSIVE: -1.0,
    SubtreeKind.DEBIT_PASSIVE: 1.0,
}

# (backbone leaf count, signature group count, backbone mass share, total scale share)
_KIND_PLAN = {
    SubtreeKind.DEBIT_ACTIVE: (2, 2, 0.4, 1.0),
    SubtreeKind.CREDIT_ACTIVE: (1, 1, 0.3, 0.25),
    SubtreeKind.DEBIT_PASSIVE: (2, 2, 0.4, 0.8),
    SubtreeKind.CREDIT_PASSIVE: (0, 1, 0.0, 0.15),
}


def _nace_code(industry: int) -> str:
    return f"{10 + industry}.{100 + 17 * industry:03d}"


def generate_population(
    chart: ChartOfAccounts, cfg: SynthConfig
) -> tuple[list[TrialBalance], list[CompanyMeta]]:
    """Draw trial balances and NACE metadata for a seeded company population.

    Values come out under the standard sign convention (credit bookings are
    negative on the active side and on the passive side). Company ids are
    zero-padded so lexicographic and numeric order agree.
    """
    if cfg.n_companies < 1 or cfg.n_industries < 1:
        raise ValidationError("n_companies and n_industries must be positive")
    if cfg.noise <= 0:
        raise ValidationError(f"noise must be > 0, got {cfg.noise}")
    rng = np.random.default_rng(cfg.seed)

    # Split each side's leaf groups into a debit pool and a credit pool so a
    # single account never receives both debit and credit bookings.
    pools: dict[SubtreeKind, list[tuple[int, list[int]]]] = {}
    for side, debit_kind, credit_kind in (
        (Side.ACTIVE, SubtreeKind.DEBIT_ACTIVE, SubtreeKind.CREDIT_ACTIVE),
        (Side.PASSIVE, SubtreeKind.DEBIT_PASSIVE, SubtreeKind.CREDIT_PASSIVE),
    ):
        groups = _leaf_groups(chart, side)
        if len(groups) < 2:
            raise ValidationError("chart too small: each side needs at least two leaf groups")
        n_debit = max(1, (2 * len(groups)) // 3)
        pools[debit_kind] = groups[:n_debit]
        pools[credit_kind] = groups[n_debit:]

    # Backbone accounts are shared by every industry; signature groups are
    # sampled per industry from the remaining leaf groups.
    backbone: dict[SubtreeKind, list[int]] = {}
    signature_pool: dict[SubtreeKind, list[tuple[int, list[int]]]] = {}
    for kind, (n_backbone, _, _, _) in _KIND_PLAN.items():
        groups = pools[kind]
        backbone_leaves: list[int] = []
        used = 0
        while len(backbone_leaves) < n_backbone and used < len(groups) - 1:
            backbone_leaves.append(groups[used][1][0])
            used += 1
        backbone[kind] = backbone_leaves
        signature_pool[kind] = groups[used:]

    archetypes = []
    for industry in range(cfg.n_industries):
        arch: dict[SubtreeKind, dict] = {}
        for kind, (_, n_sig, backbone_share, _) in _KIND_PLAN.items():
            if kind is SubtreeKind.CREDIT_PASSIVE and industry % 3 != 0:
                arch[kind] = None  # this industry books nothing credit-passive
                continue
            pool = signature_pool[kind]
            n_sig_eff = min(n_sig, len(pool))
            chosen = sorted(rng.choice(len(pool), size=n_sig_eff, replace=False).tolist())
            groups = [pool[g] for g in chosen]
            backbone_w = rng.dirichlet(np.full(len(backbone[kind]), 2.0)) if backbone[kind] else np.array([])
            group_w = rng.dirichlet(np.full(len(groups), 2.0)) if groups else np.array([])
            arch[kind] = {
                "groups": groups,
                "backbone_w": backbone_w * backbone_share,
                "group_w": group_w * (1.0 - backbone_share if backbone[kind] else 1.0),
            }
        archetypes.append(arch)

    # Higher concentration also means fewer leaf substitutions inside
    # signature groups, so the high-noise limit collapses onto the archetype.
    swap_prob = min(2.0 / 3.0, 30.0 / cfg.noise)
    all_primaries = [_nace_code(i) for i in range(cfg.n_industries)]
    lo_codes, hi_codes = cfg.codes_per_company
    width = len(str(cfg.n_companies))

    balances: list[TrialBalance] = []
    meta: list[CompanyMeta] = []
    for c in range(cfg.n_companies):
        industry = int(rng.integers(0, cfg.n_industries))
        arch = archetypes[industry]
        scale = float(rng.lognormal(mean=11.0, sigma=0.8))
        values: dict[str, float] = {}

        for kind, (_, _, _, scale_share) in _KIND_PLAN.items():
            spec = arch[kind]
            if spec is None:
                continue
            accounts: list[int] = list(backbone[kind])
            base = list(spec["backbone_w"])
            for g, (_, leaves) in enumerate(spec["groups"]):
                chosen = list(leaves[:2])
                if len(leaves) > 2 and rng.random() < swap_prob:
                    drop = int(rng.integers(0, 2))
                    chosen[drop] = leaves[2]
                share_each = spec["group_w"][g] / len(chosen)
                for leaf in chosen:
                    accounts.append(leaf)
                    base.append(share_each)
            base_arr = np.asarray(base)
            base_arr = base_arr / base_arr.sum()
            weights = rng.dirichlet(cfg.noise * base_arr)
            kind_total = scale * scale_share * float(rng.uniform(0.7, 1.3))
            for node_id, w in zip(accounts, weights):
                value = round(_KIND_SIGN[kind] * w * kind_total, 2)
                if value != 0.0:
                    values[chart.codes[node_id]] = value

        n_codes = int(rng.integers(lo_codes, hi_codes + 1))
        codes = {all_primaries[industry]}
        extra_pool = [p for p in all_primaries if p != all_primaries[industry]]
        extras = rng.choice(len(extra_pool), size=min(n_codes - 1, len(extra_pool)), replace=False)
        codes.update(extra_pool[e] for e in extras)

        cid = f"c{c + 1:0{width}d}"
        balances.append(TrialBalance(company_id=cid, values=values))
        meta.append(CompanyMeta(company_id=cid, nace_codes=frozenset(codes)))
    return balances, meta


def nace_csv(meta: list[CompanyMeta]) -> str:
    lines = ["company_id,nace_codes"]
    for m in meta:
        lines.append(f"{m.company_id},{';'.join(sorted(m.nace_codes))}")
    return "\n".join(lines) + "\n"
