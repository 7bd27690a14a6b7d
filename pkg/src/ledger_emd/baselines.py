"""Comparison methods: structure-only, values-only, and random ranking.

Y-GDM serializes the set of present accounts into a nested-parenthesis
property string per subtree and compares strings by token-level Levenshtein
distance, ignoring weights entirely. SBSD is the plain L1 distance between
the normalized weight vectors, ignoring the tree. The random method ranks
the other companies in a seeded uniform random order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import ValidationError
from .model import ChartOfAccounts, SubtreeKind, WeightedSubtrees


@dataclass(frozen=True)
class PropertyString:
    """Nested-parenthesis pre-order serialization of the present accounts.

    Tokens are single parentheses and whole account codes; text is their
    concatenation. An empty subtree serializes to the empty string.
    """

    text: str
    tokens: tuple[str, ...]


def property_string(
    ws: WeightedSubtrees, kind: SubtreeKind, chart: ChartOfAccounts
) -> PropertyString:
    """Serialize the induced subtree of accounts with positive weight.

    Ancestors of present nodes up to the kind's root are included, children
    are visited in ascending account-code order, and weights are discarded.
    """
    w = ws.subtree_weights[kind]
    present = set(np.flatnonzero(w > 0).tolist())
    if not present:
        return PropertyString("", ())
    keep = set()
    for v in present:
        node = v
        while node >= 0 and node not in keep:
            keep.add(node)
            node = int(chart.parent[node])

    tokens: list[str] = []

    def emit(v: int) -> None:
        tokens.append("(")
        tokens.append(chart.codes[v])
        kids = sorted((c for c in chart.children[v] if c in keep), key=lambda c: chart.codes[c])
        for c in kids:
            emit(c)
        tokens.append(")")

    emit(chart.root_of(kind))
    return PropertyString("".join(tokens), tuple(tokens))


def levenshtein(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Minimum number of single-element insertions, deletions, and
    substitutions turning a into b, by the classic two-row DP.

    Works on any sequences: plain strings compare per character, property
    strings should be compared on their token tuples.
    """
    # Trimming the common prefix and suffix never changes the optimum.
    start = 0
    while start < len(a) and start < len(b) and a[start] == b[start]:
        start += 1
    end_a, end_b = len(a), len(b)
    while end_a > start and end_b > start and a[end_a - 1] == b[end_b - 1]:
        end_a -= 1
        end_b -= 1
    a, b = a[start:end_a], b[start:end_b]
    if not a:
        return len(b)
    if not b:
        return len(a)

    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            )
        previous = current
    return previous[-1]


def _kind_tokens(
    ws: WeightedSubtrees, chart: ChartOfAccounts
) -> dict[SubtreeKind, tuple[str, ...]]:
    return {kind: property_string(ws, kind, chart).tokens for kind in SubtreeKind}


def ygdm_distance(
    a: WeightedSubtrees, b: WeightedSubtrees, chart: ChartOfAccounts
) -> float:
    """Structure-only distance: summed token Levenshtein over the four kinds."""
    ta, tb = _kind_tokens(a, chart), _kind_tokens(b, chart)
    return float(sum(levenshtein(ta[kind], tb[kind]) for kind in SubtreeKind))


def ygdm_pairwise_matrix(
    companies: Sequence[WeightedSubtrees], chart: ChartOfAccounts
) -> np.ndarray:
    """Full pairwise Y-GDM matrix with memoized per-pair token distances.

    Real populations repeat a limited set of present-account structures, so
    caching on the token pair keeps the quadratic pass cheap.
    """
    token_rows = [_kind_tokens(ws, chart) for ws in companies]
    n = len(companies)
    out = np.zeros((n, n))
    cache: dict[tuple[tuple[str, ...], tuple[str, ...]], int] = {}

    def cached(ta: tuple[str, ...], tb: tuple[str, ...]) -> int:
        if ta == tb:
            return 0
        key = (ta, tb) if ta <= tb else (tb, ta)
        hit = cache.get(key)
        if hit is None:
            hit = levenshtein(key[0], key[1])
            cache[key] = hit
        return hit

    for i in range(n):
        for j in range(i + 1, n):
            d = 0
            for kind in SubtreeKind:
                d += cached(token_rows[i][kind], token_rows[j][kind])
            out[i, j] = out[j, i] = float(d)
    return out


def sbsd_distance(a: WeightedSubtrees, b: WeightedSubtrees) -> float:
    """Values-only distance: L1 between the normalized weight vectors,
    summed over the four kinds."""
    total = 0.0
    for kind in SubtreeKind:
        wa = a.subtree_weights[kind]
        wb = b.subtree_weights[kind]
        if wa.shape != wb.shape:
            raise ValidationError(
                f"kind {kind.value}: vector lengths differ ({wa.shape} vs {wb.shape})"
            )
        total += float(np.abs(wa - wb).sum())
    return total


def random_ranking(
    companies: Sequence[str], query: str, seed: int
) -> list[str]:
    """Seeded uniform random ranking of all companies except the query."""
    if query not in companies:
        raise ValidationError(f"query company {query!r} not in population")
    others = [cid for cid in companies if cid != query]
    rng = np.random.default_rng(seed)
    return [others[i] for i in rng.permutation(len(others))]
