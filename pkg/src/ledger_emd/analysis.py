"""Nearest-neighbor industry evaluation and local outlier factor scoring.

The evaluation measures, for each company in an eligible set, how much the
NACE code sets of its k nearest neighbors under a given metric overlap with
its own (mean Jaccard similarity), then averages over the set. Eligibility
requires enough peers with sufficiently similar code sets, so companies with
no comparable neighbors do not drag the score. LOF scores flag companies
whose local density is much lower than that of their neighbors.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .baselines import random_ranking
from .emd import DistanceMatrix, MetricChoice, distance_matrix
from .model import ChartOfAccounts, SourceType, WeightedSubtrees, _read_bytes


@dataclass(frozen=True)
class CompanyMeta:
    company_id: str
    nace_codes: frozenset[str]


@dataclass(frozen=True)
class EligibilityParams:
    """Peer-count filter: a company qualifies when at least q companies share
    a NACE code with it at Jaccard similarity >= r."""

    q: int = 20
    r: float = 0.2


@dataclass(frozen=True)
class LofParams:
    k_neighbors: int = 5


def parse_nace_metadata(source: SourceType) -> list[CompanyMeta]:
    """Parse the NACE CSV (header company_id,nace_codes; codes ;-separated)."""
    text = _read_bytes(source).decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("NACE metadata file is empty") from None
    if [h.strip() for h in header] != ["company_id", "nace_codes"]:
        raise ValidationError(
            f"NACE header must be company_id,nace_codes, got {','.join(header)!r}"
        )
    out: list[CompanyMeta] = []
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ValidationError(f"line {lineno}: expected 2 columns, got {len(row)}")
        cid = row[0].strip()
        if cid in seen:
            raise ValidationError(f"line {lineno}: duplicate company id {cid!r}")
        seen.add(cid)
        codes = frozenset(c.strip() for c in row[1].split(";") if c.strip())
        out.append(CompanyMeta(company_id=cid, nace_codes=codes))
    return out


def jaccard(a: Iterable, b: Iterable) -> float:
    """|a n b| / |a u b|, with the empty-vs-empty case defined as 0."""
    sa, sb = set(a), set(b)
    union = len(sa | sb)
    if union == 0:
        return 0.0
    return len(sa & sb) / union


def _neighbor_order(d: DistanceMatrix, query_idx: int) -> list[int]:
    # Ascending distance, ties broken by ascending company id.
    row = d.values[query_idx]
    ids = np.array(d.company_ids)
    order = np.lexsort((ids, row))
    return [int(j) for j in order if j != query_idx]


def knn_query(d: DistanceMatrix, query: str, k: int) -> list[str]:
    """The k companies closest to the query, ascending, query excluded."""
    qi = d.index(query)
    if k < 1 or k >= len(d.company_ids):
        raise ValidationError(
            f"k must be in [1, {len(d.company_ids) - 1}], got {k}"
        )
    order = _neighbor_order(d, qi)
    return [d.company_ids[j] for j in order[:k]]


def eligible_companies(
    meta: Sequence[CompanyMeta], params: EligibilityParams
) -> set[str]:
    """Companies with at least q code-sharing peers at Jaccard >= r."""
    by_code: dict[str, set[int]] = {}
    for i, m in enumerate(meta):
        for code in m.nace_codes:
            by_code.setdefault(code, set()).add(i)
    eligible: set[str] = set()
    for i, m in enumerate(meta):
        sharers: set[int] = set()
        for code in m.nace_codes:
            sharers |= by_code[code]
        sharers.discard(i)
        count = sum(
            1 for j in sharers if jaccard(m.nace_codes, meta[j].nace_codes) >= params.r
        )
        if count >= params.q:
            eligible.add(m.company_id)
    return eligible


def jaccard_score(
    meta: Mapping[str, frozenset[str]] | Sequence[CompanyMeta],
    d: DistanceMatrix,
    companies: Iterable[str],
    k: int,
) -> float:
    """Mean over the company set of the mean NACE Jaccard similarity between
    each company and its k nearest neighbors."""
    nace = _nace_lookup(meta)
    members = sorted(companies)
    if not members:
        raise ValidationError("company set is empty")
    total = 0.0
    for s in members:
        z = 0.0
        for p in knn_query(d, s, k):
            z += jaccard(nace[s], nace[p])
        total += z / k
    return total / len(members)


def _nace_lookup(
    meta: Mapping[str, frozenset[str]] | Sequence[CompanyMeta]
) -> dict[str, frozenset[str]]:
    if isinstance(meta, Mapping):
        return dict(meta)
    return {m.company_id: m.nace_codes for m in meta}


def lof_scores(d: DistanceMatrix, params: LofParams = LofParams()) -> dict[str, float]:
    """Classic local outlier factor from a precomputed distance matrix.

    Uses the k-distance neighborhood with all ties included, reachability
    distances, and local reachability densities; a score near 1 marks an
    inlier, well above 1 an outlier. Groups of exact duplicates (infinite
    density on both sides of the ratio) score 1.
    """
    n = len(d.company_ids)
    k = params.k_neighbors
    if k < 1:
        raise ValidationError(f"k_neighbors must be positive, got {k}")
    if n <= k:
        raise ValidationError(f"population {n} too small for k_neighbors={k}")
    dist = d.values
    kdist = np.empty(n)
    neighborhoods: list[np.ndarray] = []
    for i in range(n):
        others = np.delete(dist[i], i)
        kdist[i] = np.partition(others, k - 1)[k - 1]
        nb = np.flatnonzero(dist[i] <= kdist[i])
        neighborhoods.append(nb[nb != i])

    lrd = np.empty(n)
    for i, nb in enumerate(neighborhoods):
        reach = np.maximum(kdist[nb], dist[i, nb])
        total = reach.sum()
        lrd[i] = len(nb) / total if total > 0 else np.inf

    scores: dict[str, float] = {}
    for i, nb in enumerate(neighborhoods):
        with np.errstate(invalid="ignore"):
            ratio = np.mean(lrd[nb]) / lrd[i]
        scores[d.company_ids[i]] = 1.0 if np.isnan(ratio) else float(ratio)
    return scores


EXPERIMENT1_METRICS = ("emd", "ygdm", "sbsd", "random")


def experiment1(
    companies: Sequence[WeightedSubtrees],
    meta: Sequence[CompanyMeta],
    chart: ChartOfAccounts,
    eligibility: EligibilityParams = EligibilityParams(),
    k_range: Sequence[int] = range(1, 21),
    seed: int = 0,
    threads: int = 1,
) -> dict[tuple[str, int], float]:
    """Mean neighbor-NACE Jaccard for every metric and neighbor count.

    Returns a table keyed by (metric name, k). Neighbor orders per company
    are computed once per metric; the random baseline draws one seeded
    ranking per company, reproducible for a fixed seed.
    """
    nace = _nace_lookup(meta)
    ids = [ws.company_id for ws in companies]
    missing = [cid for cid in ids if cid not in nace]
    if missing:
        raise ValidationError(f"companies without NACE metadata: {missing[:5]}")

    eligible = eligible_companies(meta, eligibility)
    members = sorted(set(ids) & eligible)
    if not members:
        raise ValidationError(
            f"no eligible companies (population={len(ids)}, q={eligibility.q}, "
            f"r={eligibility.r})"
        )
    k_list = sorted(set(int(k) for k in k_range))
    if k_list[0] < 1 or k_list[-1] >= len(ids):
        raise ValidationError(f"k range {k_list[0]}..{k_list[-1]} outside [1, {len(ids) - 1}]")

    table: dict[tuple[str, int], float] = {}

    def fill_from_orders(name: str, orders: dict[str, list[str]]) -> None:
        sums = {k: 0.0 for k in k_list}
        for s in members:
            jacc = np.array([jaccard(nace[s], nace[p]) for p in orders[s][: k_list[-1]]])
            csum = np.cumsum(jacc)
            for k in k_list:
                sums[k] += csum[k - 1] / k
        for k in k_list:
            table[(name, k)] = sums[k] / len(members)

    for name, metric in (("emd", MetricChoice.EMD_GDM), ("ygdm", MetricChoice.YGDM), ("sbsd", MetricChoice.SBSD)):
        d = distance_matrix(companies, chart, metric, threads=threads)
        orders = {
            s: [d.company_ids[j] for j in _neighbor_order(d, d.index(s))] for s in members
        }
        fill_from_orders(name, orders)

    rng = np.random.default_rng(seed)
    random_orders = {
        s: random_ranking(ids, s, int(rng.integers(0, 2**63))) for s in members
    }
    fill_from_orders("random", random_orders)
    return table


def experiment1_csv(table: Mapping[tuple[str, int], float]) -> str:
    ks = sorted({k for _, k in table})
    lines = ["metric,k,mean_jaccard"]
    for name in EXPERIMENT1_METRICS:
        for k in ks:
            if (name, k) in table:
                lines.append(f"{name},{k},{table[(name, k)]:.12g}")
    return "\n".join(lines) + "\n"


def lof_csv(scores: Mapping[str, float], threshold: float = 1.5) -> str:
    lines = ["company_id,lof_score,is_outlier"]
    for cid in scores:
        flag = "true" if scores[cid] > threshold else "false"
        lines.append(f"{cid},{scores[cid]:.12g},{flag}")
    return "\n".join(lines) + "\n"
