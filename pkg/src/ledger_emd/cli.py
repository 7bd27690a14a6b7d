"""Single executable wiring the pipeline: synth -> distances -> evaluate ->
embed -> outliers.

Every subcommand writes a manifest next to its output (resolved flags, input
digests, tool version) so a run can be reproduced byte for byte. Exit codes:
0 success, 1 bad input, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .analysis import (
    EligibilityParams,
    LofParams,
    experiment1,
    experiment1_csv,
    lof_csv,
    lof_scores,
    parse_nace_metadata,
)
from .baselines import sbsd_distance  # noqa: F401  (re-exported for scripting)
from .embedding import Embedding2D, TsneParams, render_embedding_svg, tsne_embed
from .emd import (
    DistanceMatrix,
    MetricChoice,
    distance_matrix,
    explain_distance,
    flow_reports_json,
)
from .errors import LedgerEmdError, ValidationError
from .model import (
    SignConvention,
    build_weighted_subtrees,
    parse_chart_of_accounts,
    parse_trial_balance,
    write_chart_json,
    write_trial_balances_csv,
)
from .synth import SynthConfig, generate_chart, generate_population, nace_csv

PROG = "ledger-emd"


class _Parser(argparse.ArgumentParser):
    # Usage mistakes are user errors: report them on the validation exit code.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{PROG}: error: validation: {message}", file=sys.stderr)
        raise SystemExit(1)


def _read_file(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_output(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise ValidationError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_manifest(
    out_path: str, subcommand: str, args: argparse.Namespace, inputs: dict[str, bytes]
) -> None:
    flags = {
        key: str(value) if isinstance(value, Path) else value
        for key, value in sorted(vars(args).items())
        if key not in ("func", "subcommand") and value is not None
    }
    manifest = {
        "subcommand": subcommand,
        "flags": flags,
        "input_digests": {path: _digest(data) for path, data in sorted(inputs.items())},
        "tool_version": __version__,
    }
    _write_output(out_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_companies(args: argparse.Namespace, inputs: dict[str, bytes]):
    chart_bytes = _read_file(args.chart)
    balances_bytes = _read_file(args.balances)
    inputs[args.chart] = chart_bytes
    inputs[args.balances] = balances_bytes
    try:
        chart = parse_chart_of_accounts(chart_bytes)
    except ValidationError as exc:
        raise ValidationError(f"{args.chart}: {exc}") from exc
    try:
        balances = parse_trial_balance(balances_bytes, chart)
    except ValidationError as exc:
        raise ValidationError(f"{args.balances}: {exc}") from exc
    convention = SignConvention(getattr(args, "sign_convention", "std"))
    companies = [build_weighted_subtrees(tb, chart, convention) for tb in balances]
    return chart, companies


def _load_nace(path: str, inputs: dict[str, bytes]):
    data = _read_file(path)
    inputs[path] = data
    try:
        return parse_nace_metadata(data)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def _threads(args: argparse.Namespace) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("LEDGER_EMD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"LEDGER_EMD_THREADS={env!r} is not an integer") from None
    return 1


def cmd_distances(args: argparse.Namespace) -> int:
    inputs: dict[str, bytes] = {}
    chart, companies = _load_companies(args, inputs)
    metric = MetricChoice(args.metric)
    d = distance_matrix(companies, chart, metric, threads=_threads(args))
    _write_output(args.output, d.to_csv())
    _write_manifest(args.output + ".manifest.json", "distances", args, inputs)
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    inputs: dict[str, bytes] = {}
    chart, companies = _load_companies(args, inputs)
    try:
        id_a, id_b = args.pair.split(",")
    except ValueError:
        raise ValidationError(f"--pair must be two comma-separated ids, got {args.pair!r}") from None
    by_id = {ws.company_id: ws for ws in companies}
    for cid in (id_a, id_b):
        if cid not in by_id:
            raise ValidationError(f"unknown company id {cid!r} in {args.balances}")
    reports = explain_distance(by_id[id_a], by_id[id_b], chart)
    _write_output(args.output, flow_reports_json(reports, chart))
    _write_manifest(args.output + ".manifest.json", "explain", args, inputs)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    inputs: dict[str, bytes] = {}
    chart, companies = _load_companies(args, inputs)
    meta = _load_nace(args.nace, inputs)
    table = experiment1(
        companies,
        meta,
        chart,
        eligibility=EligibilityParams(q=args.q, r=args.r),
        k_range=range(1, args.k_max + 1),
        seed=args.seed,
        threads=_threads(args),
    )
    _write_output(args.output, experiment1_csv(table))
    _write_manifest(args.output + ".manifest.json", "evaluate", args, inputs)
    return 0


def _read_outlier_ids(path: str, inputs: dict[str, bytes]) -> set[str]:
    data = _read_file(path)
    inputs[path] = data
    reader = csv.reader(io.StringIO(data.decode("utf-8")))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["company_id", "lof_score", "is_outlier"]:
        raise ValidationError(f"{path}: expected header company_id,lof_score,is_outlier")
    return {row[0] for row in reader if row and row[2].strip() == "true"}


def cmd_embed(args: argparse.Namespace) -> int:
    inputs: dict[str, bytes] = {}
    dist_bytes = _read_file(args.distances)
    inputs[args.distances] = dist_bytes
    try:
        d = DistanceMatrix.from_csv(dist_bytes.decode("utf-8"))
    except ValidationError as exc:
        raise ValidationError(f"{args.distances}: {exc}") from exc
    params = TsneParams(perplexity=args.perplexity, iterations=args.iterations, seed=args.seed)
    emb = tsne_embed(d, params)
    _write_output(args.output, emb.to_csv())

    if args.svg:
        highlight: set[str] = set()
        if args.highlight_nace:
            if not args.nace:
                raise ValidationError("--highlight-nace requires --nace metadata")
            meta = _load_nace(args.nace, inputs)
            highlight = {m.company_id for m in meta if args.highlight_nace in m.nace_codes}
        outliers: set[str] = set()
        if args.circle_outliers:
            outliers = _read_outlier_ids(args.circle_outliers, inputs)
        _write_output(args.svg, render_embedding_svg(emb, highlight, outliers))
    elif args.highlight_nace or args.circle_outliers:
        raise ValidationError("--highlight-nace/--circle-outliers require --svg")
    _write_manifest(args.output + ".manifest.json", "embed", args, inputs)
    return 0


def cmd_outliers(args: argparse.Namespace) -> int:
    inputs: dict[str, bytes] = {}
    dist_bytes = _read_file(args.distances)
    inputs[args.distances] = dist_bytes
    try:
        d = DistanceMatrix.from_csv(dist_bytes.decode("utf-8"))
    except ValidationError as exc:
        raise ValidationError(f"{args.distances}: {exc}") from exc

    if args.filter_nace:
        if not args.nace:
            raise ValidationError("--filter-nace requires --nace metadata")
        meta = _load_nace(args.nace, inputs)
        keep = [
            cid
            for cid in d.company_ids
            if any(m.company_id == cid and args.filter_nace in m.nace_codes for m in meta)
        ]
        if len(keep) <= args.k:
            raise ValidationError(
                f"only {len(keep)} companies carry NACE {args.filter_nace}, "
                f"need more than k={args.k}"
            )
        d = d.submatrix(keep)

    scores = lof_scores(d, LofParams(k_neighbors=args.k))
    _write_output(args.output, lof_csv(scores, threshold=args.threshold))
    _write_manifest(args.output + ".manifest.json", "outliers", args, inputs)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create {out_dir}: {exc.strerror or exc}") from exc
    chart = generate_chart(args.seed, depth=args.depth, branching=args.branching)
    cfg = SynthConfig(
        seed=args.seed,
        n_companies=args.companies,
        n_industries=args.industries,
        noise=args.noise,
    )
    balances, meta = generate_population(chart, cfg)
    _write_output(str(out_dir / "chart.json"), write_chart_json(chart))
    _write_output(str(out_dir / "balances.csv"), write_trial_balances_csv(balances))
    _write_output(str(out_dir / "nace.csv"), nace_csv(meta))
    _write_manifest(str(out_dir / "manifest.json"), "synth", args, {})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__)
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("distances", parents=[], help="pairwise company distance matrix")
    p.add_argument("--chart", required=True)
    p.add_argument("--balances", required=True)
    p.add_argument("--metric", choices=["emd", "ygdm", "sbsd"], default="emd")
    p.add_argument("--sign-convention", choices=["std", "flipped"], default="std")
    p.add_argument("--threads", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("explain", help="per-subtree optimal flows for one company pair")
    p.add_argument("--chart", required=True)
    p.add_argument("--balances", required=True)
    p.add_argument("--sign-convention", choices=["std", "flipped"], default="std")
    p.add_argument("--pair", required=True, metavar="ID_A,ID_B")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="neighbor NACE-overlap table for all metrics")
    p.add_argument("--chart", required=True)
    p.add_argument("--balances", required=True)
    p.add_argument("--nace", required=True)
    p.add_argument("--sign-convention", choices=["std", "flipped"], default="std")
    p.add_argument("--q", type=int, default=20)
    p.add_argument("--r", type=float, default=0.2)
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", help="2D t-SNE company map from a distance matrix")
    p.add_argument("--distances", required=True)
    p.add_argument("--perplexity", type=float, default=20.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--svg")
    p.add_argument("--highlight-nace", metavar="CODE")
    p.add_argument("--circle-outliers", metavar="LOF_CSV")
    p.add_argument("--nace")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("outliers", help="local outlier factor scores")
    p.add_argument("--distances", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--threshold", type=float, default=1.5)
    p.add_argument("--filter-nace", metavar="CODE")
    p.add_argument("--nace")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("synth", help="seeded synthetic chart, balances, and NACE data")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--companies", type=int, default=1000)
    p.add_argument("--industries", type=int, default=12)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--branching", type=int, default=3)
    p.add_argument("--noise", type=float, default=50.0)
    p.add_argument("-o-dir", "--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        print(f"{PROG}: error: validation: {exc}", file=sys.stderr)
        return 1
    except LedgerEmdError as exc:
        print(f"{PROG}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"{PROG}: error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())
