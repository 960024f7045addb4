"""Command-line interface: analyze a dataset, run simulation studies, report.

Exit codes are a stable contract: 0 success, 1 validation problem (flags,
schema, file contents), 2 numeric failure during estimation.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import __version__
from .competing import bonferroni_one_step, oracle_one_step
from .config import AnalysisConfig
from .dataset import CsvSchema, load_csv, standardize_mediators
from .errors import IndexError_, NumericError, SurvnieError, ValidationError
from .report import (
    AnalysisRecord,
    format_table,
    read_records,
    svg_interval_chart,
    svg_qq,
    svg_series_chart,
    write_records,
)
from .simulation import MODELS, SimulationSpec, run_coverage_study
from .stabilized import multi_ordering_analysis

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2

_STANDARDIZE = {"zscore": "zscore", "normal-score": "normal_score"}


class _Parser(argparse.ArgumentParser):
    """argparse with the package's exit-code contract (1 on bad flags)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_VALIDATION)


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated integer list, got {text!r}")


def build_parser() -> _Parser:
    parser = _Parser(prog="survnie", description=__doc__)
    parser.add_argument("--version", action="version", version=f"survnie {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="analyze a CSV dataset", parents=[], add_help=True)
    pa.add_argument("--data", required=True, help="CSV file with header row")
    pa.add_argument("--time", required=True, help="follow-up time column")
    pa.add_argument("--status", required=True, help="event indicator column (1=event)")
    pa.add_argument("--exposure", required=True, help="binary exposure column")
    pa.add_argument("--mediators", default=None,
                    help="comma-separated column list or a column-name prefix "
                         "(default: every unmapped column)")
    pa.add_argument("--confounders", default="", help="comma-separated column list")
    pa.add_argument("--log-time", action="store_true",
                    help="time column holds raw times; log-transform at load")
    qn = pa.add_mutually_exclusive_group()
    qn.add_argument("--qn-fraction", type=float, default=0.8,
                    help="burn-in prefix as a fraction of n (default 0.8)")
    qn.add_argument("--qn-list", type=str, default=None,
                    help="explicit comma-separated burn-in sizes for sensitivity runs")
    pa.add_argument("--orderings", type=int, default=100,
                    help="number of random orderings to combine (default 100)")
    pa.add_argument("--alpha", type=float, default=0.1)
    pa.add_argument("--seed", type=int, default=1)
    pa.add_argument("--method", default="stabilized",
                    help="stabilized | bonferroni | naive | oracle:K (1-based label)")
    pa.add_argument("--extended", action="store_true",
                    help="adjust slope and shift estimates for the confounders")
    pa.add_argument("--standardize", choices=sorted(_STANDARDIZE), default="normal-score")
    pa.add_argument("--nuisance-scope", choices=("appendix", "full"), default="appendix")
    pa.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    pa.add_argument("--out", required=True, help="output JSON record file")
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("simulate", help="run a Monte Carlo coverage study")
    ps.add_argument("--model", required=True, choices=MODELS)
    ps.add_argument("--n", type=int, default=800)
    ps.add_argument("--p", type=str, default="100", help="comma-separated mediator counts")
    ps.add_argument("--reps", type=int, default=500)
    ps.add_argument("--methods", type=str, default="stabilized",
                    help="comma-separated: stabilized,bonferroni,naive,oracle")
    ps.add_argument("--qn-fraction", type=float, default=0.8)
    ps.add_argument("--alpha", type=float, default=0.1)
    ps.add_argument("--seed", type=int, default=1)
    ps.add_argument("--censoring", type=float, default=0.2)
    ps.add_argument("--standardize", choices=sorted(_STANDARDIZE), default="normal-score")
    ps.add_argument("--oracle-k", type=int, default=1, help="1-based mediator for oracle")
    ps.add_argument("--extended", action="store_true")
    ps.add_argument("--nuisance-scope", choices=("appendix", "full"), default="appendix")
    ps.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ps.add_argument("--svg", action="store_true", help="emit SVG panels")
    ps.add_argument("--out-dir", required=True)
    ps.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("report", help="merge and render analysis records")
    pr.add_argument("paths", nargs="+", help="AnalysisRecord JSON or coverage CSV files")
    pr.add_argument("--svg-out", default=None, help="write an interval chart here")
    pr.set_defaults(func=cmd_report)
    return parser


def _parse_method(text: str, names) -> tuple[str, int | None]:
    if text in ("stabilized", "bonferroni", "naive"):
        return text, None
    if text.startswith("oracle:"):
        token = text.split(":", 1)[1]
        if token in names:
            return "oracle", names.index(token)
        try:
            label = int(token)
        except ValueError:
            raise IndexError_(f"unknown mediator label {token!r}")
        if not 1 <= label <= len(names):
            raise IndexError_(f"mediator label {label} out of range (labels are 1-based)")
        return "oracle", label - 1
    raise ValidationError(f"unknown method {text!r}")


def cmd_analyze(args) -> int:
    confounders = tuple(c.strip() for c in args.confounders.split(",") if c.strip())
    schema = CsvSchema(
        time=args.time,
        status=args.status,
        exposure=args.exposure,
        mediators=args.mediators,
        confounders=confounders,
        log_transform=args.log_time,
    )
    ds = load_csv(args.data, schema)
    ds = standardize_mediators(ds, _STANDARDIZE[args.standardize])
    if args.extended and ds.q == 0:
        raise ValidationError("--extended requires --confounders")
    config = AnalysisConfig(
        nuisance_scope=args.nuisance_scope,
        adjust_for_confounders=args.extended,
        threads=args.threads,
    )
    method, oracle_k = _parse_method(args.method, list(ds.mediator_names))
    if args.qn_list is not None:
        qns = _int_list(args.qn_list)
    else:
        if not 0.0 < args.qn_fraction < 1.0:
            raise ValidationError("--qn-fraction must lie in (0, 1)")
        qns = [int(round(args.qn_fraction * ds.n))]
    for qn in qns:
        if not 1 <= qn < ds.n:
            raise ValidationError(f"burn-in {qn} out of range for n={ds.n}")

    echo = {
        "data": args.data,
        "time": args.time,
        "status": args.status,
        "exposure": args.exposure,
        "mediators": args.mediators,
        "confounders": list(confounders),
        "log_time": args.log_time,
        "method": args.method,
        "standardize": args.standardize,
        "nuisance_scope": args.nuisance_scope,
        "extended": args.extended,
        "orderings": args.orderings,
        "alpha": args.alpha,
        "threads": args.threads,
    }

    records = []
    for qn in qns:
        if method == "stabilized":
            ens = multi_ordering_analysis(ds, args.orderings, qn, args.alpha, args.seed, config)
            rep = ens.reported
            records.append(AnalysisRecord(
                method=method,
                qn=qn,
                orderings=args.orderings,
                alpha=args.alpha,
                estimate=rep.estimate,
                se=rep.se,
                ci_low=ens.combined_ci_low,
                ci_high=ens.combined_ci_high,
                p_value=rep.p_value,
                combined_p=ens.combined_p,
                selected=[list(kv) for kv in ens.checkpoint_selected],
                config=echo,
                seed=args.seed,
                version=__version__,
            ))
        else:
            if method == "oracle":
                res = oracle_one_step(ds, oracle_k, args.alpha, config)
            else:
                res = bonferroni_one_step(ds, args.alpha, config, correct=method == "bonferroni")
            records.append(AnalysisRecord(
                method=method,
                qn=ds.n,
                orderings=1,
                alpha=args.alpha,
                estimate=res.estimate,
                se=res.se,
                ci_low=res.ci_low,
                ci_high=res.ci_high,
                p_value=res.p_value,
                k_used=ds.mediator_names[res.k_used],
                config=echo,
                seed=args.seed,
                version=__version__,
            ))
    write_records(args.out, records)
    print(format_table(records))
    return EXIT_OK


def cmd_simulate(args) -> int:
    p_values = _int_list(args.p)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in ("stabilized", "bonferroni", "naive", "oracle"):
            raise ValidationError(f"unknown method {m!r}")
    if not methods:
        raise ValidationError("no methods requested")
    if not 0.0 < args.qn_fraction < 1.0:
        raise ValidationError("--qn-fraction must lie in (0, 1)")
    if args.oracle_k < 1:
        raise IndexError_("--oracle-k labels are 1-based")
    config = AnalysisConfig(
        nuisance_scope=args.nuisance_scope,
        adjust_for_confounders=args.extended,
        threads=args.threads,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    burn_in = int(round(args.qn_fraction * args.n))
    rows = []
    reports = {}
    for p in p_values:
        spec = SimulationSpec(model=args.model, n=args.n, p=p, censor_target=args.censoring)
        report = run_coverage_study(
            spec, args.reps, methods, burn_in, args.alpha, seed=args.seed,
            standardize=_STANDARDIZE[args.standardize], oracle_k=args.oracle_k - 1,
            config=config,
        )
        reports[p] = report
        rows.extend(report.to_csv_rows())
        for m in methods:
            pairs = report.qq_pairs(m)
            path = os.path.join(args.out_dir, f"qq_{m}_p{p}.csv")
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["theoretical_quantile", "standardized_statistic"])
                writer.writerows(pairs.tolist())

    report_path = os.path.join(args.out_dir, "report.csv")
    fields = ["model", "n", "p", "method", "alpha", "burn_in", "truth", "reps",
              "failures", "coverage", "mean_width", "mean_estimate", "rejection_rate"]
    with open(report_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)

    if args.svg:
        coverage = {
            m: (p_values, [reports[p].summary_for(m).coverage for p in p_values])
            for m in methods
        }
        width = {
            m: (p_values, [reports[p].summary_for(m).mean_width for p in p_values])
            for m in methods
        }
        svg_series_chart(
            coverage, "candidate mediators", "empirical coverage",
            title=f"{args.model}: coverage at nominal {1 - args.alpha:.0%}",
            nominal=1 - args.alpha, log_x=len(p_values) > 1,
        ).save(os.path.join(args.out_dir, "coverage.svg"))
        svg_series_chart(
            width, "candidate mediators", "mean interval width",
            title=f"{args.model}: interval width", log_x=len(p_values) > 1,
        ).save(os.path.join(args.out_dir, "width.svg"))
        for p in p_values:
            for m in methods:
                pairs = reports[p].qq_pairs(m)
                if pairs.shape[0] == 0:
                    continue
                svg_qq(pairs[:, 0], pairs[:, 1], title=f"{args.model} p={p} {m}").save(
                    os.path.join(args.out_dir, f"qq_{m}_p{p}.svg")
                )

    for row in rows:
        print(
            f"{row['model']} p={row['p']} {row['method']}: "
            f"coverage={row['coverage']:.3f} width={row['mean_width']:.3f} "
            f"mean={row['mean_estimate']:.3f} ({row['reps']} reps, {row['failures']} failures)"
        )
    return EXIT_OK


def cmd_report(args) -> int:
    records = []
    coverage_rows = []
    for path in args.paths:
        if path.endswith(".csv"):
            try:
                with open(path, newline="", encoding="utf-8") as fh:
                    coverage_rows.extend(csv.DictReader(fh))
            except OSError as exc:
                raise ValidationError(f"cannot read {path}: {exc}")
        else:
            records.extend(read_records(path))
    if records:
        print(format_table(records))
        if args.svg_out:
            svg_interval_chart(records, title="estimates and intervals").save(args.svg_out)
    if coverage_rows:
        cols = ["model", "p", "method", "coverage", "mean_width", "mean_estimate", "reps"]
        print("  ".join(c.ljust(13) for c in cols).rstrip())
        for row in coverage_rows:
            print("  ".join(str(row.get(c, "-")).ljust(13) for c in cols).rstrip())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        print(f"survnie: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"survnie: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SurvnieError as exc:
        print(f"survnie: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"survnie: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
