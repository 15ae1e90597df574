"""Command-line interface.

Verbs mirror the pipeline stages and communicate through a run directory:

    vqcompare summarize manifest.json
    vqcompare metrics manifest.json --configs psnr:avgmse:6-1-1,ssim:mean:y \
        --workers 4 --out runs/demo
    vqcompare fit-subjective manifest.json --votes votes.csv --out runs/demo
    vqcompare correlate runs/demo --group-by all,codec_standard
    vqcompare rank runs/demo --which spearman
    vqcompare chart runs/demo --which pearson

Exit codes: 0 success, 1 partial (items were excluded; see run_log.json),
2 fatal.
"""

from __future__ import annotations

import argparse
import sys

from .engine import parse_config_specs
from .manifest import dataset_summary, load_manifest, load_votes
from .runner import (
    stage_chart,
    stage_correlate,
    stage_fit_subjective,
    stage_metrics,
    stage_rank,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqcompare",
        description="Full-reference video quality metrics and codec-comparison analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize", help="dataset size summary from a manifest")
    p.add_argument("manifest")

    p = sub.add_parser("metrics", help="compute/ingest metric scores for every stream")
    p.add_argument("manifest")
    p.add_argument(
        "--configs",
        required=True,
        help="comma-separated metric config specs, e.g. psnr:avgmse:6-1-1,ssim:mean:y",
    )
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seed", type=int, default=None, help="recorded in the run log")

    p = sub.add_parser("fit-subjective", help="fit per-sequence subjective scores")
    p.add_argument("manifest")
    p.add_argument("--votes", default=None, help="votes CSV (default: manifest's)")
    p.add_argument("--out", required=True, help="run directory")

    p = sub.add_parser("correlate", help="correlate metrics with subjective scores")
    p.add_argument("run_dir")
    p.add_argument(
        "--group-by",
        default="all",
        help="comma-separated grouping keys: all, codec_standard, bitrate_class, sequence",
    )
    p.add_argument("--raw-n-weights", action="store_true",
                   help="weight by n instead of n-3 (sensitivity check)")

    p = sub.add_parser("rank", help="rank metric configs by aggregated correlation")
    p.add_argument("run_dir")
    p.add_argument("--which", choices=("pearson", "spearman"), default="spearman")

    p = sub.add_parser("chart", help="emit the correlation bar chart SVG")
    p.add_argument("run_dir")
    p.add_argument("--which", choices=("pearson", "spearman"), required=True)

    return parser


def _cmd_summarize(args) -> int:
    manifest = load_manifest(args.manifest)
    votes = load_votes(manifest.votes_path) if manifest.votes_path else []
    row = dataset_summary(manifest, votes)
    print(f"dataset:  {row.dataset}")
    print(f"codecs:   {row.codecs}")
    print(f"videos:   {row.videos}")
    print(f"streams:  {row.streams}")
    print(f"responses:{row.responses:>9}")
    return 0


def _cmd_metrics(args) -> int:
    manifest = load_manifest(args.manifest)
    configs = parse_config_specs(args.configs)
    report = stage_metrics(
        manifest, configs, args.out, workers=args.workers, seed=args.seed
    )
    print(f"wrote metrics for {len(manifest.streams) - report.exclusions} stream(s) "
          f"to {args.out} ({report.exclusions} excluded)")
    return report.exit_code


def _cmd_fit_subjective(args) -> int:
    manifest = load_manifest(args.manifest)
    report = stage_fit_subjective(manifest, args.out, votes_path=args.votes)
    print(f"wrote subjective scores to {args.out}")
    return report.exit_code


def _cmd_correlate(args) -> int:
    groupings = tuple(k.strip() for k in args.group_by.split(",") if k.strip())
    report = stage_correlate(
        args.run_dir, groupings, raw_n_weights=args.raw_n_weights
    )
    print(f"wrote correlation report to {args.run_dir}")
    return report.exit_code


def _cmd_rank(args) -> int:
    ranked = stage_rank(args.run_dir, which=args.which)
    for rc in ranked:
        tied = "  (tied with leader)" if rc.statistically_tied else ""
        print(
            f"{rc.rank:>3}. {rc.aggregate.config_id:<28} "
            f"r={rc.aggregate.r_mean:+.4f} "
            f"[{rc.aggregate.ci_low:+.4f}, {rc.aggregate.ci_high:+.4f}]{tied}"
        )
    return 0


def _cmd_chart(args) -> int:
    path = stage_chart(args.run_dir, which=args.which)
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "summarize": _cmd_summarize,
    "metrics": _cmd_metrics,
    "fit-subjective": _cmd_fit_subjective,
    "correlate": _cmd_correlate,
    "rank": _cmd_rank,
    "chart": _cmd_chart,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
