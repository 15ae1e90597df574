"""Batch pipeline over a dataset manifest.

Stages communicate through files in a run directory so each CLI verb can
operate independently:

    streams.csv                stream metadata snapshot for later stages
    metrics.csv                sequence-level score per (stream, config)
    frame_scores.csv           per-frame channel scores per scoring group
    scores.csv                 fitted subjective scores per stream
    sequence_correlations.csv  per-sequence correlation records
    correlations.csv           Fisher-aggregated report (CI columns: Pearson)
    ranking.csv                configs ordered by aggregated correlation
    chart_<which>.svg          bar chart with CI whiskers
    run_log.json               machine-readable decisions and accounting

Per-item failures never abort a batch: the item is excluded, the reason
recorded, and completeness accounting (processed + excluded = declared)
lands in the run log. Outputs are written in sorted key order, so results
are byte-identical for any worker count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import correlation as corr
from .charts import emit_bar_chart_svg
from .engine import (
    KIND_EXTERNAL,
    MetricConfig,
    MetricResult,
    aggregate_sequence_score,
    ingest_external_scores,
    load_external_scores,
    score_frames,
)
from .manifest import Manifest, load_votes
from .subjective import build_vote_matrix, fit_bradley_terry
from .video import open_stream

RUN_LOG = "run_log.json"


@dataclass
class StageReport:
    stage: str
    exclusions: int = 0
    decisions: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.exclusions else 0


def _load_log(out_dir: Path) -> dict:
    path = out_dir / RUN_LOG
    if path.is_file():
        return json.loads(path.read_text())
    return {"decisions": [], "stages": {}, "completeness": {}}


def _save_log(out_dir: Path, run_log: dict):
    (out_dir / RUN_LOG).write_text(json.dumps(run_log, indent=2) + "\n")


def _record(run_log: dict, stage: str, item: str, action: str, reason: str):
    run_log["decisions"].append(
        {"stage": stage, "item": item, "action": action, "reason": reason}
    )


def _reset_stage(run_log: dict, stage: str):
    # rerunning a stage replaces its decisions instead of appending duplicates
    run_log["decisions"] = [d for d in run_log["decisions"] if d["stage"] != stage]


def _write_csv(path: Path, header: list[str], rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    # repr round-trips doubles exactly, keeping reruns byte-identical
    return repr(float(value))


def _score_stream_job(job):
    """Worker body: score one stream pair for every internal config group."""
    (stream_id, ref_path, dec_path, width, height, fmt, configs) = job
    ref = open_stream(ref_path, width, height, fmt)
    try:
        dist = open_stream(dec_path, width, height, fmt)
    except Exception:
        ref.close()
        raise
    try:
        scores_by_key, frames_used, truncated = score_frames(ref, dist, configs)
    finally:
        ref.close()
        dist.close()
    return stream_id, scores_by_key, frames_used, truncated


def stage_metrics(
    manifest: Manifest,
    configs: list[MetricConfig],
    out_dir,
    workers: int = 1,
    seed: int | None = None,
) -> StageReport:
    """Compute/ingest every (stream, config) score and persist the tables."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_log = _load_log(out_dir)
    _reset_stage(run_log, "metrics")
    report = StageReport(stage="metrics")
    internal = [c for c in configs if c.kind != KIND_EXTERNAL]
    external = [c for c in configs if c.kind == KIND_EXTERNAL]

    results: list[MetricResult] = []
    frame_rows = []

    jobs = []
    for stream in manifest.streams.values():
        if stream.decoded is None or not internal:
            continue
        seq = manifest.sequences[stream.sequence_id]
        jobs.append(
            (
                stream.id,
                str(seq.reference),
                str(stream.decoded),
                seq.width,
                seq.height,
                seq.format,
                internal,
            )
        )

    outcomes: dict[str, object] = {}
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {job[0]: pool.submit(_score_stream_job, job) for job in jobs}
            for stream_id, future in futures.items():
                exc = future.exception()
                outcomes[stream_id] = exc if exc is not None else future.result()
    else:
        for job in jobs:
            try:
                outcomes[job[0]] = _score_stream_job(job)
            except Exception as exc:
                outcomes[job[0]] = exc

    for stream_id in sorted(outcomes):
        outcome = outcomes[stream_id]
        if isinstance(outcome, Exception):
            _record(run_log, "metrics", stream_id, "error", str(outcome))
            continue
        _, scores_by_key, frames_used, truncated = outcome
        if truncated:
            _record(
                run_log,
                "metrics",
                stream_id,
                "truncated",
                f"length mismatch; compared first {frames_used} frame(s)",
            )
        seq = manifest.sequences[manifest.streams[stream_id].sequence_id]
        max_val = seq.format.max_val
        for cfg in internal:
            per_frame = scores_by_key[cfg.scoring_key()]
            results.append(
                MetricResult(
                    stream_id=stream_id,
                    config=cfg,
                    per_frame=per_frame,
                    sequence_score=aggregate_sequence_score(per_frame, cfg, max_val),
                    frames_used=frames_used,
                    bit_depth=seq.format.bit_depth,
                    truncated=truncated,
                )
            )
        for key in sorted(scores_by_key):
            for idx, (y, u, v) in enumerate(scores_by_key[key]):
                frame_rows.append(
                    [stream_id, key, idx, _fmt(y), _fmt(u), _fmt(v)]
                )

    known = set(manifest.streams)
    table_rows: dict[str, list] = {}
    for cfg in external:
        table = manifest.external_tables.get(cfg.external_name)
        if table is None:
            _record(
                run_log,
                "metrics",
                cfg.config_id,
                "error",
                f"manifest has no external score table {cfg.external_name!r}",
            )
            continue
        try:
            if cfg.external_name not in table_rows:
                table_rows[cfg.external_name] = load_external_scores(table)
            rows = table_rows[cfg.external_name]
            results.extend(ingest_external_scores(rows, cfg, known_streams=known))
        except ValueError as exc:
            _record(run_log, "metrics", cfg.config_id, "error", str(exc))

    covered = {res.stream_id for res in results}
    errored = {
        d["item"]
        for d in run_log["decisions"]
        if d["stage"] == "metrics" and d["action"] == "error"
    }
    for stream_id in sorted(known - covered):
        if stream_id not in errored:
            _record(
                run_log,
                "metrics",
                stream_id,
                "excluded",
                "no requested config produced a score for this stream",
            )
    # partial whenever any item failed, even if other configs still covered
    # the affected stream
    report.exclusions = len(errored) + len((known - covered) - errored)

    _write_csv(
        out_dir / "streams.csv",
        ["stream_id", "sequence_id", "codec", "standard", "bitrate_kbps", "bitrate_class"],
        [
            [s.id, s.sequence_id, s.codec, s.codec_standard, s.bitrate_kbps, s.bitrate_class]
            for s in sorted(manifest.streams.values(), key=lambda s: s.id)
        ],
    )
    results.sort(key=lambda r: (r.stream_id, r.config.config_id))
    _write_csv(
        out_dir / "metrics.csv",
        ["stream_id", "sequence_id", "config", "score", "frames_used", "truncated", "bit_depth"],
        [
            [
                res.stream_id,
                manifest.streams[res.stream_id].sequence_id,
                res.config.config_id,
                _fmt(res.sequence_score),
                res.frames_used,
                int(res.truncated),
                res.bit_depth if res.bit_depth is not None else "",
            ]
            for res in results
        ],
    )
    frame_rows.sort(key=lambda r: (r[0], r[1], r[2]))
    _write_csv(
        out_dir / "frame_scores.csv",
        ["stream_id", "scoring_key", "frame", "y", "u", "v"],
        frame_rows,
    )

    run_log["stages"]["metrics"] = {
        "configs": [c.config_id for c in configs],
        "workers": workers,
        "seed": seed,
    }
    run_log["completeness"] = {
        "streams_declared": len(known),
        "streams_processed": len(covered),
        "streams_excluded": len(known - covered),
    }
    _save_log(out_dir, run_log)
    report.decisions = [d for d in run_log["decisions"] if d["stage"] == report.stage]
    return report


def stage_fit_subjective(manifest: Manifest, out_dir, votes_path=None) -> StageReport:
    """Fit per-sequence subjective scores from the pairwise vote table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_log = _load_log(out_dir)
    _reset_stage(run_log, "fit-subjective")
    report = StageReport(stage="fit-subjective")
    votes_path = votes_path or manifest.votes_path
    if votes_path is None:
        raise ValueError("no votes table: pass --votes or set it in the manifest")
    votes = load_votes(votes_path)

    by_sequence: dict[str, list] = {}
    skipped_rows = 0
    for row in votes:
        if row.sequence_id not in manifest.sequences:
            skipped_rows += 1
            continue
        known = {s.id for s in manifest.streams_of(row.sequence_id)}
        if row.stream_a not in known or row.stream_b not in known:
            skipped_rows += 1
            continue
        by_sequence.setdefault(row.sequence_id, []).append(row)
    if skipped_rows:
        _record(
            run_log,
            "fit-subjective",
            "votes",
            "skipped_votes",
            f"{skipped_rows} row(s) referenced unknown sequences or streams",
        )
        report.exclusions += 1

    score_rows = []
    for seq_id in sorted(by_sequence):
        rows = by_sequence[seq_id]
        voted = sorted({r.stream_a for r in rows} | {r.stream_b for r in rows})
        declared = {s.id for s in manifest.streams_of(seq_id)}
        for missing in sorted(declared - set(voted)):
            _record(
                run_log,
                "fit-subjective",
                missing,
                "excluded",
                "stream received no votes",
            )
            report.exclusions += 1
        matrix = build_vote_matrix(voted, [(r.winner_id, r.loser_id) for r in rows])
        try:
            fit = fit_bradley_terry(matrix)
        except ValueError as exc:
            _record(run_log, "fit-subjective", seq_id, "error", str(exc))
            report.exclusions += 1
            continue
        if not fit.converged:
            _record(
                run_log,
                "fit-subjective",
                seq_id,
                "non_converged",
                f"stopped after {fit.iterations} iterations",
            )
        for item, score in zip(fit.items, fit.scores):
            score_rows.append(
                [
                    seq_id,
                    item,
                    _fmt(score),
                    fit.iterations,
                    int(fit.converged),
                    _fmt(fit.log_likelihood),
                ]
            )

    score_rows.sort(key=lambda r: (r[0], r[1]))
    _write_csv(
        out_dir / "scores.csv",
        ["sequence_id", "stream_id", "score", "iterations", "converged", "log_likelihood"],
        score_rows,
    )
    run_log["stages"]["fit-subjective"] = {
        "votes": str(votes_path),
        "sequences_fitted": len(by_sequence),
    }
    _save_log(out_dir, run_log)
    report.decisions = [d for d in run_log["decisions"] if d["stage"] == report.stage]
    return report


def _read_run_csv(out_dir: Path, name: str) -> list[dict]:
    path = out_dir / name
    if not path.is_file():
        raise FileNotFoundError(
            f"{path} not found; run the earlier pipeline stages first"
        )
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _load_records(out_dir: Path) -> list[corr.SequenceCorrelation]:
    return [
        corr.SequenceCorrelation(
            config_id=row["config"],
            sequence_id=row["sequence_id"],
            group_key=row["group_key"],
            group_value=row["group_value"],
            r_pearson=float(row["r_pearson"]),
            r_spearman=float(row["r_spearman"]),
            n=int(row["n"]),
        )
        for row in _read_run_csv(out_dir, "sequence_correlations.csv")
    ]


def stage_correlate(out_dir, groupings=("all",), raw_n_weights: bool = False) -> StageReport:
    """Correlate metric scores with subjective scores and aggregate per group."""
    out_dir = Path(out_dir)
    run_log = _load_log(out_dir)
    _reset_stage(run_log, "correlate")
    report = StageReport(stage="correlate")
    for key in groupings:
        if key not in corr.GROUP_KEYS:
            raise ValueError(
                f"unknown grouping key {key!r} (want one of {corr.GROUP_KEYS})"
            )

    metric_rows = _read_run_csv(out_dir, "metrics.csv")
    subj_rows = _read_run_csv(out_dir, "scores.csv")
    stream_rows = _read_run_csv(out_dir, "streams.csv")

    metric_scores: dict[tuple[str, str], float] = {
        (row["config"], row["stream_id"]): float(row["score"]) for row in metric_rows
    }
    subjective: dict[str, float] = {
        row["stream_id"]: float(row["score"]) for row in subj_rows
    }
    streams_by_seq: dict[str, list[dict]] = {}
    for row in stream_rows:
        streams_by_seq.setdefault(row["sequence_id"], []).append(row)
    configs = sorted({row["config"] for row in metric_rows})

    # Records are computed per subset dimension: the full per-sequence set
    # plus any requested stream-grouping keys.
    dimensions = ["all"] + [k for k in groupings if k in ("codec_standard", "bitrate_class")]
    dim_field = {"codec_standard": "standard", "bitrate_class": "bitrate_class"}

    records = []
    for config_id in configs:
        for seq_id in sorted(streams_by_seq):
            seq_streams = streams_by_seq[seq_id]
            for dim in dimensions:
                if dim == "all":
                    subsets = {"all": seq_streams}
                else:
                    subsets = {}
                    for row in seq_streams:
                        subsets.setdefault(row[dim_field[dim]], []).append(row)
                for value, members in sorted(subsets.items()):
                    xs, ys = [], []
                    for member in members:
                        sid = member["stream_id"]
                        if (config_id, sid) in metric_scores and sid in subjective:
                            xs.append(metric_scores[(config_id, sid)])
                            ys.append(subjective[sid])
                    label = f"{config_id}/{seq_id}/{dim}={value}"
                    if len(xs) < corr.MIN_POINTS:
                        _record(
                            run_log,
                            "correlate",
                            label,
                            "correlation_excluded",
                            f"only {len(xs)} stream(s) with both scores",
                        )
                        report.exclusions += 1
                        continue
                    try:
                        r_p = corr.pearson(xs, ys)
                        r_s = corr.spearman(xs, ys)
                    except corr.CorrelationUndefined as exc:
                        _record(
                            run_log, "correlate", label, "correlation_excluded", str(exc)
                        )
                        report.exclusions += 1
                        continue
                    records.append(
                        corr.SequenceCorrelation(
                            config_id=config_id,
                            sequence_id=seq_id,
                            group_key=dim,
                            group_value=value,
                            r_pearson=r_p,
                            r_spearman=r_s,
                            n=len(xs),
                        )
                    )

    records.sort(key=lambda r: (r.config_id, r.sequence_id, r.group_key, r.group_value))
    _write_csv(
        out_dir / "sequence_correlations.csv",
        ["config", "sequence_id", "group_key", "group_value", "r_pearson", "r_spearman", "n"],
        [
            [
                r.config_id,
                r.sequence_id,
                r.group_key,
                r.group_value,
                _fmt(r.r_pearson),
                _fmt(r.r_spearman),
                r.n,
            ]
            for r in records
        ],
    )

    agg_rows = []
    for key in groupings:
        by_pearson = {
            (a.config_id, a.group_value): a
            for a in corr.subset_correlations(records, key, "pearson", raw_n_weights)
        }
        by_spearman = {
            (a.config_id, a.group_value): a
            for a in corr.subset_correlations(records, key, "spearman", raw_n_weights)
        }
        for group in sorted(by_pearson):
            pear = by_pearson[group]
            spear = by_spearman[group]
            agg_rows.append(
                [
                    pear.config_id,
                    key,
                    pear.group_value,
                    _fmt(pear.r_mean),
                    _fmt(spear.r_mean),
                    _fmt(pear.ci_low),
                    _fmt(pear.ci_high),
                    pear.sequences_included,
                    pear.total_n,
                ]
            )
    if not agg_rows:
        raise ValueError("no group produced an aggregate; every record was excluded")
    _write_csv(
        out_dir / "correlations.csv",
        [
            "metric_config",
            "group_key",
            "group_value",
            "r_pearson",
            "r_spearman",
            "ci_low",
            "ci_high",
            "n_sequences",
            "total_n",
        ],
        agg_rows,
    )
    run_log["stages"]["correlate"] = {
        "groupings": list(groupings),
        "weighting": "raw-n" if raw_n_weights else "n-3",
        "ci_level": "95% (1.96)",
        "records": len(records),
    }
    _save_log(out_dir, run_log)
    report.decisions = [d for d in run_log["decisions"] if d["stage"] == report.stage]
    return report


def stage_rank(out_dir, which: str = "spearman", raw_n_weights: bool = False):
    """Rank configs by their overall aggregated correlation; writes ranking.csv."""
    out_dir = Path(out_dir)
    records = _load_records(out_dir)
    aggregates = corr.subset_correlations(records, "all", which, raw_n_weights)
    ranked = corr.rank_metric_configs(aggregates)
    _write_csv(
        out_dir / "ranking.csv",
        ["rank", "metric_config", "which", "r_mean", "ci_low", "ci_high", "statistically_tied"],
        [
            [
                rc.rank,
                rc.aggregate.config_id,
                which,
                _fmt(rc.aggregate.r_mean),
                _fmt(rc.aggregate.ci_low),
                _fmt(rc.aggregate.ci_high),
                int(rc.statistically_tied),
            ]
            for rc in ranked
        ],
    )
    run_log = _load_log(out_dir)
    run_log["stages"]["rank"] = {"which": which}
    _save_log(out_dir, run_log)
    return ranked


def stage_chart(out_dir, which: str = "spearman", raw_n_weights: bool = False) -> Path:
    """Emit the overall-correlation bar chart for one correlation kind."""
    out_dir = Path(out_dir)
    records = _load_records(out_dir)
    aggregates = corr.subset_correlations(records, "all", which, raw_n_weights)
    path = out_dir / f"chart_{which}.svg"
    emit_bar_chart_svg(
        aggregates,
        title=f"Overall {which.capitalize()} correlation with subjective scores",
        path=path,
    )
    return path


@dataclass
class RunConfig:
    configs: list[MetricConfig]
    out_dir: Path
    groupings: tuple = ("all",)
    workers: int = 1
    which_rank: str = "spearman"
    raw_n_weights: bool = False
    seed: int | None = None

    def __post_init__(self):
        if not self.configs:
            raise ValueError("need at least one metric config")
        if self.workers < 1:
            raise ValueError(f"worker count must be >= 1, got {self.workers}")


@dataclass
class RunOutcome:
    out_dir: Path
    exit_code: int
    ranked: list


def run_comparison(manifest: Manifest, run_config: RunConfig) -> RunOutcome:
    """Full pipeline: metrics, subjective fit, correlation, ranking, charts."""
    out_dir = Path(run_config.out_dir)
    reports = [
        stage_metrics(
            manifest,
            run_config.configs,
            out_dir,
            workers=run_config.workers,
            seed=run_config.seed,
        ),
        stage_fit_subjective(manifest, out_dir),
        stage_correlate(
            out_dir, run_config.groupings, raw_n_weights=run_config.raw_n_weights
        ),
    ]
    ranked = stage_rank(out_dir, which=run_config.which_rank,
                        raw_n_weights=run_config.raw_n_weights)
    for which in ("pearson", "spearman"):
        stage_chart(out_dir, which=which, raw_n_weights=run_config.raw_n_weights)
    exit_code = max(report.exit_code for report in reports)
    return RunOutcome(out_dir=out_dir, exit_code=exit_code, ranked=ranked)
