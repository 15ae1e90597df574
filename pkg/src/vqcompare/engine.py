"""Sequence-level metric computation and external score ingestion.

A MetricConfig pairs a metric kind with channel weights and a temporal
pooling strategy; one config is one bar in a comparison report. For PSNR
kinds each channel is pooled over time first and the channel weighting is
applied to the per-channel dB values. Similarity kinds are weighted per
frame and then averaged over time (a config switch selects the reverse
order for sensitivity checks).

Config spec grammar (comma-separated list):

    psnr:avgmse:6-1-1    psnr:avglog:y    ssim:mean:4-1-1
    msssim:mean:8-1-1    external:vmaf061:8-1-1
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .metrics import (
    ChannelWeights,
    SsimParams,
    mse_plane,
    ms_ssim_plane,
    psnr_avg_log,
    psnr_avg_mse,
    ssim_plane,
)

log = logging.getLogger(__name__)

KIND_PSNR = "psnr"
KIND_SSIM = "ssim"
KIND_MS_SSIM = "msssim"
KIND_EXTERNAL = "external"

TEMPORAL_AVG_MSE = "avgmse"
TEMPORAL_AVG_LOG = "avglog"
TEMPORAL_MEAN = "mean"

_PSNR_TEMPORALS = (TEMPORAL_AVG_MSE, TEMPORAL_AVG_LOG)


@dataclass(frozen=True)
class MetricConfig:
    kind: str
    weights: ChannelWeights
    temporal: str = TEMPORAL_MEAN
    ssim_params: SsimParams | None = None
    external_name: str | None = None
    # Similarity kinds only: weight channels within each frame before the
    # temporal mean (default), or pool each channel over time first.
    per_frame_weighting: bool = True

    def __post_init__(self):
        if self.kind == KIND_PSNR:
            if self.temporal not in _PSNR_TEMPORALS:
                raise ValueError(
                    f"PSNR requires temporal pooling in {_PSNR_TEMPORALS}, "
                    f"got {self.temporal!r}"
                )
        elif self.kind in (KIND_SSIM, KIND_MS_SSIM):
            if self.temporal != TEMPORAL_MEAN:
                raise ValueError(f"{self.kind} supports only 'mean' pooling")
            if self.ssim_params is None:
                object.__setattr__(self, "ssim_params", SsimParams())
        elif self.kind == KIND_EXTERNAL:
            if self.temporal != TEMPORAL_MEAN:
                raise ValueError("external metrics support only 'mean' pooling")
            if not self.external_name:
                raise ValueError("external metric config needs a model name")
        else:
            raise ValueError(f"unknown metric kind {self.kind!r}")

    @property
    def config_id(self) -> str:
        if self.kind == KIND_EXTERNAL:
            return f"external:{self.external_name}:{self.weights.spec()}"
        return f"{self.kind}:{self.temporal}:{self.weights.spec()}"

    def scoring_key(self) -> str:
        """Identifies configs whose per-frame channel scores coincide."""
        if self.kind == KIND_PSNR:
            return KIND_PSNR
        if self.kind == KIND_EXTERNAL:
            return f"external:{self.external_name}"
        return f"{self.kind}:{self.ssim_params.key()}"


def parse_config_spec(spec: str) -> MetricConfig:
    parts = [p.strip() for p in spec.strip().split(":")]
    if len(parts) != 3:
        raise ValueError(f"bad metric config spec {spec!r} (want kind:agg:weights)")
    kind, middle, weight_spec = parts
    kind = kind.lower()
    weights = ChannelWeights.from_spec(weight_spec)
    if kind == KIND_EXTERNAL:
        return MetricConfig(kind=kind, weights=weights, external_name=middle)
    if kind in ("ms-ssim", "ms_ssim"):
        kind = KIND_MS_SSIM
    return MetricConfig(kind=kind, weights=weights, temporal=middle.lower())


def parse_config_specs(specs: str) -> list[MetricConfig]:
    configs = [parse_config_spec(s) for s in specs.split(",") if s.strip()]
    if not configs:
        raise ValueError("no metric configs given")
    seen = set()
    for cfg in configs:
        if cfg.config_id in seen:
            raise ValueError(f"duplicate metric config {cfg.config_id}")
        seen.add(cfg.config_id)
    return configs


def config_grid(kinds, weight_specs, psnr_temporals=_PSNR_TEMPORALS):
    """Cartesian product of kinds and channel weightings."""
    configs = []
    for kind in kinds:
        temporals = psnr_temporals if kind == KIND_PSNR else (TEMPORAL_MEAN,)
        for temporal in temporals:
            for spec in weight_specs:
                configs.append(
                    MetricConfig(
                        kind=kind,
                        weights=ChannelWeights.from_spec(spec),
                        temporal=temporal,
                    )
                )
    return configs


@dataclass
class MetricResult:
    """Scores for one (reference, distorted) pair under one config.

    per_frame holds one (Y, U, V) triple per frame: mean squared error for
    PSNR kinds, similarity scores otherwise. The sequence score is always
    re-derivable from per_frame plus the config.
    """

    stream_id: str
    config: MetricConfig
    per_frame: list[tuple[float, float, float]]
    sequence_score: float
    frames_used: int
    bit_depth: int | None = None
    truncated: bool = False


def aggregate_sequence_score(per_frame, config: MetricConfig, max_val: int) -> float:
    """Fold per-frame channel values into the final weighted sequence score."""
    if not per_frame:
        raise ValueError("empty per-frame score list")
    channels = list(zip(*per_frame))
    if config.kind == KIND_PSNR:
        pool = psnr_avg_mse if config.temporal == TEMPORAL_AVG_MSE else psnr_avg_log
        per_channel_db = [pool(series, max_val) for series in channels]
        return config.weights.combine(*per_channel_db)
    if config.per_frame_weighting:
        weighted = [config.weights.combine(*triple) for triple in per_frame]
        return sum(weighted) / len(weighted)
    per_channel = [sum(series) / len(series) for series in channels]
    return config.weights.combine(*per_channel)


def _frame_channel_scores(ref_frame, dist_frame, scoring_key, params, max_val):
    if scoring_key == KIND_PSNR:
        scorer = lambda r, d: mse_plane(r, d)
    elif scoring_key.startswith(KIND_SSIM + ":"):
        scorer = lambda r, d: ssim_plane(r, d, params, max_val)
    else:
        scorer = lambda r, d: ms_ssim_plane(r, d, params, max_val)
    return tuple(
        scorer(rp, dp) for rp, dp in zip(ref_frame.planes(), dist_frame.planes())
    )


def score_frames(ref_reader, dist_reader, configs, workers: int = 1):
    """Per-frame channel scores for every distinct scoring group.

    Returns (scores_by_key, frames_used, truncated) where scores_by_key maps
    each scoring key to a frame-ordered list of (Y, U, V) triples. Frame
    scoring is pure, so frames may be evaluated concurrently; the output
    list order never depends on completion order.
    """
    if (ref_reader.width, ref_reader.height) != (dist_reader.width, dist_reader.height):
        raise ValueError(
            f"geometry mismatch: reference {ref_reader.width}x{ref_reader.height}, "
            f"distorted {dist_reader.width}x{dist_reader.height}"
        )
    if ref_reader.format != dist_reader.format:
        raise ValueError(
            f"format mismatch: {ref_reader.format} vs {dist_reader.format}"
        )
    for cfg in configs:
        if cfg.kind == KIND_EXTERNAL:
            raise ValueError(
                f"{cfg.config_id}: external metrics are ingested, not computed"
            )
    max_val = ref_reader.format.max_val
    groups = {}
    for cfg in configs:
        groups.setdefault(cfg.scoring_key(), cfg.ssim_params)

    def score_pair(pair):
        ref_frame, dist_frame = pair
        return {
            key: _frame_channel_scores(ref_frame, dist_frame, key, params, max_val)
            for key, params in groups.items()
        }

    state = {"truncated": False}

    def pair_iter():
        # lockstep reads stop at the shorter stream; exactly one side ending
        # early means the pair was truncated. Encoders occasionally drop the
        # trailing frame, so this is a recorded warning rather than an error.
        while True:
            ref_frame = ref_reader.read_frame()
            dist_frame = dist_reader.read_frame()
            if ref_frame is None or dist_frame is None:
                state["truncated"] = (ref_frame is None) != (dist_frame is None)
                return
            yield ref_frame, dist_frame

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_frame = list(pool.map(score_pair, pair_iter()))
    else:
        per_frame = [score_pair(p) for p in pair_iter()]

    if not per_frame:
        raise ValueError("empty sequence")
    frames_used = len(per_frame)
    truncated = state["truncated"]
    if truncated:
        log.warning(
            "frame count mismatch: compared the first %d frame(s)", frames_used
        )
    scores_by_key = {
        key: [frame_scores[key] for frame_scores in per_frame] for key in groups
    }
    return scores_by_key, frames_used, truncated


def compute_metrics_multi(
    ref_reader, dist_reader, configs, stream_id: str = "", workers: int = 1
) -> list[MetricResult]:
    """Score one stream pair under many configs, sharing per-frame passes."""
    scores_by_key, frames_used, truncated = score_frames(
        ref_reader, dist_reader, configs, workers=workers
    )
    max_val = ref_reader.format.max_val
    results = []
    for cfg in configs:
        per_frame = scores_by_key[cfg.scoring_key()]
        results.append(
            MetricResult(
                stream_id=stream_id,
                config=cfg,
                per_frame=per_frame,
                sequence_score=aggregate_sequence_score(per_frame, cfg, max_val),
                frames_used=frames_used,
                bit_depth=ref_reader.format.bit_depth,
                truncated=truncated,
            )
        )
    return results


def compute_metric(
    ref_reader, dist_reader, config: MetricConfig, stream_id: str = "", workers: int = 1
) -> MetricResult:
    return compute_metrics_multi(
        ref_reader, dist_reader, [config], stream_id=stream_id, workers=workers
    )[0]


# ----------------------------------------------------------------------
# External score tables (models such as the VMAF family are computed by
# external tools; their values enter the pipeline through a CSV table).

EXTERNAL_CSV_HEADER = ["stream_id", "channel", "frame", "value"]
_CHANNELS = ("Y", "U", "V")


@dataclass(frozen=True)
class ExternalScoreRow:
    stream_id: str
    channel: str  # Y, U, V or ALL
    frame: int | None
    value: float


def load_external_scores(path) -> list[ExternalScoreRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(EXTERNAL_CSV_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for line_no, rec in enumerate(reader, start=2):
            channel = (rec["channel"] or "ALL").strip().upper() or "ALL"
            if channel not in _CHANNELS + ("ALL",):
                raise ValueError(f"{path}:{line_no}: bad channel {rec['channel']!r}")
            frame_field = (rec["frame"] or "").strip()
            frame = int(frame_field) if frame_field else None
            rows.append(
                ExternalScoreRow(
                    stream_id=rec["stream_id"].strip(),
                    channel=channel,
                    frame=frame,
                    value=float(rec["value"]),
                )
            )
    return rows


def ingest_external_scores(
    rows, config: MetricConfig, known_streams=None
) -> list[MetricResult]:
    """Group external score rows into per-stream results under one config.

    Channel-resolved rows go through the channel weighting; frame-resolved
    rows are pooled by arithmetic mean. Sequence-level single rows pass
    through verbatim.
    """
    if config.kind != KIND_EXTERNAL:
        raise ValueError(f"{config.config_id} is not an external metric config")
    by_stream: dict[str, list[ExternalScoreRow]] = {}
    seen = set()
    for row in rows:
        key = (row.stream_id, row.channel, row.frame)
        if key in seen:
            raise ValueError(
                f"duplicate external score row for stream {row.stream_id!r}, "
                f"channel {row.channel}, frame {row.frame}"
            )
        seen.add(key)
        if known_streams is not None and row.stream_id not in known_streams:
            raise ValueError(
                f"external score row references unknown stream {row.stream_id!r}"
            )
        by_stream.setdefault(row.stream_id, []).append(row)

    results = []
    for stream_id in sorted(by_stream):
        stream_rows = by_stream[stream_id]
        channels = {r.channel for r in stream_rows}
        if "ALL" in channels and channels != {"ALL"}:
            raise ValueError(
                f"stream {stream_id!r} mixes ALL-channel and per-channel rows"
            )
        if "ALL" in channels:
            values = [r.value for r in _frame_ordered(stream_rows)]
            score = sum(values) / len(values)
            per_frame = [(v, v, v) for v in values]
        else:
            absent = [c for c in _CHANNELS if c not in channels]
            if absent:
                raise ValueError(
                    f"stream {stream_id!r} lacks rows for channel(s) {absent}"
                )
            series = {}
            frame_axes = set()
            for channel in _CHANNELS:
                chan_rows = _frame_ordered(
                    [r for r in stream_rows if r.channel == channel]
                )
                series[channel] = [r.value for r in chan_rows]
                frame_axes.add(tuple(r.frame for r in chan_rows))
            if len(frame_axes) != 1:
                raise ValueError(
                    f"stream {stream_id!r} has misaligned per-channel frame rows"
                )
            per_frame = list(zip(series["Y"], series["U"], series["V"]))
            means = [sum(s) / len(s) for s in series.values()]
            score = config.weights.combine(*means)
        results.append(
            MetricResult(
                stream_id=stream_id,
                config=config,
                per_frame=per_frame,
                sequence_score=score,
                frames_used=len(per_frame),
            )
        )
    return results


def _frame_ordered(rows):
    frames = [r.frame for r in rows]
    if any(f is None for f in frames):
        if len(rows) != 1:
            raise ValueError(
                f"stream {rows[0].stream_id!r} mixes sequence-level and "
                "per-frame rows"
            )
        return rows
    return sorted(rows, key=lambda r: r.frame)
