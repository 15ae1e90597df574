"""Metric-vs-subjective correlation and its meta-analysis aggregation.

Per-sequence Pearson/Spearman coefficients are combined across sequences
in Fisher z-space with weights proportional to the number of distorted
streams behind each coefficient (w = n - 3, the inverse-variance weight
for the z transform; a raw-n mode exists for sensitivity checks). The
weighted mean and its 95% interval are mapped back through tanh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

# Perfect correlations occur on small synthetic inputs; clamping keeps the
# z transform finite.
R_CLAMP = 1.0 - 1e-7
CI_MULTIPLIER = 1.96  # two-sided 95%
MIN_POINTS = 3

GROUP_KEYS = ("all", "codec_standard", "bitrate_class", "sequence")


class CorrelationUndefined(ValueError):
    """Raised when a correlation has no defined value (degenerate input)."""


def _as_pair(xs, ys):
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"need equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < MIN_POINTS:
        raise CorrelationUndefined(
            f"need at least {MIN_POINTS} points, got {x.size}"
        )
    return x, y


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    x, y = _as_pair(xs, ys)
    xd = x - x.mean()
    yd = y - y.mean()
    var_x = float(xd @ xd)
    var_y = float(yd @ yd)
    if var_x == 0.0 or var_y == 0.0:
        raise CorrelationUndefined("zero variance input")
    r = float(xd @ yd) / math.sqrt(var_x * var_y)
    return min(1.0, max(-1.0, r))


def spearman(xs, ys) -> float:
    """Pearson correlation of fractional (average) ranks."""
    x, y = _as_pair(xs, ys)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def fisher_z(r: float) -> float:
    """Variance-stabilizing transform z = atanh(r), with |r| clamped."""
    return math.atanh(min(R_CLAMP, max(-R_CLAMP, r)))


def fisher_z_inverse(z: float) -> float:
    return math.tanh(z)


@dataclass(frozen=True)
class SequenceCorrelation:
    """One metric config correlated against one sequence's subjective scores."""

    config_id: str
    sequence_id: str
    group_key: str
    group_value: str
    r_pearson: float
    r_spearman: float
    n: int  # distorted streams behind the coefficient

    def __post_init__(self):
        if self.n < MIN_POINTS:
            raise ValueError(f"correlation over {self.n} < {MIN_POINTS} streams")
        for r in (self.r_pearson, self.r_spearman):
            if not -1.0 <= r <= 1.0:
                raise ValueError(f"correlation {r} outside [-1, 1]")

    def r(self, which: str) -> float:
        if which == "pearson":
            return self.r_pearson
        if which == "spearman":
            return self.r_spearman
        raise ValueError(f"unknown correlation kind {which!r}")


@dataclass(frozen=True)
class AggregateCorrelation:
    config_id: str
    group_key: str
    group_value: str
    which: str
    r_mean: float
    ci_low: float
    ci_high: float
    total_n: int
    sequences_included: int


def weighted_aggregate(
    records,
    which: str = "pearson",
    raw_n_weights: bool = False,
    group_key: str | None = None,
    group_value: str | None = None,
) -> AggregateCorrelation:
    """Fisher-z weighted mean of per-sequence correlations.

    Records contributing fewer than four streams carry no weight and are
    excluded. The confidence interval always uses the inverse-variance
    weight total (sum of n - 3), including in raw-n mode.
    """
    records = list(records)
    if not records:
        raise ValueError("no correlation records to aggregate")
    config_ids = {rec.config_id for rec in records}
    if len(config_ids) != 1:
        raise ValueError(f"records mix metric configs: {sorted(config_ids)}")
    included = [rec for rec in records if rec.n > MIN_POINTS]
    if not included:
        raise ValueError(
            "no records remain after excluding those with n <= "
            f"{MIN_POINTS} streams"
        )
    zs = np.array([fisher_z(rec.r(which)) for rec in included])
    inv_var = np.array([rec.n - 3 for rec in included], dtype=np.float64)
    weights = np.array([rec.n for rec in included], dtype=np.float64) if raw_n_weights else inv_var
    z_mean = float((weights * zs).sum() / weights.sum())
    half_width = CI_MULTIPLIER / math.sqrt(inv_var.sum())
    if group_key is None:
        keys = {(rec.group_key, rec.group_value) for rec in included}
        group_key, group_value = keys.pop() if len(keys) == 1 else ("mixed", "mixed")
    return AggregateCorrelation(
        config_id=config_ids.pop(),
        group_key=group_key,
        group_value=group_value if group_value is not None else "",
        which=which,
        r_mean=fisher_z_inverse(z_mean),
        ci_low=fisher_z_inverse(z_mean - half_width),
        ci_high=fisher_z_inverse(z_mean + half_width),
        total_n=int(sum(rec.n for rec in included)),
        sequences_included=len(included),
    )


def subset_correlations(
    all_records, group_by: str, which: str = "pearson", raw_n_weights: bool = False
) -> list[AggregateCorrelation]:
    """One aggregate per (metric config, group value) for a grouping key.

    Grouping by "sequence" or "all" draws on the full-subset ("all")
    records; other keys use the records computed on that key's stream
    subsets. Groups whose records are all excluded produce no aggregate.
    """
    if group_by not in GROUP_KEYS:
        raise ValueError(f"unknown grouping key {group_by!r} (want one of {GROUP_KEYS})")
    source_key = "all" if group_by in ("all", "sequence") else group_by
    pool = [rec for rec in all_records if rec.group_key == source_key]

    def value_of(rec: SequenceCorrelation) -> str:
        if group_by == "all":
            return "all"
        if group_by == "sequence":
            return rec.sequence_id
        return rec.group_value

    groups: dict[tuple[str, str], list[SequenceCorrelation]] = {}
    for rec in pool:
        groups.setdefault((rec.config_id, value_of(rec)), []).append(rec)

    aggregates = []
    for (config_id, value), recs in sorted(groups.items()):
        try:
            aggregates.append(
                weighted_aggregate(
                    recs,
                    which=which,
                    raw_n_weights=raw_n_weights,
                    group_key=group_by,
                    group_value=value,
                )
            )
        except ValueError:
            continue  # every record in the group was excluded
    return aggregates


@dataclass(frozen=True)
class RankedConfig:
    aggregate: AggregateCorrelation
    rank: int
    statistically_tied: bool  # CI overlaps the leader's CI


def rank_metric_configs(aggregates) -> list[RankedConfig]:
    """Order configs by aggregated correlation, flagging CI overlaps with the leader."""
    aggregates = list(aggregates)
    if not aggregates:
        return []
    groups = {(agg.group_key, agg.group_value) for agg in aggregates}
    if len(groups) != 1:
        raise ValueError(f"aggregates mix groups: {sorted(groups)}")
    # config_id tie-break keeps the ordering total and deterministic
    ordered = sorted(aggregates, key=lambda a: (-a.r_mean, a.config_id))
    leader = ordered[0]
    ranked = []
    for position, agg in enumerate(ordered, start=1):
        tied = agg is not leader and (
            agg.ci_high >= leader.ci_low and leader.ci_high >= agg.ci_low
        )
        ranked.append(RankedConfig(aggregate=agg, rank=position, statistically_tied=tied))
    return ranked
