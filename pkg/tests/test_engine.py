import math

import numpy as np
import pytest

from vqcompare.engine import (
    EXTERNAL_CSV_HEADER,
    ExternalScoreRow,
    MetricConfig,
    aggregate_sequence_score,
    compute_metric,
    compute_metrics_multi,
    config_grid,
    ingest_external_scores,
    load_external_scores,
    parse_config_spec,
    parse_config_specs,
)
from vqcompare.metrics import ChannelWeights, PSNR_CAP_DB, SsimParams, mse_plane
from vqcompare.video import Frame, FrameSequence, PixelFormat


def build_frames(rng, n_frames, width=48, height=32, noise=0.0):
    fmt = PixelFormat("420")
    cw, ch = fmt.chroma_dims(width, height)
    frames = []
    for _ in range(n_frames):
        planes = []
        for shape in ((height, width), (ch, cw), (ch, cw)):
            base = rng.integers(30, 220, shape).astype(np.float64)
            if noise:
                base = base + rng.normal(0, noise, shape)
            planes.append(np.clip(np.rint(base), 0, 255).astype(np.uint8))
        frames.append(Frame(y=planes[0], u=planes[1], v=planes[2], format=fmt))
    return frames


def noisy_copy(frames, sigma, rng):
    out = []
    for frame in frames:
        planes = [
            np.clip(np.rint(p.astype(np.float64) + rng.normal(0, sigma, p.shape)), 0, 255).astype(np.uint8)
            for p in frame.planes()
        ]
        out.append(Frame(y=planes[0], u=planes[1], v=planes[2], format=frame.format))
    return out


PSNR_611 = MetricConfig(kind="psnr", weights=ChannelWeights(6, 1, 1), temporal="avgmse")


class TestConfigSpec:
    def test_psnr_spec(self):
        cfg = parse_config_spec("psnr:avgmse:6-1-1")
        assert cfg.kind == "psnr"
        assert cfg.temporal == "avgmse"
        assert cfg.weights == ChannelWeights(6, 1, 1)
        assert cfg.config_id == "psnr:avgmse:6-1-1"

    def test_ssim_luma_spec(self):
        cfg = parse_config_spec("ssim:mean:y")
        assert cfg.kind == "ssim"
        assert cfg.weights == ChannelWeights(1, 0, 0)
        assert cfg.ssim_params == SsimParams()

    def test_external_spec(self):
        cfg = parse_config_spec("external:vmaf061:8-1-1")
        assert cfg.kind == "external"
        assert cfg.external_name == "vmaf061"
        assert cfg.config_id == "external:vmaf061:8-1-1"

    def test_spec_list_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_config_specs("psnr:avgmse:y,psnr:avgmse:y")

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            parse_config_spec("psnr:avgmse")
        with pytest.raises(ValueError):
            parse_config_spec("sharpness:mean:y")

    def test_temporal_validity(self):
        with pytest.raises(ValueError):
            MetricConfig(kind="psnr", weights=ChannelWeights(1, 0, 0), temporal="mean")
        with pytest.raises(ValueError):
            MetricConfig(kind="ssim", weights=ChannelWeights(1, 0, 0), temporal="avglog")

    def test_grid(self):
        configs = config_grid(["psnr", "ssim"], ["y", "4-1-1"])
        ids = {c.config_id for c in configs}
        assert "psnr:avgmse:y" in ids and "psnr:avglog:4-1-1" in ids
        assert "ssim:mean:4-1-1" in ids
        assert len(configs) == 6


class TestComputeMetric:
    def test_identity_pair(self):
        rng = np.random.default_rng(10)
        frames = build_frames(rng, 2)
        ssim_cfg = MetricConfig(kind="ssim", weights=ChannelWeights(4, 1, 1))
        result = compute_metric(FrameSequence(frames), FrameSequence(frames), ssim_cfg)
        assert result.sequence_score == 1.0
        psnr_result = compute_metric(FrameSequence(frames), FrameSequence(frames), PSNR_611)
        assert psnr_result.sequence_score == PSNR_CAP_DB

    def test_two_frame_composition_oracle(self):
        # hand-compose the pipeline from scalar pieces, independently of the
        # engine's aggregation path
        rng = np.random.default_rng(11)
        ref = build_frames(rng, 2)
        dist = noisy_copy(ref, 6.0, rng)
        result = compute_metric(FrameSequence(ref), FrameSequence(dist), PSNR_611)

        per_channel_db = []
        for channel in range(3):
            mses = [
                mse_plane(r.planes()[channel], d.planes()[channel])
                for r, d in zip(ref, dist)
            ]
            per_channel_db.append(10 * math.log10(255**2 / (sum(mses) / len(mses))))
        expected = (6 * per_channel_db[0] + per_channel_db[1] + per_channel_db[2]) / 8
        assert math.isclose(result.sequence_score, expected, rel_tol=1e-9)

    def test_noise_monotonicity(self):
        rng = np.random.default_rng(12)
        ref = build_frames(rng, 3)
        scores = []
        for sigma in (2, 6, 12, 20, 30):
            dist = noisy_copy(ref, sigma, np.random.default_rng(100 + sigma))
            result = compute_metric(FrameSequence(ref), FrameSequence(dist), PSNR_611)
            scores.append(result.sequence_score)
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_geometry_mismatch(self):
        rng = np.random.default_rng(13)
        a = build_frames(rng, 1, width=48, height=32)
        b = build_frames(rng, 1, width=32, height=32)
        with pytest.raises(ValueError, match="geometry"):
            compute_metric(FrameSequence(a), FrameSequence(b), PSNR_611)

    def test_empty_sequence(self):
        rng = np.random.default_rng(14)
        frames = build_frames(rng, 1)
        src = FrameSequence(frames)
        list(src)  # exhaust
        with pytest.raises(ValueError, match="empty"):
            compute_metric(src, FrameSequence(frames), PSNR_611)

    def test_length_mismatch_truncates_with_flag(self):
        rng = np.random.default_rng(15)
        ref = build_frames(rng, 3)
        result = compute_metric(FrameSequence(ref), FrameSequence(ref[:2]), PSNR_611)
        assert result.frames_used == 2
        assert result.truncated

    def test_external_config_rejected(self):
        rng = np.random.default_rng(16)
        frames = build_frames(rng, 1)
        cfg = MetricConfig(
            kind="external", weights=ChannelWeights(1, 1, 1), external_name="vmaf061"
        )
        with pytest.raises(ValueError, match="ingested"):
            compute_metric(FrameSequence(frames), FrameSequence(frames), cfg)

    def test_rederivation_reproduces_sequence_score(self):
        rng = np.random.default_rng(17)
        ref = build_frames(rng, 4)
        dist = noisy_copy(ref, 9.0, rng)
        configs = [
            MetricConfig(kind="psnr", weights=ChannelWeights(4, 1, 1), temporal="avgmse"),
            MetricConfig(kind="psnr", weights=ChannelWeights(4, 1, 1), temporal="avglog"),
            MetricConfig(kind="ssim", weights=ChannelWeights(4, 1, 1)),
        ]
        for result in compute_metrics_multi(FrameSequence(ref), FrameSequence(dist), configs):
            again = aggregate_sequence_score(result.per_frame, result.config, 255)
            assert math.isclose(result.sequence_score, again, rel_tol=1e-9)

    def test_channel_weighting_order_switch_agrees_for_mean_pooling(self):
        # with arithmetic-mean pooling the weighted mean commutes with the
        # temporal mean, so the two orderings must coincide
        rng = np.random.default_rng(18)
        ref = build_frames(rng, 3)
        dist = noisy_copy(ref, 12.0, rng)
        per_frame = compute_metric(
            FrameSequence(ref), FrameSequence(dist),
            MetricConfig(kind="ssim", weights=ChannelWeights(4, 1, 1)),
        ).per_frame
        cfg_frame = MetricConfig(kind="ssim", weights=ChannelWeights(4, 1, 1))
        cfg_seq = MetricConfig(
            kind="ssim", weights=ChannelWeights(4, 1, 1), per_frame_weighting=False
        )
        a = aggregate_sequence_score(per_frame, cfg_frame, 255)
        b = aggregate_sequence_score(per_frame, cfg_seq, 255)
        assert math.isclose(a, b, rel_tol=1e-12)

    def test_parallel_serial_bit_identical(self):
        rng = np.random.default_rng(19)
        ref = build_frames(rng, 6)
        dist = noisy_copy(ref, 7.0, rng)
        configs = [
            PSNR_611,
            MetricConfig(kind="ssim", weights=ChannelWeights(4, 1, 1)),
        ]
        serial = compute_metrics_multi(FrameSequence(ref), FrameSequence(dist), configs, workers=1)
        threaded = compute_metrics_multi(FrameSequence(ref), FrameSequence(dist), configs, workers=4)
        for a, b in zip(serial, threaded):
            assert a.per_frame == b.per_frame
            assert a.sequence_score == b.sequence_score

    def test_records_bit_depth(self):
        rng = np.random.default_rng(20)
        frames = build_frames(rng, 1)
        result = compute_metric(FrameSequence(frames), FrameSequence(frames), PSNR_611)
        assert result.bit_depth == 8

    def test_ten_bit_uses_wider_peak(self):
        rng = np.random.default_rng(21)
        fmt = PixelFormat("420", 10)
        cw, ch = fmt.chroma_dims(32, 16)
        base = Frame(
            y=rng.integers(0, 1024, (16, 32)).astype("<u2"),
            u=rng.integers(0, 1024, (ch, cw)).astype("<u2"),
            v=rng.integers(0, 1024, (ch, cw)).astype("<u2"),
            format=fmt,
        )
        shifted = Frame(
            y=np.clip(base.y.astype(np.int64) + 4, 0, 1023).astype("<u2"),
            u=base.u.copy(), v=base.v.copy(), format=fmt,
        )
        result = compute_metric(
            FrameSequence([base]), FrameSequence([shifted]),
            MetricConfig(kind="psnr", weights=ChannelWeights(1, 0, 0), temporal="avgmse"),
        )
        assert result.bit_depth == 10
        y_mse = mse_plane(base.y, shifted.y)
        assert math.isclose(
            result.sequence_score, 10 * math.log10(1023**2 / y_mse), rel_tol=1e-12
        )


def rows_from(table):
    return [ExternalScoreRow(*row) for row in table]


EXT_811 = MetricConfig(
    kind="external", weights=ChannelWeights(8, 1, 1), external_name="vmaf061"
)


class TestExternalIngestion:
    def test_single_row_passthrough(self):
        results = ingest_external_scores(
            rows_from([("s1", "ALL", None, 93.5)]), EXT_811
        )
        assert len(results) == 1
        assert results[0].sequence_score == 93.5
        assert results[0].frames_used == 1

    def test_per_channel_weighting(self):
        results = ingest_external_scores(
            rows_from([("s1", "Y", None, 90.0), ("s1", "U", None, 95.0), ("s1", "V", None, 95.0)]),
            EXT_811,
        )
        assert math.isclose(results[0].sequence_score, 91.0, rel_tol=1e-12)

    def test_per_frame_mean(self):
        results = ingest_external_scores(
            rows_from([("s1", "ALL", 0, 80.0), ("s1", "ALL", 1, 100.0)]), EXT_811
        )
        assert results[0].sequence_score == 90.0
        assert results[0].frames_used == 2

    def test_per_frame_per_channel(self):
        rows = rows_from(
            [
                ("s1", "Y", 0, 80.0), ("s1", "Y", 1, 100.0),
                ("s1", "U", 0, 60.0), ("s1", "U", 1, 80.0),
                ("s1", "V", 0, 60.0), ("s1", "V", 1, 80.0),
            ]
        )
        results = ingest_external_scores(rows, EXT_811)
        expected = (8 * 90.0 + 70.0 + 70.0) / 10
        assert math.isclose(results[0].sequence_score, expected, rel_tol=1e-12)

    def test_duplicate_key_rejected(self):
        rows = rows_from([("s1", "ALL", None, 1.0), ("s1", "ALL", None, 2.0)])
        with pytest.raises(ValueError, match="duplicate"):
            ingest_external_scores(rows, EXT_811)

    def test_unknown_stream_rejected(self):
        rows = rows_from([("mystery", "ALL", None, 1.0)])
        with pytest.raises(ValueError, match="unknown stream"):
            ingest_external_scores(rows, EXT_811, known_streams={"s1"})

    def test_mixed_granularity_rejected(self):
        rows = rows_from([("s1", "ALL", None, 1.0), ("s1", "Y", None, 2.0)])
        with pytest.raises(ValueError, match="mixes"):
            ingest_external_scores(rows, EXT_811)

    def test_missing_channel_rejected(self):
        rows = rows_from([("s1", "Y", None, 1.0), ("s1", "U", None, 2.0)])
        with pytest.raises(ValueError, match="lacks rows"):
            ingest_external_scores(rows, EXT_811)

    def test_misaligned_frame_rows_rejected(self):
        rows = rows_from(
            [
                ("s1", "Y", 0, 1.0), ("s1", "Y", 1, 2.0),
                ("s1", "U", 1, 1.0), ("s1", "U", 2, 2.0),
                ("s1", "V", 0, 1.0), ("s1", "V", 1, 2.0),
            ]
        )
        with pytest.raises(ValueError, match="misaligned"):
            ingest_external_scores(rows, EXT_811)

    def test_non_external_config_rejected(self):
        with pytest.raises(ValueError):
            ingest_external_scores([], PSNR_611)

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text(
            ",".join(EXTERNAL_CSV_HEADER)
            + "\ns1,Y,,90.0\ns1,U,,95.0\ns1,V,,95.0\ns2,ALL,,77.0\n"
        )
        rows = load_external_scores(path)
        assert len(rows) == 4
        results = ingest_external_scores(rows, EXT_811)
        assert [r.stream_id for r in results] == ["s1", "s2"]

    def test_csv_missing_column(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("stream_id,value\ns1,77.0\n")
        with pytest.raises(ValueError, match="missing columns"):
            load_external_scores(path)

    def test_csv_bad_channel(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text(",".join(EXTERNAL_CSV_HEADER) + "\ns1,Q,,77.0\n")
        with pytest.raises(ValueError, match="bad channel"):
            load_external_scores(path)
