"""Synthetic dataset generation for end-to-end pipeline tests.

Builds a miniature comparison dataset on disk: structured reference
sequences, noise-distorted "decoded" streams, pairwise votes derived from
a planted latent quality, and an external score table whose channel noise
is shaped so that one specific channel weighting tracks the latent
quality exactly. The construction makes the expected analysis outcome a
property of the data rather than of any tolerance:

* stream latent qualities q are fixed per sequence, and the external
  metric's channels are Y = q + a*e, U = V = q - 4a*e for a zero-sum
  pattern e. Under a k:1:1 weighting the combined score is
  q + a*e*(k-8)/(k+2), so 8:1:1 reproduces q exactly while every other
  studied weighting flips at least one planted near-tie pair;
* the pixel-noise ladder driving the decoded streams swaps one adjacent
  pair relative to q, so every PSNR/SSIM configuration carries at least
  one rank inversion against the subjective ordering.

Vote generation is either "expected" (rounded expected win counts;
deterministic) or "sampled" (seeded binomial draws).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .video import Frame, PixelFormat, write_raw_yuv, write_y4m

# Planted per-stream latent quality, best first. Two adjacent pairs are
# deliberately close: indices (1, 2) flip under weightings below 8:1:1 and
# (4, 5) under weightings above it (including luma-only).
LATENT_QUALITY = (32.0, 24.5, 23.5, 16.0, 10.0, 9.2, 5.5, 4.0)
CHANNEL_NOISE_PATTERN = (1, 1, -1, -1, -1, 1, 1, -1)
CHANNEL_NOISE_SCALE = 3.0
EXTERNAL_METRIC_NAME = "extq"

# Pixel-noise sigmas by quality rank, with ranks 3 and 4 swapped so pixel
# fidelity disagrees with the subjective ordering in exactly one place.
NOISE_SIGMAS = (2.0, 5.0, 8.0, 14.0, 11.0, 17.0, 20.0, 23.0)

_CODECS = (
    ("aomx", "AV1"),
    ("rivet", "AV1"),
    ("hevc-a", "H.265"),
    ("hevc-b", "H.265"),
)
_BITRATES = (1000, 4000)


def make_reference_frames(
    width: int, height: int, n_frames: int, fmt: PixelFormat, rng
) -> list[Frame]:
    """Structured frames: smooth gradients plus seeded texture on every plane."""
    max_val = fmt.max_val
    cw, ch = fmt.chroma_dims(width, height)
    frames = []
    yy, xx = np.mgrid[0:height, 0:width]
    cyy, cxx = np.mgrid[0:ch, 0:cw]
    for t in range(n_frames):
        base_y = (xx + yy + 7 * t) % (max_val // 2) + max_val // 4
        base_u = (2 * cxx + cyy + 11 * t) % (max_val // 2) + max_val // 4
        base_v = (cxx + 3 * cyy + 5 * t) % (max_val // 2) + max_val // 4
        planes = []
        for base, shape in ((base_y, (height, width)), (base_u, (ch, cw)), (base_v, (ch, cw))):
            texture = rng.integers(-max_val // 8, max_val // 8 + 1, shape)
            plane = np.clip(base + texture, 0, max_val).astype(fmt.dtype)
            planes.append(plane)
        frames.append(Frame(y=planes[0], u=planes[1], v=planes[2], format=fmt))
    return frames


def add_noise(frames: list[Frame], sigma: float, rng) -> list[Frame]:
    """Independent Gaussian noise on every plane, clipped to the sample range."""
    out = []
    for frame in frames:
        max_val = frame.format.max_val
        noisy = []
        for plane in frame.planes():
            # float32 draws: the samples are rounded to integers anyway
            noise = rng.standard_normal(plane.shape, dtype=np.float32) * sigma
            noisy.append(
                np.clip(np.rint(plane.astype(np.float32) + noise), 0, max_val)
                .astype(frame.format.dtype)
            )
        out.append(Frame(y=noisy[0], u=noisy[1], v=noisy[2], format=frame.format))
    return out


def _vote_counts(q_i: float, q_j: float, per_pair: int, mode: str, rng) -> int:
    """Wins for item i out of per_pair votes against item j."""
    p = q_i / (q_i + q_j)
    if mode == "expected":
        return int(round(per_pair * p))
    if mode == "sampled":
        return int(rng.binomial(per_pair, p))
    raise ValueError(f"unknown vote mode {mode!r}")


def generate_dataset(
    root,
    seed: int = 20210927,
    n_sequences: int = 4,
    width: int = 192,
    height: int = 108,
    n_frames: int = 6,
    votes_per_pair: int = 100,
    vote_mode: str = "expected",
) -> Path:
    """Write a complete synthetic dataset under root; returns the manifest path."""
    root = Path(root)
    (root / "ref").mkdir(parents=True, exist_ok=True)
    (root / "dec").mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    fmt = PixelFormat("420", 8)

    q = LATENT_QUALITY
    sequences = []
    streams = []
    vote_lines = ["sequence_id,stream_a,stream_b,winner"]
    ext_lines = ["stream_id,channel,frame,value"]

    for si in range(n_sequences):
        seq_id = f"seq{si:02d}"
        ref_frames = make_reference_frames(width, height, n_frames, fmt, rng)
        ref_path = root / "ref" / f"{seq_id}.y4m"
        write_y4m(ref_path, ref_frames)
        sequences.append(
            {
                "id": seq_id,
                "reference": f"ref/{seq_id}.y4m",
                "width": width,
                "height": height,
                "chroma": "420",
                "bit_depth": 8,
                "tags": {"spatial": "synthetic", "temporal": "synthetic"},
            }
        )

        stream_ids = []
        for rank, (codec, standard) in enumerate(
            (c, s) for c, s in _CODECS for _ in _BITRATES
        ):
            bitrate = _BITRATES[rank % len(_BITRATES)]
            stream_id = f"{seq_id}_{codec}_{bitrate}"
            stream_ids.append(stream_id)
            dist = add_noise(ref_frames, NOISE_SIGMAS[rank], rng)
            dec_path = root / "dec" / f"{stream_id}.yuv"
            write_raw_yuv(dec_path, dist)
            streams.append(
                {
                    "id": stream_id,
                    "sequence": seq_id,
                    "codec": codec,
                    "standard": standard,
                    "bitrate_kbps": bitrate,
                    "decoded": f"dec/{stream_id}.yuv",
                }
            )
            # Planted external metric: luma carries +a*e, chroma -4a*e, so
            # the 8:1:1 weighting cancels the pattern and recovers q.
            delta = CHANNEL_NOISE_SCALE * CHANNEL_NOISE_PATTERN[rank]
            y_val = 50.0 + q[rank] + delta
            uv_val = 50.0 + q[rank] - 4.0 * delta
            for channel, value in (("Y", y_val), ("U", uv_val), ("V", uv_val)):
                ext_lines.append(f"{stream_id},{channel},,{value!r}")

        for i in range(len(stream_ids)):
            for j in range(i + 1, len(stream_ids)):
                wins_i = _vote_counts(q[i], q[j], votes_per_pair, vote_mode, rng)
                for _ in range(wins_i):
                    vote_lines.append(f"{seq_id},{stream_ids[i]},{stream_ids[j]},a")
                for _ in range(votes_per_pair - wins_i):
                    vote_lines.append(f"{seq_id},{stream_ids[i]},{stream_ids[j]},b")

    (root / "votes.csv").write_text("\n".join(vote_lines) + "\n")
    (root / f"{EXTERNAL_METRIC_NAME}.csv").write_text("\n".join(ext_lines) + "\n")

    manifest = {
        "dataset": "synthetic",
        "generator": {"seed": seed, "vote_mode": vote_mode},
        "sequences": sequences,
        "streams": streams,
        "votes": "votes.csv",
        "external_scores": [
            {"metric": EXTERNAL_METRIC_NAME, "path": f"{EXTERNAL_METRIC_NAME}.csv"}
        ],
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


# Dataset sizes matching the published comparison summary table: name,
# codecs, test videos, encoded streams, collected responses.
REFERENCE_DATASET_SIZES = (
    ("CC-2018", 10, 5, 150, 22542),
    ("CC-2019", 11, 5, 165, 25784),
    ("CC-2020", 11, 8, 264, 236736),
    ("UGC-2020", 7, 10, 210, 35232),
)


def accounting_fixture(root) -> list[Path]:
    """Manifests and votes reproducing the reference dataset sizes.

    Streams are external-scores-only, so no video files are required; the
    fixture exists to exercise dataset accounting, not metric computation.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest_paths = []
    for name, n_codecs, n_videos, n_streams, n_responses in REFERENCE_DATASET_SIZES:
        assert n_streams == n_codecs * n_videos * 3
        ddir = root / name
        ddir.mkdir(exist_ok=True)
        sequences = [
            {"id": f"v{vi:02d}", "width": 1920, "height": 1080}
            for vi in range(n_videos)
        ]
        streams = []
        for vi in range(n_videos):
            for ci in range(n_codecs):
                for bitrate in (1000, 2000, 4000):
                    streams.append(
                        {
                            "id": f"v{vi:02d}_c{ci:02d}_{bitrate}",
                            "sequence": f"v{vi:02d}",
                            "codec": f"c{ci:02d}",
                            "standard": "H.265",
                            "bitrate_kbps": bitrate,
                            "external_only": True,
                        }
                    )
        lines = ["sequence_id,stream_a,stream_b,winner"]
        for i in range(n_responses):
            vi = i % n_videos
            ci = i % (n_codecs - 1)
            bitrate = (1000, 2000, 4000)[i % 3]
            a = f"v{vi:02d}_c{ci:02d}_{bitrate}"
            b = f"v{vi:02d}_c{ci + 1:02d}_{bitrate}"
            lines.append(f"v{vi:02d},{a},{b},{'a' if i % 2 == 0 else 'b'}")
        (ddir / "votes.csv").write_text("\n".join(lines) + "\n")
        manifest = {
            "dataset": name,
            "sequences": sequences,
            "streams": streams,
            "votes": "votes.csv",
        }
        path = ddir / "manifest.json"
        path.write_text(json.dumps(manifest) + "\n")
        manifest_paths.append(path)
    return manifest_paths
