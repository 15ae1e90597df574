"""Dataset manifest and vote-table loading.

A manifest is a single JSON document describing one dataset: source
sequences (with geometry, since raw YUV is headerless), encoded streams
(decoded path, or external-scores-only), the votes table, and any
external score tables. Relative paths resolve against the manifest's
directory. See the README for the full schema.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .video import FormatError, PixelFormat


class ManifestError(ValueError):
    pass


# Target bitrates studied: 1000/2000/4000 Kbps map to the low/mid/high
# classes; anything else is tagged "other".
BITRATE_CLASSES = {1000: "low", 2000: "mid", 4000: "high"}


def bitrate_class(kbps: int) -> str:
    return BITRATE_CLASSES.get(kbps, "other")


@dataclass(frozen=True)
class SequenceSpec:
    id: str
    reference: Path | None
    width: int
    height: int
    format: PixelFormat
    tags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StreamSpec:
    id: str
    sequence_id: str
    codec: str
    codec_standard: str
    bitrate_kbps: int
    decoded: Path | None = None
    external_only: bool = False

    @property
    def bitrate_class(self) -> str:
        return bitrate_class(self.bitrate_kbps)


@dataclass
class Manifest:
    dataset: str
    sequences: dict[str, SequenceSpec]
    streams: dict[str, StreamSpec]
    votes_path: Path | None = None
    external_tables: dict[str, Path] = field(default_factory=dict)

    def streams_of(self, sequence_id: str) -> list[StreamSpec]:
        return [s for s in self.streams.values() if s.sequence_id == sequence_id]


def _require(mapping, key, context):
    if key not in mapping:
        raise ManifestError(f"{context}: missing required field {key!r}")
    return mapping[key]


def load_manifest(path) -> Manifest:
    path = Path(path)
    base = path.parent
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: top level must be an object")

    dataset = _require(doc, "dataset", str(path))

    sequences: dict[str, SequenceSpec] = {}
    for entry in doc.get("sequences", []):
        seq_id = _require(entry, "id", "sequence entry")
        if seq_id in sequences:
            raise ManifestError(f"duplicate sequence id {seq_id!r}")
        width = int(_require(entry, "width", f"sequence {seq_id!r}"))
        height = int(_require(entry, "height", f"sequence {seq_id!r}"))
        if width <= 0 or height <= 0:
            raise ManifestError(f"sequence {seq_id!r}: bad geometry {width}x{height}")
        try:
            fmt = PixelFormat(
                chroma=str(entry.get("chroma", "420")),
                bit_depth=int(entry.get("bit_depth", 8)),
            )
        except FormatError as exc:
            raise ManifestError(f"sequence {seq_id!r}: {exc}") from None
        ref = entry.get("reference")
        sequences[seq_id] = SequenceSpec(
            id=seq_id,
            reference=(base / ref) if ref else None,
            width=width,
            height=height,
            format=fmt,
            tags=dict(entry.get("tags", {})),
        )

    streams: dict[str, StreamSpec] = {}
    triples = set()
    for entry in doc.get("streams", []):
        stream_id = _require(entry, "id", "stream entry")
        if stream_id in streams:
            raise ManifestError(f"duplicate stream id {stream_id!r}")
        seq_id = _require(entry, "sequence", f"stream {stream_id!r}")
        if seq_id not in sequences:
            raise ManifestError(
                f"stream {stream_id!r} references unknown sequence {seq_id!r}"
            )
        codec = _require(entry, "codec", f"stream {stream_id!r}")
        bitrate = int(_require(entry, "bitrate_kbps", f"stream {stream_id!r}"))
        triple = (seq_id, codec, bitrate)
        if triple in triples:
            raise ManifestError(
                f"duplicate (sequence, codec, bitrate) triple {triple}"
            )
        triples.add(triple)
        decoded = entry.get("decoded")
        external_only = bool(entry.get("external_only", False))
        if external_only and decoded:
            raise ManifestError(
                f"stream {stream_id!r} is external-only but has a decoded path"
            )
        if not external_only and not decoded:
            raise ManifestError(
                f"stream {stream_id!r} needs a decoded path or external_only: true"
            )
        streams[stream_id] = StreamSpec(
            id=stream_id,
            sequence_id=seq_id,
            codec=codec,
            codec_standard=str(entry.get("standard", "unknown")),
            bitrate_kbps=bitrate,
            decoded=(base / decoded) if decoded else None,
            external_only=external_only,
        )

    votes = doc.get("votes")
    external_tables = {}
    for entry in doc.get("external_scores", []):
        name = _require(entry, "metric", "external score table")
        if name in external_tables:
            raise ManifestError(f"duplicate external score table {name!r}")
        external_tables[name] = base / _require(entry, "path", f"table {name!r}")

    manifest = Manifest(
        dataset=dataset,
        sequences=sequences,
        streams=streams,
        votes_path=(base / votes) if votes else None,
        external_tables=external_tables,
    )
    _check_files(manifest)
    return manifest


def _check_files(manifest: Manifest):
    needs_reference = {
        s.sequence_id for s in manifest.streams.values() if not s.external_only
    }
    for seq in manifest.sequences.values():
        if seq.reference is None:
            if seq.id in needs_reference:
                raise ManifestError(
                    f"sequence {seq.id!r} has decodable streams but no reference path"
                )
            continue
        if not seq.reference.is_file():
            raise ManifestError(f"missing reference file {seq.reference}")
    for stream in manifest.streams.values():
        if stream.decoded is not None and not stream.decoded.is_file():
            raise ManifestError(
                f"stream {stream.id!r}: missing decoded file {stream.decoded}"
            )
    if manifest.votes_path is not None and not manifest.votes_path.is_file():
        raise ManifestError(f"missing votes file {manifest.votes_path}")
    for name, table in manifest.external_tables.items():
        if not table.is_file():
            raise ManifestError(f"missing external score table {name!r}: {table}")


class VoteRow(NamedTuple):
    sequence_id: str
    stream_a: str
    stream_b: str
    winner: str  # "a" or "b"

    @property
    def winner_id(self) -> str:
        return self.stream_a if self.winner == "a" else self.stream_b

    @property
    def loser_id(self) -> str:
        return self.stream_b if self.winner == "a" else self.stream_a


VOTES_CSV_HEADER = ["sequence_id", "stream_a", "stream_b", "winner"]


def load_votes(path) -> list[VoteRow]:
    # plain reader with positional lookup: vote tables run to hundreds of
    # thousands of rows
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        missing = set(VOTES_CSV_HEADER) - set(h.strip() for h in header)
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        idx = [header.index(col) for col in VOTES_CSV_HEADER]
        rows = []
        for line_no, rec in enumerate(reader, start=2):
            winner = rec[idx[3]].strip().lower()
            if winner not in ("a", "b"):
                raise ManifestError(
                    f"{path}:{line_no}: winner must be 'a' or 'b', got {rec[idx[3]]!r}"
                )
            rows.append(
                VoteRow(
                    sequence_id=rec[idx[0]].strip(),
                    stream_a=rec[idx[1]].strip(),
                    stream_b=rec[idx[2]].strip(),
                    winner=winner,
                )
            )
    return rows


@dataclass(frozen=True)
class DatasetSummary:
    dataset: str
    codecs: int
    videos: int
    streams: int
    responses: int


def dataset_summary(manifest: Manifest, votes) -> DatasetSummary:
    """Headline dataset sizes: codecs, test videos, encoded streams, responses."""
    return DatasetSummary(
        dataset=manifest.dataset,
        codecs=len({s.codec for s in manifest.streams.values()}),
        videos=len(manifest.sequences),
        streams=len(manifest.streams),
        responses=sum(1 for v in votes if v.sequence_id in manifest.sequences),
    )
