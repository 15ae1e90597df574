"""Raw planar YUV and Y4M sequence I/O.

Supports headerless I420/I422/I444 at 8 and 10 bits (10-bit stored as
LSB-aligned 16-bit little-endian words) plus the Y4M container. Decoded
frames are immutable and safe to share across workers; readers are
single-consumer.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class FormatError(ValueError):
    """Unparseable, unsupported, or inconsistent video file structure."""


_CHROMAS = ("420", "422", "444")

# Y4M colorspace tag -> (chroma, bit depth). The C420 siting variants all
# share the same plane geometry, which is all this reader cares about.
_Y4M_COLORSPACES = {
    "420": ("420", 8),
    "420jpeg": ("420", 8),
    "420mpeg2": ("420", 8),
    "420paldv": ("420", 8),
    "422": ("422", 8),
    "444": ("444", 8),
    "420p10": ("420", 10),
    "422p10": ("422", 10),
    "444p10": ("444", 10),
}


@dataclass(frozen=True)
class PixelFormat:
    """Chroma subsampling plus sample bit depth."""

    chroma: str = "420"
    bit_depth: int = 8

    def __post_init__(self):
        if self.chroma not in _CHROMAS:
            raise FormatError(f"unsupported chroma subsampling {self.chroma!r}")
        if self.bit_depth not in (8, 10):
            raise FormatError(f"unsupported bit depth {self.bit_depth}")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.uint8 if self.bit_depth == 8 else "<u2")

    @property
    def max_val(self) -> int:
        return (1 << self.bit_depth) - 1

    def chroma_dims(self, width: int, height: int) -> tuple[int, int]:
        # Ceiling division: odd dimensions round the chroma plane up.
        if self.chroma == "420":
            return (width + 1) // 2, (height + 1) // 2
        if self.chroma == "422":
            return (width + 1) // 2, height
        return width, height

    def frame_bytes(self, width: int, height: int) -> int:
        cw, ch = self.chroma_dims(width, height)
        samples = width * height + 2 * cw * ch
        return samples * self.dtype.itemsize


@dataclass(frozen=True)
class Frame:
    """One decoded frame as three read-only sample planes."""

    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    format: PixelFormat

    def __post_init__(self):
        h, w = self.y.shape
        cw, ch = self.format.chroma_dims(w, h)
        if self.u.shape != (ch, cw) or self.v.shape != (ch, cw):
            raise FormatError(
                f"chroma planes {self.u.shape} inconsistent with "
                f"{w}x{h} {self.format.chroma}"
            )
        for plane in (self.y, self.u, self.v):
            plane.setflags(write=False)

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.y, self.u, self.v


def _split_frame(data: bytes, width: int, height: int, fmt: PixelFormat) -> Frame:
    cw, ch = fmt.chroma_dims(width, height)
    n_y = width * height
    n_c = cw * ch
    samples = np.frombuffer(data, dtype=fmt.dtype)
    if fmt.bit_depth > 8:
        peak = int(samples.max(initial=0))
        if peak > fmt.max_val:
            raise FormatError(
                f"sample value {peak} exceeds {fmt.bit_depth}-bit range "
                f"(max {fmt.max_val})"
            )
    y = samples[:n_y].reshape(height, width)
    u = samples[n_y:n_y + n_c].reshape(ch, cw)
    v = samples[n_y + n_c:].reshape(ch, cw)
    return Frame(y=y, u=u, v=v, format=fmt)


class _ReaderBase:
    """Sequential frame access shared by the raw and Y4M readers."""

    width: int
    height: int
    format: PixelFormat
    frame_count: int | None

    def __init__(self):
        self._failed = False
        self.frames_read = 0

    def read_frame(self) -> Frame | None:
        """Next frame in stored order, or None once the stream is exhausted."""
        if self._failed:
            raise FormatError("reader is unusable after a previous read error")
        try:
            return self._read_next()
        except Exception:
            self._failed = True
            raise

    def _read_next(self) -> Frame | None:
        raise NotImplementedError

    def __iter__(self) -> Iterator[Frame]:
        while True:
            frame = self.read_frame()
            if frame is None:
                return
            yield frame

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class RawYuvReader(_ReaderBase):
    """Headerless planar YUV file with externally supplied geometry."""

    def __init__(self, path, width: int, height: int, fmt: PixelFormat):
        super().__init__()
        if width <= 0 or height <= 0:
            raise FormatError(f"invalid geometry {width}x{height}")
        self.path = Path(path)
        self.width = width
        self.height = height
        self.format = fmt
        self._frame_bytes = fmt.frame_bytes(width, height)
        size = os.path.getsize(self.path)
        if size % self._frame_bytes != 0:
            raise FormatError(
                f"{self.path}: file size {size} is not a multiple of the "
                f"{self._frame_bytes}-byte frame size for {width}x{height} "
                f"{fmt.chroma} {fmt.bit_depth}-bit"
            )
        self.frame_count = size // self._frame_bytes
        self._fh = open(self.path, "rb")

    def _read_next(self) -> Frame | None:
        data = self._fh.read(self._frame_bytes)
        if not data:
            return None
        if len(data) != self._frame_bytes:
            raise FormatError(f"{self.path}: truncated frame at end of file")
        self.frames_read += 1
        return _split_frame(data, self.width, self.height, self.format)


class Y4MReader(_ReaderBase):
    """YUV4MPEG2 stream: signature line, then FRAME-delimited planar payloads."""

    def __init__(self, path):
        super().__init__()
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        header = self._fh.readline()
        if not header.startswith(b"YUV4MPEG2"):
            raise FormatError(f"{self.path}: missing YUV4MPEG2 signature")
        self.width = 0
        self.height = 0
        self.fps = (25, 1)
        chroma_tag = "420"
        for token in header.decode("ascii", "replace").split()[1:]:
            key, rest = token[0], token[1:]
            if key == "W":
                self.width = int(rest)
            elif key == "H":
                self.height = int(rest)
            elif key == "F":
                num, den = rest.split(":")
                self.fps = (int(num), int(den))
            elif key == "C":
                chroma_tag = rest
            # I (interlacing), A (aspect), X (extensions) don't affect decode
        if self.width <= 0 or self.height <= 0:
            raise FormatError(f"{self.path}: malformed header {header!r}")
        if chroma_tag not in _Y4M_COLORSPACES:
            raise FormatError(f"{self.path}: unsupported colorspace tag C{chroma_tag}")
        chroma, depth = _Y4M_COLORSPACES[chroma_tag]
        self.format = PixelFormat(chroma=chroma, bit_depth=depth)
        self._frame_bytes = self.format.frame_bytes(self.width, self.height)
        self.frame_count = None  # unknown until the stream is consumed

    def _read_next(self) -> Frame | None:
        marker = self._fh.readline()
        if not marker:
            return None
        if not marker.startswith(b"FRAME"):
            raise FormatError(f"{self.path}: expected FRAME marker, got {marker[:20]!r}")
        data = self._fh.read(self._frame_bytes)
        if len(data) != self._frame_bytes:
            raise FormatError(f"{self.path}: truncated frame payload")
        self.frames_read += 1
        return _split_frame(data, self.width, self.height, self.format)


class FrameSequence:
    """In-memory frame list exposing the reader interface (test/synthetic use)."""

    def __init__(self, frames: list[Frame]):
        if not frames:
            raise FormatError("empty frame list")
        first = frames[0]
        self.width = first.width
        self.height = first.height
        self.format = first.format
        self.frame_count = len(frames)
        self._frames = list(frames)
        self._pos = 0

    def read_frame(self) -> Frame | None:
        if self._pos >= len(self._frames):
            return None
        frame = self._frames[self._pos]
        self._pos += 1
        return frame

    def __iter__(self) -> Iterator[Frame]:
        while True:
            frame = self.read_frame()
            if frame is None:
                return
            yield frame

    def close(self):
        pass


def open_raw_yuv(path, width: int, height: int, fmt: PixelFormat) -> RawYuvReader:
    return RawYuvReader(path, width, height, fmt)


def open_y4m(path) -> Y4MReader:
    return Y4MReader(path)


def open_stream(path, width: int, height: int, fmt: PixelFormat):
    """Open a decoded stream path, picking the container by extension."""
    if str(path).lower().endswith(".y4m"):
        reader = open_y4m(path)
        if (reader.width, reader.height) != (width, height) or reader.format != fmt:
            raise FormatError(
                f"{path}: header says {reader.width}x{reader.height} "
                f"{reader.format.chroma}/{reader.format.bit_depth}-bit, manifest says "
                f"{width}x{height} {fmt.chroma}/{fmt.bit_depth}-bit"
            )
        return reader
    return open_raw_yuv(path, width, height, fmt)


def _check_frame_range(frame: Frame):
    max_val = frame.format.max_val
    for plane in frame.planes():
        peak = int(plane.max(initial=0))
        if peak > max_val:
            raise FormatError(
                f"sample value {peak} exceeds {frame.format.bit_depth}-bit range"
            )


def write_raw_yuv(path, frames: Iterable[Frame]):
    with open(path, "wb") as fh:
        for frame in frames:
            _check_frame_range(frame)
            dtype = frame.format.dtype
            for plane in frame.planes():
                fh.write(np.ascontiguousarray(plane, dtype=dtype).tobytes())


def write_y4m(path, frames: Iterable[Frame], fps: tuple[int, int] = (25, 1)):
    tags = {("420", 8): "420", ("422", 8): "422", ("444", 8): "444",
            ("420", 10): "420p10", ("422", 10): "422p10", ("444", 10): "444p10"}
    with open(path, "wb") as fh:
        header_written = False
        for frame in frames:
            if not header_written:
                tag = tags[(frame.format.chroma, frame.format.bit_depth)]
                fh.write(
                    f"YUV4MPEG2 W{frame.width} H{frame.height} "
                    f"F{fps[0]}:{fps[1]} Ip A1:1 C{tag}\n".encode("ascii")
                )
                header_written = True
            _check_frame_range(frame)
            fh.write(b"FRAME\n")
            dtype = frame.format.dtype
            for plane in frame.planes():
                fh.write(np.ascontiguousarray(plane, dtype=dtype).tobytes())
        if not header_written:
            raise FormatError("refusing to write a Y4M file with no frames")
