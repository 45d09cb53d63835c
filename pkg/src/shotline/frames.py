"""Raw RGB frame sequences and their on-disk container (FSEQ)."""
from __future__ import annotations

import struct

import numpy as np

from .binio import expect_magic, expect_version, read_exact, read_struct, FormatError

MAGIC = b"FSEQ"
VERSION = 1
CHANNELS = 3


class FrameSequence:
    """A stack of same-sized 8-bit RGB frames, indexable by frame number."""

    def __init__(self, frames: np.ndarray):
        frames = np.asarray(frames)
        if frames.ndim != 4 or frames.shape[3] != CHANNELS:
            raise ValueError(f"expected frames shaped (count, height, width, 3), got {frames.shape}")
        if frames.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {frames.dtype}")
        self.frames = frames

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def frame(self, index: int) -> np.ndarray:
        return self.frames[index]

    def __len__(self) -> int:
        return self.frame_count


def write_fseq(path, seq: FrameSequence) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", seq.width))
        fh.write(struct.pack("<I", seq.height))
        fh.write(struct.pack("<B", CHANNELS))
        fh.write(struct.pack("<I", seq.frame_count))
        fh.write(np.ascontiguousarray(seq.frames).tobytes())


def read_fseq(path) -> FrameSequence:
    with open(path, "rb") as fh:
        expect_magic(fh, MAGIC)
        expect_version(fh, VERSION)
        (width,) = read_struct(fh, "<I", "width")
        (height,) = read_struct(fh, "<I", "height")
        (channels,) = read_struct(fh, "<B", "channel count")
        if channels != CHANNELS:
            raise FormatError(f"expected {CHANNELS} channels, got {channels}")
        (count,) = read_struct(fh, "<I", "frame count")
        payload = read_exact(fh, count * height * width * CHANNELS, "frame data")
        trailing = fh.read(1)
        if trailing:
            raise FormatError(f"trailing bytes at byte {fh.tell() - 1}")
    frames = np.frombuffer(payload, dtype=np.uint8).reshape(count, height, width, CHANNELS)
    return FrameSequence(frames.copy())
