"""
Low level framing for the binary artifacts: a magic header followed by
little-endian fields and raw arrays. codec.py builds the artifact layouts
on top of these helpers.
"""

import struct
import logging

import numpy as np

from changespot.errors import BAD_ARTIFACT
from changespot.utils import ChangeSpotException

logger = logging.getLogger(__name__)


def make_header(magic: str) -> bytes:
    """the magic string, no terminator"""

    return struct.pack(f"<{len(magic)}s", magic.encode("ascii"))


def read_header(buf: bytes, magic: str) -> int:
    """checks the magic and returns the offset of the payload"""

    size = len(magic)
    if len(buf) < size or buf[:size] != magic.encode("ascii"):
        raise ChangeSpotException(
            BAD_ARTIFACT.code(), BAD_ARTIFACT.msg(), f"expected magic {magic}"
        )
    logger.debug("read_header: %s ok, payload size %d", magic, len(buf) - size)
    return size


def pack_fields(fmt: str, *values) -> bytes:
    return struct.pack("<" + fmt, *values)


def pack_array(arr, dtype: str) -> bytes:
    return np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes()


def pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


class FieldReader:
    """Cursor over an artifact payload; every read is bounds checked."""

    def __init__(self, buf: bytes, offset: int = 0):
        self.buf = buf
        self.offset = offset

    def _take(self, size):
        if size < 0 or self.offset + size > len(self.buf):
            raise ChangeSpotException(
                BAD_ARTIFACT.code(),
                BAD_ARTIFACT.msg(),
                f"truncated at byte {self.offset}, wanted {size} more",
            )
        chunk = self.buf[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def read(self, fmt: str) -> tuple:
        fmt = "<" + fmt
        return struct.unpack(fmt, self._take(struct.calcsize(fmt)))

    def read_one(self, fmt: str):
        return self.read(fmt)[0]

    def read_array(self, dtype: str, count: int, shape=None) -> np.ndarray:
        dt = np.dtype(dtype)
        arr = np.frombuffer(self._take(dt.itemsize * count), dtype=dt, count=count)
        # native copy so callers never hold a view into the file buffer
        arr = arr.astype(dt.newbyteorder("="))
        return arr.reshape(shape) if shape is not None else arr

    def read_text(self) -> str:
        size = self.read_one("H")
        return self._take(size).decode("utf-8")

    def at_end(self) -> bool:
        return self.offset == len(self.buf)
