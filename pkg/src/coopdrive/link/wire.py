"""Byte-exact wire frame for roadside-to-vehicle image transfer.

Layout, all multi-byte fields little-endian:

    offset  size  field
    0       4     magic b"V2XF"
    4       1     version (currently 1)
    5       8     frame_id (u64)
    13      8     timestamp_us (u64)
    21      2     scale_milli (u16, downsampling factor x1000)
    23      2     width (u16)
    25      2     height (u16)
    27      1     channels (u8)
    28      4     payload_len (u32) = width*height*channels
    32      -     payload: row-major uint8 intensities
    32+n    4     crc32 of payload (zlib polynomial)
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import BadMagic, CrcMismatch, TruncatedFrame, UnsupportedVersion

MAGIC = b"V2XF"
VERSION = 1
HEADER = struct.Struct("<4sBQQHHHBI")
HEADER_LEN = HEADER.size  # 32
CRC_LEN = 4


@dataclass(frozen=True)
class FrameMeta:
    frame_id: int
    timestamp_us: int
    scale_milli: int
    width: int
    height: int
    channels: int

    @property
    def scale(self) -> float:
        return self.scale_milli / 1000.0

    @property
    def payload_len(self) -> int:
        return self.width * self.height * self.channels


def encode_frame(img, frame_id: int = 0, timestamp_us: int = 0,
                 scale: float = 1.0) -> bytes:
    a = np.ascontiguousarray(img, dtype=np.uint8)
    if a.ndim != 3:
        raise TruncatedFrame(f"image must be HxWxC, got shape {a.shape}")
    h, w, c = a.shape
    if w > 0xFFFF or h > 0xFFFF or c > 0xFF:
        raise TruncatedFrame(f"dims {h}x{w}x{c} exceed header fields")
    payload = a.tobytes()
    header = HEADER.pack(MAGIC, VERSION, frame_id, timestamp_us,
                         int(round(scale * 1000)), w, h, c, len(payload))
    return header + payload + struct.pack("<I", zlib.crc32(payload))


def decode_frame(buf: bytes):
    """Returns (image uint8 HxWxC, FrameMeta). Validates magic, length, CRC."""
    if len(buf) < HEADER_LEN:
        raise TruncatedFrame(f"{len(buf)} bytes is shorter than the {HEADER_LEN}-byte header")
    magic, version, frame_id, ts, scale_milli, w, h, c, plen = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"version {version} unsupported (expected {VERSION})")
    if plen != w * h * c:
        raise TruncatedFrame(f"payload_len {plen} does not match dims {h}x{w}x{c}")
    if len(buf) != HEADER_LEN + plen + CRC_LEN:
        raise TruncatedFrame(
            f"frame is {len(buf)} bytes, expected {HEADER_LEN + plen + CRC_LEN}")
    payload = buf[HEADER_LEN:HEADER_LEN + plen]
    (crc,) = struct.unpack_from("<I", buf, HEADER_LEN + plen)
    if zlib.crc32(payload) != crc:
        raise CrcMismatch("payload checksum mismatch")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, c)
    meta = FrameMeta(frame_id, ts, scale_milli, w, h, c)
    return img, meta
