"""Wire format of tunnel frames.

Layout (big-endian, 26-byte header)::

    0   2  magic 0xC3 0x1A
    2   1  version (1)
    3   1  flags: bit0 direction (0 UL, 1 DL), bits1-2 rat (0 WIFI, 1 CBRS),
               bit3 duplicate, bit4 probe; bits 5-7 reserved, zero
    4   8  session id
    12  4  sequence number
    16  8  timestamp, ms
    24  2  payload length
    26  -  payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..enums import RAT, Direction

MAGIC = b"\xc3\x1a"
VERSION = 1
HEADER = struct.Struct(">2sBBQIQH")
HEADER_LEN = HEADER.size  # 26

_RAT_IDS = {RAT.WIFI: 0, RAT.CBRS: 1}
_ID_RATS = {v: k for k, v in _RAT_IDS.items()}

FLAG_DL = 0x01
FLAG_DUPLICATE = 0x08
FLAG_PROBE = 0x10
_RESERVED = 0xE0


class FrameDecodeError(ValueError):
    """Malformed frame; ``field`` names what failed."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        super().__init__(field + (f": {detail}" if detail else ""))


@dataclass(frozen=True, slots=True)
class TunnelFrame:
    session_id: int
    seq: int
    timestamp_ms: int
    direction: Direction = Direction.UL
    rat: RAT = RAT.WIFI
    duplicate: bool = False
    probe: bool = False
    payload: bytes = b""

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def flags(self) -> int:
        f = _RAT_IDS[self.rat] << 1
        if self.direction is Direction.DL:
            f |= FLAG_DL
        if self.duplicate:
            f |= FLAG_DUPLICATE
        if self.probe:
            f |= FLAG_PROBE
        return f


def encode_frame(frame: TunnelFrame) -> bytes:
    if frame.probe and frame.payload:
        raise ValueError("probe frames carry no payload")
    if len(frame.payload) > 0xFFFF:
        raise ValueError("payload longer than 65535 bytes")
    if frame.rat not in _RAT_IDS:
        raise ValueError(f"cannot encode rat {frame.rat}")
    header = HEADER.pack(MAGIC, VERSION, frame.flags, frame.session_id, frame.seq,
                         frame.timestamp_ms, len(frame.payload))
    return header + frame.payload


def decode_frame(data: bytes) -> TunnelFrame:
    if len(data) < HEADER_LEN:
        raise FrameDecodeError("short header", f"{len(data)} < {HEADER_LEN} bytes")
    magic, version, flags, session, seq, ts, plen = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FrameDecodeError("bad magic", magic.hex())
    if version != VERSION:
        raise FrameDecodeError("bad version", str(version))
    if flags & _RESERVED:
        raise FrameDecodeError("bad flags", f"reserved bits set in 0x{flags:02x}")
    rat_id = (flags >> 1) & 0x3
    if rat_id not in _ID_RATS:
        raise FrameDecodeError("bad rat", str(rat_id))
    if len(data) < HEADER_LEN + plen:
        raise FrameDecodeError("truncated payload", f"need {plen}, have {len(data) - HEADER_LEN}")
    if len(data) > HEADER_LEN + plen:
        raise FrameDecodeError("trailing bytes", f"{len(data) - HEADER_LEN - plen} extra")
    probe = bool(flags & FLAG_PROBE)
    if probe and plen:
        raise FrameDecodeError("payload_len", "probe frame with payload")
    return TunnelFrame(
        session_id=session,
        seq=seq,
        timestamp_ms=ts,
        direction=Direction.DL if flags & FLAG_DL else Direction.UL,
        rat=_ID_RATS[rat_id],
        duplicate=bool(flags & FLAG_DUPLICATE),
        probe=probe,
        payload=bytes(data[HEADER_LEN:]),
    )
