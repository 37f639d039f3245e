import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roamsim.enums import RAT, Direction
from roamsim.tunnel.codec import HEADER_LEN, FrameDecodeError, TunnelFrame, decode_frame, encode_frame

GOLDEN = bytes.fromhex("C31A0100" "0000000000000001" "00000000" "0000000000000000" "0000")


def test_golden_vector():
    assert HEADER_LEN == 26
    assert encode_frame(TunnelFrame(session_id=1, seq=0, timestamp_ms=0)) == GOLDEN
    assert decode_frame(GOLDEN) == TunnelFrame(1, 0, 0)


def test_flag_bits():
    f = TunnelFrame(1, 2, 3, Direction.DL, RAT.CBRS, duplicate=True)
    assert encode_frame(f)[3] == 0x01 | (1 << 1) | 0x08
    p = TunnelFrame(1, 2, 3, probe=True)
    assert encode_frame(p)[3] == 0x10


frames = st.builds(
    TunnelFrame,
    session_id=st.integers(0, 2**64 - 1),
    seq=st.integers(0, 2**32 - 1),
    timestamp_ms=st.integers(0, 2**64 - 1),
    direction=st.sampled_from(list(Direction)),
    rat=st.sampled_from([RAT.WIFI, RAT.CBRS]),
    duplicate=st.booleans(),
    payload=st.binary(max_size=300),
)


@settings(max_examples=300, deadline=None)
@given(frames)
def test_round_trip(frame):
    data = encode_frame(frame)
    assert len(data) == HEADER_LEN + len(frame.payload)
    assert decode_frame(data) == frame
    # header fields sit where a plain struct reader expects them
    magic, ver, flags, sess, seq, ts, plen = struct.unpack(">2sBBQIQH", data[:HEADER_LEN])
    assert (sess, seq, ts, plen) == (frame.session_id, frame.seq, frame.timestamp_ms, len(frame.payload))


@pytest.mark.parametrize("mutate, field", [
    (lambda b: b[:10], "short header"),
    (lambda b: b"\x00\x00" + b[2:], "bad magic"),
    (lambda b: b[:2] + b"\x02" + b[3:], "bad version"),
    (lambda b: b[:3] + b"\x80" + b[4:], "bad flags"),
    (lambda b: b[:3] + b"\x04" + b[4:], "bad rat"),
    (lambda b: b[:-1], "truncated payload"),
    (lambda b: b + b"x", "trailing bytes"),
    (lambda b: b[:3] + b"\x10" + b[4:], "payload_len"),
])
def test_decode_errors_name_the_field(mutate, field):
    good = encode_frame(TunnelFrame(5, 6, 7, payload=b"abc"))
    with pytest.raises(FrameDecodeError) as e:
        decode_frame(mutate(good))
    assert e.value.field == field


def test_encode_rejects_bad_frames():
    with pytest.raises(ValueError):
        encode_frame(TunnelFrame(1, 1, 1, probe=True, payload=b"x"))
    with pytest.raises(ValueError):
        encode_frame(TunnelFrame(1, 1, 1, payload=b"x" * 70000))
    with pytest.raises(ValueError):
        encode_frame(TunnelFrame(1, 1, 1, rat=RAT.NONE))
    with pytest.raises(struct.error):
        encode_frame(TunnelFrame(1, 2**32, 1))
