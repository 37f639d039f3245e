from .codec import HEADER_LEN, FrameDecodeError, TunnelFrame, decode_frame, encode_frame
from .endpoints import (
    PathState,
    ReplayWindow,
    SessionState,
    TunnelClient,
    TunnelConfig,
    TunnelMode,
    TunnelServer,
    Verdict,
    client_select_path,
    dedup_and_order,
    server_route_dl,
    update_congestion,
)

__all__ = [
    "HEADER_LEN", "FrameDecodeError", "TunnelFrame", "decode_frame", "encode_frame",
    "PathState", "ReplayWindow", "SessionState", "TunnelClient", "TunnelConfig", "TunnelMode",
    "TunnelServer", "Verdict", "client_select_path", "dedup_and_order", "server_route_dl",
    "update_congestion",
]
