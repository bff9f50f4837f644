from .bandwidth import LinkConfig, bps, format_bps
from .channel import QueueChannel, TcpChannel
from .coop import (
    CoopResult,
    RoadsideEndpoint,
    VehicleEndpoint,
    cooperative_infer,
    sequential_infer,
)
from .resample import downsample, upsample
from .wire import FrameMeta, decode_frame, encode_frame

__all__ = [
    "LinkConfig", "bps", "format_bps",
    "QueueChannel", "TcpChannel",
    "CoopResult", "RoadsideEndpoint", "VehicleEndpoint",
    "cooperative_infer", "sequential_infer",
    "downsample", "upsample",
    "FrameMeta", "decode_frame", "encode_frame",
]
