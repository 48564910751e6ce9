from .backends import BackendConfig, BackendKind, InlineBackend, RemoteBackend, WorkerBackend, make_backend, worker_select
from .frame import OffloadFrame, decode_frame, encode_frame

__all__ = [
    "BackendConfig",
    "BackendKind",
    "InlineBackend",
    "OffloadFrame",
    "RemoteBackend",
    "WorkerBackend",
    "decode_frame",
    "encode_frame",
    "make_backend",
    "worker_select",
]
