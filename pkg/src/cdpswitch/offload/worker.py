"""Remote extern worker: serves codec requests over the frame protocol."""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time

from ..codec import CodecDeviceConfig, CodecOp, EncryptionSession, Status, run_op
from .frame import FrameError, MsgType, OffloadFrame, encode_frame, read_frame

log = logging.getLogger(__name__)


def parse_codec_spec(spec: str) -> CodecDeviceConfig:
    """``"deflate-level=6,checksum=adler32,key=<32 hex>"`` -> device config."""
    kwargs: dict = {}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        name, _, value = item.partition("=")
        if name in ("deflate-level", "level"):
            kwargs["level"] = int(value)
        elif name == "checksum":
            kwargs["checksum"] = value
        elif name == "key":
            kwargs["session_key"] = bytes.fromhex(value)
        else:
            raise ValueError(f"unknown codec option {name!r}")
    config = CodecDeviceConfig(**kwargs)
    config.validate()
    return config


def handle_request(frame: OffloadFrame, config: CodecDeviceConfig, session: EncryptionSession | None) -> OffloadFrame:
    if frame.msg_type != MsgType.REQUEST:
        raise FrameError(f"worker got msg_type {frame.msg_type}")
    op = CodecOp(frame.request_id, frame.op_kind, frame.payload, frame.offset, frame.aux_length)
    result = run_op(op, config, session)
    payload = result.dst if result.status == Status.OK else b""
    return OffloadFrame(
        MsgType.RESPONSE, frame.request_id, frame.op_kind, result.status, frame.offset, len(payload), payload
    )


class _Handler(socketserver.StreamRequestHandler):
    server: "WorkerServer"

    def setup(self) -> None:
        super().setup()
        self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.server.track(self.request, add=True)

    def finish(self) -> None:
        self.server.track(self.request, add=False)
        try:
            super().finish()
        except OSError:
            pass

    def handle(self) -> None:
        srv = self.server
        while True:
            try:
                frame = read_frame(self.rfile)
            except (FrameError, OSError) as exc:
                log.info("closing connection from %s: %s", self.client_address, exc)
                return
            if frame is None:
                return
            if srv.op_delay:
                time.sleep(srv.op_delay)
            try:
                reply = handle_request(frame, srv.codec, srv.session)
                self.wfile.write(encode_frame(reply))
                self.wfile.flush()
            except (FrameError, OSError) as exc:
                log.info("dropping connection from %s: %s", self.client_address, exc)
                return


class WorkerServer(socketserver.ThreadingTCPServer):
    """One thread per connection; requests on a connection are served in order.

    ``op_delay`` adds a fixed sleep per request (for timeout tests).
    :meth:`kill` drops every live connection at once, like a crashed process.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], codec: CodecDeviceConfig | None = None, op_delay: float = 0.0) -> None:
        self.codec = codec or CodecDeviceConfig()
        self.codec.validate()
        self.session = EncryptionSession(self.codec.session_key) if self.codec.session_key else None
        self.op_delay = op_delay
        self._conns: set[socket.socket] = set()
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None
        super().__init__(address, _Handler)

    @property
    def endpoint(self) -> tuple[str, int]:
        host, port = self.server_address[:2]
        return host, port

    def track(self, conn: socket.socket, add: bool) -> None:
        with self._lock:
            (self._conns.add if add else self._conns.discard)(conn)

    def start(self) -> "WorkerServer":
        self._thread = threading.Thread(target=self.serve_forever, name=f"worker-{self.endpoint[1]}", daemon=True)
        self._thread.start()
        return self

    def kill(self) -> None:
        # Connections go first so no reply escapes while the accept loop winds down.
        with self._lock:
            conns, self._conns = list(self._conns), set()
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()
        if self._thread is not None:
            self.shutdown()
            self._thread.join()
            self._thread = None
        self.server_close()

    stop = kill

    def __enter__(self) -> "WorkerServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.kill()


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def serve(listen: str, codec_spec: str = "deflate-level=6") -> None:
    """Run a worker until interrupted. Prints the bound address on stdout."""
    server = WorkerServer(parse_endpoint(listen), parse_codec_spec(codec_spec))
    host, port = server.endpoint
    print(f"listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
