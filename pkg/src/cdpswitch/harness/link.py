"""The segment between the compression and decompression switches."""

from __future__ import annotations

import queue
import socket
import struct
import threading
from collections import deque

# Harness-internal framing: length, a flag byte, then the frame.
_HEAD = struct.Struct("!IB")


class LinkOverflow(Exception):
    pass


class InprocLink:
    """Bounded FIFO; ``send`` raises :class:`LinkOverflow` when full."""

    def __init__(self, capacity: int = 65536) -> None:
        self.capacity = capacity
        self._q: deque[tuple[bytes, bool]] = deque()

    def send(self, frame: bytes, extern: bool) -> None:
        if len(self._q) >= self.capacity:
            raise LinkOverflow
        self._q.append((frame, extern))

    def receive(self) -> list[tuple[bytes, bool]]:
        out = list(self._q)
        self._q.clear()
        return out

    @property
    def pending(self) -> int:
        return len(self._q)

    def close(self) -> None:
        pass


class TcpLink:
    """Loopback TCP connection; a reader thread fills a receive queue."""

    def __init__(self, host: str = "127.0.0.1") -> None:
        listener = socket.create_server((host, 0))
        self._tx = socket.create_connection(listener.getsockname()[:2])
        self._rx, _ = listener.accept()
        listener.close()
        for s in (self._tx, self._rx):
            s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._inbox: queue.SimpleQueue[tuple[bytes, bool]] = queue.SimpleQueue()
        self._sent = 0
        self._received = 0
        self._reader = threading.Thread(target=self._read_loop, name="tcp-link", daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        stream = self._rx.makefile("rb")
        try:
            while True:
                head = stream.read(_HEAD.size)
                if len(head) < _HEAD.size:
                    return
                n, flag = _HEAD.unpack(head)
                frame = stream.read(n)
                if len(frame) < n:
                    return
                self._inbox.put((frame, bool(flag)))
        except OSError:
            return
        finally:
            stream.close()

    def send(self, frame: bytes, extern: bool) -> None:
        self._tx.sendall(_HEAD.pack(len(frame), int(extern)) + frame)
        self._sent += 1

    def receive(self) -> list[tuple[bytes, bool]]:
        out = []
        while True:
            try:
                out.append(self._inbox.get_nowait())
            except queue.Empty:
                break
        self._received += len(out)
        return out

    @property
    def pending(self) -> int:
        return self._sent - self._received

    def close(self) -> None:
        for s in (self._tx, self._rx):
            try:
                s.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            s.close()
