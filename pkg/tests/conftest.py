import random

import pytest

from cdpswitch.async_extern import ExternCompletion, ExternRequest, NoWorkerAvailable
from cdpswitch.codec import Status

from cdpswitch.offload.worker import WorkerServer
from cdpswitch.packet import ParsedPacket

DST = bytes.fromhex("aabbccddee01")
SRC = bytes.fromhex("020000000001")


def make_packet(payload=b"", *, tag=False, flow=7, dst=DST, src_addr=0x0A000001, dst_addr=0x0A000002):
    return ParsedPacket.build(
        payload, dst_mac=dst, src_mac=SRC, src_addr=src_addr, dst_addr=dst_addr, flow_label=flow, tag=tag
    )


# 1000 bytes of structured text; raw deflate (level 6) is 142 bytes.
TEXT_1000 = b"".join(b"seq=%04d;flow=7;" % i for i in range(63))[:1000]


@pytest.fixture
def worker_factory():
    servers = []

    def start(**kwargs):
        server = WorkerServer(("127.0.0.1", 0), **kwargs).start()
        servers.append(server)
        return server

    yield start
    for s in servers:
        s.kill()


class ShuffleBackend:
    """Holds requests and completes a random subset in random order."""

    def __init__(self, rng: random.Random, fail_rate: float = 0.0, refuse_rate: float = 0.0) -> None:
        self.rng = rng
        self.fail_rate = fail_rate
        self.refuse_rate = refuse_rate
        self.held: list[ExternRequest] = []
        self.extra: list[ExternCompletion] = []

    def submit(self, req: ExternRequest) -> None:
        if self.rng.random() < self.refuse_rate:
            raise NoWorkerAvailable("refused")
        self.held.append(req)

    def poll(self, max_results: int) -> list[ExternCompletion]:
        self.rng.shuffle(self.held)
        n = self.rng.randint(0, min(max_results, len(self.held)))
        out = []
        for req in self.held[:n]:
            ok = self.rng.random() >= self.fail_rate
            out.append(ExternCompletion(req.request_id, Status.OK if ok else Status.FAILED, req.payload, False))
        del self.held[:n]
        out += self.extra[: max_results - len(out)]
        del self.extra[: len(out) - n]
        return out


# Acceptance criteria: one PASS/FAIL line each in the terminal summary.
_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    num, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _CRITERIA[num] = (title, "PASS" if rep.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, verdict = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d} {verdict}  {title}")
