import io
import json
import subprocess
import time
import sys

import jsonschema
import pytest

from cdpswitch.cli import main
from cdpswitch.gating import GateMode
from cdpswitch.harness.config import ConfigError, parse_config
from cdpswitch.harness.link import InprocLink, LinkOverflow, TcpLink
from cdpswitch.harness.metrics import (
    CSV_COLUMNS,
    METRICS_JSON_SCHEMA,
    MetricsReport,
    emit_metrics,
    load_csv,
    load_json,
    percentile,
)
from cdpswitch.harness.scenario import Sink, run_scenario
from cdpswitch.harness.traffic import (
    CorpusEmpty,
    LengthDist,
    TrafficError,
    TrafficSpec,
    flow_dst_mac,
    generate_traffic,
    read_frames,
    write_frames,
)
from cdpswitch.offload.backends import BackendKind
from cdpswitch.packet import parse

from .conftest import make_packet

BASIC = """
[gate]
mode = always
[traffic]
flows = 2
packets_per_flow = 20
length = uniform(0, 1500)
content = mixed
"""


# -- traffic -----------------------------------------------------------------

def test_traffic_is_deterministic():
    spec = TrafficSpec(3, 50, LengthDist.parse("uniform(0,1500)"), "mixed", 0.5)
    a = [gp.packet for gp in generate_traffic(spec, 7)]
    b = [gp.packet for gp in generate_traffic(spec, 7)]
    c = [gp.packet for gp in generate_traffic(spec, 8)]
    assert a == b and a != c
    assert len(a) == 150


def test_flows_interleave_round_robin():
    gps = list(generate_traffic(TrafficSpec(3, 2, LengthDist.parse("fixed(10)")), 0))
    assert [g.flow for g in gps] == [0, 1, 2, 0, 1, 2]
    assert [g.seq for g in gps] == [0, 0, 0, 1, 1, 1]
    assert gps[4].packet.cdp.flow_label == 1
    assert gps[4].packet.eth.dst_mac == flow_dst_mac(1) == bytes.fromhex("02cd00000001")
    assert gps[4].packet.cdp.src_addr == 0x0A000001 and gps[4].packet.cdp.dst_addr == 0x0A800001


def test_sweep_and_tag_probability():
    spec = TrafficSpec(1, 30, LengthDist.parse("sweep(100,1500,100)"), tag_probability=0.0)
    gps = list(generate_traffic(spec))
    assert [len(g.packet.payload) for g in gps[:16]] == list(range(100, 1501, 100)) + [100]
    assert not any(g.packet.cdp.tag for g in gps)


def test_bimodal():
    spec = TrafficSpec(1, 400, LengthDist.parse("bimodal(64,1400,0.75)"))
    lengths = [len(g.packet.payload) for g in generate_traffic(spec, 1)]
    assert set(lengths) == {64, 1400}
    assert 0.65 < lengths.count(64) / 400 < 0.85


@pytest.mark.parametrize("text", ["fixed()", "gauss(1,2)", "uniform(0,99999)", "bimodal(1,2,3)", "sweep(1,5,0)", "fixed"])
def test_bad_length_dist(text):
    with pytest.raises(TrafficError):
        LengthDist.parse(text)


def test_corpus(tmp_path):
    (tmp_path / "a.txt").write_bytes(b"hello corpus " * 10)
    gps = list(generate_traffic(TrafficSpec(1, 5, LengthDist.parse("fixed(300)"), f"corpus:{tmp_path}"), 0))
    assert all(len(g.packet.payload) == 300 and b"corpus" in g.packet.payload for g in gps)
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(CorpusEmpty):
        list(generate_traffic(TrafficSpec(content=f"corpus:{empty}")))


def test_frame_file_roundtrip():
    spec = TrafficSpec(2, 5, LengthDist.parse("uniform(0,200)"), "mixed")
    buf = io.BytesIO()
    assert write_frames(buf, generate_traffic(spec, 3)) == 10
    buf.seek(0)
    frames = [parse(f).payload for f in read_frames(buf)]
    assert frames == [g.packet.payload for g in generate_traffic(spec, 3)]


# -- config ------------------------------------------------------------------

def test_parse_config_full():
    cfg = parse_config("""
# comment
[switch]
offset = 4
route.aa:bb:cc:dd:ee:ff = 3
[gate]
mode = size_and_queue_wait
wait_threshold_us = 250
[cache]
enabled = false
ttl_ms = 2000
[backend]
kind = remote
remote = 127.0.0.1:9001, 127.0.0.1:9002
scope = compress
request_timeout_ms = 50
checksum = adler32
[traffic]
flows = 4
length = bimodal(64,1400,0.5)
send_rate = 1000
seed = 11
[output]
format = csv
link = tcp
timeseries = yes
""")
    assert cfg.compressor.gate.mode is GateMode.SIZE_AND_QUEUE_WAIT
    assert cfg.compressor.gate.wait_threshold == pytest.approx(250e-6)
    assert cfg.compressor.offset == cfg.decompressor.offset == 4
    assert not cfg.compressor.cache_enabled and cfg.compressor.cache_ttl == 2.0
    assert cfg.routes == ((bytes.fromhex("aabbccddeeff"), 3),)
    assert 3 in cfg.compressor.ports
    assert cfg.backend.kind is BackendKind.REMOTE
    assert cfg.backend.remote == (("127.0.0.1", 9001), ("127.0.0.1", 9002))
    assert cfg.backend.request_timeout == pytest.approx(0.05)
    assert cfg.backend_scope == "compress" and cfg.codec.checksum == "adler32"
    assert cfg.traffic.flow_count == 4 and cfg.traffic.send_rate == 1000
    assert (cfg.seed, cfg.output_format, cfg.link, cfg.timeseries) == (11, "csv", "tcp", True)


def test_config_defaults():
    cfg = parse_config("")
    assert cfg.compressor.gate.mode is GateMode.SIZE_THRESHOLD
    assert cfg.compressor.gate.size_threshold_bytes == 500
    assert cfg.compressor.cache_ttl == 5.0 and cfg.compressor.cache_capacity == 1024
    assert cfg.compressor.context_capacity == 4096
    assert cfg.backend.kind is BackendKind.INLINE


@pytest.mark.parametrize(
    "text",
    [
        "[bogus]\nx = 1",
        "[gate]\nmode = sometimes",
        "[gate]\ncolour = red",
        "[traffic]\nlength = normal(3)",
        "[backend]\nkind = remote",
        "[backend]\nchecksum = crc",
        "[switch]\nroute.zz = 1",
        "[cache]\nenabled = maybe",
        "not a config",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


# -- metrics -----------------------------------------------------------------

def sample_report() -> MetricsReport:
    return MetricsReport(
        packets_sent=10, packets_received=9, packets_dropped=1, compression_ratio=0.25,
        latency_extern_p50_us=12.5, drop_causes={"no_route": 1},
        per_backend={"compressor/inline": {"completed": 9, "failed": 0}},
        switches={"compressor": {"received": 10}},
    )


def test_csv_roundtrip(tmp_path):
    r = sample_report()
    emit_metrics(r, "csv", tmp_path / "m.csv")
    header = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert tuple(header.split(",")) == CSV_COLUMNS
    assert load_csv(tmp_path / "m.csv") == r


def test_json_roundtrip_and_schema(tmp_path):
    r = sample_report()
    emit_metrics(r, "json", tmp_path / "m.json")
    jsonschema.validate(json.loads((tmp_path / "m.json").read_text()), METRICS_JSON_SCHEMA)
    assert load_json(tmp_path / "m.json") == r


def test_timeseries_sidecar(tmp_path):
    r = sample_report()
    r.timeseries = [{"second": 0, "sent": 5, "received": 5, "dropped": 0, "bytes_on_link": 50}]
    emit_metrics(r, "csv", tmp_path / "m.csv")
    assert (tmp_path / "m.timeseries.csv").read_text().startswith("second,sent")


def test_percentile():
    assert percentile([], 50) == 0.0
    assert percentile([3.0], 99) == 3.0
    assert percentile([1, 2, 3, 4], 50) == 2.5
    assert percentile(list(range(1, 102)), 95) == pytest.approx(96.0)


# -- link and sink -------------------------------------------------------------

def test_inproc_link_overflow():
    link = InprocLink(capacity=1)
    link.send(b"a", False)
    with pytest.raises(LinkOverflow):
        link.send(b"b", False)
    assert link.receive() == [(b"a", False)] and link.pending == 0


def test_tcp_link():
    link = TcpLink()
    try:
        link.send(b"hello", True)
        link.send(b"", False)
        got = []
        for _ in range(1000):
            got += link.receive()
            if len(got) == 2:
                break
            time.sleep(0.001)
        assert got == [(b"hello", True), (b"", False)] and link.pending == 0
    finally:
        link.close()


def test_sink_matching():
    sink = Sink()
    sink.expect(0, 0, b"a", 0.0)
    sink.expect(0, 1, b"b", 0.0)
    sink.deliver(make_packet(b"b", flow=0), True, 1e-6)
    sink.deliver(make_packet(b"a", flow=0), False, 2e-6)
    assert sink.reorders == 1 and sink.integrity_failures == 0 and sink.outstanding == 0
    sink.expect(0, 2, b"c", 0.0)
    sink.deliver(make_packet(b"X", flow=0), False, 0.0)
    assert sink.integrity_failures == 1 and sink.outstanding == 0


# -- scenario and CLI ------------------------------------------------------------

def test_run_scenario_inproc_and_tcp():
    for link in ("inproc", "tcp"):
        cfg = parse_config(BASIC + f"[output]\nlink = {link}\n")
        r = run_scenario(cfg)
        assert (r.packets_sent, r.packets_received, r.packets_dropped) == (40, 40, 0)
        assert r.payload_integrity_failures == 0 and r.in_flight_at_shutdown == 0
        assert r.compressed_count > 0
        assert r.bytes_on_link_compressed_segment < r.bytes_original


def test_hook_runs_after_nth_packet():
    seen = []
    run_scenario(parse_config(BASIC), hooks={5: lambda rt: seen.append(rt.sent)})
    assert seen == [5]


def test_cli_run_writes_metrics(tmp_path):
    cfg = tmp_path / "s.ini"
    cfg.write_text(BASIC)
    out = tmp_path / "m.json"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--format", "json", "--seed", "3"]) == 0
    data = json.loads(out.read_text())
    jsonschema.validate(data, METRICS_JSON_SCHEMA)
    assert data["packets_received"] == 40
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "m.csv"), "--format", "csv"]) == 0
    assert load_csv(tmp_path / "m.csv").packets_sent == 40


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[gate]\nmode = sometimes\n")
    assert main(["run", "--config", str(bad)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 1
    dead = tmp_path / "dead.ini"
    dead.write_text("[backend]\nkind = remote\nremote = 127.0.0.1:1\n")
    assert main(["run", "--config", str(dead)]) == 2
    cfg = tmp_path / "s.ini"
    cfg.write_text(BASIC)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "no" / "dir" / "m.json")]) == 2


def test_cli_integrity_failure_exit_code(tmp_path, monkeypatch):
    from cdpswitch import cli

    def broken(config):
        return MetricsReport(packets_sent=1, payload_integrity_failures=1)

    monkeypatch.setattr(cli, "run_scenario", broken)
    cfg = tmp_path / "s.ini"
    cfg.write_text(BASIC)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "m.json")]) == 3


def test_cli_gen(tmp_path):
    spec = tmp_path / "t.ini"
    spec.write_text("[traffic]\nflows = 2\npackets_per_flow = 3\nlength = fixed(64)\n")
    out = tmp_path / "frames.bin"
    assert main(["gen", "--spec", str(spec), "--out", str(out), "--seed", "1"]) == 0
    with out.open("rb") as fh:
        frames = list(read_frames(fh))
    assert len(frames) == 6 and all(len(f) == 96 for f in frames)


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "cdpswitch", "--help"], capture_output=True, text=True, timeout=30)
    assert res.returncode == 0 and "worker" in res.stdout


def test_config_inline_comments():
    cfg = parse_config("[gate]\nmode = always   ; compress every tagged packet\n[traffic]\nflows = 3 ; three\n")
    assert cfg.compressor.gate.mode is GateMode.ALWAYS and cfg.traffic.flow_count == 3
