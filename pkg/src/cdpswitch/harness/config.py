"""Scenario config files: ``key = value`` lines under ``[section]`` headers.

Grammar (``#`` and ``;`` start comment lines and ``;`` also starts an inline
comment; only ``=`` separates key and value, so MAC addresses may appear in
keys)::

    [switch]
    compress_port = 1            egress port on the compression switch
    decompress_port = 2          egress port on the decompression switch
    auto_routes = true           install one L2 route per generated flow
    route.<mac> = <port>         extra L2 entry on both switches
    offset = 0                   bytes left uncompressed at payload start
    context_capacity = 4096
    burst = 32

    [gate]
    mode = always | size | queue_wait | size_and_queue_wait
    size_threshold = 500
    ewma_alpha = 0.1
    wait_threshold_us = <number> (omit to derive it from compression time)

    [cache]
    enabled = true
    ttl_ms = 5000
    capacity = 1024

    [backend]
    kind = inline | worker | remote
    remote = host:port, host:port
    scope = both | compress      which switches use this backend
    request_timeout_ms = 100
    probe_interval_ms = 1000
    max_in_flight = 64
    op_delay_ms = 0
    level = 6
    checksum = none | adler32

    [traffic]
    flows = 1
    packets_per_flow = 10
    length = fixed(1000) | uniform(a,b) | bimodal(small,large,ratio) | sweep(start,stop,step)
    content = repeated_byte | fixed_seed_random | mixed | corpus:<dir>
    tag_probability = 1.0
    send_rate = unlimited | <packets per second>
    seed = 0

    [output]
    path = metrics.json
    format = json | csv
    link = inproc | tcp
    timeseries = false
    drain_timeout_ms = 5000
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from ..codec import CodecDeviceConfig
from ..gating import GateMode, GatePolicy
from ..offload.backends import BackendConfig, BackendKind
from ..offload.worker import parse_endpoint
from ..packet import mac
from ..pipeline import Role
from ..switch import SwitchConfig
from .traffic import LengthDist, TrafficError, TrafficSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    compressor: SwitchConfig = field(default_factory=lambda: SwitchConfig(role=Role.COMPRESS))
    decompressor: SwitchConfig = field(default_factory=lambda: SwitchConfig(role=Role.DECOMPRESS))
    compress_port: int = 1
    decompress_port: int = 2
    auto_routes: bool = True
    routes: tuple[tuple[bytes, int], ...] = ()
    backend: BackendConfig = field(default_factory=BackendConfig)
    backend_scope: str = "both"
    codec: CodecDeviceConfig = field(default_factory=CodecDeviceConfig)
    traffic: TrafficSpec = field(default_factory=TrafficSpec)
    seed: int = 0
    link: str = "inproc"
    output_path: str | None = None
    output_format: str = "json"
    timeseries: bool = False
    drain_timeout: float = 5.0

    def with_switches(self, **changes) -> "ScenarioConfig":
        """Apply the same SwitchConfig changes to both switches."""
        return replace(
            self,
            compressor=replace(self.compressor, **changes),
            decompressor=replace(self.decompressor, **changes),
        )


_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def _bool(v: str) -> bool:
    try:
        return _BOOL[v.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {v!r}") from None


def _ms(v: str) -> float:
    return float(v) / 1000.0


_KEYS: dict[str, dict[str, Callable[[str], object]]] = {
    "switch": {
        "compress_port": int,
        "decompress_port": int,
        "auto_routes": _bool,
        "offset": int,
        "context_capacity": int,
        "burst": int,
    },
    "gate": {"mode": GateMode, "size_threshold": int, "ewma_alpha": float, "wait_threshold_us": float},
    "cache": {"enabled": _bool, "ttl_ms": _ms, "capacity": int},
    "backend": {
        "kind": BackendKind,
        "remote": lambda v: tuple(parse_endpoint(x.strip()) for x in v.split(",") if x.strip()),
        "scope": lambda v: {"both": "both", "compress": "compress"}[v.strip()],
        "request_timeout_ms": _ms,
        "probe_interval_ms": _ms,
        "max_in_flight": int,
        "op_delay_ms": _ms,
        "level": int,
        "checksum": str,
    },
    "traffic": {
        "flows": int,
        "packets_per_flow": int,
        "length": LengthDist.parse,
        "content": str,
        "tag_probability": float,
        "send_rate": lambda v: None if v.strip() == "unlimited" else float(v),
        "seed": int,
    },
    "output": {
        "path": str,
        "format": lambda v: {"json": "json", "csv": "csv"}[v.strip()],
        "link": lambda v: {"inproc": "inproc", "tcp": "tcp"}[v.strip()],
        "timeseries": _bool,
        "drain_timeout_ms": _ms,
    },
}


def _read(parser: configparser.ConfigParser) -> dict[str, dict[str, object]]:
    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        out = values.setdefault(section, {})
        for key, raw in parser.items(section):
            if section == "switch" and key.startswith("route."):
                try:
                    out.setdefault("routes", []).append((mac(key[len("route."):]), int(raw)))
                except ValueError as exc:
                    raise ConfigError(f"[switch] {key}: {exc}") from None
                continue
            conv = _KEYS[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                out[key] = conv(raw)
            except (ValueError, KeyError, TrafficError) as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None
    return values


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=(";",), interpolation=None
    )
    parser.optionxform = str  # keep MAC/key case as written
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    v = _read(parser)
    sw, gate, cache, be, tr, out = (v.get(s, {}) for s in ("switch", "gate", "cache", "backend", "traffic", "output"))

    try:
        policy = GatePolicy(
            mode=gate.get("mode", GateMode.SIZE_THRESHOLD),
            size_threshold_bytes=gate.get("size_threshold", 500),
            wait_threshold=gate["wait_threshold_us"] / 1e6 if "wait_threshold_us" in gate else None,
        )
        common = dict(
            gate=policy,
            ewma_alpha=gate.get("ewma_alpha", 0.1),
            cache_enabled=cache.get("enabled", True),
            cache_ttl=cache.get("ttl_ms", 5.0),
            cache_capacity=cache.get("capacity", 1024),
            context_capacity=sw.get("context_capacity", 4096),
            offset=sw.get("offset", 0),
            burst=sw.get("burst", 32),
        )
        compress_port = sw.get("compress_port", 1)
        decompress_port = sw.get("decompress_port", 2)
        ports = tuple(sorted({0, 1, 2, 3, compress_port, decompress_port, *(p for _, p in sw.get("routes", []))}))
        backend = BackendConfig(
            kind=be.get("kind", BackendKind.INLINE),
            remote=be.get("remote", ()),
            request_timeout=be.get("request_timeout_ms", 0.1),
            max_in_flight=be.get("max_in_flight", 64),
            probe_interval=be.get("probe_interval_ms", 1.0),
            op_delay=be.get("op_delay_ms", 0.0),
        )
        codec = CodecDeviceConfig(level=be.get("level", 6), checksum=be.get("checksum", "none"))
        codec.validate()
        traffic = TrafficSpec(
            flow_count=tr.get("flows", 1),
            packets_per_flow=tr.get("packets_per_flow", 10),
            length=tr.get("length", LengthDist("fixed", (1000.0,))),
            content=tr.get("content", "repeated_byte"),
            tag_probability=tr.get("tag_probability", 1.0),
            send_rate=tr.get("send_rate"),
        )
        traffic.validate()
        return ScenarioConfig(
            compressor=SwitchConfig(role=Role.COMPRESS, ports=ports, **common),
            decompressor=SwitchConfig(role=Role.DECOMPRESS, ports=ports, **common),
            compress_port=compress_port,
            decompress_port=decompress_port,
            auto_routes=sw.get("auto_routes", True),
            routes=tuple(sw.get("routes", ())),
            backend=backend,
            backend_scope=be.get("scope", "both"),
            codec=codec,
            traffic=traffic,
            seed=tr.get("seed", 0),
            link=out.get("link", "inproc"),
            output_path=out.get("path"),
            output_format=out.get("format", "json"),
            timeseries=out.get("timeseries", False),
            drain_timeout=out.get("drain_timeout_ms", 5.0),
        )
    except (ValueError, TrafficError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
