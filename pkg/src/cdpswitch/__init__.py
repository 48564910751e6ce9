"""Software data-plane engine: asynchronous externs, gated compression,
flow-context caching and offloaded extern backends."""

from .packet import FlowKey, ParsedPacket, deparse, parse
from .switch import Switch, SwitchConfig

__all__ = ["FlowKey", "ParsedPacket", "Switch", "SwitchConfig", "deparse", "parse"]
