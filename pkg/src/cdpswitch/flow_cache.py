"""Per-flow forwarding context cache with sliding TTL."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Generic, TypeVar

from .packet import FlowKey

__all__ = ["FlowKey", "FlowCache", "FlowCacheEntry"]

DEFAULT_TTL = 5.0
DEFAULT_CAPACITY = 1024

C = TypeVar("C")


@dataclass
class FlowCacheEntry(Generic[C]):
    context: C
    expires_at: float
    hit_count: int = 0


class FlowCache(Generic[C]):
    """Maps a :class:`FlowKey` to a cached routing context.

    A hit pushes the entry's expiry to ``now + ttl``. When full, inserting a
    new key evicts the entry that expires first.
    """

    def __init__(self, ttl: float = DEFAULT_TTL, capacity: int = DEFAULT_CAPACITY) -> None:
        if ttl <= 0:
            raise ValueError("ttl must be positive")
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.ttl = ttl
        self.capacity = capacity
        self._entries: dict[FlowKey, FlowCacheEntry[C]] = {}
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def entry(self, key: FlowKey) -> FlowCacheEntry[C] | None:
        return self._entries.get(key)

    def lookup(self, key: FlowKey, now: float) -> C | None:
        entry = self._entries.get(key)
        if entry is None or now >= entry.expires_at:
            if entry is not None:
                del self._entries[key]
                self.evictions += 1
            self.misses += 1
            return None
        entry.expires_at = now + self.ttl
        entry.hit_count += 1
        self.hits += 1
        return entry.context

    def insert(self, key: FlowKey, context: C, now: float) -> FlowKey | None:
        """Store ``context``; returns the key evicted to make room, if any."""
        evicted = None
        if key not in self._entries and len(self._entries) >= self.capacity:
            evicted = min(self._entries, key=lambda k: self._entries[k].expires_at)
            del self._entries[evicted]
            self.evictions += 1
        self._entries[key] = FlowCacheEntry(context, now + self.ttl)
        return evicted

    def evict_expired(self, now: float) -> int:
        dead = [k for k, e in self._entries.items() if e.expires_at <= now]
        for k in dead:
            del self._entries[k]
        self.evictions += len(dead)
        return len(dead)

    def flush(self) -> int:
        n = len(self._entries)
        self._entries.clear()
        return n
