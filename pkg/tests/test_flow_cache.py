import pytest

from cdpswitch.flow_cache import FlowCache
from cdpswitch.packet import FlowKey


def key(i: int) -> FlowKey:
    return FlowKey(1, 2, i)


def test_miss_then_hit():
    c = FlowCache(ttl=5.0)
    assert c.lookup(key(1), 0.0) is None
    c.insert(key(1), "ctx", 0.0)
    assert c.lookup(key(1), 1.0) == "ctx"
    assert (c.hits, c.misses) == (1, 1)
    assert c.entry(key(1)).hit_count == 1


def test_hit_slides_expiry():
    c = FlowCache(ttl=5.0)
    c.insert(key(1), "ctx", 0.0)
    assert c.lookup(key(1), 4.0) == "ctx"
    assert c.entry(key(1)).expires_at == 9.0
    assert c.lookup(key(1), 8.9) == "ctx"
    assert c.lookup(key(1), 13.9) is None  # 8.9 + 5 = 13.9 is the boundary
    assert key(1) not in c


def test_expired_entry_is_a_miss():
    c = FlowCache(ttl=5.0)
    c.insert(key(1), "ctx", 0.0)
    assert c.lookup(key(1), 5.0) is None
    assert c.misses == 1 and c.evictions == 1


def test_capacity_evicts_earliest_expiry():
    c = FlowCache(ttl=5.0, capacity=2)
    c.insert(key(1), "a", 0.0)
    c.insert(key(2), "b", 1.0)
    c.lookup(key(1), 2.0)  # key 1 now expires at 7, key 2 at 6
    assert c.insert(key(3), "c", 3.0) == key(2)
    assert len(c) == 2 and key(2) not in c


def test_reinsert_does_not_evict():
    c = FlowCache(capacity=1)
    c.insert(key(1), "a", 0.0)
    assert c.insert(key(1), "b", 1.0) is None
    assert c.lookup(key(1), 1.0) == "b"


def test_evict_expired_and_flush():
    c = FlowCache(ttl=1.0)
    for i in range(4):
        c.insert(key(i), i, float(i))
    assert c.evict_expired(2.5) == 2
    assert c.flush() == 2
    assert len(c) == 0


def test_bad_parameters():
    with pytest.raises(ValueError):
        FlowCache(ttl=0)
    with pytest.raises(ValueError):
        FlowCache(capacity=0)
