import pytest

from cdpswitch.pipeline import (
    L2_TABLE,
    ActionKind,
    Drop,
    Forward,
    InvalidAction,
    KeyWidthMismatch,
    Pipeline,
    Role,
    RouteContext,
    TableEntry,
    ToExtern,
    UnknownTable,
)

from .conftest import DST, make_packet


def routed(role=Role.COMPRESS) -> Pipeline:
    pl = Pipeline(role)
    pl.table_insert(L2_TABLE, TableEntry(DST, Forward(1)))
    return pl


def test_miss_uses_default_drop():
    pl = Pipeline()
    assert pl.table_lookup(L2_TABLE, DST) is None
    d = pl.run_ingress(make_packet(b"x", tag=True), True)
    assert d.action.kind is ActionKind.DROP
    assert pl.lookups == 1


def test_insert_lookup_delete():
    pl = routed()
    assert pl.table_lookup(L2_TABLE, DST) == Forward(1)
    assert pl.table_delete(L2_TABLE, DST)
    assert not pl.table_delete(L2_TABLE, DST)


def test_control_errors():
    pl = Pipeline()
    with pytest.raises(UnknownTable):
        pl.table_insert("acl", TableEntry(DST, Forward(1)))
    with pytest.raises(KeyWidthMismatch):
        pl.table_insert(L2_TABLE, TableEntry(b"\x01\x02", Forward(1)))
    with pytest.raises(InvalidAction):
        pl.table_insert(L2_TABLE, TableEntry(DST, Forward(99)))
    with pytest.raises(InvalidAction):
        pl.table_insert(L2_TABLE, TableEntry(DST, ToExtern("hash")))


def test_extra_table():
    pl = Pipeline()
    pl.add_table("acl", 4)
    pl.table_insert("acl", TableEntry(b"\x0a\x00\x00\x01", Drop(), "acl"))
    assert pl.table_lookup("acl", b"\x0a\x00\x00\x01") == Drop()


def test_compress_role_steers_tagged():
    pl = routed()
    d = pl.run_ingress(make_packet(b"x" * 800, tag=True), True)
    assert d.action == ToExtern("compress", 1)
    assert d.context.egress_port == 1 and d.cacheable


def test_compress_role_forwards_when_gate_says_no():
    pl = routed()
    assert pl.run_ingress(make_packet(b"x" * 800, tag=True), False).action == Forward(1)
    assert pl.run_ingress(make_packet(b"x" * 800), True).action == Forward(1)


def test_decompress_role():
    pl = routed(Role.DECOMPRESS)
    p = make_packet(b"abcd", tag=True)
    assert pl.run_ingress(p, True).action == Forward(1)
    c = p.with_payload(b"ab", compressed=True)
    assert pl.run_ingress(c, False).action == ToExtern("decompress", 1)


def test_cached_route_skips_lookup():
    pl = routed()
    ctx = RouteContext(2, 0, make_packet().flow_key)
    d = pl.run_ingress(make_packet(b"x" * 800, tag=True), True, cached=ctx)
    assert pl.lookups == 0
    assert d.from_cache and not d.cacheable
    assert d.action == ToExtern("compress", 2)


def test_explicit_extern_route_is_not_cacheable():
    pl = Pipeline()
    pl.table_insert(L2_TABLE, TableEntry(DST, ToExtern("encrypt", 3)))
    d = pl.run_ingress(make_packet(b"x"), False)
    assert d.action == ToExtern("encrypt", 3) and not d.cacheable


def test_queued_mutations_apply_between_packets():
    pl = Pipeline()
    pl.enqueue_mutation(lambda: pl.table_insert(L2_TABLE, TableEntry(DST, Forward(2))))
    assert pl.table_lookup(L2_TABLE, DST) is None
    assert pl.apply_pending() == 1
    assert pl.table_lookup(L2_TABLE, DST) == Forward(2)
