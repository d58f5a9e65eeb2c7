import itertools
import random

import pytest
from hypothesis import given, strategies as st

from wasisn.acl import (
    AccessRequest, DeviceAuthority, EntityUII, PkgRegistry, Policy, Requester, ResourceURI,
    RevocationTree, SignedModule, build_encryption_pattern, decode_list, encode_list,
    key_pattern, open_frame, parse_topic, request_topics, verify_module, wrap_module,
)
from wasisn.acl.pkg import Identity, seal, unseal
from wasisn.clock import NS_PER_S, SimClock
from wasisn.config import PolicyRule
from wasisn.crypto import Pattern, WILDCARD, compatible
from wasisn.errors import (
    BadSignature, CannotDecrypt, ParseError, TooDeep, UnknownAuthor, UnknownLeaf, UnsealFailure,
)

from conftest import Bed
from oracles import CoverOracle, brute_force_cover
from treegen import leaf_paths, shapes

TEMP = "/resources/device01/BME280/temperature"


# hierarchy

def test_resource_uri():
    r = ResourceURI.parse(TEMP)
    assert r.components == ("resources", "device01", "BME280", "temperature")
    assert str(r) == TEMP
    for bad in ["/resources/device01/BME280", "/resources/d/s/n/x", "/things/d/s/n",
                "/resources/d//n", "/resources/d/*/n", "resources/d/s/n"]:
        with pytest.raises(ParseError):
            ResourceURI.parse(bad)


def test_uii_forms():
    u = EntityUII.parse("/entity/Loc1/Alice/NULL")
    assert u.components == ("entity", "Loc1", "Alice", "NULL") and not u.delegating
    short = EntityUII.parse("/entity/Loc1/Alice")
    assert short == u and str(short) == "/entity/Loc1/Alice" and short.canonical == str(u)
    deep = EntityUII.parse("/entity/Bldg/Floor2/Bob/Carol")
    assert deep.location == ("Bldg", "Floor2") and deep.delegating
    for bad in ["/entity", "/entity/Loc1", "/resources/a/b/c", "/entity/a//b/c", "/entity/a/*/b"]:
        with pytest.raises(ParseError):
            EntityUII.parse(bad)


def test_encryption_pattern_example():
    p = build_encryption_pattern("/entity/Loc1/*", TEMP, 8)
    assert p.slots == (b"entity", b"Loc1", None, None,
                       b"resources", b"device01", b"BME280", b"temperature")
    concrete = build_encryption_pattern("/entity/Loc1/Alice/NULL", TEMP, 8)
    assert concrete.wildcards() == []
    with pytest.raises(TooDeep):
        build_encryption_pattern("/entity/a/b/c/d", TEMP, 8)
    with pytest.raises(TooDeep):
        build_encryption_pattern("/entity/*", TEMP, 7)


def test_key_pattern_compatible_with_group():
    alice = key_pattern("/entity/Loc1/Alice/NULL", TEMP, 8)
    sarah = key_pattern("/entity/Loc2/Sarah/NULL", TEMP, 8)
    group = build_encryption_pattern("/entity/Loc1/*", TEMP, 8)
    assert compatible(alice, group) and not compatible(sarah, group)
    other = build_encryption_pattern("/entity/Loc1/*", "/resources/device01/BME280/humidity", 8)
    assert not compatible(alice, other)


def test_request_topics():
    t = request_topics(TEMP)
    assert t == {"request": TEMP + "/request", "issue": TEMP + "/issue", "ret": TEMP + "/ret"}
    other = request_topics("/resources/device01/BME280/humidity")
    assert not set(t.values()) & set(other.values())
    for kind, topic in t.items():
        assert parse_topic(topic) == (ResourceURI.parse(TEMP), kind)


# request grammar

def test_request_examples():
    r = AccessRequest.parse("read;/entity/Loc1/Alice;Alice_pk")
    assert r.verb == "read" and r.requester == EntityUII.parse("/entity/Loc1/Alice/NULL")
    assert r.format() == "read;/entity/Loc1/Alice;Alice_pk"
    c = AccessRequest.parse("config|BME280,SampRate;/entity/Loc1/Alice/NULL;pk")
    assert c.params == ("BME280", "SampRate")
    for bad in ["read;/entity/Loc1/Alice", "read;/entity/Loc1/Alice;pk;extra", "fly;/entity/a/b/c;pk",
                "config;/entity/a/b/c;pk", "read|x;/entity/a/b/c;pk", "read;/nobody;pk", "read;/entity/a/b/c;"]:
        with pytest.raises(ParseError):
            AccessRequest.parse(bad)


name = st.text("abcXYZ019_-.", min_size=1, max_size=8).filter(lambda s: s != "*")


@given(
    st.sampled_from(["read", "turnOn", "turnOff", "config"]),
    st.lists(name, min_size=1, max_size=3), name, name, st.text("0123456789abcdef", min_size=1, max_size=64),
    name, name,
)
def test_request_roundtrip(verb, location, requester, delegated, pk, sensor, attr):
    params = (sensor, attr) if verb == "config" else ()
    r = AccessRequest(verb, EntityUII(tuple(location), requester, delegated), pk, params)
    assert AccessRequest.parse(r.format()) == r
    assert AccessRequest.parse(r.format().encode()) == r


# sealing and the key authority stub

def test_seal_roundtrip_and_tamper(tmp_path):
    reg = PkgRegistry(tmp_path / "pkg.json")
    dev = reg.issue("/devices/device01")
    blob = seal(dev.public.encryption, b"hello", aad=b"topic")
    assert dev.unseal(blob, aad=b"topic") == b"hello"
    with pytest.raises(UnsealFailure):
        dev.unseal(blob, aad=b"other")
    bad = bytearray(blob)
    bad[-1] ^= 1
    with pytest.raises(UnsealFailure):
        dev.unseal(bytes(bad))
    reloaded = PkgRegistry(tmp_path / "pkg.json")
    assert reloaded.lookup("/devices/device01") == dev.public
    key_file = tmp_path / "dev.key"
    dev.save(key_file)
    assert Identity.load(key_file).public == dev.public


def test_module_wrap_verify(tmp_path):
    reg = PkgRegistry()
    alice = reg.issue("/entity/Loc1/Alice/NULL")
    dev = reg.issue("/devices/device01")
    code = b"\0asm\1\0\0\0" + bytes(range(50))
    signed = wrap_module(code, "/entity/Loc1/Alice/NULL", alice, dev.public)
    raw = signed.to_bytes()
    module, author = verify_module(reg, dev, raw)
    assert module == code and author == EntityUII.parse("/entity/Loc1/Alice/NULL")
    for pos in [len(raw) - 70, len(raw) - 1, 40]:
        flipped = bytearray(raw)
        flipped[pos] ^= 0x01
        with pytest.raises(BadSignature):
            verify_module(reg, dev, bytes(flipped))
    mallory = Identity.generate("/entity/Loc9/Mallory/NULL")
    forged = wrap_module(code, mallory.name, mallory, dev.public)
    with pytest.raises(UnknownAuthor):
        verify_module(reg, dev, forged)
    other_dev = reg.issue("/devices/device02")
    with pytest.raises(UnsealFailure):
        verify_module(reg, other_dev, signed)


# revocation

def leaf(path):
    return tuple(EntityUII.parse(path).components)


def test_cover_examples():
    t = RevocationTree(["/entity/Loc1/Alice/NULL", "/entity/Loc1/Bob/NULL", "/entity/Loc2/Sarah/NULL"])
    assert t.cover() == [t.root] == [("entity",)]
    t.revoke("/entity/Loc2/Sarah/NULL")
    assert t.cover() == [("entity", "Loc1")]
    t.revoke("/entity/Loc1/Alice/NULL")
    assert t.cover() == [leaf("/entity/Loc1/Bob/NULL")]
    t.revoke("/entity/Loc1/Bob/NULL")
    assert t.cover() == []
    with pytest.raises(UnknownLeaf):
        t.revoke("/entity/Loc3/Nobody/NULL")


def test_nested_leaves_rejected():
    t = RevocationTree([("entity", "a", "b")])
    with pytest.raises(ParseError):
        t.add_leaf(("entity", "a", "b", "c"))
    with pytest.raises(ParseError):
        t.add_leaf(("entity", "a"))


def test_expire_keys():
    t = RevocationTree()
    t.add_leaf("/entity/Loc1/Alice/NULL", expiry=100)
    t.add_leaf("/entity/Loc1/Bob/NULL", expiry=500)
    assert t.expire_keys(100) == []
    assert t.expire_keys(101) == [leaf("/entity/Loc1/Alice/NULL")]
    assert t.expire_keys(102) == []
    assert t.cover() == [leaf("/entity/Loc1/Bob/NULL")]


@pytest.mark.parametrize("n", range(1, 7))
def test_cover_matches_oracle_all_shapes(n):
    for shape in shapes(n):
        leaves = leaf_paths(shape)
        oracle = CoverOracle(leaves)
        tree = RevocationTree(leaves)
        for bits in range(1 << n):
            revoked = {l for i, l in enumerate(leaves) if bits >> i & 1}
            tree.revoked = set(revoked)
            assert tree.cover() == oracle.cover(revoked), (shape, revoked)


def test_cover_with_unary_chains():
    # UII-shaped trees have unary chains (requester -> NULL); both sides settle on the deepest node
    rng = random.Random(3)
    for _ in range(30):
        leaves = sorted({("entity", f"L{rng.randrange(3)}", f"u{rng.randrange(4)}", "NULL") for _ in range(6)})
        t = RevocationTree(leaves)
        for bits in range(1 << len(leaves)):
            t.revoked = {l for i, l in enumerate(leaves) if bits >> i & 1}
            assert t.cover() == brute_force_cover(leaves, t.revoked)


# device authority end to end

def make_world(seed=0, rules=None, lifetime=86400):
    bed = Bed(seed=seed)
    reg = PkgRegistry()
    dev_id = reg.issue("/devices/device01")
    policy = rules or [PolicyRule("/entity/Loc1/*", "/resources/device01/*", ["read", "config"])]
    device = DeviceAuthority("device01", dev_id, policy, bed.net.now, rng=random.Random(seed),
                             grant_lifetime_s=lifetime)
    device.attach(bed.client("dev", "device01"))
    people = {}
    for path in ["/entity/Loc1/Alice/NULL", "/entity/Loc1/Bob/NULL", "/entity/Loc2/Sarah/NULL"]:
        who = path.split("/")[3]
        ident = reg.issue(path)
        people[who] = Requester(bed.client(who.lower(), who), ident, path, dev_id.public)
    return bed, reg, device, people


def test_grant_and_deny_over_network():
    bed, reg, device, people = make_world()
    alice = people["Alice"].request(TEMP)
    assert alice.granted and alice.verbs == ("read",)
    sarah = people["Sarah"].request(TEMP)
    assert not sarah.granted and "PolicyDeny" not in sarah.reason and sarah.reason
    assert [d.granted for d in device.decisions] == [True, False]
    frame = device.seal_for_grantees(TEMP, b"\x66\x08\x00\x00")
    assert people["Alice"].open_reading(TEMP, frame) == b"\x66\x08\x00\x00"


def test_request_payload_is_sealed_on_the_wire():
    bed, reg, device, people = make_world()
    people["Alice"].request(TEMP)
    from wasisn.mqttsn.codec import decode, MsgType
    pubs = [decode(d.data) for d in bed.net.sent("alice", "gateway") if decode(d.data).TYPE == MsgType.PUBLISH]
    assert pubs
    plain = device.identity.unseal(pubs[0].data, aad=(TEMP + "/request").encode())
    assert plain.decode() == f"read;/entity/Loc1/Alice/NULL;{people['Alice'].identity.public.encryption_hex}"
    assert b"Alice" not in pubs[0].data


def test_config_request_and_mismatch():
    bed, reg, device, people = make_world()
    d = people["Alice"].request("/resources/device01/BME280/SampRate", "config", ("BME280", "SampRate"))
    assert d.granted and d.verbs == ("config",)
    n = len(device.decisions)
    corr = people["Alice"].submit_request("/resources/device01/BME280/SampRate", "config", ("X", "Y"))
    bed.settle()
    assert len(device.decisions) == n and corr not in people["Alice"].decisions


def test_invalid_request_rejected_locally():
    bed, reg, device, people = make_world()
    before = len(bed.net.trace)
    with pytest.raises(ParseError):
        people["Alice"].submit_request(TEMP, "config", ())
    assert len(bed.net.trace) == before


def test_corrupted_request_no_reply():
    bed, reg, device, people = make_world()
    with pytest.raises(UnsealFailure):
        device.handle_request(TEMP + "/request", b"\0" * 80)
    assert device.decisions == []


def test_publish_reading_and_revocation():
    bed, reg, device, people = make_world()
    for who in ("Alice", "Bob"):
        assert people[who].request(TEMP).granted
    patterns = device.cover_patterns(TEMP)
    assert len(patterns) == 1 and patterns[0] == build_encryption_pattern("/entity/Loc1/*", TEMP, 8)
    assert not device.publish_reading("/resources/device01/BME280/humidity", b"x")
    got = {}
    people["Bob"].client.subscribe(TEMP, 1)
    people["Alice"].client.subscribe(TEMP, 1)
    assert device.publish_reading(TEMP, b"21.5")
    bed.settle()
    for who in ("Alice", "Bob"):
        got[who] = people[who].open_reading(TEMP, people[who].client.get_message(TEMP))
    assert got == {"Alice": b"21.5", "Bob": b"21.5"}
    device.revoke("/entity/Loc1/Bob/NULL")
    device.publish_reading(TEMP, b"22.0")
    bed.settle()
    frame = people["Alice"].client.get_message(TEMP)
    assert people["Alice"].open_reading(TEMP, frame) == b"22.0"
    bob_frame = people["Bob"].client.get_message(TEMP)
    bob = people["Bob"].keys[TEMP]
    for raw in decode_list(bob_frame):
        from wasisn.crypto.hybrid import HybridCiphertext, hybrid_decrypt
        with pytest.raises(CannotDecrypt):
            hybrid_decrypt(bob.params, bob.key, HybridCiphertext.from_bytes(raw, bob.params))


def test_sibling_adversary_cannot_decrypt():
    bed, reg, device, people = make_world()
    people["Alice"].request(TEMP)
    frame = device.seal_for_grantees(TEMP, b"secret")
    from wasisn.crypto import key_der
    for sibling in ["/entity/Loc2/Alice/NULL", "/entity/Loc1/Alice/Eve", "/entity/Loc11/Alice/NULL"]:
        k = key_der(device.mpk, device.msk, key_pattern(sibling, TEMP, 8))
        with pytest.raises(CannotDecrypt):
            open_frame(device.mpk, k, TEMP, frame)


def test_expiry_revokes():
    bed, reg, device, people = make_world(lifetime=100)
    assert people["Alice"].request(TEMP).granted
    assert device.permitted("/entity/Loc1/Alice/NULL", TEMP, "read")
    bed.net.run_for(101 * NS_PER_S)
    assert not device.permitted("/entity/Loc1/Alice/NULL", TEMP, "read")
    assert device.seal_for_grantees(TEMP, b"x") is None
    assert device.trees[TEMP].is_revoked("/entity/Loc1/Alice/NULL")


def test_ret_topic():
    bed, reg, device, people = make_world()
    people["Alice"].request(TEMP)
    people["Alice"].client.subscribe(TEMP + "/ret", 1)
    device.publish_return(TEMP, "read", 4, b"\x01\x02\x03\x04")
    bed.settle()
    frame = people["Alice"].client.get_message(TEMP + "/ret")
    assert people["Alice"].open_return(TEMP, frame) == ("read", 4, b"\x01\x02\x03\x04")


def test_frame_codec():
    items = [b"", b"a", bytes(300)]
    assert decode_list(encode_list(items)) == items
