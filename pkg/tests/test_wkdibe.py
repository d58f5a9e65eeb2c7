import random

import pytest
from hypothesis import given, settings, strategies as st

from wasisn.crypto import (
    WILDCARD, MockBackend, Pattern, armor, compatible, dearmor, decrypt, deserialize, encrypt,
    hybrid_decrypt, hybrid_encrypt, key_der, key_is_consistent, matches, serialize, setup,
)
from wasisn.crypto.hybrid import HybridCiphertext
from wasisn.crypto.wkdibe import decrypt_unchecked
from wasisn.errors import (
    AuthenticationFailure, BadPattern, CannotDecrypt, NotDelegable, SerializationError,
)

B = MockBackend()


def oracle_compatible(a, b):
    # independent formulation: the sets of (index, value) pairs fixed on both sides agree
    fa = {i: v for i, v in enumerate(a.slots) if v is not None}
    fb = {i: v for i, v in enumerate(b.slots) if v is not None}
    return all(fa[i] == fb[i] for i in fa.keys() & fb.keys())


def rand_pattern(rng, L, alphabet=(b"a", b"b"), p_wild=0.4):
    return Pattern(tuple(None if rng.random() < p_wild else rng.choice(alphabet) for _ in range(L)))


def test_matches_examples():
    assert matches(Pattern.of("*", "X"), Pattern.of("A", "X"))
    assert not matches(Pattern.of("A", "X"), Pattern.of("*", "X"))
    p = Pattern.of("A", WILDCARD)
    assert matches(p, p)
    with pytest.raises(BadPattern):
        matches(Pattern.of("A"), Pattern.of("A", "B"))


def test_pattern_padding():
    assert Pattern.of("a", length=3).slots == (b"a", b"", b"")
    assert Pattern.of("a", length=3, pad=None).slots == (b"a", None, None)
    with pytest.raises(BadPattern):
        Pattern.of("a", "b", length=1)


def test_setup_shape_and_msk_identity():
    rng = random.Random(1)
    mpk, msk = setup(4, B, rng)
    assert len(mpk.h) == 5
    assert B.pair(mpk.g, msk.h0_alpha) == B.pair(mpk.g1, mpk.h[0])


def test_two_setups_distinct():
    alphas = {setup(2, B)[0].g1 for _ in range(20)}
    assert len(alphas) == 20


def test_mock_bilinearity():
    rng = random.Random(3)
    for _ in range(100):
        a, b = B.random_g(rng), B.random_g(rng)
        x, y = B.random_scalar(rng), B.random_scalar(rng)
        assert B.pair(B.exp(a, x), B.exp(b, y)) == B.gt_exp(B.pair(a, b), x * y % B.order)
    assert B.pair(B.generator(), B.generator()) != B.gt_identity()


def test_key_consistency_after_derivation_and_delegation():
    rng = random.Random(4)
    mpk, msk = setup(4, B, rng)
    k = key_der(mpk, msk, Pattern.of("entity", "Loc1", "*", "*"), rng)
    assert key_is_consistent(mpk, k)
    k2 = key_der(mpk, k, Pattern.of("entity", "Loc1", "Alice", "*"), rng)
    assert key_is_consistent(mpk, k2)
    assert set(k2.free) == {4}


def test_delegation_guard():
    rng = random.Random(5)
    mpk, msk = setup(2, B, rng)
    k = key_der(mpk, msk, Pattern.of("A", "*"), rng)
    with pytest.raises(NotDelegable):
        key_der(mpk, k, Pattern.of("B", "C"), rng)
    with pytest.raises(NotDelegable):
        key_der(mpk, k, Pattern.of("*", "C"), rng)


def test_delegated_equals_direct():
    rng = random.Random(6)
    mpk, msk = setup(2, B, rng)
    parent = key_der(mpk, msk, Pattern.of("A", "*"), rng)
    delegated = key_der(mpk, parent, Pattern.of("A", "B"), rng)
    direct = key_der(mpk, msk, Pattern.of("A", "B"), rng)
    for ct_pattern in [Pattern.of("A", "B"), Pattern.of("A", "*"), Pattern.of("*", "*"), Pattern.of("*", "B")]:
        m = B.random_gt(rng)
        ct = encrypt(mpk, ct_pattern, m, rng)
        assert decrypt(mpk, delegated, ct) == decrypt(mpk, direct, ct) == m


def test_paper_group_scenario():
    """A key with the requester slot fixed opens a ciphertext whose requester slot is open."""
    rng = random.Random(7)
    mpk, msk = setup(8, B, rng)
    resource = ["resources", "device01", "BME280", "temperature"]
    group = Pattern.of("entity", "Loc1", "*", "*", *resource)
    alice = key_der(mpk, msk, Pattern.of("entity", "Loc1", "Alice", "NULL", *resource), rng)
    bob = key_der(mpk, msk, Pattern.of("entity", "Loc1", "Bob", "NULL", *resource), rng)
    sarah = key_der(mpk, msk, Pattern.of("entity", "Loc2", "Sarah", "NULL", *resource), rng)
    m = B.random_gt(rng)
    ct = encrypt(mpk, group, m, rng)
    assert decrypt(mpk, alice, ct) == m
    assert decrypt(mpk, bob, ct) == m
    with pytest.raises(CannotDecrypt):
        decrypt(mpk, sarah, ct)
    only_alice = encrypt(mpk, Pattern.of("entity", "Loc1", "Alice", "NULL", *resource), m, rng)
    with pytest.raises(CannotDecrypt):
        decrypt(mpk, bob, only_alice)


def test_identity_message_and_fresh_randomness():
    rng = random.Random(8)
    mpk, _ = setup(2, B, rng)
    p = Pattern.of("x", "*")
    a = encrypt(mpk, p, B.gt_identity(), rng)
    b = encrypt(mpk, p, B.gt_identity(), rng)
    assert a.c0 != b.c0
    t = a.c0  # on the mock backend C0 = g^t is t itself
    assert a.cl1 == B.gt_exp(B.pair(mpk.g1, mpk.h[0]), t)


def test_randomized_roundtrip_iff_compatible():
    rng = random.Random(9)
    mpk, msk = setup(5, B, rng)
    hits = misses = 0
    for _ in range(1000):
        kp, cp = rand_pattern(rng, 5), rand_pattern(rng, 5)
        key = key_der(mpk, msk, kp, rng)
        m = B.random_gt(rng)
        ct = encrypt(mpk, cp, m, rng)
        assert compatible(kp, cp) == oracle_compatible(kp, cp)
        if oracle_compatible(kp, cp):
            assert decrypt(mpk, key, ct) == m
            hits += 1
        else:
            with pytest.raises(CannotDecrypt):
                decrypt(mpk, key, ct)
            # and the raw equation does not leak m either
            assert decrypt_unchecked(mpk, key, ct) != m
            misses += 1
    assert hits > 100 and misses > 100


def test_expired_key_refused():
    rng = random.Random(10)
    mpk, msk = setup(1, B, rng)
    key = key_der(mpk, msk, Pattern.of("a"), rng, expiry=100)
    ct = encrypt(mpk, Pattern.of("a"), 5, rng)
    assert decrypt(mpk, key, ct, now=100) == 5
    with pytest.raises(CannotDecrypt):
        decrypt(mpk, key, ct, now=101)
    child = key_der(mpk, key, Pattern.of("a"), rng, expiry=500)
    assert child.expiry == 100


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([b"a", b"bb", b"", None]), min_size=1, max_size=8), st.integers(0, 2**32))
def test_serialization_roundtrip(slots, seed):
    rng = random.Random(seed)
    mpk, msk = setup(len(slots), B, rng)
    p = Pattern(tuple(slots))
    key = key_der(mpk, msk, p, rng, expiry=seed)
    ct = encrypt(mpk, p, B.random_gt(rng), rng)
    for obj in (key, ct, msk):
        assert deserialize(serialize(obj, mpk), mpk) == obj
        assert dearmor(armor(obj, mpk), mpk) == obj
    assert deserialize(serialize(mpk)) == mpk


def test_serialization_layout_header():
    mpk, msk = setup(3, B, random.Random(0))
    raw = serialize(key_der(mpk, msk, Pattern.of("a", "*", "c"), random.Random(1)), mpk)
    assert raw[:2] == (0x0001).to_bytes(2, "little")
    assert raw[3:5] == (3).to_bytes(2, "little")
    with pytest.raises(SerializationError):
        deserialize(raw[:-1], mpk)
    with pytest.raises(SerializationError):
        deserialize(raw + b"\0", mpk)


def test_hybrid_roundtrip_and_tamper():
    rng = random.Random(11)
    mpk, msk = setup(3, B, rng)
    key = key_der(mpk, msk, Pattern.of("a", "b", "c"), rng)
    payload = bytes(rng.getrandbits(8) for _ in range(1024))
    ct = hybrid_encrypt(mpk, Pattern.of("a", "*", "c"), payload, rng)
    assert hybrid_decrypt(mpk, key, ct) == payload
    raw = bytearray(ct.to_bytes(mpk))
    assert HybridCiphertext.from_bytes(bytes(raw), mpk) == ct
    raw[-1] ^= 1
    with pytest.raises(AuthenticationFailure):
        hybrid_decrypt(mpk, key, HybridCiphertext.from_bytes(bytes(raw), mpk))
    empty = hybrid_encrypt(mpk, Pattern.of("a", "b", "c"), b"")
    assert hybrid_decrypt(mpk, key, empty) == b""
    with pytest.raises(CannotDecrypt):
        hybrid_decrypt(mpk, key, hybrid_encrypt(mpk, Pattern.of("z", "*", "*"), b"x"))
