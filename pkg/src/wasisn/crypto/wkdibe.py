"""Wildcarded key-derivation identity-based encryption (BBG style).

Slot hashes are instantiated as H_i(x) = h_i^{ĥ(i‖x)}, which lets a key
carry b_i = h_i^r for each wildcard slot and later fix that slot by folding
b_i^{ĥ} into k0.

Slots are numbered 1..L; ``h[0]`` is the h_0 that carries the master secret.
"""

import struct
from dataclasses import dataclass, field
from typing import Optional

from ..errors import (
    BadPattern,
    CannotDecrypt,
    MissingFreeSlot,
    NotDelegable,
    SerializationError,
)
from .groups import MockBackend, backend_for_tag


class _Wildcard:
    __slots__ = ()

    def __repr__(self):
        return "*"

    def __reduce__(self):
        return "WILDCARD"


WILDCARD = _Wildcard()
#: fixed value used to pad logical patterns that are shorter than L
EMPTY = b""


def _slot(v):
    if v is WILDCARD or v is None or v == "*":
        return None
    if isinstance(v, str):
        return v.encode("utf-8")
    if isinstance(v, (bytes, bytearray)):
        return bytes(v)
    raise BadPattern(f"pattern slot must be bytes, str or WILDCARD, not {type(v).__name__}")


@dataclass(frozen=True)
class Pattern:
    """Fixed-length slot sequence; ``None`` entries in ``slots`` are wildcards."""

    slots: tuple

    @classmethod
    def of(cls, *values, length=None, pad=EMPTY):
        slots = [_slot(v) for v in values]
        if length is not None:
            if len(slots) > length:
                raise BadPattern(f"{len(slots)} slots exceed L={length}")
            slots += [_slot(pad if pad is not None else WILDCARD)] * (length - len(slots))
        return cls(tuple(slots))

    def __len__(self):
        return len(self.slots)

    def is_wildcard(self, i):
        """``i`` is 1-based."""
        return self.slots[i - 1] is None

    def value(self, i):
        return self.slots[i - 1]

    def fixed(self):
        return {i: v for i, v in enumerate(self.slots, 1) if v is not None}

    def wildcards(self):
        return [i for i, v in enumerate(self.slots, 1) if v is None]

    def __str__(self):
        parts = ["*" if v is None else v.decode("utf-8", "backslashreplace") for v in self.slots]
        return "(" + ", ".join(parts) + ")"


def _same_length(a, b):
    if len(a) != len(b):
        raise BadPattern(f"pattern lengths differ: {len(a)} vs {len(b)}")


def matches(key_pattern, target):
    """Directional: every key slot is a wildcard or equals the target's slot."""
    _same_length(key_pattern, target)
    return all(k is None or k == t for k, t in zip(key_pattern.slots, target.slots))


def compatible(a, b):
    """Symmetric: no slot fixed on both sides with different values."""
    _same_length(a, b)
    return all(x is None or y is None or x == y for x, y in zip(a.slots, b.slots))


@dataclass(frozen=True)
class PublicParams:
    backend: object = field(repr=False)
    L: int
    g: object
    g1: object
    h: tuple  # h_0 .. h_L

    def slot_hash(self, i, value):
        return self.backend.hash_to_scalar(struct.pack(">H", i) + value)


@dataclass(frozen=True)
class MasterSecret:
    h0_alpha: object


@dataclass(frozen=True)
class PatternKey:
    pattern: Pattern
    k0: object
    k1: object
    free: dict  # slot index -> h_i^r, exactly the wildcard slots
    expiry: Optional[int] = None


@dataclass(frozen=True)
class WkdCiphertext:
    pattern: Pattern
    c0: object
    c: tuple  # C_1 .. C_L
    cl1: object


def setup(L, backend=None, rng=None):
    if L < 1:
        raise BadPattern("L must be at least 1")
    backend = backend or MockBackend()
    g = backend.generator()
    alpha = backend.random_scalar(rng)
    h = tuple(backend.random_g(rng) for _ in range(L + 1))
    mpk = PublicParams(backend, L, g, backend.exp(g, alpha), h)
    return mpk, MasterSecret(backend.exp(h[0], alpha))


def _check_length(mpk, pattern):
    if len(pattern) != mpk.L:
        raise BadPattern(f"pattern has {len(pattern)} slots, parameters use L={mpk.L}")


def _rerandomize(mpk, pattern, k0, k1, free, rng):
    B = mpk.backend
    r = B.random_scalar(rng)
    for i, v in pattern.fixed().items():
        k0 = B.mul(k0, B.exp(mpk.h[i], (mpk.slot_hash(i, v) * r) % B.order))
    k1 = B.mul(k1, B.exp(mpk.g, r))
    free = {i: B.mul(b, B.exp(mpk.h[i], r)) for i, b in free.items()}
    return k0, k1, free


def key_der(mpk, parent, target, rng=None, expiry=None):
    """Derive a key for ``target`` from the master secret or from a parent key."""
    _check_length(mpk, target)
    B = mpk.backend
    if isinstance(parent, MasterSecret):
        k0, k1 = parent.h0_alpha, B.identity()
        free = {i: B.identity() for i in target.wildcards()}
        parent_expiry = None
    else:
        if not matches(parent.pattern, target):
            raise NotDelegable(f"{parent.pattern} cannot be narrowed to {target}")
        k0, k1 = parent.k0, parent.k1
        for j in parent.pattern.wildcards():
            if target.is_wildcard(j):
                continue
            b = parent.free.get(j)
            if b is None:
                raise MissingFreeSlot(f"parent key has no element for slot {j}")
            k0 = B.mul(k0, B.exp(b, mpk.slot_hash(j, target.value(j))))
        free = {}
        for i in target.wildcards():
            if i not in parent.free:
                raise MissingFreeSlot(f"parent key has no element for slot {i}")
            free[i] = parent.free[i]
        parent_expiry = parent.expiry
    k0, k1, free = _rerandomize(mpk, target, k0, k1, free, rng)
    if parent_expiry is not None:
        expiry = parent_expiry if expiry is None else min(expiry, parent_expiry)
    return PatternKey(target, k0, k1, free, expiry)


def key_is_consistent(mpk, key):
    """ê(k1, h_i) = ê(g, b_i) for every free slot, and free slots = wildcards."""
    B = mpk.backend
    if set(key.free) != set(key.pattern.wildcards()):
        return False
    return all(
        B.pair(key.k1, mpk.h[i]) == B.pair(mpk.g, b) for i, b in key.free.items()
    )


def encrypt(mpk, pattern, m, rng=None):
    _check_length(mpk, pattern)
    B = mpk.backend
    t = B.random_scalar(rng)
    c = []
    for i in range(1, mpk.L + 1):
        if pattern.is_wildcard(i):
            c.append(B.exp(mpk.h[i], t))
        else:
            c.append(B.exp(mpk.h[i], (mpk.slot_hash(i, pattern.value(i)) * t) % B.order))
    blind = B.gt_exp(B.pair(mpk.g1, mpk.h[0]), t)
    return WkdCiphertext(pattern, B.exp(mpk.g, t), tuple(c), B.gt_mul(m, blind))


def decrypt_unchecked(mpk, key, ct):
    """Run the decryption equation without the compatibility guard.

    On incompatible inputs the result is garbage, which is what the
    non-decryption property tests look at.
    """
    B = mpk.backend
    k0 = key.k0
    acc = ct.cl1
    for i in range(1, mpk.L + 1):
        kv, cv = key.pattern.value(i), ct.pattern.value(i)
        if kv is None and cv is None:
            continue
        ci = ct.c[i - 1]
        if kv is None:
            # key wildcard, ciphertext fixed: fix the slot in the key first
            k0 = B.mul(k0, B.exp(key.free[i], mpk.slot_hash(i, cv)))
        elif cv is None:
            ci = B.exp(ci, mpk.slot_hash(i, kv))
        acc = B.gt_mul(acc, B.pair(key.k1, ci))
    return B.gt_mul(acc, B.gt_inv(B.pair(ct.c0, k0)))


def decrypt(mpk, key, ct, now=None):
    _check_length(mpk, ct.pattern)
    if not compatible(key.pattern, ct.pattern):
        raise CannotDecrypt(f"key {key.pattern} is incompatible with ciphertext {ct.pattern}")
    if now is not None and key.expiry is not None and now > key.expiry:
        raise CannotDecrypt("key expired")
    return decrypt_unchecked(mpk, key, ct)


# serialization: u16 backend tag, u8 kind, u16 L, then kind-specific fields.
# Every variable-length item is prefixed by a little-endian u16 length.

KIND_PARAMS, KIND_MSK, KIND_KEY, KIND_CT = 1, 2, 3, 4
_WILD = 0xFFFF


class _Writer:
    def __init__(self):
        self.parts = []

    def u16(self, v):
        self.parts.append(struct.pack("<H", v))

    def u8(self, v):
        self.parts.append(struct.pack("<B", v))

    def blob(self, b):
        if len(b) >= _WILD:
            raise SerializationError("item too long")
        self.u16(len(b))
        self.parts.append(bytes(b))

    def getvalue(self):
        return b"".join(self.parts)


class _Reader:
    def __init__(self, raw):
        self.raw = bytes(raw)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise SerializationError("truncated input")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self):
        return struct.unpack("<H", self.take(2))[0]

    def u8(self):
        return self.take(1)[0]

    def blob(self):
        return self.take(self.u16())

    def done(self):
        if self.pos != len(self.raw):
            raise SerializationError(f"{len(self.raw) - self.pos} trailing bytes")


def _write_pattern(w, pattern):
    for v in pattern.slots:
        if v is None:
            w.u16(_WILD)
        else:
            w.blob(v)


def _read_pattern(r, L):
    slots = []
    for _ in range(L):
        n = r.u16()
        slots.append(None if n == _WILD else r.take(n))
    return Pattern(tuple(slots))


def _header(w, backend, kind, L):
    w.u16(backend.tag)
    w.u8(kind)
    w.u16(L)


def serialize(obj, mpk=None):
    """Serialize params, msk, key or ciphertext.  ``mpk`` supplies the backend."""
    w = _Writer()
    if isinstance(obj, PublicParams):
        B = obj.backend
        _header(w, B, KIND_PARAMS, obj.L)
        for e in (obj.g, obj.g1, *obj.h):
            w.blob(B.serialize_g(e))
        return w.getvalue()
    if mpk is None:
        raise SerializationError("public parameters are needed to serialize this object")
    B = mpk.backend
    if isinstance(obj, MasterSecret):
        _header(w, B, KIND_MSK, mpk.L)
        w.blob(B.serialize_g(obj.h0_alpha))
    elif isinstance(obj, PatternKey):
        _header(w, B, KIND_KEY, len(obj.pattern))
        _write_pattern(w, obj.pattern)
        w.blob(B.serialize_g(obj.k0))
        w.blob(B.serialize_g(obj.k1))
        w.u16(len(obj.free))
        for i in sorted(obj.free):
            w.u16(i)
            w.blob(B.serialize_g(obj.free[i]))
        w.blob(b"" if obj.expiry is None else struct.pack("<q", obj.expiry))
    elif isinstance(obj, WkdCiphertext):
        _header(w, B, KIND_CT, len(obj.pattern))
        _write_pattern(w, obj.pattern)
        w.blob(B.serialize_g(obj.c0))
        for e in obj.c:
            w.blob(B.serialize_g(e))
        w.blob(B.serialize_gt(obj.cl1))
    else:
        raise SerializationError(f"cannot serialize {type(obj).__name__}")
    return w.getvalue()


def deserialize(raw, mpk=None):
    r = _Reader(raw)
    tag, kind, L = r.u16(), r.u8(), r.u16()
    if mpk is not None:
        if tag != mpk.backend.tag:
            raise SerializationError("backend tag does not match the parameters")
        B = mpk.backend
    else:
        B = backend_for_tag(tag)
    if kind == KIND_PARAMS:
        elems = [B.deserialize_g(r.blob()) for _ in range(L + 3)]
        r.done()
        return PublicParams(B, L, elems[0], elems[1], tuple(elems[2:]))
    if mpk is not None and L != mpk.L:
        raise SerializationError(f"object has L={L}, parameters have L={mpk.L}")
    if kind == KIND_MSK:
        out = MasterSecret(B.deserialize_g(r.blob()))
    elif kind == KIND_KEY:
        pattern = _read_pattern(r, L)
        k0 = B.deserialize_g(r.blob())
        k1 = B.deserialize_g(r.blob())
        free = {}
        for _ in range(r.u16()):
            i = r.u16()
            free[i] = B.deserialize_g(r.blob())
        if set(free) != set(pattern.wildcards()):
            raise SerializationError("free-slot elements do not match the pattern's wildcards")
        exp = r.blob()
        if len(exp) not in (0, 8):
            raise SerializationError("bad expiry field")
        out = PatternKey(pattern, k0, k1, free, struct.unpack("<q", exp)[0] if exp else None)
    elif kind == KIND_CT:
        pattern = _read_pattern(r, L)
        c0 = B.deserialize_g(r.blob())
        c = tuple(B.deserialize_g(r.blob()) for _ in range(L))
        out = WkdCiphertext(pattern, c0, c, B.deserialize_gt(r.blob()))
    else:
        raise SerializationError(f"unknown object kind {kind}")
    r.done()
    return out


_LABELS = {PublicParams: "WKD-PARAMS", MasterSecret: "WKD-MSK", PatternKey: "WKD-KEY",
           WkdCiphertext: "WKD-CT"}


def armor(obj, mpk=None):
    return f"{_LABELS[type(obj)]}:{serialize(obj, mpk).hex()}"


def dearmor(text, mpk=None):
    label, sep, body = text.strip().partition(":")
    if not sep or label not in _LABELS.values():
        raise SerializationError("not an armored WKD-IBE object")
    try:
        raw = bytes.fromhex(body)
    except ValueError as exc:
        raise SerializationError(f"bad hex armor: {exc}") from None
    obj = deserialize(raw, mpk)
    if _LABELS[type(obj)] != label:
        raise SerializationError("armor label does not match the contents")
    return obj
