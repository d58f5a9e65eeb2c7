"""Bilinear group backends.

WKD-IBE code only talks to :class:`BilinearGroupBackend`.  The mock backend
represents every element by its discrete logarithm modulo a prime, so the
pairing is plain multiplication.  It is exact and fast, which makes it good
for property tests, and it offers no security whatsoever.
"""

import hashlib
import secrets
from abc import ABC, abstractmethod

from ..errors import SerializationError

MERSENNE_61 = (1 << 61) - 1


class BilinearGroupBackend(ABC):
    """Symmetric pairing ê: G × G → GT over groups of prime order."""

    #: two-byte identifier written into serialized objects
    tag: int
    name: str

    @property
    @abstractmethod
    def order(self): ...

    @abstractmethod
    def generator(self): ...

    @abstractmethod
    def mul(self, a, b): ...

    @abstractmethod
    def exp(self, a, k): ...

    @abstractmethod
    def identity(self): ...

    @abstractmethod
    def pair(self, a, b): ...

    @abstractmethod
    def gt_mul(self, a, b): ...

    @abstractmethod
    def gt_inv(self, a): ...

    @abstractmethod
    def gt_exp(self, a, k): ...

    @abstractmethod
    def gt_identity(self): ...

    @abstractmethod
    def serialize_g(self, a) -> bytes: ...

    @abstractmethod
    def deserialize_g(self, raw: bytes): ...

    @abstractmethod
    def serialize_gt(self, a) -> bytes: ...

    @abstractmethod
    def deserialize_gt(self, raw: bytes): ...

    def random_scalar(self, rng=None):
        rng = rng or secrets.SystemRandom()
        return rng.randrange(1, self.order)

    def hash_to_scalar(self, data: bytes):
        # wide digest then reduce, so the bias is negligible for any order < 2^256
        digest = hashlib.sha512(b"wasisn/h2s" + data).digest()
        return int.from_bytes(digest, "big") % self.order

    def random_g(self, rng=None):
        return self.exp(self.generator(), self.random_scalar(rng))

    def random_gt(self, rng=None):
        base = self.pair(self.generator(), self.generator())
        return self.gt_exp(base, self.random_scalar(rng))


class MockBackend(BilinearGroupBackend):
    """Discrete-log model: g^x is stored as x mod p and ê(g^a, g^b) as ab mod p.

    Insecure by construction.
    """

    tag = 0x0001
    name = "mock"

    def __init__(self, p=MERSENNE_61):
        self.p = p
        self.width = (p.bit_length() + 7) // 8

    @property
    def order(self):
        return self.p

    def generator(self):
        return 1

    def mul(self, a, b):
        return (a + b) % self.p

    def exp(self, a, k):
        return (a * k) % self.p

    def identity(self):
        return 0

    def pair(self, a, b):
        return (a * b) % self.p

    gt_mul = mul
    gt_exp = exp
    gt_identity = identity

    def gt_inv(self, a):
        return (-a) % self.p

    def _ser(self, a):
        return int(a).to_bytes(self.width, "little")

    def _de(self, raw):
        if len(raw) != self.width:
            raise SerializationError(f"mock element must be {self.width} bytes, got {len(raw)}")
        v = int.from_bytes(raw, "little")
        if v >= self.p:
            raise SerializationError("mock element out of range")
        return v

    serialize_g = serialize_gt = _ser
    deserialize_g = deserialize_gt = _de

    def __eq__(self, other):
        return isinstance(other, MockBackend) and other.p == self.p

    def __hash__(self):
        return hash((MockBackend, self.p))

    def __repr__(self):
        return f"MockBackend(p={self.p})"


BACKENDS = {MockBackend.tag: MockBackend}


def backend_for_tag(tag):
    try:
        return BACKENDS[tag]()
    except KeyError:
        raise SerializationError(f"unknown group backend tag 0x{tag:04x}") from None
