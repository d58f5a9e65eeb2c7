"""Signed, sealed module deployment.

The module is sealed under a fresh payload key.  That key is sealed to the
device, and the author signs the whole envelope (UII, sealed key, nonce,
sealed module).
"""

import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..errors import SerializationError, UnsealFailure
from .hierarchy import as_uii
from .pkg import seal

MAGIC = b"WSNM\x01"


@dataclass(frozen=True)
class SignedModule:
    author: str
    sealed_key: bytes
    nonce: bytes
    sealed_module: bytes
    signature: bytes

    def signed_part(self):
        a = self.author.encode("utf-8")
        return (MAGIC + struct.pack("<H", len(a)) + a
                + struct.pack("<H", len(self.sealed_key)) + self.sealed_key
                + self.nonce + struct.pack("<I", len(self.sealed_module)) + self.sealed_module)

    def to_bytes(self):
        return self.signed_part() + self.signature

    @classmethod
    def from_bytes(cls, raw):
        raw = bytes(raw)
        try:
            if raw[:len(MAGIC)] != MAGIC:
                raise SerializationError("not a signed module")
            pos = len(MAGIC)
            (n,) = struct.unpack_from("<H", raw, pos)
            author = raw[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (k,) = struct.unpack_from("<H", raw, pos)
            sealed_key = raw[pos + 2:pos + 2 + k]
            pos += 2 + k
            nonce = raw[pos:pos + 12]
            (m,) = struct.unpack_from("<I", raw, pos + 12)
            pos += 16
            sealed_module = raw[pos:pos + m]
            signature = raw[pos + m:]
        except (struct.error, UnicodeDecodeError) as exc:
            raise SerializationError(f"malformed signed module: {exc}") from None
        if len(nonce) != 12 or len(sealed_module) != m or len(signature) != 64:
            raise SerializationError("signed module length mismatch")
        return cls(author, sealed_key, nonce, sealed_module, signature)


def wrap_module(module_bytes, author, author_identity, device_public):
    author = str(as_uii(author))
    payload_key = AESGCM.generate_key(bit_length=256)
    nonce = os.urandom(12)
    sealed_module = AESGCM(payload_key).encrypt(nonce, bytes(module_bytes), author.encode())
    sealed_key = seal(device_public.encryption, payload_key, aad=author.encode())
    unsigned = SignedModule(author, sealed_key, nonce, sealed_module, b"")
    return SignedModule(author, sealed_key, nonce, sealed_module,
                        author_identity.sign(unsigned.signed_part()))


def verify_module(registry, device_identity, signed):
    """Return (module bytes, author UII) or raise UnknownAuthor / BadSignature / UnsealFailure."""
    if isinstance(signed, (bytes, bytearray)):
        signed = SignedModule.from_bytes(signed)
    author = registry.lookup(signed.author)
    author.verify(signed.signature, signed.signed_part())
    payload_key = device_identity.unseal(signed.sealed_key, aad=signed.author.encode())
    try:
        module = AESGCM(payload_key).decrypt(signed.nonce, signed.sealed_module, signed.author.encode())
    except (InvalidTag, ValueError):
        raise UnsealFailure("module payload failed authentication") from None
    return module, as_uii(signed.author)
