"""KEM/DEM wrapper: WKD-IBE encapsulates a random target-group element,
HKDF turns it into an AES-256-GCM key that seals the actual payload."""

import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..errors import AuthenticationFailure, SerializationError
from . import wkdibe

NONCE_LEN = 12
_INFO = b"wasisn/hybrid/v1"


@dataclass(frozen=True)
class HybridCiphertext:
    kem: wkdibe.WkdCiphertext
    nonce: bytes
    sealed: bytes

    def to_bytes(self, mpk):
        head = wkdibe.serialize(self.kem, mpk)
        return struct.pack("<H", len(head)) + head + self.nonce + struct.pack("<I", len(self.sealed)) + self.sealed

    @classmethod
    def from_bytes(cls, raw, mpk):
        raw = bytes(raw)
        try:
            (n,) = struct.unpack_from("<H", raw, 0)
            kem = wkdibe.deserialize(raw[2:2 + n], mpk)
            pos = 2 + n
            nonce = raw[pos:pos + NONCE_LEN]
            (m,) = struct.unpack_from("<I", raw, pos + NONCE_LEN)
            sealed = raw[pos + NONCE_LEN + 4:]
        except struct.error as exc:
            raise SerializationError(f"truncated hybrid ciphertext: {exc}") from None
        if len(nonce) != NONCE_LEN or len(sealed) != m:
            raise SerializationError("hybrid ciphertext length mismatch")
        return cls(kem, nonce, sealed)


def _derive(mpk, element):
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=_INFO).derive(
        mpk.backend.serialize_gt(element))


def _aad(mpk, kem):
    return wkdibe.serialize(kem, mpk)


def hybrid_encrypt(mpk, pattern, payload, rng=None, aad=b""):
    element = mpk.backend.random_gt(rng)
    kem = wkdibe.encrypt(mpk, pattern, element, rng)
    nonce = rng.randbytes(NONCE_LEN) if rng is not None else os.urandom(NONCE_LEN)
    sealed = AESGCM(_derive(mpk, element)).encrypt(nonce, bytes(payload), _aad(mpk, kem) + aad)
    return HybridCiphertext(kem, nonce, sealed)


def hybrid_decrypt(mpk, key, ct, now=None, aad=b""):
    element = wkdibe.decrypt(mpk, key, ct.kem, now=now)
    try:
        return AESGCM(_derive(mpk, element)).decrypt(ct.nonce, ct.sealed, _aad(mpk, ct.kem) + aad)
    except InvalidTag:
        raise AuthenticationFailure("payload authentication failed") from None
