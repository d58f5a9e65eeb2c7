"""Local stand-in for the external key authority (PKG).

It issues an Ed25519 signing pair and an X25519 sealing pair per identity
and keeps the public halves in a registry file.  Sealing is an
ephemeral-static X25519 box: HKDF-SHA256 over the shared secret, then
AES-256-GCM.
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..config import load_structured
from ..errors import BadSignature, UnknownAuthor, UnsealFailure

_RAW = dict(encoding=serialization.Encoding.Raw, format=serialization.PublicFormat.Raw)
_RAW_PRIV = dict(
    encoding=serialization.Encoding.Raw,
    format=serialization.PrivateFormat.Raw,
    encryption_algorithm=serialization.NoEncryption(),
)
_SEAL_INFO = b"wasisn/seal/v1"


def _pub_bytes(key):
    return key.public_bytes(**_RAW)


def seal(recipient_public: bytes, plaintext: bytes, aad: bytes = b"") -> bytes:
    eph = X25519PrivateKey.generate()
    eph_pub = _pub_bytes(eph.public_key())
    shared = eph.exchange(X25519PublicKey.from_public_bytes(bytes(recipient_public)))
    key = HKDF(hashes.SHA256(), 32, salt=eph_pub + bytes(recipient_public), info=_SEAL_INFO).derive(shared)
    nonce = os.urandom(12)
    return eph_pub + nonce + AESGCM(key).encrypt(nonce, bytes(plaintext), aad)


def unseal(private: X25519PrivateKey, blob: bytes, aad: bytes = b"") -> bytes:
    blob = bytes(blob)
    if len(blob) < 32 + 12 + 16:
        raise UnsealFailure("sealed box too short")
    eph_pub, nonce, body = blob[:32], blob[32:44], blob[44:]
    try:
        shared = private.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    except ValueError as exc:
        raise UnsealFailure(f"bad ephemeral key: {exc}") from None
    own = _pub_bytes(private.public_key())
    key = HKDF(hashes.SHA256(), 32, salt=eph_pub + own, info=_SEAL_INFO).derive(shared)
    try:
        return AESGCM(key).decrypt(nonce, body, aad)
    except InvalidTag:
        raise UnsealFailure("sealed box failed authentication") from None


@dataclass(frozen=True)
class PublicIdentity:
    name: str
    signing: bytes
    encryption: bytes

    def verify(self, signature, message):
        try:
            Ed25519PublicKey.from_public_bytes(self.signing).verify(bytes(signature), bytes(message))
        except (InvalidSignature, ValueError):
            raise BadSignature(f"signature does not verify for {self.name}") from None

    def seal(self, plaintext, aad=b""):
        return seal(self.encryption, plaintext, aad)

    @property
    def encryption_hex(self):
        return self.encryption.hex()


@dataclass(frozen=True)
class Identity:
    """Private key material for one identity."""

    name: str
    signing_key: Ed25519PrivateKey
    encryption_key: X25519PrivateKey

    @classmethod
    def generate(cls, name):
        return cls(name, Ed25519PrivateKey.generate(), X25519PrivateKey.generate())

    @property
    def public(self):
        return PublicIdentity(
            self.name, _pub_bytes(self.signing_key.public_key()),
            _pub_bytes(self.encryption_key.public_key()))

    def sign(self, message):
        return self.signing_key.sign(bytes(message))

    def unseal(self, blob, aad=b""):
        return unseal(self.encryption_key, blob, aad)

    def to_dict(self):
        return {
            "name": self.name,
            "signing_private": self.signing_key.private_bytes(**_RAW_PRIV).hex(),
            "encryption_private": self.encryption_key.private_bytes(**_RAW_PRIV).hex(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["name"],
            Ed25519PrivateKey.from_private_bytes(bytes.fromhex(d["signing_private"])),
            X25519PrivateKey.from_private_bytes(bytes.fromhex(d["encryption_private"])),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        os.chmod(path, 0o600)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


class PkgRegistry:
    """Name -> public keys, optionally persisted as JSON or YAML."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.entries = {}
        if self.path and self.path.exists():
            data = load_structured(self.path) or {}
            for name, keys in data.get("identities", {}).items():
                self.entries[name] = PublicIdentity(
                    name, bytes.fromhex(keys["signing"]), bytes.fromhex(keys["encryption"]))

    def issue(self, name):
        ident = Identity.generate(name)
        self.register(ident.public)
        return ident

    def register(self, public):
        self.entries[public.name] = public
        self.save()

    def lookup(self, name):
        try:
            return self.entries[str(name)]
        except KeyError:
            raise UnknownAuthor(f"{name} is not registered with the key authority") from None

    def __contains__(self, name):
        return str(name) in self.entries

    def save(self):
        if self.path is None:
            return
        data = {"identities": {
            n: {"signing": p.signing.hex(), "encryption": p.encryption.hex()}
            for n, p in sorted(self.entries.items())
        }}
        self.path.write_text(json.dumps(data, indent=2) + "\n")


def device_identity_name(device_id):
    return f"/devices/{device_id}"
