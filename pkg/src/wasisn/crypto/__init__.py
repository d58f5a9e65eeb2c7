from .groups import BilinearGroupBackend, MockBackend
from .hybrid import HybridCiphertext, hybrid_decrypt, hybrid_encrypt
from .wkdibe import (
    EMPTY,
    WILDCARD,
    MasterSecret,
    Pattern,
    PatternKey,
    PublicParams,
    WkdCiphertext,
    armor,
    compatible,
    decrypt,
    dearmor,
    deserialize,
    encrypt,
    key_der,
    key_is_consistent,
    matches,
    serialize,
    setup,
)

__all__ = [
    "EMPTY", "WILDCARD", "BilinearGroupBackend", "HybridCiphertext", "MasterSecret",
    "MockBackend", "Pattern", "PatternKey", "PublicParams", "WkdCiphertext", "armor",
    "compatible", "dearmor", "decrypt", "deserialize", "encrypt", "hybrid_decrypt",
    "hybrid_encrypt", "key_der", "key_is_consistent", "matches", "serialize", "setup",
]
