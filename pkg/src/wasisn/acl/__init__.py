from .device import Decision, DeviceAuthority, Grant, Policy, correlation_id
from .framing import decode_list, decode_return, encode_list, encode_return
from .hierarchy import (
    EntityUII,
    ResourceURI,
    build_encryption_pattern,
    device_topic_filter,
    key_pattern,
    parse_topic,
    request_topics,
)
from .modules import SignedModule, verify_module, wrap_module
from .pkg import Identity, PkgRegistry, PublicIdentity, device_identity_name, seal, unseal
from .requests import AccessRequest
from .requester import Requester, open_frame
from .revocation import RevocationTree

__all__ = [
    "AccessRequest", "Decision", "DeviceAuthority", "EntityUII", "Grant", "Identity",
    "PkgRegistry", "Policy", "PublicIdentity", "Requester", "ResourceURI", "RevocationTree",
    "SignedModule", "build_encryption_pattern", "correlation_id", "decode_list",
    "decode_return", "device_identity_name", "device_topic_filter", "encode_list",
    "encode_return", "key_pattern", "open_frame", "parse_topic", "request_topics", "seal",
    "unseal", "verify_module", "wrap_module",
]
