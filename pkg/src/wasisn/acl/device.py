"""Device-side key authority: request handling, grants and sealed readings."""

import fnmatch
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from ..clock import NS_PER_S
from ..crypto import wkdibe
from ..crypto.hybrid import hybrid_encrypt
from ..errors import AccessError, ParseError, PolicyDeny, UnknownLeaf
from .framing import encode_list, encode_return
from .hierarchy import (
    EntityUII,
    as_resource,
    as_uii,
    build_encryption_pattern,
    device_topic_filter,
    key_pattern,
    parse_topic,
    request_topics,
)
from .pkg import seal
from .requests import AccessRequest
from .revocation import RevocationTree

logger = logging.getLogger(__name__)


def correlation_id(sealed_request):
    return hashlib.sha256(bytes(sealed_request)).hexdigest()[:16]


@dataclass(frozen=True)
class Grant:
    requester: EntityUII
    resource: object
    verbs: frozenset
    issued_key: bytes
    expiry: int
    correlation: str = ""


@dataclass
class Decision:
    granted: bool
    correlation: str
    requester: Optional[EntityUII] = None
    resource: object = None
    verbs: tuple = ()
    reason: str = ""
    key: Optional[wkdibe.PatternKey] = None
    expiry: Optional[int] = None
    params: Optional[wkdibe.PublicParams] = None

    def to_json(self, mpk):
        d = {
            "correlation": self.correlation,
            "status": "grant" if self.granted else "deny",
            "requester": str(self.requester) if self.requester else None,
            "resource": str(self.resource) if self.resource else None,
            "verbs": sorted(self.verbs),
            "reason": self.reason,
            "expiry": self.expiry,
        }
        if self.granted:
            d["key"] = wkdibe.armor(self.key, mpk)
            d["params"] = wkdibe.armor(mpk)
        return json.dumps(d, sort_keys=True).encode()

    @classmethod
    def from_json(cls, raw):
        d = json.loads(raw)
        mpk = wkdibe.dearmor(d["params"]) if d.get("params") else None
        return cls(
            granted=d["status"] == "grant",
            correlation=d["correlation"],
            requester=as_uii(d["requester"]) if d.get("requester") else None,
            resource=as_resource(d["resource"]) if d.get("resource") else None,
            verbs=tuple(d.get("verbs", ())),
            reason=d.get("reason", ""),
            key=wkdibe.dearmor(d["key"], mpk) if d.get("key") else None,
            expiry=d.get("expiry"),
            params=mpk,
        )


class Policy:
    """Allow-list of (UII glob, resource glob, verbs)."""

    def __init__(self, rules=()):
        self.rules = list(rules)

    def verbs_for(self, uii, resource):
        uii, resource = as_uii(uii), as_resource(resource)
        verbs = set()
        for rule in self.rules:
            if fnmatch.fnmatchcase(uii.canonical, rule.uii) and fnmatch.fnmatchcase(str(resource), rule.resource):
                verbs.update(rule.verbs)
        return verbs

    def allows(self, uii, resource, verb):
        return verb in self.verbs_for(uii, resource)


class DeviceAuthority:
    def __init__(self, device_id, identity, policy, clock, L=8, identity_slots=4,
                 grant_lifetime_s=86400, backend=None, rng=None):
        self.device_id = device_id
        self.identity = identity
        self.policy = policy if isinstance(policy, Policy) else Policy(policy)
        self.clock = clock
        self.L = L
        self.identity_slots = identity_slots
        self.grant_lifetime_ns = int(grant_lifetime_s * NS_PER_S)
        self.rng = rng
        self.mpk, self.msk = wkdibe.setup(L, backend, rng)
        self.trees = {}
        self.grants = {}
        self.decisions = []
        self.deployments = []
        self.outbox = []  # (topic, payload) when no client is attached
        self.client = None
        self._topic_ids = {}
        self._polling = False
        self._scheduled = False

    # network attachment

    def attach(self, client, auto=True):
        """Subscribe to every topic under this device and, with ``auto``,
        process requests as they arrive."""
        self.client = client
        client.subscribe(device_topic_filter(self.device_id), 1)
        if auto:
            client.on_message = self._on_message
        self.flush()

    def _on_message(self, msg):
        if not self._scheduled:
            self._scheduled = True
            self.client.net.call_later(0, self._scheduled_poll)

    def _scheduled_poll(self):
        self._scheduled = False
        self.poll()

    def poll(self):
        if self.client is None or self._polling:
            return 0
        self._polling = True
        handled = 0
        try:
            key = device_topic_filter(self.device_id)
            while self.client.has_message(key):
                msg = self.client.next_message(key)
                handled += self._dispatch(msg.topic_name, msg.payload)
        finally:
            self._polling = False
        return handled

    def _dispatch(self, topic, payload):
        if topic is None:
            return 0
        try:
            resource, kind = parse_topic(topic)
        except ParseError:
            parts = topic.strip("/").split("/")
            if len(parts) == 3 and parts[:2] == ["resources", self.device_id]:
                self.deployments.append((topic, payload))
                return 1
            return 0
        if kind != "request" or resource.device != self.device_id:
            return 0
        try:
            self.handle_request(topic, payload)
        except AccessError as exc:
            logger.warning("device %s: dropped request on %s: %s", self.device_id, topic, exc)
        return 1

    def _publish(self, topic, payload):
        if self.client is None:
            self.outbox.append((topic, payload))
            return
        tid = self._topic_ids.get(topic)
        if tid is None:
            tid = self._topic_ids[topic] = self.client.register(topic)
        self.client.publish(tid, 1, payload)

    def flush(self):
        pending, self.outbox = self.outbox, []
        for topic, payload in pending:
            self._publish(topic, payload)

    # requests

    def now(self):
        return self.clock() if callable(self.clock) else self.clock.now()

    def tree(self, resource):
        return self.trees.setdefault(str(as_resource(resource)), RevocationTree())

    def handle_request(self, topic, sealed):
        resource, kind = parse_topic(topic)
        if kind != "request":
            raise ParseError(f"{topic} is not a request topic")
        if resource.device != self.device_id:
            raise ParseError(f"{topic} is addressed to another device")
        plain = self.identity.unseal(sealed, aad=topic.encode())
        request = AccessRequest.parse(plain)
        corr = correlation_id(sealed)
        try:
            requester_pk = bytes.fromhex(request.public_key)
            if len(requester_pk) != 32:
                raise ValueError("expected 32 bytes")
        except ValueError as exc:
            raise ParseError(f"requester public key is not a hex X25519 key: {exc}") from None
        if request.verb == "config" and request.params != (resource.sensor, resource.name):
            raise ParseError("config parameters do not name the requested attribute")
        uii = request.requester
        if not self.policy.allows(uii, resource, request.verb):
            decision = Decision(False, corr, uii, resource, (request.verb,),
                                reason=str(PolicyDeny(f"{uii} may not {request.verb} {resource}")))
            logger.info("device %s: deny %s %s %s", self.device_id, uii, request.verb, resource)
        else:
            decision = self.grant(uii, resource, {request.verb}, corr)
        self.decisions.append(decision)
        issue = request_topics(resource)["issue"]
        self._publish(issue, seal(requester_pk, decision.to_json(self.mpk), aad=issue.encode()))
        return decision

    def grant(self, uii, resource, verbs, correlation=""):
        uii, resource = as_uii(uii), as_resource(resource)
        now = self.now()
        expiry = now + self.grant_lifetime_ns
        key = wkdibe.key_der(
            self.mpk, self.msk, key_pattern(uii, resource, self.L, self.identity_slots),
            self.rng, expiry=expiry)
        prior = self.grants.get((uii.canonical, str(resource)))
        if prior is not None and not self.tree(resource).is_revoked(uii):
            verbs = set(verbs) | prior.verbs
        self.tree(resource).add_leaf(uii, expiry)
        self.grants[(uii.canonical, str(resource))] = Grant(
            uii, resource, frozenset(verbs), wkdibe.serialize(key, self.mpk), expiry, correlation)
        return Decision(True, correlation, uii, resource, tuple(sorted(verbs)),
                        key=key, expiry=expiry, params=self.mpk)

    def permitted(self, uii, resource, verb):
        """True if an unrevoked, unexpired grant covers the call."""
        uii, resource = as_uii(uii), as_resource(resource)
        g = self.grants.get((uii.canonical, str(resource)))
        if g is None or verb not in g.verbs or self.now() > g.expiry:
            return False
        return not self.tree(resource).is_revoked(uii)

    # revocation

    def revoke(self, uii, resource=None):
        uii = as_uii(uii)
        hit = []
        for name, tree in self.trees.items():
            if resource is not None and name != str(as_resource(resource)):
                continue
            if uii in tree:
                tree.revoke(uii)
                hit.append(name)
        if not hit:
            raise UnknownLeaf(f"{uii} holds no grant to revoke")
        return hit

    def expire_keys(self):
        now = self.now()
        return {name: t.expire_keys(now) for name, t in self.trees.items()}

    # sealed publications

    def cover_patterns(self, resource):
        tree = self.tree(resource)
        tree.expire_keys(self.now())
        out = []
        for node in tree.cover():
            if tree.is_leaf(node):
                group = EntityUII(tuple(node[1:-2]), node[-2], node[-1])
            else:
                group = tuple(node)
            out.append(build_encryption_pattern(group, resource, self.L, self.identity_slots))
        return out

    def seal_for_grantees(self, resource, plaintext):
        resource = as_resource(resource)
        aad = str(resource).encode()
        cts = [hybrid_encrypt(self.mpk, p, plaintext, self.rng, aad=aad).to_bytes(self.mpk)
               for p in self.cover_patterns(resource)]
        return encode_list(cts) if cts else None

    def publish_reading(self, resource, value):
        frame = self.seal_for_grantees(resource, value)
        if frame is None:
            return False
        self._publish(str(as_resource(resource)), frame)
        return True

    def publish_return(self, resource, verb, status, value=b""):
        frame = self.seal_for_grantees(resource, encode_return(verb, status, value))
        if frame is None:
            return False
        self._publish(request_topics(resource)["ret"], frame)
        return True
