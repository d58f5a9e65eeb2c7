"""Requester-side helpers for the request / issue / ret exchange."""

import logging

from ..clock import NS_PER_S
from ..crypto.hybrid import HybridCiphertext, hybrid_decrypt
from ..errors import (
    AccessError,
    CannotDecrypt,
    Timeout,
    UnsealFailure,
)
from .device import Decision, correlation_id
from .framing import decode_list, decode_return
from .hierarchy import as_resource, as_uii, request_topics
from .pkg import seal
from .requests import AccessRequest

logger = logging.getLogger(__name__)


def open_frame(mpk, key, resource, frame, now=None):
    """Decrypt the one element of a ciphertext list this key can open."""
    aad = str(as_resource(resource)).encode()
    for raw in decode_list(frame):
        ct = HybridCiphertext.from_bytes(raw, mpk)
        try:
            return hybrid_decrypt(mpk, key, ct, now=now, aad=aad)
        except CannotDecrypt:
            continue
    raise CannotDecrypt("no ciphertext in the list matches this key")


class Requester:
    def __init__(self, client, identity, uii, device_public):
        self.client = client
        self.identity = identity
        self.uii = as_uii(uii)
        self.device_public = device_public
        self.decisions = {}
        self.keys = {}  # resource -> Decision with a key
        self._topic_ids = {}
        self._issue_subscribed = set()

    def _topic_id(self, topic):
        tid = self._topic_ids.get(topic)
        if tid is None:
            tid = self._topic_ids[topic] = self.client.register(topic)
        return tid

    def build_request(self, verb="read", params=()):
        return AccessRequest(verb, self.uii, self.identity.public.encryption_hex, tuple(params))

    def submit_request(self, resource, verb="read", params=()):
        """Publish a sealed request; returns its correlation id."""
        request = self.build_request(verb, params)  # validates before anything is sent
        topics = request_topics(resource)
        if topics["issue"] not in self._issue_subscribed:
            self.client.subscribe(topics["issue"], 1)
            self._issue_subscribed.add(topics["issue"])
        sealed = seal(self.device_public.encryption, request.format().encode(),
                      aad=topics["request"].encode())
        self.client.publish(self._topic_id(topics["request"]), 1, sealed)
        return correlation_id(sealed)

    def _drain(self):
        for topic in self._issue_subscribed:
            while self.client.has_message(topic):
                raw = self.client.get_message(topic)
                try:
                    decision = Decision.from_json(self.identity.unseal(raw, aad=topic.encode()))
                except (UnsealFailure, ValueError, KeyError, AccessError) as exc:
                    logger.debug("requester %s: skipping issue message: %s", self.uii, exc)
                    continue
                self.decisions[decision.correlation] = decision
                if decision.granted:
                    self.keys[str(decision.resource)] = decision

    def await_decision(self, correlation, timeout_s=60):
        net = self.client.net
        deadline = net.now() + int(timeout_s * NS_PER_S)
        while True:
            self._drain()
            if correlation in self.decisions:
                return self.decisions[correlation]
            if net.now() >= deadline:
                raise Timeout(f"no decision for request {correlation}")
            net.run_once(deadline=deadline)

    def request(self, resource, verb="read", params=(), timeout_s=60):
        return self.await_decision(self.submit_request(resource, verb, params), timeout_s)

    def open_reading(self, resource, frame, now=None):
        d = self.keys.get(str(as_resource(resource)))
        if d is None:
            raise CannotDecrypt(f"no key held for {resource}")
        return open_frame(d.params, d.key, resource, frame, now=now)

    def open_return(self, resource, frame, now=None):
        return decode_return(self.open_reading(resource, frame, now=now))
