"""Combined MQTT-SN gateway and broker.

One reactor owns all session and registry state and handles one datagram
at a time.  Outbound traffic to each client goes through a per-session
outbox so that a REGISTER announcing a wildcard-matched topic always
precedes the first PUBLISH that uses its id.
"""

import enum
import json
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from ..clock import NS_PER_S
from ..errors import MalformedMessage, RegistryFull, UnknownTopicId, WildcardInName
from ..mqttsn import topics
from ..mqttsn.codec import (
    ConnAck,
    Connect,
    Disconnect,
    Flags,
    GwInfo,
    MsgType,
    PingReq,
    PingResp,
    PubAck,
    PubComp,
    PubRec,
    PubRel,
    Publish,
    RegAck,
    Register,
    ReturnCode,
    SearchGw,
    SubAck,
    Subscribe,
    TopicIdType,
    UnsubAck,
    Unsubscribe,
    Advertise,
    decode,
    encode,
)

logger = logging.getLogger(__name__)

DEFAULT_PORT = 47193
MAX_TOPIC_ID = 0xFFFF


class TopicRegistry:
    """Bijective topic name <-> 16-bit id map; ids are handed out from 1."""

    def __init__(self, limit=MAX_TOPIC_ID):
        self.limit = limit
        self.name_to_id = {}
        self.id_to_name = {}
        self.next_id = 1

    def assign(self, name):
        if topics.is_wildcard(name):
            raise WildcardInName(f"topic names cannot contain wildcards: {name!r}")
        if not name:
            raise WildcardInName("empty topic name")
        existing = self.name_to_id.get(name)
        if existing is not None:
            return existing
        if len(self.id_to_name) >= self.limit:
            raise RegistryFull(f"all {self.limit} topic ids in use")
        while self.next_id in self.id_to_name:
            self.next_id = self.next_id % self.limit + 1
        topic_id = self.next_id
        self.next_id = self.next_id % self.limit + 1
        self.name_to_id[name] = topic_id
        self.id_to_name[topic_id] = name
        return topic_id

    def name(self, topic_id):
        return self.id_to_name.get(topic_id)

    def id(self, name):
        return self.name_to_id.get(name)

    def __len__(self):
        return len(self.id_to_name)


class SessionMode(enum.Enum):
    ACTIVE = "Active"
    ASLEEP = "Asleep"
    LOST = "Lost"
    DISCONNECTED = "Disconnected"


@dataclass
class Subscription:
    topic_filter: Optional[str]
    topic_id: Optional[int]
    qos: int

    def selects(self, topic_id, name):
        if self.topic_id is not None:
            return self.topic_id == topic_id
        return topics.matches(self.topic_filter, name)


@dataclass
class OutPublish:
    topic_id: int
    topic_name: str
    qos: int
    payload: bytes
    dup: bool = False


@dataclass
class Outbound:
    message: object
    expect: MsgType
    msg_id: int
    deadline: int
    retries_left: int
    transmissions: int = 1
    item: Optional[OutPublish] = None


@dataclass
class GatewaySession:
    client_address: tuple
    client_id: str
    keep_alive_ns: int
    mode: SessionMode = SessionMode.ACTIVE
    sleep_deadline: Optional[int] = None
    buffered: deque = field(default_factory=deque)
    last_seen: int = 0
    subscriptions: list = field(default_factory=list)
    known_topics: set = field(default_factory=set)
    outbox: deque = field(default_factory=deque)
    blocked: Optional[Outbound] = None
    outbound: list = field(default_factory=list)
    qos2_inbound: set = field(default_factory=set)
    next_msg_id: int = 0

    def new_msg_id(self):
        used = {o.msg_id for o in self.outbound}
        for _ in range(MAX_TOPIC_ID):
            self.next_msg_id = self.next_msg_id % MAX_TOPIC_ID + 1
            if self.next_msg_id not in used:
                return self.next_msg_id
        raise RuntimeError("no free message id")


@dataclass
class GatewayConfig:
    gw_id: int = 1
    ack_wait_s: float = 10
    max_transmissions: int = 3
    sleep_grace_s: float = 10
    keep_alive_factor: float = 1.5
    buffer_limit: int = 1024
    advertise_s: Optional[float] = None

    @property
    def ack_wait_ns(self):
        return int(self.ack_wait_s * NS_PER_S)


class Gateway:
    def __init__(self, network, host="gateway", port=DEFAULT_PORT, config=None):
        self.net = network
        self.host = host
        self.port = port
        self.config = config or GatewayConfig()
        self.registry = TopicRegistry()
        self.sessions = {}
        self.by_address = {}
        self.endpoint = None
        self.log = []
        self._timer = None
        self._advertiser = None

    # service

    def start(self):
        self.endpoint = self.net.bind(self.host, self.port, self._on_datagram)
        self.port = self.endpoint.address[1]
        if self.config.advertise_s:
            self._advertise()
        self._event("start", address=list(self.endpoint.address))
        return self

    def stop(self):
        if self._timer:
            self._timer.cancel()
        if self._advertiser:
            self._advertiser.cancel()
        if self.endpoint:
            self.endpoint.close()
            self.endpoint = None

    @property
    def address(self):
        return self.endpoint.address

    def serve_forever(self, until=None):
        while until is None or self.net.now() < until:
            self.net.run_once(deadline=until)

    def _advertise(self):
        from ..mqttsn.network import BROADCAST

        duration = int(self.config.advertise_s)
        self.endpoint.send((BROADCAST, self.port), encode(Advertise(self.config.gw_id, duration)))
        self._advertiser = self.net.call_later(duration * NS_PER_S, self._advertise)

    def _event(self, event, **fields):
        record = {"t": self.net.now(), "event": event, **fields}
        self.log.append(record)
        logger.info(json.dumps(record, sort_keys=True))

    def _send(self, msg, dst):
        self.endpoint.send(dst, encode(msg))

    # topic registry

    def assign_topic_id(self, name):
        return self.registry.assign(name)

    # inbound

    def _on_datagram(self, data, src):
        try:
            msg = decode(data)
        except MalformedMessage as exc:
            logger.warning("gateway: malformed datagram from %s: %s", src, exc)
            return
        session = self.by_address.get(src)
        if session is not None:
            session.last_seen = self.net.now()
        handler = getattr(self, f"_on_{msg.TYPE.name.lower()}", None)
        if handler is None:
            logger.debug("gateway: ignoring %s from %s", msg.TYPE.name, src)
            return
        handler(msg, src, session)
        self._arm()

    def _on_searchgw(self, msg, src, session):
        self._send(GwInfo(self.config.gw_id), src)

    def _on_connect(self, msg, src, session):
        now = self.net.now()
        old = self.sessions.get(msg.client_id)
        if old is not None:
            self._drop_session(old, SessionMode.DISCONNECTED)
            if old.client_address != src:
                self._event("supersede", client=msg.client_id,
                            old=list(old.client_address), new=list(src))
        if session is not None and session.client_id != msg.client_id:
            self._drop_session(session, SessionMode.DISCONNECTED)
        new = GatewaySession(src, msg.client_id, msg.duration * NS_PER_S, last_seen=now)
        self.sessions[msg.client_id] = new
        self.by_address[src] = new
        self._send(ConnAck(ReturnCode.ACCEPTED), src)
        self._event("connect", client=msg.client_id, address=list(src))

    def _on_register(self, msg, src, session):
        if session is None:
            return self._send(Disconnect(), src)
        try:
            topic_id = self.registry.assign(msg.topic_name)
        except (WildcardInName, RegistryFull) as exc:
            code = ReturnCode.CONGESTION if isinstance(exc, RegistryFull) else ReturnCode.NOT_SUPPORTED
            return self._send(RegAck(0, msg.msg_id, code), src)
        session.known_topics.add(topic_id)
        self._send(RegAck(topic_id, msg.msg_id, ReturnCode.ACCEPTED), src)

    def _on_publish(self, msg, src, session):
        if session is None:
            return self._send(Disconnect(), src)
        qos = msg.flags.qos
        if self.registry.name(msg.topic_id) is None:
            self._send(PubAck(msg.topic_id, msg.msg_id, ReturnCode.INVALID_TOPIC_ID), src)
            self._event("reject", client=session.client_id, topic_id=msg.topic_id)
            return
        if qos == 2:
            if msg.msg_id not in session.qos2_inbound:
                session.qos2_inbound.add(msg.msg_id)
                self.route_publish(session, msg.topic_id, msg.flags, msg.data)
            self._send(PubRec(msg.msg_id), src)
            return
        self.route_publish(session, msg.topic_id, msg.flags, msg.data)
        if qos == 1:
            self._send(PubAck(msg.topic_id, msg.msg_id, ReturnCode.ACCEPTED), src)

    def _on_pubrel(self, msg, src, session):
        if session is not None:
            session.qos2_inbound.discard(msg.msg_id)
        self._send(PubComp(msg.msg_id), src)

    def _on_subscribe(self, msg, src, session):
        if session is None:
            return self._send(Disconnect(), src)
        qos = min(msg.flags.qos, 2)
        if msg.flags.topic_id_type == TopicIdType.PREDEFINED:
            if self.registry.name(msg.topic_id) is None:
                return self._send(
                    SubAck(Flags(qos=qos), msg.topic_id, msg.msg_id, ReturnCode.INVALID_TOPIC_ID), src)
            sub = Subscription(None, msg.topic_id, qos)
            topic_id = msg.topic_id
            session.known_topics.add(topic_id)
        elif topics.is_wildcard(msg.topic_name):
            if not topics.valid_filter(msg.topic_name):
                return self._send(SubAck(Flags(qos=qos), 0, msg.msg_id, ReturnCode.NOT_SUPPORTED), src)
            sub = Subscription(msg.topic_name, None, qos)
            topic_id = 0
        else:
            try:
                topic_id = self.registry.assign(msg.topic_name)
            except RegistryFull:
                return self._send(SubAck(Flags(qos=qos), 0, msg.msg_id, ReturnCode.CONGESTION), src)
            sub = Subscription(None, topic_id, qos)
            session.known_topics.add(topic_id)
        session.subscriptions = [
            s for s in session.subscriptions
            if (s.topic_filter, s.topic_id) != (sub.topic_filter, sub.topic_id)
        ] + [sub]
        self._send(SubAck(Flags(qos=qos), topic_id, msg.msg_id, ReturnCode.ACCEPTED), src)

    def _on_unsubscribe(self, msg, src, session):
        if session is not None:
            if msg.flags.topic_id_type == TopicIdType.PREDEFINED:
                key = (None, msg.topic_id)
            elif topics.is_wildcard(msg.topic_name):
                key = (msg.topic_name, None)
            else:
                key = (None, self.registry.id(msg.topic_name))
            session.subscriptions = [
                s for s in session.subscriptions if (s.topic_filter, s.topic_id) != key
            ]
        self._send(UnsubAck(msg.msg_id), src)

    def _on_pingreq(self, msg, src, session):
        if msg.client_id:
            target = self.sessions.get(msg.client_id)
            if target is None or target.mode is SessionMode.LOST:
                if target is not None:
                    self._forget(target)
                self._event("awake_refused", client=msg.client_id)
                return self._send(Disconnect(), src)
            if target.mode is SessionMode.ASLEEP:
                if target.client_address != src:
                    self.by_address.pop(target.client_address, None)
                    target.client_address = src
                    self.by_address[src] = target
                target.last_seen = self.net.now()
                self.flush_on_awake(target)
                return
        self._send(PingResp(), src)

    def _on_disconnect(self, msg, src, session):
        if session is None:
            return self._send(Disconnect(), src)
        if msg.duration is not None:
            session.mode = SessionMode.ASLEEP
            session.sleep_deadline = self.net.now() + msg.duration * NS_PER_S
            self._event("sleep", client=session.client_id, duration=msg.duration)
        else:
            self._drop_session(session, SessionMode.DISCONNECTED)
            self._event("disconnect", client=session.client_id)
        self._send(Disconnect(), src)

    def _on_puback(self, msg, src, session):
        if session is None:
            return
        out = self._complete(session, MsgType.PUBACK, msg.msg_id)
        if out is not None and msg.return_code != ReturnCode.ACCEPTED:
            self._event("delivery_rejected", client=session.client_id, topic_id=msg.topic_id)

    def _on_pubrec(self, msg, src, session):
        if session is None:
            return
        out = self._complete(session, MsgType.PUBREC, msg.msg_id)
        if out is not None or any(o.msg_id == msg.msg_id and o.expect == MsgType.PUBCOMP
                                  for o in session.outbound):
            if out is not None:
                self._request(session, PubRel(msg.msg_id), MsgType.PUBCOMP, msg.msg_id, out.item)
        else:
            # duplicate PUBREC after the PUBREL already went out
            self._send(PubRel(msg.msg_id), src)

    def _on_pubcomp(self, msg, src, session):
        if session is not None:
            out = self._complete(session, MsgType.PUBCOMP, msg.msg_id)
            if out is not None:
                self._event("delivered", client=session.client_id, topic=out.item.topic_name, qos=2)

    def _on_regack(self, msg, src, session):
        if session is None:
            return
        out = self._complete(session, MsgType.REGACK, msg.msg_id)
        if out is not None and session.blocked is out:
            session.known_topics.add(out.message.topic_id)
            session.blocked = None
            self._pump(session)

    def _on_pingresp(self, msg, src, session):
        pass

    # routing

    def route_publish(self, from_session, topic_id, flags, payload):
        """Deliver to every subscribed session; returns the delivery count."""
        name = self.registry.name(topic_id)
        if name is None:
            raise UnknownTopicId(f"topic id {topic_id} is not registered")
        sent = buffered = 0
        for session in list(self.sessions.values()):
            if session.mode not in (SessionMode.ACTIVE, SessionMode.ASLEEP):
                continue
            granted = [s.qos for s in session.subscriptions if s.selects(topic_id, name)]
            if not granted:
                continue
            qos = min(flags.qos, max(granted))
            item = OutPublish(topic_id, name, qos, bytes(payload), dup=flags.dup and qos == 1)
            if session.mode is SessionMode.ASLEEP:
                if len(session.buffered) >= self.config.buffer_limit:
                    session.buffered.popleft()
                session.buffered.append(item)
                buffered += 1
            else:
                session.outbox.append(item)
                self._pump(session)
                sent += 1
        src = from_session.client_id if from_session is not None else None
        self._event("route", topic=name, topic_id=topic_id, source=src, qos=flags.qos,
                    sent=sent, buffered=buffered, size=len(payload))
        return sent + buffered

    def flush_on_awake(self, session):
        count = len(session.buffered)
        session.outbox.extend(session.buffered)
        session.buffered.clear()
        session.outbox.append(PingResp())
        session.mode = SessionMode.ACTIVE
        session.sleep_deadline = None
        self._event("awake", client=session.client_id, flushed=count)
        self._pump(session)
        return count

    def _pump(self, session):
        while session.outbox and session.blocked is None:
            item = session.outbox[0]
            if isinstance(item, OutPublish) and item.topic_id not in session.known_topics:
                msg_id = session.new_msg_id()
                session.blocked = self._request(
                    session, Register(item.topic_id, msg_id, item.topic_name), MsgType.REGACK, msg_id)
                return
            session.outbox.popleft()
            if not isinstance(item, OutPublish):
                self._send(item, session.client_address)
                continue
            flags = Flags(qos=item.qos, dup=item.dup)
            if item.qos == 0:
                self._send(Publish(flags, item.topic_id, 0, item.payload), session.client_address)
                continue
            msg_id = session.new_msg_id()
            expect = MsgType.PUBACK if item.qos == 1 else MsgType.PUBREC
            self._request(session, Publish(flags, item.topic_id, msg_id, item.payload), expect, msg_id, item)

    def _request(self, session, msg, expect, msg_id, item=None):
        out = Outbound(
            msg, expect, msg_id,
            deadline=self.net.now() + self.config.ack_wait_ns,
            retries_left=self.config.max_transmissions - 1,
            item=item,
        )
        session.outbound.append(out)
        self._send(msg, session.client_address)
        self._arm()
        return out

    def _complete(self, session, expect, msg_id):
        for out in session.outbound:
            if out.expect == expect and out.msg_id == msg_id:
                session.outbound.remove(out)
                return out
        return None

    # sessions

    def _drop_session(self, session, mode):
        session.mode = mode
        session.buffered.clear()
        session.outbox.clear()
        session.outbound.clear()
        session.blocked = None
        self._forget(session)

    def _forget(self, session):
        if self.sessions.get(session.client_id) is session:
            del self.sessions[session.client_id]
        if self.by_address.get(session.client_address) is session:
            del self.by_address[session.client_address]

    def _lose(self, session, reason):
        session_buffer = len(session.buffered)
        session.mode = SessionMode.LOST
        session.buffered.clear()
        session.outbox.clear()
        session.outbound.clear()
        session.blocked = None
        if self.by_address.get(session.client_address) is session:
            del self.by_address[session.client_address]
        self._event("lost", client=session.client_id, reason=reason, dropped=session_buffer)

    # timers

    def _deadlines(self, session):
        out = [o.deadline for o in session.outbound]
        if session.mode is SessionMode.ASLEEP and session.sleep_deadline is not None:
            out.append(session.sleep_deadline + int(self.config.sleep_grace_s * NS_PER_S))
        if session.mode is SessionMode.ACTIVE and session.keep_alive_ns:
            out.append(session.last_seen + int(session.keep_alive_ns * self.config.keep_alive_factor))
        return out

    def _arm(self):
        if self._timer:
            self._timer.cancel()
            self._timer = None
        if self.endpoint is None:
            return
        deadlines = [d for s in self.sessions.values() for d in self._deadlines(s)]
        if deadlines:
            self._timer = self.net.call_at(min(deadlines), self._on_timer)

    def _on_timer(self):
        self._timer = None
        self.tick(self.net.now())

    def tick(self, now):
        for session in list(self.sessions.values()):
            for out in list(session.outbound):
                if out.deadline > now:
                    continue
                if out.retries_left > 0:
                    out.retries_left -= 1
                    out.transmissions += 1
                    out.deadline = now + self.config.ack_wait_ns
                    if isinstance(out.message, Publish):
                        out.message = replace(out.message, flags=replace(out.message.flags, dup=True))
                    self._send(out.message, session.client_address)
                else:
                    session.outbound.remove(out)
                    self._event("delivery_failed", client=session.client_id,
                                message=out.message.TYPE.name, msg_id=out.msg_id)
                    if session.blocked is out:
                        # give up on the topic announcement and the publish waiting on it
                        session.blocked = None
                        if session.outbox:
                            session.outbox.popleft()
                        self._pump(session)
            if session.mode is SessionMode.ASLEEP and session.sleep_deadline is not None:
                if now >= session.sleep_deadline + int(self.config.sleep_grace_s * NS_PER_S):
                    self._lose(session, "sleep deadline")
            elif session.mode is SessionMode.ACTIVE and session.keep_alive_ns:
                if now >= session.last_seen + int(session.keep_alive_ns * self.config.keep_alive_factor):
                    self._lose(session, "keep-alive")
        self._arm()
