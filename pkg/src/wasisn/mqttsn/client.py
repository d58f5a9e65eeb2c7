"""MQTT-SN client state machine.

Primitives block until their acknowledgement arrives by stepping the
network's event loop.  Deadlines are handled by :meth:`MqttSnClient.tick`,
which a single network timer invokes; it retransmits overdue requests,
emits keep-alive pings and fails requests whose budget is exhausted.
"""

import enum
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from ..clock import NS_PER_S
from ..errors import (
    AlreadyStarted,
    Empty,
    MalformedMessage,
    MqttSnError,
    NoSuchSubscription,
    NotConnected,
    NotStarted,
    Refused,
    SessionLost,
    Timeout,
    UnknownTopicId,
)
from . import topics
from .codec import (
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
    decode,
    encode,
)

logger = logging.getLogger(__name__)

MAX_TOPIC_NAME = 250


class AlreadyConnected(MqttSnError):
    code = -11


@dataclass
class ClientConfig:
    keep_alive_s: float = 30
    ack_wait_s: float = 10
    # total sends per request, the first one included
    max_transmissions: int = 3
    queue_limit: int = 64

    @property
    def ack_wait_ns(self):
        return int(self.ack_wait_s * NS_PER_S)


class Mode(enum.Enum):
    DISCONNECTED = "Disconnected"
    ACTIVE = "Active"
    ASLEEP = "Asleep"


@dataclass
class PendingAck:
    message: object
    expect: MsgType
    msg_id: Optional[int]
    dst: tuple
    deadline: int
    retries_left: int
    hop_limit: Optional[int] = None
    transmissions: int = 1
    done: bool = False
    error: Optional[Exception] = None
    result: object = None
    on_ack: Optional[Callable] = None


@dataclass(frozen=True)
class InboundMessage:
    topic_id: int
    topic_name: Optional[str]
    payload: bytes
    qos: int
    dup: bool
    msg_id: int
    received_at: int = field(compare=False, default=0)


class TopicMap:
    """Bidirectional topic name <-> id map."""

    def __init__(self):
        self._by_name = {}
        self._by_id = {}

    def add(self, name, topic_id):
        old = self._by_id.get(topic_id)
        if old is not None and old != name:
            del self._by_name[old]
        old_id = self._by_name.get(name)
        if old_id is not None and old_id != topic_id:
            del self._by_id[old_id]
        self._by_name[name] = topic_id
        self._by_id[topic_id] = name

    def id(self, name):
        return self._by_name.get(name)

    def name(self, topic_id):
        return self._by_id.get(topic_id)

    def clear(self):
        self._by_name.clear()
        self._by_id.clear()

    def items(self):
        return list(self._by_name.items())

    def __contains__(self, topic_id):
        return topic_id in self._by_id

    def __len__(self):
        return len(self._by_id)


class MqttSnClient:
    def __init__(self, network, host="client", config=None):
        self.net = network
        self.host = host
        self.config = config or ClientConfig()
        self.on_message = None
        self.endpoint = None
        self._reset()

    def _reset(self):
        self.mode = Mode.DISCONNECTED
        self.client_id = None
        self.gateway = None
        self.gateway_address = None
        self.keep_alive_ns = int(self.config.keep_alive_s * NS_PER_S)
        self.topic_map = TopicMap()
        self.pending = []
        self.queues = {}
        self.dropped_messages = 0
        self._next_msg_id = 0
        self._qos2_inbound = set()
        self._timer = None
        self._last_sent = 0
        self._ping = None

    # lifecycle

    @property
    def started(self):
        return self.endpoint is not None

    @property
    def port(self):
        return self.endpoint.address[1] if self.endpoint else None

    def start(self, port):
        if self.started:
            raise AlreadyStarted("client already started")
        self.endpoint = self.net.bind(self.host, port, self._on_datagram)
        self.mode = Mode.DISCONNECTED
        return self.endpoint.address[1]

    def stop(self):
        if not self.started:
            return True
        self.endpoint.close()
        self.endpoint = None
        if self._timer:
            self._timer.cancel()
        for p in self.pending:
            p.done, p.error = True, NotConnected("client stopped")
        self._reset()
        return True

    # sending

    def _send(self, msg, dst=None, hop_limit=None):
        dst = dst or self.gateway
        self.endpoint.send(dst, encode(msg), hop_limit=hop_limit)
        self._last_sent = self.net.now()

    def _next_id(self):
        in_flight = {p.msg_id for p in self.pending}
        for _ in range(0xFFFF):
            self._next_msg_id = self._next_msg_id % 0xFFFF + 1
            if self._next_msg_id not in in_flight:
                return self._next_msg_id
        raise MqttSnError("no free message id")

    def _request(self, msg, expect, msg_id=None, dst=None, hop_limit=None, on_ack=None):
        dst = dst or self.gateway
        p = PendingAck(
            message=msg,
            expect=expect,
            msg_id=msg_id,
            dst=dst,
            deadline=self.net.now() + self.config.ack_wait_ns,
            retries_left=self.config.max_transmissions - 1,
            hop_limit=hop_limit,
            on_ack=on_ack,
        )
        self.pending.append(p)
        self._send(msg, dst, hop_limit)
        self._arm()
        return p

    def _wait(self, p):
        while not p.done:
            if not self.net.run_once() and self.net.clock.simulated:
                raise RuntimeError("simulated network idle with a request in flight")
        if p.error is not None:
            raise p.error
        return p.result

    def _call(self, *args, **kw):
        return self._wait(self._request(*args, **kw))

    def _require_started(self):
        if not self.started:
            raise NotStarted("client not started")

    def _require_active(self):
        self._require_started()
        if self.mode is not Mode.ACTIVE:
            raise NotConnected(f"client is {self.mode.value}")

    # timers

    def _arm(self):
        if self._timer:
            self._timer.cancel()
            self._timer = None
        if not self.started:
            return
        deadlines = [p.deadline for p in self.pending if not p.done]
        if self.mode is Mode.ACTIVE and self._ping is None and self.keep_alive_ns > 0:
            deadlines.append(self._last_sent + self.keep_alive_ns)
        if deadlines:
            self._timer = self.net.call_at(min(deadlines), self._on_timer)

    def _on_timer(self):
        self._timer = None
        self.tick(self.net.now())

    def tick(self, now):
        """Handle every deadline at or before ``now``; returns the actions taken."""
        actions = []
        if not self.started:
            return actions
        for p in list(self.pending):
            if p.done or p.deadline > now:
                continue
            if p.retries_left > 0:
                p.retries_left -= 1
                p.transmissions += 1
                p.deadline = now + self.config.ack_wait_ns
                if isinstance(p.message, Publish):
                    p.message = replace(p.message, flags=replace(p.message.flags, dup=True))
                self._send(p.message, p.dst, p.hop_limit)
                actions.append(("retransmit", p.message))
            else:
                self.pending.remove(p)
                p.done = True
                p.error = Timeout(f"no {p.expect.name} after {p.transmissions} transmissions")
                actions.append(("timeout", p.message))
                if p is self._ping:
                    self._ping = None
                    self.mode = Mode.DISCONNECTED
                    actions.append(("session_lost", None))
        if (
            self.mode is Mode.ACTIVE
            and self._ping is None
            and self.keep_alive_ns > 0
            and now >= self._last_sent + self.keep_alive_ns
        ):
            self._ping = self._request(PingReq(), MsgType.PINGRESP)
            actions.append(("pingreq", self._ping.message))
        self._arm()
        return actions

    # receiving

    def _complete(self, msg, src, error=None, result=None):
        msg_id = getattr(msg, "msg_id", None)
        for p in self.pending:
            if p.done or p.expect != msg.TYPE:
                continue
            if p.msg_id is not None and p.msg_id != msg_id:
                continue
            self.pending.remove(p)
            p.done = True
            p.error = error
            p.result = result
            if p.on_ack and error is None:
                p.result = p.on_ack(msg, src)
            if p is self._ping:
                self._ping = None
            self._arm()
            return p
        return None

    def _on_datagram(self, data, src):
        try:
            msg = decode(data)
        except MalformedMessage as exc:
            logger.warning("%s: dropping malformed datagram from %s: %s", self.host, src, exc)
            return
        handler = getattr(self, f"_handle_{msg.TYPE.name.lower()}", None)
        if handler is not None:
            handler(msg, src)
        else:
            self._complete(msg, src)

    def _handle_advertise(self, msg, src):
        logger.debug("%s: gateway %d advertised from %s", self.host, msg.gw_id, src)

    def _handle_connack(self, msg, src):
        err = None if msg.return_code == ReturnCode.ACCEPTED else Refused(
            f"CONNACK return code {msg.return_code}")
        self._complete(msg, src, error=err)

    def _handle_regack(self, msg, src):
        err = None if msg.return_code == ReturnCode.ACCEPTED else Refused(
            f"REGACK return code {msg.return_code}")
        self._complete(msg, src, error=err)

    def _handle_suback(self, msg, src):
        err = None if msg.return_code == ReturnCode.ACCEPTED else Refused(
            f"SUBACK return code {msg.return_code}")
        self._complete(msg, src, error=err)

    def _handle_puback(self, msg, src):
        err = None
        if msg.return_code == ReturnCode.INVALID_TOPIC_ID:
            err = UnknownTopicId(f"gateway rejected topic id {msg.topic_id}")
        elif msg.return_code != ReturnCode.ACCEPTED:
            err = Refused(f"PUBACK return code {msg.return_code}")
        if self._complete(msg, src, error=err) is None:
            self._handle_publish_reject(msg)

    def _handle_publish_reject(self, msg):
        if msg.return_code != ReturnCode.ACCEPTED:
            logger.info("%s: publish rejected for topic %d", self.host, msg.topic_id)

    def _handle_disconnect(self, msg, src):
        if self._complete(msg, src) is not None:
            return
        # unsolicited: the gateway dropped our session
        lost = SessionLost("gateway closed the session")
        for p in list(self.pending):
            if p.expect in (MsgType.PINGRESP, MsgType.PUBACK, MsgType.PUBREC,
                            MsgType.PUBCOMP, MsgType.REGACK, MsgType.SUBACK, MsgType.UNSUBACK):
                self.pending.remove(p)
                p.done, p.error = True, lost
        self._ping = None
        self.mode = Mode.DISCONNECTED
        self._arm()

    def _handle_register(self, msg, src):
        # gateway announcing the id of a topic matched by a wildcard subscription
        self.topic_map.add(msg.topic_name, msg.topic_id)
        self._send(RegAck(msg.topic_id, msg.msg_id, ReturnCode.ACCEPTED), src)

    def _handle_publish(self, msg, src):
        qos = msg.flags.qos
        name = self.topic_map.name(msg.topic_id)
        targets = self._queues_for(msg.topic_id, name)
        if not targets:
            if qos in (1, 2):
                self._send(PubAck(msg.topic_id, msg.msg_id, ReturnCode.INVALID_TOPIC_ID), src)
            return
        if qos == 2:
            self._send(PubRec(msg.msg_id), src)
            if msg.msg_id in self._qos2_inbound:
                return
            self._qos2_inbound.add(msg.msg_id)
        elif qos == 1:
            self._send(PubAck(msg.topic_id, msg.msg_id, ReturnCode.ACCEPTED), src)
        inbound = InboundMessage(
            msg.topic_id, name, msg.data, qos, msg.flags.dup, msg.msg_id, self.net.now()
        )
        for q in targets:
            if len(q) == q.maxlen:
                self.dropped_messages += 1
            q.append(inbound)
        if self.on_message is not None:
            self.on_message(inbound)

    def _handle_pubrel(self, msg, src):
        self._qos2_inbound.discard(msg.msg_id)
        self._send(PubComp(msg.msg_id), src)

    def _handle_pingreq(self, msg, src):
        self._send(PingResp(), src)

    def _queues_for(self, topic_id, name):
        out = []
        if topic_id in self.queues:
            out.append(self.queues[topic_id])
        if name is not None:
            for key, q in self.queues.items():
                if isinstance(key, str) and topics.matches(key, name):
                    out.append(q)
        return out

    # primitives

    def search_gw(self, broadcast_address, port, max_hops):
        self._require_started()

        def found(msg, src):
            self.gateway_address = src[0]
            return src[0]

        return self._call(
            SearchGw(max_hops),
            MsgType.GWINFO,
            dst=(broadcast_address, port),
            hop_limit=max_hops,
            on_ack=found,
        )

    def connect(self, client_id, keep_alive, gateway_address, port):
        self._require_started()
        if self.mode is not Mode.DISCONNECTED:
            raise AlreadyConnected(f"client is {self.mode.value}")
        self.gateway = (gateway_address, port)
        self.client_id = client_id
        msg = Connect(Flags(clean_session=True), int(keep_alive), client_id)
        self._call(msg, MsgType.CONNACK)
        self.keep_alive_ns = int(keep_alive * NS_PER_S)
        self.mode = Mode.ACTIVE
        self._arm()
        return True

    def register(self, topic_name):
        self._require_active()
        if len(topic_name.encode("utf-8")) > MAX_TOPIC_NAME:
            raise MalformedMessage(f"topic name longer than {MAX_TOPIC_NAME} bytes")
        msg_id = self._next_id()

        def assigned(msg, src):
            self.topic_map.add(topic_name, msg.topic_id)
            return msg.topic_id

        return self._call(Register(0, msg_id, topic_name), MsgType.REGACK, msg_id, on_ack=assigned)

    def publish(self, topic_id, qos, payload, check_topic=True):
        self._require_active()
        if qos not in (0, 1, 2):
            raise ValueError(f"unsupported QoS {qos}")
        if check_topic and topic_id not in self.topic_map:
            raise UnknownTopicId(f"topic id {topic_id} was never registered")
        payload = bytes(payload)
        if qos == 0:
            self._send(Publish(Flags(qos=0), topic_id, 0, payload))
            self._arm()
            return True
        msg_id = self._next_id()
        msg = Publish(Flags(qos=qos), topic_id, msg_id, payload)
        if qos == 1:
            self._call(msg, MsgType.PUBACK, msg_id)
            return True
        self._call(msg, MsgType.PUBREC, msg_id)
        self._call(PubRel(msg_id), MsgType.PUBCOMP, msg_id)
        return True

    def subscribe(self, topic, qos=0):
        self._require_active()
        msg_id = self._next_id()
        if isinstance(topic, int):
            msg = Subscribe(Flags(qos=qos, topic_id_type=TopicIdType.PREDEFINED), msg_id, topic_id=topic)
        else:
            if not topics.valid_filter(topic):
                raise MalformedMessage(f"invalid topic filter {topic!r}")
            msg = Subscribe(Flags(qos=qos), msg_id, topic_name=topic)

        def granted(ack, src):
            if isinstance(topic, int):
                key = topic
            elif topics.is_wildcard(topic):
                key = topic
            else:
                self.topic_map.add(topic, ack.topic_id)
                key = ack.topic_id
            self.queues.setdefault(key, deque(maxlen=self.config.queue_limit))
            return ack.flags.qos

        self._call(msg, MsgType.SUBACK, msg_id, on_ack=granted)
        return True

    def unsubscribe(self, topic):
        self._require_active()
        key = self._queue_key(topic)
        msg_id = self._next_id()
        if isinstance(topic, int):
            msg = Unsubscribe(Flags(topic_id_type=TopicIdType.PREDEFINED), msg_id, topic_id=topic)
        else:
            msg = Unsubscribe(Flags(), msg_id, topic_name=topic)
        self._call(msg, MsgType.UNSUBACK, msg_id)
        self.queues.pop(key, None)
        return True

    def _queue_key(self, topic):
        if isinstance(topic, str) and topic not in self.queues:
            topic_id = self.topic_map.id(topic)
            if topic_id is not None:
                topic = topic_id
        if topic not in self.queues:
            raise NoSuchSubscription(f"no subscription for {topic!r}")
        return topic

    def has_message(self, topic):
        return bool(self.queues[self._queue_key(topic)])

    def peek_message(self, topic):
        q = self.queues[self._queue_key(topic)]
        if not q:
            raise Empty(f"no message queued for {topic!r}")
        return q[0]

    def next_message(self, topic):
        q = self.queues[self._queue_key(topic)]
        if not q:
            raise Empty(f"no message queued for {topic!r}")
        return q.popleft()

    def get_message(self, topic):
        return self.next_message(topic).payload

    def sleep(self, duration=None):
        self._require_active()
        if duration is None:
            duration = self.keep_alive_ns // NS_PER_S
        self._call(Disconnect(int(duration)), MsgType.DISCONNECT)
        self.mode = Mode.ASLEEP
        self._arm()
        return True

    def awake(self):
        self._require_started()
        if self.mode is not Mode.ASLEEP:
            raise NotConnected(f"client is {self.mode.value}, not asleep")
        self.mode = Mode.ACTIVE
        try:
            self._call(PingReq(self.client_id), MsgType.PINGRESP)
        except SessionLost:
            raise
        except Timeout:
            self.mode = Mode.ASLEEP
            raise
        self._arm()
        return True

    def disconnect(self):
        if not self.started or self.mode is Mode.DISCONNECTED:
            return True
        try:
            self._call(Disconnect(), MsgType.DISCONNECT)
        except (Timeout, SessionLost):
            pass
        self.mode = Mode.DISCONNECTED
        self._ping = None
        self._arm()
        return True
