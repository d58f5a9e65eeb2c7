"""MQTT-SN v1.2 wire codec.

Every datagram is ``length, msgType, body``.  The length octet counts the
whole message; messages longer than 255 octets use the three-octet form
``0x01, u16 length``.  Multi-byte integers are big-endian.
"""

import enum
import struct
from dataclasses import dataclass, field
from typing import ClassVar, Optional

from ..errors import MalformedMessage

MAX_MESSAGE = 0xFFFF


class MsgType(enum.IntEnum):
    ADVERTISE = 0x00
    SEARCHGW = 0x01
    GWINFO = 0x02
    CONNECT = 0x04
    CONNACK = 0x05
    REGISTER = 0x0A
    REGACK = 0x0B
    PUBLISH = 0x0C
    PUBACK = 0x0D
    PUBCOMP = 0x0E
    PUBREC = 0x0F
    PUBREL = 0x10
    SUBSCRIBE = 0x12
    SUBACK = 0x13
    UNSUBSCRIBE = 0x14
    UNSUBACK = 0x15
    PINGREQ = 0x16
    PINGRESP = 0x17
    DISCONNECT = 0x18


class ReturnCode(enum.IntEnum):
    ACCEPTED = 0x00
    CONGESTION = 0x01
    INVALID_TOPIC_ID = 0x02
    NOT_SUPPORTED = 0x03


class TopicIdType(enum.IntEnum):
    NORMAL = 0
    PREDEFINED = 1
    SHORT = 2


DUP = 0x80
QOS_MASK = 0x60
RETAIN = 0x10
WILL = 0x08
CLEAN_SESSION = 0x04
TOPIC_ID_TYPE_MASK = 0x03


@dataclass(frozen=True)
class Flags:
    dup: bool = False
    qos: int = 0  # raw two-bit field; 3 encodes QoS -1
    retain: bool = False
    will: bool = False
    clean_session: bool = False
    topic_id_type: int = 0

    def to_byte(self):
        if not 0 <= self.qos <= 3 or not 0 <= self.topic_id_type <= 3:
            raise MalformedMessage(f"flag field out of range: {self}")
        return (
            (DUP if self.dup else 0)
            | (self.qos << 5)
            | (RETAIN if self.retain else 0)
            | (WILL if self.will else 0)
            | (CLEAN_SESSION if self.clean_session else 0)
            | self.topic_id_type
        )

    @classmethod
    def from_byte(cls, b):
        return cls(
            dup=bool(b & DUP),
            qos=(b & QOS_MASK) >> 5,
            retain=bool(b & RETAIN),
            will=bool(b & WILL),
            clean_session=bool(b & CLEAN_SESSION),
            topic_id_type=b & TOPIC_ID_TYPE_MASK,
        )


def _text(raw):
    try:
        return bytes(raw).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedMessage(f"invalid UTF-8 string: {exc}") from None


def _need(body, n, what):
    if len(body) < n:
        raise MalformedMessage(f"{what}: body is {len(body)} bytes, need {n}")


def _exact(body, n, what):
    if len(body) != n:
        raise MalformedMessage(f"{what}: body is {len(body)} bytes, expected {n}")


_REGISTRY = {}


def _message(cls):
    _REGISTRY[cls.TYPE] = cls
    return cls


class Message:
    TYPE: ClassVar[MsgType]

    def body(self):
        raise NotImplementedError

    @classmethod
    def parse(cls, body):
        raise NotImplementedError

    def encode(self):
        return encode(self)


@_message
@dataclass(frozen=True)
class Advertise(Message):
    TYPE: ClassVar = MsgType.ADVERTISE
    gw_id: int
    duration: int

    def body(self):
        return struct.pack(">BH", self.gw_id, self.duration)

    @classmethod
    def parse(cls, body):
        _exact(body, 3, "ADVERTISE")
        return cls(*struct.unpack(">BH", body))


@_message
@dataclass(frozen=True)
class SearchGw(Message):
    TYPE: ClassVar = MsgType.SEARCHGW
    radius: int

    def body(self):
        return struct.pack(">B", self.radius)

    @classmethod
    def parse(cls, body):
        _exact(body, 1, "SEARCHGW")
        return cls(body[0])


@_message
@dataclass(frozen=True)
class GwInfo(Message):
    TYPE: ClassVar = MsgType.GWINFO
    gw_id: int
    gw_address: bytes = b""

    def body(self):
        return struct.pack(">B", self.gw_id) + self.gw_address

    @classmethod
    def parse(cls, body):
        _need(body, 1, "GWINFO")
        return cls(body[0], bytes(body[1:]))


@_message
@dataclass(frozen=True)
class Connect(Message):
    TYPE: ClassVar = MsgType.CONNECT
    flags: Flags
    duration: int
    client_id: str
    protocol_id: int = 0x01

    def body(self):
        return (
            struct.pack(">BBH", self.flags.to_byte(), self.protocol_id, self.duration)
            + self.client_id.encode("utf-8")
        )

    @classmethod
    def parse(cls, body):
        _need(body, 4, "CONNECT")
        flags, proto, duration = struct.unpack(">BBH", body[:4])
        return cls(Flags.from_byte(flags), duration, _text(body[4:]), proto)


@_message
@dataclass(frozen=True)
class ConnAck(Message):
    TYPE: ClassVar = MsgType.CONNACK
    return_code: int = ReturnCode.ACCEPTED

    def body(self):
        return struct.pack(">B", self.return_code)

    @classmethod
    def parse(cls, body):
        _exact(body, 1, "CONNACK")
        return cls(body[0])


@_message
@dataclass(frozen=True)
class Register(Message):
    TYPE: ClassVar = MsgType.REGISTER
    topic_id: int
    msg_id: int
    topic_name: str

    def body(self):
        return struct.pack(">HH", self.topic_id, self.msg_id) + self.topic_name.encode("utf-8")

    @classmethod
    def parse(cls, body):
        _need(body, 4, "REGISTER")
        topic_id, msg_id = struct.unpack(">HH", body[:4])
        return cls(topic_id, msg_id, _text(body[4:]))


@_message
@dataclass(frozen=True)
class RegAck(Message):
    TYPE: ClassVar = MsgType.REGACK
    topic_id: int
    msg_id: int
    return_code: int = ReturnCode.ACCEPTED

    def body(self):
        return struct.pack(">HHB", self.topic_id, self.msg_id, self.return_code)

    @classmethod
    def parse(cls, body):
        _exact(body, 5, "REGACK")
        return cls(*struct.unpack(">HHB", body))


@_message
@dataclass(frozen=True)
class Publish(Message):
    TYPE: ClassVar = MsgType.PUBLISH
    flags: Flags
    topic_id: int
    msg_id: int
    data: bytes = b""

    def body(self):
        return struct.pack(">BHH", self.flags.to_byte(), self.topic_id, self.msg_id) + self.data

    @classmethod
    def parse(cls, body):
        _need(body, 5, "PUBLISH")
        flags, topic_id, msg_id = struct.unpack(">BHH", body[:5])
        return cls(Flags.from_byte(flags), topic_id, msg_id, bytes(body[5:]))


@_message
@dataclass(frozen=True)
class PubAck(Message):
    TYPE: ClassVar = MsgType.PUBACK
    topic_id: int
    msg_id: int
    return_code: int = ReturnCode.ACCEPTED

    def body(self):
        return struct.pack(">HHB", self.topic_id, self.msg_id, self.return_code)

    @classmethod
    def parse(cls, body):
        _exact(body, 5, "PUBACK")
        return cls(*struct.unpack(">HHB", body))


class _MsgIdOnly(Message):
    def body(self):
        return struct.pack(">H", self.msg_id)

    @classmethod
    def parse(cls, body):
        _exact(body, 2, cls.TYPE.name)
        return cls(struct.unpack(">H", body)[0])


@_message
@dataclass(frozen=True)
class PubComp(_MsgIdOnly):
    TYPE: ClassVar = MsgType.PUBCOMP
    msg_id: int


@_message
@dataclass(frozen=True)
class PubRec(_MsgIdOnly):
    TYPE: ClassVar = MsgType.PUBREC
    msg_id: int


@_message
@dataclass(frozen=True)
class PubRel(_MsgIdOnly):
    TYPE: ClassVar = MsgType.PUBREL
    msg_id: int


class _TopicRequest(Message):
    """SUBSCRIBE / UNSUBSCRIBE: the topic field's shape follows TopicIdType."""

    def _topic_bytes(self):
        kind = self.flags.topic_id_type
        if kind == TopicIdType.PREDEFINED:
            if self.topic_id is None or self.topic_name is not None:
                raise MalformedMessage("predefined topic type carries a topic id")
            return struct.pack(">H", self.topic_id)
        if self.topic_name is None or self.topic_id is not None:
            raise MalformedMessage("named topic type carries a topic name")
        raw = self.topic_name.encode("utf-8")
        if kind == TopicIdType.SHORT and len(raw) != 2:
            raise MalformedMessage("short topic names are exactly two octets")
        return raw

    def body(self):
        return struct.pack(">BH", self.flags.to_byte(), self.msg_id) + self._topic_bytes()

    @classmethod
    def parse(cls, body):
        _need(body, 3, cls.TYPE.name)
        flags, msg_id = struct.unpack(">BH", body[:3])
        flags = Flags.from_byte(flags)
        rest = body[3:]
        if flags.topic_id_type == TopicIdType.PREDEFINED:
            _exact(rest, 2, f"{cls.TYPE.name} topic id")
            return cls(flags, msg_id, topic_id=struct.unpack(">H", rest)[0])
        if flags.topic_id_type == TopicIdType.SHORT:
            _exact(rest, 2, f"{cls.TYPE.name} short topic")
        elif flags.topic_id_type != TopicIdType.NORMAL:
            raise MalformedMessage("reserved topic id type")
        return cls(flags, msg_id, topic_name=_text(rest))


@_message
@dataclass(frozen=True)
class Subscribe(_TopicRequest):
    TYPE: ClassVar = MsgType.SUBSCRIBE
    flags: Flags
    msg_id: int
    topic_name: Optional[str] = None
    topic_id: Optional[int] = None


@_message
@dataclass(frozen=True)
class SubAck(Message):
    TYPE: ClassVar = MsgType.SUBACK
    flags: Flags
    topic_id: int
    msg_id: int
    return_code: int = ReturnCode.ACCEPTED

    def body(self):
        return struct.pack(
            ">BHHB", self.flags.to_byte(), self.topic_id, self.msg_id, self.return_code
        )

    @classmethod
    def parse(cls, body):
        _exact(body, 6, "SUBACK")
        flags, topic_id, msg_id, rc = struct.unpack(">BHHB", body)
        return cls(Flags.from_byte(flags), topic_id, msg_id, rc)


@_message
@dataclass(frozen=True)
class Unsubscribe(_TopicRequest):
    TYPE: ClassVar = MsgType.UNSUBSCRIBE
    flags: Flags
    msg_id: int
    topic_name: Optional[str] = None
    topic_id: Optional[int] = None


@_message
@dataclass(frozen=True)
class UnsubAck(_MsgIdOnly):
    TYPE: ClassVar = MsgType.UNSUBACK
    msg_id: int


@_message
@dataclass(frozen=True)
class PingReq(Message):
    TYPE: ClassVar = MsgType.PINGREQ
    client_id: str = ""  # empty: no client id (plain keep-alive)

    def body(self):
        return self.client_id.encode("utf-8")

    @classmethod
    def parse(cls, body):
        return cls(_text(body))


@_message
@dataclass(frozen=True)
class PingResp(Message):
    TYPE: ClassVar = MsgType.PINGRESP

    def body(self):
        return b""

    @classmethod
    def parse(cls, body):
        _exact(body, 0, "PINGRESP")
        return cls()


@_message
@dataclass(frozen=True)
class Disconnect(Message):
    TYPE: ClassVar = MsgType.DISCONNECT
    duration: Optional[int] = None

    def body(self):
        return b"" if self.duration is None else struct.pack(">H", self.duration)

    @classmethod
    def parse(cls, body):
        if len(body) == 0:
            return cls()
        _exact(body, 2, "DISCONNECT")
        return cls(struct.unpack(">H", body)[0])


MESSAGE_CLASSES = dict(_REGISTRY)


def encode(msg):
    try:
        body = msg.body()
    except struct.error as exc:
        raise MalformedMessage(f"{type(msg).__name__}: field out of range ({exc})") from None
    short = len(body) + 2
    if short <= 0xFF:
        return bytes((short, msg.TYPE)) + body
    total = len(body) + 4
    if total > MAX_MESSAGE:
        raise MalformedMessage(f"message of {total} bytes exceeds {MAX_MESSAGE}")
    return b"\x01" + struct.pack(">H", total) + bytes((msg.TYPE,)) + body


def decode(data):
    data = bytes(data)
    if len(data) < 2:
        raise MalformedMessage("datagram shorter than a header")
    if data[0] == 0x01:
        if len(data) < 4:
            raise MalformedMessage("truncated three-octet length header")
        length = struct.unpack(">H", data[1:3])[0]
        if length <= 0xFF:
            raise MalformedMessage("three-octet length used for a short message")
        header = 3
    else:
        length = data[0]
        header = 1
        if length < 2:
            raise MalformedMessage(f"invalid length octet {length}")
    if length != len(data):
        raise MalformedMessage(f"length field says {length}, datagram has {len(data)}")
    try:
        cls = MESSAGE_CLASSES[data[header]]
    except KeyError:
        raise MalformedMessage(f"unknown message type 0x{data[header]:02x}") from None
    return cls.parse(data[header + 1:])
