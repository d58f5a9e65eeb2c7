import pytest
from hypothesis import given, settings, strategies as st

from wasisn.errors import MalformedMessage
from wasisn.mqttsn import codec
from wasisn.mqttsn.codec import (
    Advertise, ConnAck, Connect, Disconnect, Flags, GwInfo, MsgType, PingReq, PingResp,
    PubAck, PubComp, PubRec, PubRel, Publish, RegAck, Register, SearchGw, SubAck,
    Subscribe, TopicIdType, UnsubAck, Unsubscribe, decode, encode,
)

u8 = st.integers(0, 0xFF)
u16 = st.integers(0, 0xFFFF)
text = st.text(max_size=40)
flags = st.builds(
    Flags, dup=st.booleans(), qos=st.integers(0, 3), retain=st.booleans(),
    will=st.booleans(), clean_session=st.booleans(), topic_id_type=st.sampled_from([0, 1, 2]),
)


def topic_request(cls):
    named = st.builds(
        lambda f, m, n: cls(Flags(qos=f.qos, dup=f.dup), m, topic_name=n), flags, u16, text)
    predefined = st.builds(
        lambda f, m, t: cls(Flags(qos=f.qos, topic_id_type=TopicIdType.PREDEFINED), m, topic_id=t),
        flags, u16, u16)
    return named | predefined


MESSAGES = {
    MsgType.ADVERTISE: st.builds(Advertise, u8, u16),
    MsgType.SEARCHGW: st.builds(SearchGw, u8),
    MsgType.GWINFO: st.builds(GwInfo, u8, st.binary(max_size=16)),
    MsgType.CONNECT: st.builds(Connect, flags, u16, text, u8),
    MsgType.CONNACK: st.builds(ConnAck, u8),
    MsgType.REGISTER: st.builds(Register, u16, u16, text),
    MsgType.REGACK: st.builds(RegAck, u16, u16, u8),
    MsgType.PUBLISH: st.builds(Publish, flags, u16, u16, st.binary(max_size=600)),
    MsgType.PUBACK: st.builds(PubAck, u16, u16, u8),
    MsgType.PUBCOMP: st.builds(PubComp, u16),
    MsgType.PUBREC: st.builds(PubRec, u16),
    MsgType.PUBREL: st.builds(PubRel, u16),
    MsgType.SUBSCRIBE: topic_request(Subscribe),
    MsgType.SUBACK: st.builds(SubAck, flags, u16, u16, u8),
    MsgType.UNSUBSCRIBE: topic_request(Unsubscribe),
    MsgType.UNSUBACK: st.builds(UnsubAck, u16),
    MsgType.PINGREQ: st.builds(PingReq, text),
    MsgType.PINGRESP: st.just(PingResp()),
    MsgType.DISCONNECT: st.builds(Disconnect, st.none() | u16),
}


def test_all_nineteen_types_covered():
    assert len(MsgType) == 19
    assert set(MESSAGES) == set(MsgType) == set(codec.MESSAGE_CLASSES)


@settings(max_examples=10_000, deadline=None)
@given(st.one_of(*MESSAGES.values()))
def test_roundtrip(msg):
    raw = encode(msg)
    assert decode(raw) == msg
    assert encode(decode(raw)) == raw


def test_connect_bytes():
    msg = Connect(Flags(clean_session=True), 30, "WASM")
    assert encode(msg) == bytes([0x0A, 0x04, 0x04, 0x01, 0x00, 0x1E]) + b"WASM"


def test_searchgw_bytes():
    assert encode(SearchGw(1)) == bytes([0x03, 0x01, 0x01])


def test_flag_bits():
    assert Flags(dup=True).to_byte() == 0x80
    assert Flags(qos=2).to_byte() == 0x40
    assert Flags(retain=True).to_byte() == 0x10
    assert Flags(will=True).to_byte() == 0x08
    assert Flags(clean_session=True).to_byte() == 0x04
    assert Flags(topic_id_type=1).to_byte() == 0x01


def test_long_message_uses_three_octet_length():
    msg = Publish(Flags(qos=1), 7, 9, bytes(300))
    raw = encode(msg)
    assert raw[0] == 0x01 and int.from_bytes(raw[1:3], "big") == len(raw)
    assert raw[3] == MsgType.PUBLISH
    assert decode(raw) == msg


@pytest.mark.parametrize("raw", [
    b"",
    b"\x05",
    bytes([0x04, 0x01, 0x01]),            # length says 4, datagram is 3
    bytes([0x02, 0x01, 0x00]),            # trailing byte beyond length
    bytes([0x03, 0x03, 0x00]),            # unassigned message type
    bytes([0x01, 0x00, 0x05, 0x01, 0x01]),  # three-octet form for a short message
    bytes([0x04, 0x05, 0x00, 0x00]),      # CONNACK body too long
    bytes([0x05, 0x16, 0xff, 0xfe, 0xfd]),  # PINGREQ with invalid UTF-8
])
def test_decode_rejects(raw):
    with pytest.raises(MalformedMessage):
        decode(raw)


@settings(max_examples=2000, deadline=None)
@given(st.binary(max_size=64))
def test_decode_total_on_garbage(raw):
    # either a valid message that re-encodes to the same bytes, or a clean error
    try:
        msg = decode(raw)
    except MalformedMessage:
        return
    assert encode(msg) == raw
