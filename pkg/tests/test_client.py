import pytest

from wasisn.clock import NS_PER_S
from wasisn.errors import (
    AlreadyStarted, BindError, Empty, NoSuchSubscription, NotConnected, SessionLost, Timeout,
    UnknownTopicId,
)
from wasisn.mqttsn import BROADCAST, ClientConfig, Mode, MqttSnClient, MsgType, SimNetwork
from wasisn.mqttsn.codec import PingReq, decode
from wasisn.clock import SimClock

from conftest import Bed


def kinds(net, src=None, dst=None):
    return [decode(d.data).TYPE for d in net.sent(src, dst)]


def test_start_bind_and_guards():
    net = SimNetwork()
    c = MqttSnClient(net, "node")
    assert c.start(1000) == 1000
    assert net.trace == []  # starting emits nothing
    with pytest.raises(AlreadyStarted):
        c.start(1001)
    other = MqttSnClient(net, "node")
    with pytest.raises(BindError):
        other.start(1000)
    assert other.start(0) > 0


def test_stop_never_connected():
    c = MqttSnClient(SimNetwork(), "node")
    assert c.stop() is True
    c.start(0)
    assert c.stop() is True and c.stop() is True


def test_search_gw(bed):
    c = bed.client("node")
    assert c.search_gw(BROADCAST, 47193, 1) == "gateway"
    assert bed.net.trace[0].data == bytes([3, 1, 1])


def test_search_gw_respects_hop_limit(bed):
    bed.net.set_hops("node", "gateway", 3)
    c = bed.client("node", config=ClientConfig(ack_wait_s=1))
    with pytest.raises(Timeout):
        c.search_gw(BROADCAST, 47193, 2)
    assert c.search_gw(BROADCAST, 47193, 3) == "gateway"


def test_search_gw_no_gateway():
    net = SimNetwork()
    c = MqttSnClient(net, "node")
    c.start(0)
    with pytest.raises(Timeout):
        c.search_gw(BROADCAST, 47193, 1)
    assert kinds(net).count(MsgType.SEARCHGW) == 3


def test_connect_timeout_three_sends_thirty_seconds(bed):
    bed.net.drop_filters.append(lambda d: decode(d.data).TYPE == MsgType.CONNECT)
    c = bed.client("node")
    t0 = bed.net.now()
    with pytest.raises(Timeout):
        c.connect("WASM", 30, "gateway", 47193)
    assert kinds(bed.net, "node").count(MsgType.CONNECT) == 3
    assert bed.net.now() - t0 == 30 * NS_PER_S


def test_connect_register_publish(bed):
    c = bed.client("node", "WASM")
    assert c.mode is Mode.ACTIVE
    assert c.register("humidity") == 1
    assert c.register("humidity") == 1
    assert c.register("temperature") == 2
    assert c.publish(1, 0, b"x")


def test_guards_when_disconnected(bed):
    c = bed.client("node")
    with pytest.raises(NotConnected):
        c.register("humidity")
    with pytest.raises(NotConnected):
        c.sleep(10)
    c.connect("WASM", 30, "gateway", 47193)
    c.disconnect()
    assert c.mode is Mode.DISCONNECTED
    assert "WASM" not in bed.gateway.sessions
    with pytest.raises(NotConnected):
        c.publish(1, 0, b"")


def test_publish_unknown_topic(bed):
    c = bed.client("node", "WASM")
    with pytest.raises(UnknownTopicId):
        c.publish(5, 1, b"x")
    with pytest.raises(UnknownTopicId):
        c.publish(999, 1, b"x", check_topic=False)


def test_qos2_handshake_sequence(bed):
    c = bed.client("node", "WASM")
    tid = c.register("humidity")
    n = len(bed.net.trace)
    c.publish(tid, 2, b"42")
    seq = [decode(d.data).TYPE for d in bed.net.trace[n:]]
    assert seq == [MsgType.PUBLISH, MsgType.PUBREC, MsgType.PUBREL, MsgType.PUBCOMP]


def test_qos0_over_dead_link(bed):
    c = bed.client("node", "WASM")
    tid = c.register("humidity")
    bed.net.loss = 1.0
    assert c.publish(tid, 0, b"lost")


def test_qos1_puback_dropped_retransmits_with_dup(bed):
    sub = bed.client("sub", "SUB")
    sub.subscribe("humidity", 1)
    pub = bed.client("pub", "PUB")
    tid = pub.register("humidity")
    dropped = []

    def drop_first_puback(d):
        if d.dst[0] == "pub" and decode(d.data).TYPE == MsgType.PUBACK and not dropped:
            dropped.append(d)
            return True
        return False

    bed.net.drop_filters.append(drop_first_puback)
    pub.publish(tid, 1, b"v")
    publishes = [decode(d.data) for d in bed.net.sent("pub") if decode(d.data).TYPE == MsgType.PUBLISH]
    assert len(publishes) == 2 and publishes[1].flags.dup
    bed.settle()
    got = []
    while sub.has_message("humidity"):
        got.append(sub.next_message("humidity"))
    assert [m.payload for m in got] in ([b"v"], [b"v", b"v"])


def test_subscribe_and_queue_fifo(bed):
    sub = bed.client("sub", "SUB")
    pub = bed.client("pub", "PUB")
    sub.subscribe("humidity", 1)
    tid = pub.register("humidity")
    pub.publish(tid, 1, b"a")
    pub.publish(tid, 1, b"b")
    bed.settle()
    assert sub.has_message("humidity") and sub.has_message(tid)
    assert sub.get_message(tid) == b"a"
    assert sub.get_message("humidity") == b"b"
    assert not sub.has_message(tid)
    with pytest.raises(Empty):
        sub.get_message(tid)
    with pytest.raises(NoSuchSubscription):
        sub.get_message("other")


def test_wildcard_subscription(bed):
    dev = bed.client("dev", "device01")
    dev.subscribe("/resources/device01/#", 1)
    req = bed.client("req", "requester")
    topic = "/resources/device01/BME280/temperature/request"
    tid = req.register(topic)
    req.publish(tid, 1, b"please")
    bed.settle()
    msg = dev.next_message("/resources/device01/#")
    assert msg.payload == b"please" and msg.topic_name == topic
    # the gateway announced the id before the first publish using it
    to_dev = [decode(d.data).TYPE for d in bed.net.sent("gateway", "dev")]
    assert to_dev.index(MsgType.REGISTER) < to_dev.index(MsgType.PUBLISH)


def test_unsubscribe(bed):
    sub = bed.client("sub", "SUB")
    sub.subscribe("t", 0)
    sub.unsubscribe("t")
    with pytest.raises(NoSuchSubscription):
        sub.has_message("t")
    pub = bed.client("pub", "PUB")
    tid = pub.register("t")
    assert bed.gateway.route_publish(None, tid, pub_flags(), b"x") == 0


def pub_flags(qos=0):
    from wasisn.mqttsn.codec import Flags
    return Flags(qos=qos)


def test_sleep_and_awake_delivers_in_order():
    bed = Bed()
    sub = bed.client("sub", "SUB", ClientConfig(queue_limit=128))
    sub.subscribe("news", 1)
    pub = bed.client("pub", "PUB")
    tid = pub.register("news")
    assert sub.sleep(60)
    assert sub.mode is Mode.ASLEEP
    with pytest.raises(NotConnected):
        sub.subscribe("other", 0)
    for p in (b"1", b"2", b"3"):
        pub.publish(tid, 1, p)
    bed.settle()
    assert not sub.has_message("news")
    assert sub.awake()
    bed.settle()
    assert [sub.get_message("news") for _ in range(3)] == [b"1", b"2", b"3"]
    assert sub.mode is Mode.ACTIVE


def test_awake_with_nothing_buffered(bed):
    c = bed.client("node", "WASM")
    c.subscribe("x", 0)
    c.sleep(10)
    assert c.awake()
    assert not c.has_message("x")


def test_awake_after_deadline_session_lost(bed):
    c = bed.client("node", "WASM", keep_alive=0)
    c.sleep(5)
    bed.net.run_for(16 * NS_PER_S)
    with pytest.raises(SessionLost):
        c.awake()
    assert c.mode is Mode.DISCONNECTED


def test_tick_retransmit_and_timeout():
    net = SimNetwork()
    c = MqttSnClient(net, "node", ClientConfig(ack_wait_s=10))
    c.start(0)
    c.gateway = ("nowhere", 1)
    p = c._request(PingReq(), MsgType.PINGRESP)
    assert p.retries_left == 2
    acts = c.tick(net.now() + 10 * NS_PER_S)
    assert [a for a, _ in acts] == ["retransmit"] and p.retries_left == 1
    c.tick(net.now() + 30 * NS_PER_S)
    p.retries_left = 0
    p.deadline = 0
    acts = c.tick(net.now() + 40 * NS_PER_S)
    assert ("timeout", p.message) in acts and isinstance(p.error, Timeout)


def test_keepalive_pingreq(bed):
    c = bed.client("node", "WASM", keep_alive=30)
    n = len(bed.net.sent("node"))
    bed.net.run_for(30 * NS_PER_S)
    new = [decode(d.data).TYPE for d in bed.net.sent("node")[n:]]
    assert new == [MsgType.PINGREQ]
    assert c.mode is Mode.ACTIVE
    assert bed.gateway.sessions["WASM"].mode.value == "Active"


def test_keepalive_direct_tick():
    net = SimNetwork(SimClock())
    c = MqttSnClient(net, "node")
    c.start(0)
    c.gateway = ("gw", 1)
    c.mode = Mode.ACTIVE
    c.keep_alive_ns = 30 * NS_PER_S
    assert c.tick(29 * NS_PER_S) == []
    acts = c.tick(30 * NS_PER_S)
    assert acts[0][0] == "pingreq"


def test_gateway_silence_marks_session_lost(bed):
    c = bed.client("node", "WASM", ClientConfig(ack_wait_s=2), keep_alive=10)
    bed.net.loss = 1.0
    bed.net.run_for(20 * NS_PER_S)
    assert c.mode is Mode.DISCONNECTED


def test_msg_id_never_zero():
    c = MqttSnClient(SimNetwork(), "node")
    c._next_msg_id = 0xFFFE
    assert [c._next_id() for _ in range(3)] == [0xFFFF, 1, 2]


def test_transmissions_bounded_under_total_loss(bed):
    c = bed.client("node", "WASM")
    tid = c.register("t")
    bed.net.loss = 1.0
    with pytest.raises(Timeout):
        c.publish(tid, 1, b"x")
    pubs = [d for d in bed.net.sent("node") if decode(d.data).TYPE == MsgType.PUBLISH]
    assert len(pubs) == 3 <= 4
