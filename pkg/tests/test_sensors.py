import struct

import pytest
from hypothesis import given, settings, strategies as st

from wasisn.clock import SimClock
from wasisn.config import DeviceConfig, SensorEntry
from wasisn.errors import (
    BadEncoding,
    BufferTooSmall,
    Busy,
    NotFound,
    OutOfRange,
    ReadOnly,
    SensorNotAlive,
    SensorStopped,
)
from wasisn.sensors import SensorRegistry, SensorState, encode_int64
from wasisn.sensors.model import LEGAL_TRANSITIONS


def make_registry(ids=("BME280", "CCS811"), clock=None, **kw):
    drivers = {"BME280": "bme280", "CCS811": "ccs811", "LCD": "bme280"}
    cfg = DeviceConfig(
        sensors=[SensorEntry(i, drivers.get(i, "bme280"), seed=n) for n, i in enumerate(ids)],
        **kw,
    )
    return SensorRegistry.from_config(cfg, clock=clock or SimClock())


@pytest.fixture
def reg():
    r = make_registry()
    yield r
    r.close()


def test_get_sensors_configuration_order():
    with make_registry() as r:
        assert r.get_sensors() == ["BME280", "CCS811"]
    with make_registry(ids=()) as r:
        assert r.get_sensors() == []
    with make_registry(ids=("LCD", "BME280")) as r:
        assert r.get_sensors() == ["LCD", "BME280"]


def test_turn_on_idempotent(reg):
    assert reg.state("BME280") is SensorState.STOPPED
    assert reg.turn_on("BME280") is True
    assert reg.state("BME280") is SensorState.ALIVE
    assert reg.turn_on("BME280") is True
    assert reg.driver("BME280").init_count == 1


def test_turn_on_unknown(reg):
    with pytest.raises(NotFound):
        reg.turn_on("NOPE")


def test_turn_off(reg):
    reg.turn_on("BME280")
    assert reg.turn_off("BME280") is True
    assert reg.state("BME280") is SensorState.STOPPED
    assert reg.turn_off("BME280") is True
    assert reg.driver("BME280").deinit_count == 1


def test_turn_off_busy_with_other_module(reg):
    reg.turn_on("BME280")
    reg.register("BME280", "moduleA")
    with pytest.raises(Busy):
        reg.turn_off("BME280", owner="moduleB")
    assert reg.state("BME280") is SensorState.ALIVE
    # the sole registered module may turn it off itself
    assert reg.turn_off("BME280", owner="moduleA")


def test_config_samp_rate(reg):
    reg.turn_on("BME280")
    assert reg.config("BME280", "SampRate", encode_int64(1_000_000_000))
    buf = bytearray(8)
    assert reg.read("BME280", "SampRate", buf, 8) == 8
    assert struct.unpack("<q", buf)[0] == 1_000_000_000
    assert reg.history("BME280")[-2:] == [SensorState.WORKING, SensorState.ALIVE]


def test_config_errors(reg):
    reg.turn_on("BME280")
    with pytest.raises(ReadOnly):
        reg.config("BME280", "state", b"Alive")
    with pytest.raises(OutOfRange):
        reg.config("BME280", "SampRate", encode_int64(-5))
    with pytest.raises(BadEncoding):
        reg.config("BME280", "SampRate", b"\x01\x02")
    with pytest.raises(NotFound):
        reg.config("BME280", "Nope", encode_int64(1))
    with pytest.raises(NotFound):
        reg.config("NOPE", "SampRate", encode_int64(1))


def test_config_requires_alive(reg):
    with pytest.raises(SensorStopped):
        reg.config("BME280", "SampRate", encode_int64(5))
    reg.turn_on("BME280")
    reg.sleep("BME280")
    with pytest.raises(SensorNotAlive):
        reg.config("BME280", "SampRate", encode_int64(5))


def test_read_humidity_four_bytes(reg):
    reg.turn_on("BME280")
    buf = bytearray(4)
    assert reg.read("BME280", "humidity", buf, 4) == 4
    value = struct.unpack("<i", buf)[0]
    assert 0 <= value <= 10000


def test_read_universal_attributes(reg):
    reg.turn_on("BME280")
    buf = bytearray(128)
    n = reg.read("BME280", "capabilities", buf, len(buf))
    assert bytes(buf[:n]) == b"temperature\nhumidity\npressure"
    n = reg.read("BME280", "attributes", buf, len(buf))
    assert bytes(buf[:n]).split(b"\n") == [b"capabilities", b"attributes", b"state",
                                          b"SampRate", b"Oversampling"]
    n = reg.read("BME280", "state", buf, len(buf))
    assert bytes(buf[:n]) == b"Alive"


def test_read_stopped(reg):
    with pytest.raises(SensorStopped):
        reg.read("BME280", "humidity", bytearray(4), 4)


def test_short_buffer_policy(reg):
    reg.turn_on("BME280")
    buf = bytearray(2)
    assert reg.read("BME280", "temperature", buf, 2) == 2
    with pytest.raises(BufferTooSmall):
        reg.read("BME280", "capabilities", buf, 2)
    with make_registry(truncate_attributes=True) as r:
        r.turn_on("BME280")
        assert r.read("BME280", "capabilities", buf, 2) == 2
        assert bytes(buf) == b"te"


def test_deterministic_walk():
    def trace():
        clock = SimClock()
        with make_registry(clock=clock) as r:
            r.turn_on("BME280")
            out = []
            for _ in range(20):
                clock.advance(1_500_000_000)
                out.append(r.sample("BME280", "temperature").value)
            return out

    assert trace() == trace()


@given(
    rate=st.integers(min_value=1_000, max_value=10**10),
    span=st.integers(min_value=0, max_value=10**12),
)
@settings(max_examples=200, deadline=None)
def test_sampling_rate_property(rate, span):
    clock = SimClock(start=12345)
    with make_registry(ids=("BME280",), clock=clock) as r:
        r.turn_on("BME280")
        r.config("BME280", "SampRate", encode_int64(rate))
        drv = r.driver("BME280")
        before = drv.samples_taken
        clock.advance(span)
        r.sample("BME280", "temperature")
        taken = drv.samples_taken - before
        assert abs(taken - span // rate) <= 1


OPS = st.sampled_from(["on", "off", "read", "config", "sleep", "wake", "badconfig"])


@given(st.lists(OPS, max_size=40))
@settings(max_examples=150, deadline=None)
def test_state_machine_fuzz(ops):
    with make_registry(ids=("BME280",)) as r:
        for op in ops:
            try:
                if op == "on":
                    r.turn_on("BME280")
                elif op == "off":
                    r.turn_off("BME280")
                elif op == "read":
                    r.read("BME280", "temperature", bytearray(4), 4)
                elif op == "config":
                    r.config("BME280", "SampRate", encode_int64(1000))
                elif op == "badconfig":
                    r.config("BME280", "SampRate", encode_int64(0))
                elif op == "sleep":
                    r.sleep("BME280")
                elif op == "wake":
                    r.wake("BME280")
            except (SensorNotAlive, OutOfRange):
                pass
            except Exception as exc:  # IllegalTransition from runtime-only ops
                assert op in ("sleep", "wake"), exc
        hist = r.history("BME280")
        assert hist[0] is SensorState.STOPPED
        for a, b in zip(hist, hist[1:]):
            assert (a, b) in LEGAL_TRANSITIONS


def test_attributes_listing_invariant(reg):
    for sid in reg.get_sensors():
        reg.turn_on(sid)
        desc = reg.descriptor(sid)
        buf = bytearray(256)
        n = reg.read(sid, "attributes", buf, 256)
        listed = bytes(buf[:n]).decode().split("\n")
        assert set(listed) == {"capabilities", "attributes", "state"} | {a.name for a in desc.attributes}


@given(st.integers(min_value=1, max_value=10**12))
@settings(max_examples=50, deadline=None)
def test_config_then_read_roundtrip(value):
    with make_registry(ids=("BME280",)) as r:
        r.turn_on("BME280")
        r.config("BME280", "SampRate", encode_int64(value))
        assert r.sample("BME280", "SampRate").value == encode_int64(value)


def test_fifo_queue_serializes_threads(reg):
    import threading

    reg.turn_on("BME280")
    errors = []

    def worker():
        try:
            for _ in range(50):
                reg.read("BME280", "pressure", bytearray(4), 4)
        except Exception as exc:
            errors.append(exc)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    hist = reg.history("BME280")
    for a, b in zip(hist, hist[1:]):
        assert (a, b) in LEGAL_TRANSITIONS
