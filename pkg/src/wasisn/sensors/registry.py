"""Sensor registry implementing the five sensor-interface primitives.

All driver work runs on one worker thread.  Requests queue FIFO in front of
it, which both serializes multi-tenant access and keeps drivers single
threaded.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor

from ..clock import MonotonicClock
from ..errors import (
    BufferTooSmall,
    Busy,
    IllegalTransition,
    NotFound,
    ReadOnly,
    SensorSleeping,
    SensorStopped,
)
from .drivers import make_driver
from .model import (
    LEGAL_TRANSITIONS,
    UNIVERSAL_ATTRIBUTES,
    Reading,
    SensorDescriptor,
    SensorState,
)

logger = logging.getLogger(__name__)


class _Slot:
    def __init__(self, descriptor, driver, defaults):
        self.descriptor = descriptor
        self.driver = driver
        self.defaults = defaults
        self.values = {}
        self.owners = set()
        self.history = [descriptor.state]


class SensorRegistry:
    def __init__(self, clock=None, truncate_capabilities=True, truncate_attributes=False):
        self.clock = clock or MonotonicClock()
        self.truncate_capabilities = truncate_capabilities
        self.truncate_attributes = truncate_attributes
        self._slots = {}
        self._lock = threading.RLock()
        self._worker = ThreadPoolExecutor(max_workers=1, thread_name_prefix="sensor-worker")

    @classmethod
    def from_config(cls, cfg, clock=None):
        registry = cls(
            clock=clock,
            truncate_capabilities=cfg.truncate_capabilities,
            truncate_attributes=cfg.truncate_attributes,
        )
        for entry in cfg.sensors:
            driver = make_driver(entry.driver, seed=entry.seed, access_ns=entry.access_ns)
            registry.add(entry.id, driver, entry.attributes)
        return registry

    def add(self, sensor_id, driver, defaults=None):
        with self._lock:
            if sensor_id in self._slots:
                raise ValueError(f"duplicate sensor id {sensor_id!r}")
            descriptor = SensorDescriptor(
                sensor_id, driver.capabilities, driver.attribute_specs
            )
            defaults = dict(defaults or {})
            for name in defaults:
                if descriptor.attribute(name) is None:
                    raise ValueError(f"{sensor_id}: no attribute {name!r}")
            self._slots[sensor_id] = _Slot(descriptor, driver, defaults)

    def close(self):
        self._worker.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # helpers

    def _slot(self, sensor_id):
        try:
            return self._slots[sensor_id]
        except KeyError:
            raise NotFound(f"no sensor {sensor_id!r}") from None

    def _run(self, fn, *args):
        return self._worker.submit(fn, *args).result()

    def _move(self, slot, new):
        old = slot.descriptor.state
        if (old, new) not in LEGAL_TRANSITIONS:
            raise IllegalTransition(f"{slot.descriptor.id}: {old.value} -> {new.value}")
        slot.descriptor.state = new
        slot.history.append(new)

    def _require_alive(self, slot):
        state = slot.descriptor.state
        if state is SensorState.STOPPED:
            raise SensorStopped(f"{slot.descriptor.id} is stopped")
        if state is SensorState.SLEEPING:
            raise SensorSleeping(f"{slot.descriptor.id} is sleeping")

    # inspection

    def get_sensors(self):
        return list(self._slots)

    def descriptor(self, sensor_id):
        return self._slot(sensor_id).descriptor

    def state(self, sensor_id):
        return self._slot(sensor_id).descriptor.state

    def history(self, sensor_id):
        return list(self._slot(sensor_id).history)

    def driver(self, sensor_id):
        return self._slot(sensor_id).driver

    def owners(self, sensor_id):
        return set(self._slot(sensor_id).owners)

    # registrations

    def register(self, sensor_id, owner):
        with self._lock:
            self._slot(sensor_id).owners.add(owner)

    def release(self, owner, sensor_id=None):
        with self._lock:
            slots = [self._slot(sensor_id)] if sensor_id else self._slots.values()
            for slot in slots:
                slot.owners.discard(owner)

    # primitives

    def turn_on(self, sensor_id):
        slot = self._slot(sensor_id)
        return self._run(self._turn_on, slot)

    def _turn_on(self, slot):
        if slot.descriptor.state is SensorState.STOPPED:
            now = self.clock.now()
            slot.driver.init(now)
            slot.values = {spec.name: spec.default for spec in slot.descriptor.attributes}
            slot.values.update(slot.defaults)
            for name, value in slot.values.items():
                slot.driver.configure(name, value, now)
            self._move(slot, SensorState.ALIVE)
            logger.debug("sensor %s on", slot.descriptor.id)
        elif slot.descriptor.state is SensorState.SLEEPING:
            self._move(slot, SensorState.ALIVE)
        return True

    def turn_off(self, sensor_id, owner=None):
        slot = self._slot(sensor_id)
        return self._run(self._turn_off, slot, owner)

    def _turn_off(self, slot, owner):
        with self._lock:
            others = slot.owners - {owner}
            if others:
                raise Busy(f"{slot.descriptor.id} has {len(others)} registered module(s)")
            slot.owners.discard(owner)
        state = slot.descriptor.state
        if state is SensorState.STOPPED:
            return True
        if state is SensorState.SLEEPING:
            self._move(slot, SensorState.ALIVE)
        slot.driver.deinit()
        self._move(slot, SensorState.STOPPED)
        return True

    def sleep(self, sensor_id):
        """Runtime-only: park an Alive sensor."""
        slot = self._slot(sensor_id)
        return self._run(self._park, slot, SensorState.SLEEPING)

    def wake(self, sensor_id):
        slot = self._slot(sensor_id)
        return self._run(self._park, slot, SensorState.ALIVE)

    def _park(self, slot, target):
        if slot.descriptor.state is not target:
            self._move(slot, target)
        return True

    def config(self, sensor_id, attribute, value):
        slot = self._slot(sensor_id)
        return self._run(self._config, slot, attribute, bytes(value))

    def _config(self, slot, attribute, raw):
        if attribute in UNIVERSAL_ATTRIBUTES:
            raise ReadOnly(f"{attribute} is maintained by the runtime")
        spec = slot.descriptor.attribute(attribute)
        if spec is None:
            raise NotFound(f"{slot.descriptor.id} has no attribute {attribute!r}")
        if not spec.writable:
            raise ReadOnly(f"{attribute} is read-only")
        self._require_alive(slot)
        value = spec.decode(raw)
        self._move(slot, SensorState.WORKING)
        try:
            slot.driver.configure(attribute, value, self.clock.now())
            slot.values[attribute] = value
        finally:
            self._move(slot, SensorState.ALIVE)
        return True

    def sample(self, sensor_id, name):
        """Current value of a capability or attribute as a Reading."""
        slot = self._slot(sensor_id)
        return self._run(self._sample, slot, name)

    def _sample(self, slot, name):
        desc = slot.descriptor
        if name not in desc.capabilities and name not in desc.attribute_names:
            raise NotFound(f"{desc.id} has no capability or attribute {name!r}")
        self._require_alive(slot)
        before = desc.state
        self._move(slot, SensorState.WORKING)
        try:
            if name in desc.capabilities:
                # modeled bus/conversion time; zero unless configured
                if slot.driver.access_ns:
                    self.clock.sleep(slot.driver.access_ns)
                value = slot.driver.sample(name, self.clock.now())
            elif name == "capabilities":
                value = "\n".join(desc.capabilities).encode("ascii")
            elif name == "attributes":
                value = "\n".join(desc.attribute_names).encode("ascii")
            elif name == "state":
                value = before.value.encode("ascii")
            else:
                value = desc.attribute(name).encode(slot.values[name])
        finally:
            self._move(slot, SensorState.ALIVE)
        return Reading(desc.id, name, value, self.clock.now())

    def read(self, sensor_id, name, buffer, length):
        """Copy the current value into ``buffer``; returns bytes written."""
        return self.read_into(sensor_id, name, buffer, length)[0]

    def read_into(self, sensor_id, name, buffer, length):
        """Like :meth:`read` but returns ``(written, full_length)``."""
        slot = self._slot(sensor_id)
        value = self.sample(sensor_id, name).value
        full = len(value)
        length = min(length, len(buffer))
        if length < full:
            is_capability = name in slot.descriptor.capabilities
            allowed = self.truncate_capabilities if is_capability else self.truncate_attributes
            if not allowed:
                raise BufferTooSmall(f"{name} needs {full} bytes, buffer has {length}")
            value = value[:length]
        buffer[: len(value)] = value
        return len(value), full
