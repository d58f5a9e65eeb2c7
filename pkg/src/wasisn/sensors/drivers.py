"""Virtual sensor drivers.

Drivers produce deterministic pseudo-random walks from a seed.  A driver
takes one sample per ``SampRate`` nanoseconds of the clock it is bound to;
reads return the most recent sample.
"""

import math
import random
import struct

from .model import AttributeSpec, ValueKind

# walks longer than this between two reads collapse into one gaussian jump
_MAX_ITERATED_STEPS = 64

SAMP_RATE = AttributeSpec("SampRate", ValueKind.INT64, True, (1, 10**12), 1_000_000_000)


class Channel:
    """One int32 capability following a clamped random walk."""

    def __init__(self, name, start, step, lo, hi):
        self.name = name
        self.start = start
        self.step = step
        self.lo = lo
        self.hi = hi
        self.value = start

    def walk(self, rng, steps):
        if steps <= 0:
            return
        if steps <= _MAX_ITERATED_STEPS:
            for _ in range(steps):
                self.value += rng.gauss(0.0, self.step)
                self.value = min(max(self.value, self.lo), self.hi)
        else:
            self.value += rng.gauss(0.0, self.step * math.sqrt(steps))
            self.value = min(max(self.value, self.lo), self.hi)

    def encoded(self):
        return struct.pack("<i", int(round(self.value)))


class VirtualDriver:
    """Base class; subclasses declare channels and extra attributes."""

    kind = "virtual"
    width = 4
    extra_attributes = ()

    def __init__(self, seed=0, access_ns=0):
        self.seed = seed
        self.access_ns = access_ns
        self.init_count = 0
        self.deinit_count = 0
        self.samples_taken = 0
        self.initialized = False
        self._rng = random.Random(seed)
        self._channels = {c.name: c for c in self.make_channels()}
        self._rate = SAMP_RATE.default
        self._next_sample = None
        self.attribute_values = {}

    # subclass hooks
    def make_channels(self):
        raise NotImplementedError

    @property
    def capabilities(self):
        return tuple(self._channels)

    @property
    def attribute_specs(self):
        return (SAMP_RATE,) + tuple(self.extra_attributes)

    def init(self, now):
        self.init_count += 1
        self.initialized = True
        self._rng = random.Random(self.seed)
        for channel in self._channels.values():
            channel.value = channel.start
        self.samples_taken = 0
        self._next_sample = now

    def deinit(self):
        self.deinit_count += 1
        self.initialized = False
        self._next_sample = None

    def configure(self, name, value, now):
        if name == "SampRate" and self._next_sample is None:
            self._rate = value
        elif name == "SampRate":
            self.advance(now)
            last = self._next_sample - self._rate
            self._rate = value
            self._next_sample = max(last + value, now)
        self.attribute_values[name] = value

    def advance(self, now):
        """Take every sample that falls due up to ``now``."""
        if self._next_sample is None or now < self._next_sample:
            return 0
        due = (now - self._next_sample) // self._rate + 1
        for channel in self._channels.values():
            channel.walk(self._rng, due)
        self.samples_taken += due
        self._next_sample += due * self._rate
        return due

    def sample(self, name, now):
        self.advance(now)
        return self._channels[name].encoded()


class VirtualBME280(VirtualDriver):
    """Temperature (0.01 degC), humidity (0.01 %RH) and pressure (Pa), all int32."""

    kind = "bme280"
    extra_attributes = (
        AttributeSpec("Oversampling", ValueKind.INT64, True, (0, 5), 1),
    )

    def make_channels(self):
        return [
            Channel("temperature", 2150, 2.0, -4000, 8500),
            Channel("humidity", 4500, 5.0, 0, 10000),
            Channel("pressure", 101325, 3.0, 30000, 110000),
        ]


class VirtualCCS811(VirtualDriver):
    """Equivalent CO2 (ppm) and total VOC (ppb), int32."""

    kind = "ccs811"
    extra_attributes = (
        AttributeSpec("DriveMode", ValueKind.INT64, True, (0, 4), 1),
    )

    def make_channels(self):
        return [
            Channel("CO2", 400, 3.0, 400, 8192),
            Channel("VOC", 0, 1.0, 0, 1187),
        ]


DRIVERS = {
    "bme280": VirtualBME280,
    "ccs811": VirtualCCS811,
}


def make_driver(kind, seed=0, access_ns=0):
    try:
        cls = DRIVERS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown driver {kind!r}; known: {sorted(DRIVERS)}") from None
    return cls(seed=seed, access_ns=access_ns)
