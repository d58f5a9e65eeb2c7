import enum
import struct
from dataclasses import dataclass, field
from typing import Optional

from ..errors import BadEncoding, OutOfRange

UNIVERSAL_ATTRIBUTES = ("capabilities", "attributes", "state")


class SensorState(enum.Enum):
    ALIVE = "Alive"
    STOPPED = "Stopped"
    WORKING = "Working"
    SLEEPING = "Sleeping"


LEGAL_TRANSITIONS = frozenset({
    (SensorState.STOPPED, SensorState.ALIVE),
    (SensorState.ALIVE, SensorState.WORKING),
    (SensorState.WORKING, SensorState.ALIVE),
    (SensorState.ALIVE, SensorState.SLEEPING),
    (SensorState.SLEEPING, SensorState.ALIVE),
    (SensorState.ALIVE, SensorState.STOPPED),
})


class ValueKind(enum.Enum):
    INT64 = "int64"
    BYTES = "byteString"


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: ValueKind = ValueKind.INT64
    writable: bool = True
    range: Optional[tuple[int, int]] = None
    default: object = 0
    max_len: int = 64

    def decode(self, raw):
        """Validate a guest-supplied value and return it as a Python value."""
        raw = bytes(raw)
        if self.kind is ValueKind.INT64:
            if len(raw) != 8:
                raise BadEncoding(f"{self.name}: int64 needs 8 bytes, got {len(raw)}")
            value = struct.unpack("<q", raw)[0]
            if self.range is not None:
                lo, hi = self.range
                if not lo <= value <= hi:
                    raise OutOfRange(f"{self.name}={value} outside [{lo}, {hi}]")
            return value
        if len(raw) > self.max_len:
            raise OutOfRange(f"{self.name}: {len(raw)} bytes exceeds {self.max_len}")
        return raw

    def encode(self, value):
        if self.kind is ValueKind.INT64:
            return struct.pack("<q", value)
        return bytes(value)


def encode_int64(value):
    return struct.pack("<q", value)


@dataclass
class SensorDescriptor:
    id: str
    capabilities: tuple[str, ...]
    attributes: tuple[AttributeSpec, ...]
    state: SensorState = SensorState.STOPPED

    def __post_init__(self):
        if not self.id or not self.id.isascii():
            raise ValueError(f"sensor id must be non-empty ASCII: {self.id!r}")
        names = [a.name for a in self.attributes]
        if set(names) & set(self.capabilities):
            raise ValueError(f"{self.id}: capability and attribute names overlap")
        if set(names) & set(UNIVERSAL_ATTRIBUTES):
            raise ValueError(f"{self.id}: declared attribute shadows a universal attribute")
        if len(set(names)) != len(names) or len(set(self.capabilities)) != len(self.capabilities):
            raise ValueError(f"{self.id}: duplicate names")

    @property
    def attribute_names(self):
        return UNIVERSAL_ATTRIBUTES + tuple(a.name for a in self.attributes)

    def attribute(self, name):
        for spec in self.attributes:
            if spec.name == name:
                return spec
        return None


@dataclass(frozen=True)
class Reading:
    sensor_id: str
    name: str
    value: bytes
    timestamp: int = field(compare=False)
