from .drivers import DRIVERS, VirtualBME280, VirtualCCS811, make_driver
from .model import (
    UNIVERSAL_ATTRIBUTES,
    AttributeSpec,
    Reading,
    SensorDescriptor,
    SensorState,
    ValueKind,
    encode_int64,
)
from .registry import SensorRegistry

__all__ = [
    "DRIVERS",
    "UNIVERSAL_ATTRIBUTES",
    "AttributeSpec",
    "Reading",
    "SensorDescriptor",
    "SensorRegistry",
    "SensorState",
    "ValueKind",
    "VirtualBME280",
    "VirtualCCS811",
    "encode_int64",
    "make_driver",
]
