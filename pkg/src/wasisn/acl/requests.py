"""Request payload grammar: ``<verb[|params]>;<UII>;<public key armor>``."""

from dataclasses import dataclass

from ..errors import ParseError
from .hierarchy import EntityUII, as_uii

VERBS = ("read", "config", "turnOn", "turnOff")


@dataclass(frozen=True)
class AccessRequest:
    verb: str
    requester: EntityUII
    public_key: str
    params: tuple = ()

    def __post_init__(self):
        if self.verb not in VERBS:
            raise ParseError(f"unknown verb {self.verb!r}")
        if self.verb == "config":
            if len(self.params) != 2 or not all(self.params):
                raise ParseError("config takes exactly sensorId,attribute")
        elif self.params:
            raise ParseError(f"{self.verb} takes no parameters")
        for p in self.params:
            if any(ch in p for ch in ";|,"):
                raise ParseError(f"illegal character in parameter {p!r}")
        if not self.public_key or ";" in self.public_key:
            raise ParseError("public key armor must be non-empty and contain no ';'")

    @classmethod
    def parse(cls, payload):
        if isinstance(payload, (bytes, bytearray)):
            try:
                payload = bytes(payload).decode("utf-8")
            except UnicodeDecodeError:
                raise ParseError("request payload is not UTF-8") from None
        fields = payload.split(";")
        if len(fields) != 3:
            raise ParseError(f"request payload needs 3 ';'-separated fields, got {len(fields)}")
        verb_field, uii, pk = fields
        verb, sep, params = verb_field.partition("|")
        if sep and not params:
            raise ParseError("empty verb parameters")
        return cls(verb, as_uii(uii), pk, tuple(params.split(",")) if sep else ())

    def format(self):
        verb = self.verb + ("|" + ",".join(self.params) if self.params else "")
        return f"{verb};{self.requester};{self.public_key}"

    def __str__(self):
        return self.format()
