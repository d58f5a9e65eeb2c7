"""Resource URIs, requester identities (UIIs) and their WKD-IBE patterns.

One path component occupies one pattern slot.  The first ``identity_slots``
slots hold the UII, the next four hold the resource URI, and any slots left
over are padding.
"""

from dataclasses import dataclass, field

from ..crypto.wkdibe import EMPTY, Pattern, WILDCARD
from ..errors import ParseError, TooDeep

RESOURCE_ROOT = "resources"
ENTITY_ROOT = "entity"
NULL_USER = "NULL"
DEFAULT_IDENTITY_SLOTS = 4
TOPIC_SUFFIXES = ("request", "issue", "ret")


def _split(text, what):
    if not isinstance(text, str) or not text.startswith("/"):
        raise ParseError(f"{what} must start with '/': {text!r}")
    parts = text[1:].split("/")
    if any(p == "" for p in parts):
        raise ParseError(f"{what} has an empty component: {text!r}")
    return parts


@dataclass(frozen=True)
class ResourceURI:
    device: str
    sensor: str
    name: str

    def __post_init__(self):
        for c in self.components:
            if not c or "/" in c or "*" in c or "+" in c or "#" in c:
                raise ParseError(f"invalid resource component {c!r}")

    @classmethod
    def parse(cls, text):
        parts = _split(text, "resource URI")
        if len(parts) != 4 or parts[0] != RESOURCE_ROOT:
            raise ParseError(f"resource URI must be /resources/<device>/<sensor>/<name>: {text!r}")
        return cls(*parts[1:])

    @property
    def components(self):
        return (RESOURCE_ROOT, self.device, self.sensor, self.name)

    def __str__(self):
        return "/" + "/".join(self.components)


@dataclass(frozen=True)
class EntityUII:
    """``/entity/<location...>/<requester>/<delegated>``.

    The three-component form ``/entity/<location>/<requester>`` is accepted
    as shorthand for an undelegated identity and keeps its textual form.
    """

    location: tuple
    requester: str
    delegated: str = NULL_USER
    text: str = field(default=None, compare=False)

    def __post_init__(self):
        if not self.location:
            raise ParseError("a UII needs at least one location component")
        for c in self.components:
            if not c or "/" in c or "*" in c or ";" in c:
                raise ParseError(f"invalid UII component {c!r}")

    @classmethod
    def parse(cls, text):
        parts = _split(text, "UII")
        if parts[0] != ENTITY_ROOT:
            raise ParseError(f"UII must start with /{ENTITY_ROOT}: {text!r}")
        if len(parts) == 3:
            return cls((parts[1],), parts[2], NULL_USER, text=text)
        if len(parts) < 4:
            raise ParseError(f"UII needs at least 4 components: {text!r}")
        return cls(tuple(parts[1:-2]), parts[-2], parts[-1], text=text)

    @property
    def components(self):
        return (ENTITY_ROOT, *self.location, self.requester, self.delegated)

    @property
    def canonical(self):
        return "/" + "/".join(self.components)

    @property
    def delegating(self):
        return self.delegated != NULL_USER

    def __str__(self):
        return self.text or self.canonical


def as_uii(value):
    return value if isinstance(value, EntityUII) else EntityUII.parse(value)


def as_resource(value):
    return value if isinstance(value, ResourceURI) else ResourceURI.parse(value)


def group_components(group):
    """Components of a group UII such as ``/entity/Loc1/*``; None marks the wildcard."""
    if isinstance(group, EntityUII):
        return list(group.components), False
    if isinstance(group, (tuple, list)):
        return [str(c) for c in group], True
    parts = _split(group, "group UII")
    if parts[0] != ENTITY_ROOT:
        raise ParseError(f"group UII must start with /{ENTITY_ROOT}: {group!r}")
    if parts[-1] == "*":
        parts = parts[:-1]
        if "*" in parts:
            raise ParseError("only a trailing '*' is allowed in a group UII")
        return parts, True
    if "*" in parts:
        raise ParseError("only a trailing '*' is allowed in a group UII")
    return parts, False


def build_encryption_pattern(group, resource, L, identity_slots=DEFAULT_IDENTITY_SLOTS):
    """Pattern for encrypting to every identity under ``group``.

    A trailing ``*`` (or a tuple prefix) opens all remaining identity slots;
    a full UII fixes them, padding with the empty sentinel.
    """
    resource = as_resource(resource)
    comps, open_tail = group_components(group)
    if L < identity_slots + 4:
        raise TooDeep(f"L={L} cannot hold {identity_slots} identity slots and a resource")
    if len(comps) > identity_slots:
        raise TooDeep(f"{len(comps)} identity components exceed {identity_slots} slots")
    pad = WILDCARD if open_tail else EMPTY
    ident = list(comps) + [pad] * (identity_slots - len(comps))
    slots = ident + list(resource.components)
    return Pattern.of(*slots, length=L, pad=None)


def key_pattern(uii, resource, L, identity_slots=DEFAULT_IDENTITY_SLOTS):
    """Fully fixed pattern for one requester's key on one resource."""
    uii = as_uii(uii)
    resource = as_resource(resource)
    comps = uii.components
    if L < identity_slots + 4:
        raise TooDeep(f"L={L} cannot hold {identity_slots} identity slots and a resource")
    if len(comps) > identity_slots:
        raise TooDeep(f"UII {uii} has {len(comps)} components, only {identity_slots} slots")
    slots = list(comps) + [EMPTY] * (identity_slots - len(comps)) + list(resource.components)
    return Pattern.of(*slots, length=L, pad=EMPTY)


def request_topics(resource):
    base = str(as_resource(resource))
    return {kind: f"{base}/{kind}" for kind in TOPIC_SUFFIXES}


def parse_topic(topic):
    """Split ``<resource>/<kind>`` into (ResourceURI, kind); bare resource topics give kind None."""
    parts = _split(topic, "topic")
    if len(parts) == 5 and parts[-1] in TOPIC_SUFFIXES:
        return ResourceURI.parse("/" + "/".join(parts[:4])), parts[-1]
    if len(parts) == 4:
        return ResourceURI.parse(topic), None
    raise ParseError(f"not a resource topic: {topic!r}")


def device_topic_filter(device_id):
    return f"/{RESOURCE_ROOT}/{device_id}/#"
