"""The ``wasi_sn`` host-call table and the grant model behind it.

Every primitive takes and returns 32-bit integers.  Strings and buffers are
``(offset, length)`` pairs into the guest's linear memory.  Each entry
declares which arguments are input spans and output spans, so the
dispatcher can bounds-check all of them before any handler runs.

Grants are ``(resource glob, verb)`` pairs:

* sensor calls check ``/resources/<device>/<sensor>/<name>`` with the verbs
  ``read``, ``config``, ``turnOn`` and ``turnOff``; ``turnOn``/``turnOff``
  pass if any resource of that sensor carries the verb;
* ``register``/``publish`` check ``mqttsn:<topic>`` with ``publish``,
  ``subscribe``/``hasMessage``/``getMessage`` the same resource with
  ``subscribe`` (``register`` accepts either verb);
* session calls (start, searchGW, connect, sleep, awake) check ``mqttsn``
  with ``session``.  ``disconnect``, ``stop`` and ``getSensors`` only ever
  release or describe, so they are ungated.
"""

import fnmatch
from dataclasses import dataclass, field
from typing import Optional

NAMESPACE = "wasi_sn"

# fixed output area for searchGW, whose ABI carries no capacity argument
SEARCHGW_OUT_CAP = 64

SESSION_RESOURCE = "mqttsn"
SESSION_VERB = "session"


def topic_resource(name):
    return f"mqttsn:{name}"


@dataclass(frozen=True)
class HostCall:
    name: str
    params: tuple  # argument names, all i32
    inputs: tuple = ()  # (offset arg, length arg) spans read by the host
    outputs: tuple = ()  # (offset arg, length arg or int capacity) spans written
    verb: Optional[str] = None
    group: str = "sensor"

    @property
    def signature(self):
        return (("i32",) * len(self.params), ("i32",))


def _call(name, params, inputs=(), outputs=(), verb=None, group="sensor"):
    return HostCall(name, tuple(params.split()), tuple(inputs), tuple(outputs), verb, group)


HOST_CALLS = (
    _call("getSensors", "outOff cap", outputs=[("outOff", "cap")]),
    _call("turnOn", "idOff idLen", [("idOff", "idLen")], verb="turnOn"),
    _call("turnOff", "idOff idLen", [("idOff", "idLen")], verb="turnOff"),
    _call("config", "idOff idLen attrOff attrLen valOff valLen",
          [("idOff", "idLen"), ("attrOff", "attrLen"), ("valOff", "valLen")], verb="config"),
    _call("read", "idOff idLen nameOff nameLen bufOff bufLen",
          [("idOff", "idLen"), ("nameOff", "nameLen")], [("bufOff", "bufLen")], verb="read"),
    _call("start", "port", verb=SESSION_VERB, group="network"),
    _call("searchGW", "addrOff addrLen port maxHops outOff",
          [("addrOff", "addrLen")], [("outOff", SEARCHGW_OUT_CAP)], verb=SESSION_VERB, group="network"),
    _call("connect", "cidOff cidLen keepAlive gwOff gwLen port",
          [("cidOff", "cidLen"), ("gwOff", "gwLen")], verb=SESSION_VERB, group="network"),
    _call("register", "nameOff nameLen", [("nameOff", "nameLen")], verb="publish", group="network"),
    _call("publish", "topicId qos payOff payLen", [("payOff", "payLen")], verb="publish", group="network"),
    _call("subscribe", "topicId qos", verb="subscribe", group="network"),
    _call("hasMessage", "topicId", verb="subscribe", group="network"),
    _call("getMessage", "topicId bufOff bufLen", outputs=[("bufOff", "bufLen")],
          verb="subscribe", group="network"),
    _call("sleep", "duration", verb=SESSION_VERB, group="network"),
    _call("awake", "", verb=SESSION_VERB, group="network"),
    _call("disconnect", "", group="network"),
    _call("stop", "", group="network"),
)


class HostCallTable:
    def __init__(self, calls=HOST_CALLS, network=True):
        self._entries = {}
        for c in calls:
            if c.group == "network" and not network:
                continue
            if c.name in self._entries:
                raise ValueError(f"duplicate host call {c.name}")
            self._entries[c.name] = c

    def __getitem__(self, name):
        return self._entries[name]

    def get(self, name):
        return self._entries.get(name)

    def __contains__(self, name):
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)


@dataclass(frozen=True)
class Grants:
    """Immutable set of ``(resource glob, verb)`` pairs."""

    pairs: frozenset = field(default_factory=frozenset)

    @classmethod
    def of(cls, pairs=()):
        if isinstance(pairs, Grants):
            return pairs
        return cls(frozenset((str(r), str(v)) for r, v in pairs))

    @classmethod
    def everything(cls):
        verbs = ("read", "config", "turnOn", "turnOff", "publish", "subscribe")
        return cls.of([("*", v) for v in verbs] + [(SESSION_RESOURCE, SESSION_VERB)])

    def allows(self, resource, verb):
        return any(v == verb and fnmatch.fnmatchcase(resource, glob) for glob, v in self.pairs)

    def allows_any(self, resources, verb):
        return any(self.allows(r, verb) for r in resources)

    def without(self, *pairs):
        return Grants(self.pairs - {(str(r), str(v)) for r, v in pairs})

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))


def grants_for(authority, uii, extra=()):
    """Grants a module authored by ``uii`` holds on ``authority``'s device.

    Live key grants contribute their resource and verbs; policy rules whose
    resource is not a device resource (``mqttsn...``) apply directly.
    """
    from ..acl.hierarchy import as_uii

    uii = as_uii(uii)
    pairs = set(Grants.of(extra).pairs)
    for (canonical, resource), grant in authority.grants.items():
        if canonical != uii.canonical:
            continue
        for verb in grant.verbs:
            if authority.permitted(uii, resource, verb):
                pairs.add((resource, verb))
    for rule in authority.policy.rules:
        if rule.resource.startswith("/resources/"):
            continue
        if fnmatch.fnmatchcase(uii.canonical, rule.uii):
            pairs.update((rule.resource, v) for v in rule.verbs)
    return Grants(frozenset(pairs))
