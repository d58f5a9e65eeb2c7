"""Guest runtime: lifecycle stages, grant-checked host calls, stage timing.

A :class:`WasmRuntime` owns one engine and any number of module instances.
Each instance walks the stages in order::

    RuntimeInit -> Loaded -> Inited -> ExecEnvCreated -> Running -> Deinited -> Destroyed

and records the elapsed clock time of every stage.  On a simulated clock the
:class:`CostModel` charges a deterministic cost per stage and per host call,
so timings are reproducible; on the monotonic clock the cost model is inert
and timings are measured.
"""

import enum
import itertools
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from typing import Optional

from ..acl.modules import SignedModule, verify_module
from ..clock import MonotonicClock, NS_PER_MS
from ..errors import (
    AlreadyStarted,
    BadEncoding,
    GuestTrap,
    LifecycleError,
    NotStarted,
    OutOfRange,
    PermissionDenied,
    UnknownTopicId,
    WasiSnError,
)
from ..mqttsn.client import MqttSnClient
from .abi import (
    NAMESPACE,
    SESSION_RESOURCE,
    SESSION_VERB,
    Grants,
    HostCallTable,
    grants_for,
    topic_resource,
)
from .engine import WasmtimeBackend

logger = logging.getLogger(__name__)

U32 = 0xFFFFFFFF
PAGE = 65536


class Stage(enum.Enum):
    RUNTIME_INIT = "RuntimeInit"
    LOADED = "Loaded"
    INITED = "Inited"
    EXEC_ENV_CREATED = "ExecEnvCreated"
    RUNNING = "Running"
    DEINITED = "Deinited"
    DESTROYED = "Destroyed"


STAGES = tuple(Stage)

# stage -> name of the lifecycle step that produces it
STEP_NAMES = {
    Stage.RUNTIME_INIT: "runtime_init",
    Stage.LOADED: "load_module",
    Stage.INITED: "init_module",
    Stage.EXEC_ENV_CREATED: "create_exec_env",
    Stage.RUNNING: "call_main",
    Stage.DEINITED: "deinit_module",
    Stage.DESTROYED: "destroy_runtime",
}


@dataclass
class CostModel:
    """Simulated-clock charges in nanoseconds."""

    runtime_init_ns: int = 2_000_000
    per_native_ns: int = 20_000
    verify_ns: int = 400_000
    load_per_byte_ns: int = 40
    init_base_ns: int = 150_000
    init_per_import_ns: int = 5_000
    exec_env_base_ns: int = 250_000
    exec_env_per_page_ns: int = 2_000
    call_main_ns: int = 20_000
    host_call_ns: int = 4_000
    poll_ns: int = NS_PER_MS
    deinit_base_ns: int = 60_000
    destroy_ns: int = 400_000

    @classmethod
    def zero(cls):
        return cls(**{f.name: 0 for f in fields(cls)})


@dataclass
class ModuleInstance:
    runtime: "WasmRuntime"
    module_bytes: bytes
    author: object
    grants: Grants
    token: str
    stage: Stage = Stage.RUNTIME_INIT
    stage_timings: dict = field(default_factory=dict)
    compiled: object = None
    guest: object = None
    client: Optional[MqttSnClient] = None
    host_calls: int = 0
    result: Optional[int] = None
    trap: Optional[dict] = None

    @property
    def linear_memory(self):
        return self.guest.memory() if self.guest is not None else None

    def memory_bytes(self):
        mem = self.linear_memory
        return mem.read(0, mem.size()) if mem is not None else b""

    def total_ns(self):
        return sum(self.stage_timings.values())

    def timings_by_step(self):
        return {STEP_NAMES[s]: self.stage_timings[s] for s in STAGES if s in self.stage_timings}


class WasmRuntime:
    def __init__(self, sensors=None, network=None, clock=None, device_id="device01",
                 host="device", pkg=None, device_identity=None, authority=None,
                 network_enabled=True, cost=None, backend_factory=WasmtimeBackend,
                 client_config=None):
        self.sensors = sensors
        self.network = network
        self.clock = clock or getattr(network, "clock", None) or getattr(sensors, "clock", None) \
            or MonotonicClock()
        self.device_id = device_id
        self.host = host
        self.pkg = pkg
        self.device_identity = device_identity
        self.authority = authority
        self.cost = cost or CostModel()
        self.backend_factory = backend_factory
        self.client_config = client_config
        self.table = HostCallTable(network=network_enabled and network is not None)
        self.stage = None
        self.backend = None
        self.instances = []
        self.timings = {}
        self.events = []
        self._tokens = itertools.count(1)

    # plumbing

    def _charge(self, ns):
        if ns:
            self.clock.advance(ns)

    @contextmanager
    def _timed(self, inst, stage, cost):
        t0 = self.clock.now()
        self._charge(cost)
        yield
        dt = self.clock.now() - t0
        if inst is None:
            self.timings[stage] = dt
        else:
            inst.stage_timings[stage] = dt

    def _event(self, kind, inst=None, **data):
        event = {"event": kind, **data}
        if inst is not None:
            event["module"] = inst.token
            if inst.author is not None:
                event["author"] = str(inst.author)
        self.events.append(event)
        logger.warning(json.dumps(event, sort_keys=True, default=str))
        return event

    @staticmethod
    def _advance(inst, expected, target):
        if inst.stage is not expected:
            raise LifecycleError(
                f"{target.value} requires {expected.value}, instance is {inst.stage.value}")

    def _require_runtime(self):
        if self.stage is not Stage.RUNTIME_INIT:
            state = self.stage.value if self.stage else "uninitialised"
            raise LifecycleError(f"runtime is {state}")

    # lifecycle

    def runtime_init(self):
        if self.stage is not None:
            raise LifecycleError(f"runtime already {self.stage.value}")
        with self._timed(None, Stage.RUNTIME_INIT,
                         self.cost.runtime_init_ns + self.cost.per_native_ns * len(self.table)):
            self.backend = self.backend_factory()
        self.stage = Stage.RUNTIME_INIT
        return self

    def load_module(self, signed, grants=None):
        """Verify and compile a signed module; returns a Loaded instance."""
        self._require_runtime()
        if self.pkg is None or self.device_identity is None:
            raise LifecycleError("runtime has no PKG registry or device identity")
        if isinstance(signed, (bytes, bytearray)):
            signed = SignedModule.from_bytes(bytes(signed))
        token = f"m{next(self._tokens)}"
        t0 = self.clock.now()
        self._charge(self.cost.verify_ns)
        try:
            code, author = verify_module(self.pkg, self.device_identity, signed)
        except WasiSnError as exc:
            self._event("verify_failed", None, module=token, author=signed.author,
                        reason=type(exc).__name__)
            raise
        self._charge(self.cost.load_per_byte_ns * len(code))
        try:
            compiled = self.backend.compile(code)
        except ValueError as exc:
            self._event("load_failed", None, module=token, reason=str(exc))
            raise LifecycleError(str(exc)) from exc
        if grants is None:
            grants = grants_for(self.authority, author) if self.authority is not None else Grants()
        inst = ModuleInstance(self, code, author, Grants.of(grants), token)
        inst.stage_timings[Stage.RUNTIME_INIT] = self.timings.get(Stage.RUNTIME_INIT, 0)
        inst.compiled = compiled
        inst.stage_timings[Stage.LOADED] = self.clock.now() - t0
        inst.stage = Stage.LOADED
        self.instances.append(inst)
        return inst

    def init_module(self, inst):
        self._require_runtime()
        self._advance(inst, Stage.LOADED, Stage.INITED)
        imports = inst.compiled.imports
        with self._timed(inst, Stage.INITED,
                         self.cost.init_base_ns + self.cost.init_per_import_ns * len(imports)):
            inst.guest = self.backend.instantiate(inst.compiled, self._host_functions(inst))
        inst.stage = Stage.INITED
        return inst

    def create_exec_env(self, inst):
        self._require_runtime()
        self._advance(inst, Stage.INITED, Stage.EXEC_ENV_CREATED)
        mem = inst.linear_memory
        pages = mem.size() // PAGE if mem is not None else 0
        with self._timed(inst, Stage.EXEC_ENV_CREATED,
                         self.cost.exec_env_base_ns + self.cost.exec_env_per_page_ns * pages):
            if not ({"main", "_start"} & set(inst.compiled.exports)):
                raise LifecycleError("module exports neither main nor _start")
        inst.stage = Stage.EXEC_ENV_CREATED
        return inst

    def call_main(self, inst):
        """Run the entry point; a trap raises :class:`GuestTrap` with ``.report``."""
        self._require_runtime()
        self._advance(inst, Stage.EXEC_ENV_CREATED, Stage.RUNNING)
        entry = "main" if "main" in inst.compiled.exports else "_start"
        inst.stage = Stage.RUNNING
        trap = None
        with self._timed(inst, Stage.RUNNING, self.cost.call_main_ns):
            try:
                result = inst.guest.call(entry)
            except GuestTrap as exc:
                trap = exc
        if trap is not None:
            inst.trap = self._event("trap", inst, function=entry, message=str(trap))
            trap.report = inst.trap
            raise trap
        inst.result = 0 if result is None else int(result)
        return inst.result

    def call(self, inst, export, *args):
        """Invoke any export of a Running (or ready) instance, untimed."""
        if inst.stage is Stage.EXEC_ENV_CREATED:
            inst.stage = Stage.RUNNING
        if inst.stage is not Stage.RUNNING:
            raise LifecycleError(f"cannot call into a {inst.stage.value} instance")
        try:
            return inst.guest.call(export, *args)
        except GuestTrap as exc:
            exc.report = self._event("trap", inst, function=export, message=str(exc))
            raise

    def deinit_module(self, inst):
        if inst.stage in (Stage.DEINITED, Stage.DESTROYED):
            raise LifecycleError(f"instance already {inst.stage.value}")
        if inst.stage is Stage.RUNTIME_INIT:
            raise LifecycleError("instance was never loaded")
        with self._timed(inst, Stage.DEINITED, self.cost.deinit_base_ns):
            if self.sensors is not None:
                self.sensors.release(inst.token)
            if inst.client is not None:
                inst.client.stop()
                inst.client = None
            if inst.guest is not None:
                inst.guest.close()
            inst.guest = None
        inst.stage = Stage.DEINITED
        return inst

    def destroy_runtime(self):
        self._require_runtime()
        for inst in self.instances:
            if inst.stage is not Stage.DEINITED:
                self.deinit_module(inst)
        with self._timed(None, Stage.DESTROYED, self.cost.destroy_ns):
            self.backend.close()
            self.backend = None
        for inst in self.instances:
            inst.stage_timings[Stage.DESTROYED] = self.timings[Stage.DESTROYED]
            inst.stage = Stage.DESTROYED
        self.stage = Stage.DESTROYED

    def run(self, signed, grants=None):
        """load, init, create exec env and call main; returns the instance."""
        inst = self.load_module(signed, grants)
        self.init_module(inst)
        self.create_exec_env(inst)
        self.call_main(inst)
        return inst

    # host calls

    def _host_functions(self, inst):
        out = {}
        for spec in inst.compiled.imports:
            if spec.module != NAMESPACE:
                continue
            call = self.table.get(spec.name)
            if call is None or (spec.params, spec.results) != call.signature:
                continue
            out[(spec.module, spec.name)] = self._bind(inst, call)
        return out

    def _bind(self, inst, call):
        handler = getattr(self, f"_h_{call.name}")

        def host_function(mem, *args):
            return self._dispatch(inst, call, handler, mem, args)
        return host_function

    def _trap(self, inst, call, message, **data):
        self._event("trap", inst, function=call.name, message=message, **data)
        raise GuestTrap(f"{call.name}: {message}")

    def _dispatch(self, inst, call, handler, mem, args):
        self._charge(self.cost.host_call_ns)
        inst.host_calls += 1
        if inst.stage is not Stage.RUNNING:
            self._trap(inst, call, f"host call while {inst.stage.value}")
        a = dict(zip(call.params, args))
        size = mem.size()
        spans = {}
        for off_name, len_name in call.inputs + call.outputs:
            off = a[off_name] & U32
            length = len_name if isinstance(len_name, int) else a[len_name] & U32
            if off + length > size:
                self._trap(inst, call, "out-of-bounds access",
                           offset=off, length=length, memory=size)
            spans[off_name] = (off, length)
        try:
            return int(handler(inst, mem, a, spans))
        except PermissionDenied as exc:
            return exc.code
        except WasiSnError as exc:
            if isinstance(exc, GuestTrap):
                raise
            logger.debug("%s %s -> %s", inst.token, call.name, exc)
            return exc.code
        except ValueError as exc:
            logger.debug("%s %s -> %s", inst.token, call.name, exc)
            return OutOfRange.code
        except Exception as exc:  # a host bug must not escape into the guest
            self._event("host_error", inst, function=call.name, error=repr(exc))
            return WasiSnError.code

    def _require(self, inst, call_name, resources, verb):
        if isinstance(resources, str):
            resources = (resources,)
        if inst.grants.allows_any(resources, verb):
            return
        self._event("violation", inst, function=call_name, resource=resources[0], verb=verb)
        raise PermissionDenied(f"{call_name}: no {verb} grant on {resources[0]}")

    @staticmethod
    def _text(mem, span):
        off, length = span
        raw = mem.read(off, length)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise BadEncoding("argument is not valid UTF-8") from None

    @staticmethod
    def _out(mem, span, data):
        off, cap = span
        mem.write(off, data[:cap])
        return len(data)

    @staticmethod
    def _ranged(value, lo, hi, what):
        if not lo <= value <= hi:
            raise OutOfRange(f"{what}={value} outside [{lo}, {hi}]")
        return value

    def _resource(self, sensor, name):
        return f"/resources/{self.device_id}/{sensor}/{name}"

    def _sensor_resources(self, sensor):
        try:
            desc = self.sensors.descriptor(sensor)
            names = desc.capabilities + desc.attribute_names
        except WasiSnError:
            names = ("state",)
        return tuple(self._resource(sensor, n) for n in names)

    def _sensors(self):
        if self.sensors is None:
            raise NotStarted("no sensors attached to this runtime")
        return self.sensors

    # sensor primitives

    def _h_getSensors(self, inst, mem, a, spans):
        ids = "\n".join(self._sensors().get_sensors()).encode("ascii")
        return self._out(mem, spans["outOff"], ids)

    def _h_turnOn(self, inst, mem, a, spans):
        sensor = self._text(mem, spans["idOff"])
        registry = self._sensors()
        self._require(inst, "turnOn", self._sensor_resources(sensor), "turnOn")
        registry.turn_on(sensor)
        registry.register(sensor, inst.token)
        return 1

    def _h_turnOff(self, inst, mem, a, spans):
        sensor = self._text(mem, spans["idOff"])
        registry = self._sensors()
        self._require(inst, "turnOff", self._sensor_resources(sensor), "turnOff")
        registry.turn_off(sensor, owner=inst.token)
        return 1

    def _h_config(self, inst, mem, a, spans):
        sensor = self._text(mem, spans["idOff"])
        attr = self._text(mem, spans["attrOff"])
        off, length = spans["valOff"]
        value = mem.read(off, length)
        registry = self._sensors()
        self._require(inst, "config", self._resource(sensor, attr), "config")
        registry.config(sensor, attr, value)
        return 1

    def _h_read(self, inst, mem, a, spans):
        sensor = self._text(mem, spans["idOff"])
        name = self._text(mem, spans["nameOff"])
        registry = self._sensors()
        self._require(inst, "read", self._resource(sensor, name), "read")
        off, cap = spans["bufOff"]
        buf = bytearray(cap)
        written, full = registry.read_into(sensor, name, buf, cap)
        mem.write(off, bytes(buf[:written]))
        registry.register(sensor, inst.token)
        return full

    # network primitives

    def _client(self, inst):
        if inst.client is None or not inst.client.started:
            raise NotStarted("start() has not been called")
        return inst.client

    def _name_of(self, inst, topic_id):
        name = self._client(inst).topic_map.name(topic_id)
        if name is None:
            raise UnknownTopicId(f"topic id {topic_id} is not registered")
        return name

    def _pump(self):
        """Let due network events run so polling guests make progress."""
        now = self.clock.now()
        while self.network.run_once(deadline=now):
            pass

    def _h_start(self, inst, mem, a, spans):
        self._require(inst, "start", SESSION_RESOURCE, SESSION_VERB)
        port = self._ranged(a["port"], 0, 0xFFFF, "port")
        if inst.client is None:
            inst.client = MqttSnClient(self.network, host=self.host, config=self.client_config)
        elif inst.client.started:
            raise AlreadyStarted("client already started")
        return inst.client.start(port)

    def _h_searchGW(self, inst, mem, a, spans):
        addr = self._text(mem, spans["addrOff"])
        self._require(inst, "searchGW", SESSION_RESOURCE, SESSION_VERB)
        port = self._ranged(a["port"], 0, 0xFFFF, "port")
        hops = self._ranged(a["maxHops"], 0, 0xFF, "maxHops")
        found = self._client(inst).search_gw(addr, port, hops)
        return self._out(mem, spans["outOff"], found.encode("utf-8"))

    def _h_connect(self, inst, mem, a, spans):
        client_id = self._text(mem, spans["cidOff"])
        gateway = self._text(mem, spans["gwOff"])
        self._require(inst, "connect", SESSION_RESOURCE, SESSION_VERB)
        keep_alive = self._ranged(a["keepAlive"], 0, 0xFFFF, "keepAlive")
        port = self._ranged(a["port"], 0, 0xFFFF, "port")
        self._client(inst).connect(client_id, keep_alive, gateway, port)
        return 1

    def _h_register(self, inst, mem, a, spans):
        name = self._text(mem, spans["nameOff"])
        resource = topic_resource(name)
        if not inst.grants.allows(resource, "subscribe"):
            self._require(inst, "register", resource, "publish")
        return self._client(inst).register(name)

    def _h_publish(self, inst, mem, a, spans):
        name = self._name_of(inst, a["topicId"])
        self._require(inst, "publish", topic_resource(name), "publish")
        qos = self._ranged(a["qos"], 0, 2, "qos")
        off, length = spans["payOff"]
        self._client(inst).publish(a["topicId"], qos, mem.read(off, length))
        return 1

    def _h_subscribe(self, inst, mem, a, spans):
        name = self._name_of(inst, a["topicId"])
        self._require(inst, "subscribe", topic_resource(name), "subscribe")
        qos = self._ranged(a["qos"], 0, 2, "qos")
        self._client(inst).subscribe(a["topicId"], qos)
        return 1

    def _h_hasMessage(self, inst, mem, a, spans):
        name = self._name_of(inst, a["topicId"])
        self._require(inst, "hasMessage", topic_resource(name), "subscribe")
        client = self._client(inst)
        self._pump()
        if not client.has_message(a["topicId"]):
            self.network.run_for(self.cost.poll_ns)
        return int(client.has_message(a["topicId"]))

    def _h_getMessage(self, inst, mem, a, spans):
        name = self._name_of(inst, a["topicId"])
        self._require(inst, "getMessage", topic_resource(name), "subscribe")
        client = self._client(inst)
        self._pump()
        payload = client.peek_message(a["topicId"]).payload
        off, cap = spans["bufOff"]
        mem.write(off, payload[:cap])
        if len(payload) <= cap:
            client.next_message(a["topicId"])
        return len(payload)

    def _h_sleep(self, inst, mem, a, spans):
        self._require(inst, "sleep", SESSION_RESOURCE, SESSION_VERB)
        duration = self._ranged(a["duration"], 0, 0xFFFF, "duration")
        self._client(inst).sleep(duration)
        return 1

    def _h_awake(self, inst, mem, a, spans):
        self._require(inst, "awake", SESSION_RESOURCE, SESSION_VERB)
        self._client(inst).awake()
        return 1

    def _h_disconnect(self, inst, mem, a, spans):
        return int(self._client(inst).disconnect())

    def _h_stop(self, inst, mem, a, spans):
        if inst.client is None:
            return 1
        return int(inst.client.stop())
