"""One simulated deployment: network, gateway, a device and its runtime.

``World`` wires the pieces every harness entry point needs: a simnet with
a gateway at :data:`GATEWAY_HOST`, a device with virtual sensors, a PKG
stub holding the device identity, the device's key authority and a guest
runtime.  Everything runs on one :class:`~wasisn.clock.SimClock`.
"""

import random

from ..acl.device import DeviceAuthority, Policy
from ..acl.modules import wrap_module
from ..acl.pkg import PkgRegistry, device_identity_name
from ..acl.requester import Requester
from ..clock import NS_PER_MS, NS_PER_S, SimClock
from ..config import DeviceConfig, SensorEntry
from ..gateway import DEFAULT_PORT, Gateway, GatewayConfig
from ..host.runtime import CostModel, WasmRuntime
from ..mqttsn import ClientConfig, MqttSnClient, SimNetwork
from ..sensors import SensorRegistry

GATEWAY_HOST = "fdde:ad00::1"


def default_device_config(device_id="device01", access_ns=0, policy=()):
    return DeviceConfig(
        device_id=device_id,
        sensors=[
            SensorEntry("BME280", "bme280", seed=1, access_ns=access_ns),
            SensorEntry("CCS811", "ccs811", seed=2, access_ns=access_ns),
        ],
        policy=list(policy),
    )


class World:
    def __init__(self, seed=0, loss=0.0, latency_ns=5 * NS_PER_MS, device=None,
                 gateway_config=None, client_config=None, cost=None, pkg=None,
                 device_identity=None):
        self.seed = seed
        self.clock = SimClock()
        self.net = SimNetwork(self.clock, seed=seed, loss=loss, latency_ns=latency_ns)
        self.gateway = Gateway(self.net, GATEWAY_HOST, DEFAULT_PORT,
                               gateway_config or GatewayConfig()).start()
        self.client_config = client_config
        self.config = device or default_device_config()
        self.device_id = self.config.device_id
        self.rng = random.Random(seed)
        self.pkg = pkg if pkg is not None else PkgRegistry()
        if device_identity is None:
            device_identity = self.pkg.issue(device_identity_name(self.device_id))
        elif device_identity.name not in self.pkg:
            self.pkg.register(device_identity.public)
        self.device_identity = device_identity
        self.sensors = SensorRegistry.from_config(self.config, clock=self.clock)
        self.authority = DeviceAuthority(
            self.device_id, self.device_identity, Policy(self.config.policy), self.clock,
            L=self.config.depth, identity_slots=self.config.identity_slots,
            grant_lifetime_s=self.config.grant_lifetime_s, rng=self.rng)
        self.cost = cost or CostModel()
        self.runtime = self.new_runtime()
        self.authors = {}
        self.requesters = {}
        self.device_client = None

    def new_runtime(self):
        return WasmRuntime(
            sensors=self.sensors, network=self.net, clock=self.clock,
            device_id=self.device_id, host=self.device_id, pkg=self.pkg,
            device_identity=self.device_identity, authority=self.authority,
            cost=self.cost, client_config=self.client_config)

    def close(self):
        self.sensors.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # network

    def client(self, host, client_id=None, keep_alive=30, config=None):
        c = MqttSnClient(self.net, host, config or self.client_config or ClientConfig())
        c.start(0)
        if client_id is not None:
            c.connect(client_id, keep_alive, GATEWAY_HOST, DEFAULT_PORT)
        return c

    def settle(self, seconds=1.0):
        self.net.run_for(int(seconds * NS_PER_S))

    def attach_authority(self):
        """Connect the device's key authority to the gateway."""
        if self.device_client is None:
            self.device_client = self.client(f"{self.device_id}-acl", self.device_id)
            self.authority.attach(self.device_client)
        return self.device_client

    # identities

    def author(self, uii):
        uii = str(uii)
        if uii not in self.authors:
            self.authors[uii] = self.pkg.issue(uii)
        return self.authors[uii]

    def requester(self, uii, host=None):
        uii = str(uii)
        if uii not in self.requesters:
            self.attach_authority()
            name = host or uii.strip("/").split("/")[2].lower()
            self.requesters[uii] = Requester(
                self.client(name, name), self.author(uii), uii, self.device_identity.public)
        return self.requesters[uii]

    # modules

    def sign(self, module_bytes, uii):
        return wrap_module(module_bytes, uii, self.author(uii), self.device_identity.public)

    def deploy(self, module_bytes, uii, grants=None, runtime=None):
        """Sign and run a module through the full lifecycle up to callMain."""
        runtime = runtime or self.runtime
        if runtime.stage is None:
            runtime.runtime_init()
        return runtime.run(self.sign(module_bytes, uii), grants)
