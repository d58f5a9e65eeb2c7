"""Declarative end-to-end scenarios.

A scenario is a YAML (or JSON) document::

    seed: 7
    network: {loss: 0.0, latency_ms: 5}
    device:                      # a DeviceConfig; sensors default to BME280 + CCS811
      device_id: device01
      policy:
        - {uii: "/entity/Loc1/*", resource: "/resources/device01/*", verbs: [read]}
    requesters:
      Alice: /entity/Loc1/Alice/NULL
    steps:
      - request: {who: Alice, resource: /resources/device01/BME280/temperature}
        expect: grant
      - revoke: {who: Alice, resource: /resources/device01/BME280/temperature}
      - publish: {resource: /resources/device01/BME280/temperature, value: "66080000"}
        expect: {opens: [], denied: [Alice]}
      - deploy: {module: listing2, author: Alice, grants: [[/resources/device01/BME280/*, read]]}
        expect: {result: 0}
      - grant: {who: Alice, resource: /resources/device01/CCS811/eco2}
      - advance: 30

Steps run in order on one simulated clock.  Each ``expect`` becomes an
assertion; :func:`run_scenario` collects them into a :class:`Report`.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..clock import NS_PER_MS
from ..config import DeviceConfig, load_structured
from ..errors import CannotDecrypt, GuestTrap, WasiSnError
from ..host import fixtures
from ..host.engine import wat_to_wasm
from .world import World, default_device_config


class ScenarioError(ValueError):
    pass


@dataclass
class Check:
    step: int
    action: str
    ok: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.ok else 'FAIL'}] step {self.step} {self.action}: {self.detail}"


@dataclass
class Report:
    name: str
    checks: list = field(default_factory=list)
    log: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.ok for c in self.checks)

    def lines(self):
        return [c.line() for c in self.checks]


def load_scenario(path):
    data = load_structured(path)
    if not isinstance(data, dict) or "steps" not in data:
        raise ScenarioError(f"{path}: a scenario needs a 'steps' list")
    data.setdefault("name", Path(path).stem)
    data["_dir"] = str(Path(path).parent)
    return data


def _module_bytes(spec, base):
    if spec in fixtures.FIXTURES:
        return fixtures.wasm(spec)
    if isinstance(spec, dict):
        spec = dict(spec)
        name = spec.pop("fixture")
        return fixtures.wasm(name, **spec)
    path = Path(base, spec)
    raw = path.read_bytes()
    return wat_to_wasm(raw.decode()) if path.suffix == ".wat" else raw


class ScenarioRunner:
    def __init__(self, doc):
        self.doc = doc
        net = doc.get("network", {}) or {}
        device = doc.get("device")
        cfg = DeviceConfig.from_dict(device) if device else default_device_config()
        if not cfg.sensors:
            cfg.sensors = default_device_config(cfg.device_id).sensors
        self.world = World(
            seed=int(doc.get("seed", 0)),
            loss=float(net.get("loss", 0.0)),
            latency_ns=int(float(net.get("latency_ms", 5)) * NS_PER_MS),
            device=cfg,
        )
        self.names = dict(doc.get("requesters", {}) or {})
        self.subscribed = set()
        self.report = Report(doc.get("name", "scenario"))

    def uii(self, who):
        return self.names.get(who, who)

    def check(self, i, action, ok, detail):
        self.report.checks.append(Check(i, action, bool(ok), detail))

    def run(self):
        try:
            for i, step in enumerate(self.doc["steps"], 1):
                step = dict(step)
                expect = step.pop("expect", None)
                if len(step) != 1:
                    raise ScenarioError(f"step {i}: expected exactly one action, got {sorted(step)}")
                (action, args), = step.items()
                handler = getattr(self, f"do_{action}", None)
                if handler is None:
                    raise ScenarioError(f"step {i}: unknown action {action!r}")
                outcome = handler(args if args is not None else {})
                self.report.log.append({"step": i, "action": action, "outcome": outcome})
                if expect is not None:
                    self.verify(i, action, outcome, expect)
        finally:
            self.world.close()
        return self.report

    # actions

    def do_advance(self, seconds):
        self.world.settle(float(seconds))
        return {"now": self.world.clock.now()}

    def do_loss(self, value):
        self.world.net.loss = float(value)
        return {"loss": self.world.net.loss}

    def do_request(self, args):
        who = args["who"]
        requester = self.world.requester(self.uii(who))
        params = tuple(args.get("params", ()))
        try:
            d = requester.request(args["resource"], args.get("verb", "read"), params,
                                  timeout_s=args.get("timeout_s", 60))
        except WasiSnError as exc:
            return {"status": "error", "error": type(exc).__name__}
        return {"status": "grant" if d.granted else "deny", "verbs": list(d.verbs)}

    def do_grant(self, args):
        """Operator-issued grant; the key reaches the requester out of band."""
        verbs = args.get("verbs", ["read"])
        uii = self.uii(args["who"])
        d = self.world.authority.grant(uii, args["resource"], set(verbs))
        self.world.requester(uii).keys[str(d.resource)] = d
        return {"status": "grant", "verbs": list(d.verbs)}

    def do_revoke(self, args):
        try:
            hit = self.world.authority.revoke(self.uii(args["who"]), args.get("resource"))
        except WasiSnError as exc:
            return {"status": "error", "error": type(exc).__name__}
        return {"status": "revoked", "resources": hit}

    def do_publish(self, args):
        resource = args["resource"]
        value = bytes.fromhex(str(args.get("value", "00000000")))
        readers = list(self.names)
        for who in readers:
            r = self.world.requester(self.uii(who))
            if (who, resource) not in self.subscribed:
                r.client.subscribe(resource, 1)
                self.subscribed.add((who, resource))
        self.world.attach_authority()
        sent = self.world.authority.publish_reading(resource, value)
        self.world.settle(args.get("settle_s", 2))
        opens, denied = [], []
        for who in readers:
            r = self.world.requester(self.uii(who))
            frames = []
            while r.client.has_message(resource):
                frames.append(r.client.get_message(resource))
            got = []
            for frame in frames:
                try:
                    got.append(r.open_reading(resource, frame, now=self.world.clock.now()))
                except CannotDecrypt:
                    pass
            (opens if got == [value] * len(frames) and frames else denied).append(who)
        return {"sent": sent, "opens": sorted(opens), "denied": sorted(denied)}

    def do_deploy(self, args):
        wasm = _module_bytes(args["module"], self.doc.get("_dir", "."))
        author = self.uii(args.get("author", "/entity/Lab/operator/NULL"))
        grants = args.get("grants")
        if grants is not None:
            grants = [tuple(g) for g in grants]
        try:
            inst = self.world.deploy(wasm, author, grants=grants)
        except GuestTrap as exc:
            return {"status": "trap", "message": str(exc)}
        except WasiSnError as exc:
            return {"status": "error", "error": type(exc).__name__}
        rt = self.world.runtime
        rt.deinit_module(inst)
        return {"status": "ok", "result": inst.result,
                "violations": sum(1 for e in rt.events if e["event"] == "violation"
                                  and e.get("module") == inst.token)}

    # expectations

    def verify(self, i, action, outcome, expect):
        if isinstance(expect, str):
            expect = {"status": expect}
        for key, want in expect.items():
            got = outcome.get(key)
            if isinstance(want, list) and isinstance(got, list):
                want = sorted(want)
            self.check(i, action, got == want, f"{key}={json.dumps(got)} (want {json.dumps(want)})")


def run_scenario(source):
    doc = load_scenario(source) if isinstance(source, (str, Path)) else dict(source)
    return ScenarioRunner(doc).run()
