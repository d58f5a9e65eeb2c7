"""``wasisn`` command line.

Exit status: 0 on success, 1 when a scenario assertion or guest run fails,
2 for configuration errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import __version__
from ..acl.modules import SignedModule, wrap_module
from ..acl.pkg import Identity, PkgRegistry, device_identity_name
from ..clock import NS_PER_S, MonotonicClock
from ..config import DeviceConfig, PolicyRule, load_device_config, save_device_config
from ..errors import CannotDecrypt, GuestTrap, WasiSnError
from ..gateway import DEFAULT_PORT, Gateway
from ..host import fixtures
from ..host.engine import wat_to_wasm
from ..host.runtime import CostModel, WasmRuntime
from ..mqttsn import UdpNetwork
from ..sensors import SensorRegistry
from . import bench
from .scenario import ScenarioError, run_scenario
from .world import World, default_device_config

log = logging.getLogger("wasisn.cli")


class ConfigError(Exception):
    pass


def _int_list(text):
    """'5' -> [5]; '1,2,5' -> [1, 2, 5]; '1-20' -> [1..20]."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 0:
        raise argparse.ArgumentTypeError(f"bad list {text!r}")
    return out


def _endpoint(text):
    host, sep, port = str(text).rpartition(":")
    if not sep:
        return text, DEFAULT_PORT
    host = host.strip("[]") or "::"
    return host, int(port)


def _device_config(path):
    if path is None:
        return default_device_config()
    try:
        cfg = load_device_config(path)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not cfg.sensors:
        cfg.sensors = default_device_config(cfg.device_id).sensors
    return cfg


def _module_bytes(spec):
    if spec in fixtures.FIXTURES:
        return fixtures.wasm(spec)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"no module file or fixture named {spec!r}")
    raw = path.read_bytes()
    return wat_to_wasm(raw.decode()) if path.suffix == ".wat" else raw


def _emit(obj):
    print(json.dumps(obj, sort_keys=True, default=str))


# device

def cmd_device_run(args):
    cfg = _device_config(args.config)
    if args.udp:
        return _device_run_udp(args, cfg)
    pkg = PkgRegistry(args.pkg) if args.pkg else None
    device_identity = Identity.load(args.device_key) if args.device_key else None
    world = World(seed=args.seed, device=cfg, pkg=pkg, device_identity=device_identity)
    status = 0
    try:
        world.runtime.runtime_init()
        jobs = [(world.sign(_module_bytes(m), args.author), m) for m in args.module]
        for path in args.signed:
            jobs.append((SignedModule.from_bytes(Path(path).read_bytes()), path))
        for signed, label in jobs:
            status |= _run_one(world.runtime, signed, label, args.grant)
        if args.duration:
            world.settle(args.duration)
        world.runtime.destroy_runtime()
    finally:
        world.close()
    return status


def _run_one(runtime, signed, label, grant_pairs):
    grants = [tuple(g.split("=", 1)[::-1]) for g in grant_pairs] if grant_pairs else None
    try:
        inst = runtime.load_module(signed, grants)
        runtime.init_module(inst)
        runtime.create_exec_env(inst)
        result = runtime.call_main(inst)
    except GuestTrap as exc:
        _emit({"module": label, "status": "trap", "message": str(exc)})
        return 1
    except WasiSnError as exc:
        _emit({"module": label, "status": "rejected", "error": type(exc).__name__, "detail": str(exc)})
        return 1
    _emit({"module": label, "status": "ok", "result": result, "author": str(inst.author),
           "timings_ns": inst.timings_by_step(), "host_calls": inst.host_calls})
    runtime.deinit_module(inst)
    return 0 if result >= 0 else 1


def _device_run_udp(args, cfg):
    if not (args.pkg and args.device_key):
        raise ConfigError("--udp needs --pkg and --device-key")
    clock = MonotonicClock()
    net = UdpNetwork(clock)
    sensors = SensorRegistry.from_config(cfg, clock=clock)
    runtime = WasmRuntime(sensors=sensors, network=net, clock=clock, device_id=cfg.device_id,
                          host=args.udp, pkg=PkgRegistry(args.pkg),
                          device_identity=Identity.load(args.device_key), cost=CostModel.zero())
    status = 0
    try:
        runtime.runtime_init()
        for path in args.signed:
            status |= _run_one(runtime, SignedModule.from_bytes(Path(path).read_bytes()), path, args.grant)
        runtime.destroy_runtime()
    finally:
        sensors.close()
        net.close()
    return status


# gateway

def cmd_gateway_run(args):
    host, port = _endpoint(args.bind)
    clock = MonotonicClock()
    net = UdpNetwork(clock)
    gw = Gateway(net, host, port).start()
    _emit({"event": "listening", "address": list(gw.address)})
    until = clock.now() + int(args.duration * NS_PER_S) if args.duration else None
    try:
        gw.serve_forever(until)
    except KeyboardInterrupt:
        pass
    finally:
        gw.stop()
        net.close()
    return 0


# deploy / pkg

def cmd_deploy(args):
    registry = PkgRegistry(args.pkg)
    author = Identity.load(args.author_key)
    device = registry.lookup(device_identity_name(args.device))
    signed = wrap_module(_module_bytes(args.module), author.name, author, device)
    Path(args.out).write_bytes(signed.to_bytes())
    _emit({"signed": args.out, "author": signed.author, "device": device.name,
           "bytes": len(signed.to_bytes())})
    return 0


def cmd_pkg_issue(args):
    registry = PkgRegistry(args.registry)
    ident = registry.issue(args.name)
    ident.save(args.out)
    _emit({"issued": ident.name, "key": args.out, "registry": args.registry})
    return 0


# acl

def cmd_acl_request(args):
    cfg = _device_config(args.config)
    world = World(seed=args.seed, device=cfg)
    try:
        requester = world.requester(args.as_)
        params = tuple(p for p in args.params.split(",") if p) if args.params else ()
        d = requester.request(args.resource, args.verb, params)
        out = {"requester": str(requester.uii), "resource": args.resource, "verb": args.verb,
               "status": "grant" if d.granted else "deny", "verbs": list(d.verbs),
               "reason": d.reason}
        if d.granted:
            if str(requester.uii) in cfg.revoked or args.as_ in cfg.revoked:
                world.authority.revoke(requester.uii, args.resource)
                out["revoked"] = True
            out["pattern"] = [None if s is None else s.decode(errors="replace")
                              for s in d.key.pattern.slots]
            frame = world.authority.seal_for_grantees(args.resource, b"probe")
            try:
                ok = frame is not None and requester.open_reading(args.resource, frame) == b"probe"
            except CannotDecrypt:
                ok = False
            out["can_decrypt"] = ok
        _emit(out)
    finally:
        world.close()
    return 0


def _edit_config(path, fn):
    p = Path(path)
    cfg = load_device_config(p) if p.exists() else DeviceConfig()
    fn(cfg)
    save_device_config(cfg, p)
    return cfg


def cmd_acl_grant_policy(args):
    verbs = tuple(v for v in args.verbs.split(",") if v)
    cfg = _edit_config(args.config, lambda c: c.policy.append(PolicyRule(args.uii, args.resource, verbs)))
    _emit({"config": args.config, "rules": len(cfg.policy)})
    return 0


def cmd_acl_revoke(args):
    def add(cfg):
        if args.uii not in cfg.revoked:
            cfg.revoked.append(args.uii)
    cfg = _edit_config(args.config, add)
    _emit({"config": args.config, "revoked": cfg.revoked})
    return 0


# bench / scenario

def cmd_bench(args):
    kind = args.kind
    common = dict(reps=args.reps, seed=args.seed, clock=args.clock)
    if args.reps < 10:
        log.warning("fewer than 10 repetitions requested")
    if kind == "lifecycle":
        rows = bench.bench_lifecycle(args.accesses or [1, 10, 100], **common)
    elif kind == "sensor":
        rows = bench.bench_sensor(args.accesses or bench.DEFAULT_ACCESSES, **common)
    elif kind == "topics":
        rows = bench.bench_topics(args.count or bench.DEFAULT_COUNTS, rtt_ms=args.rtt_ms, **common)
    else:
        rows = bench.bench_publish(args.count or bench.DEFAULT_COUNTS, rtt_ms=args.rtt_ms,
                                   qos=args.qos, **common)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            bench.write_csv(rows, fh)
    else:
        bench.write_csv(rows, sys.stdout)
    return 0


def cmd_scenario_run(args):
    try:
        report = run_scenario(args.file)
    except (OSError, ScenarioError, KeyError, TypeError) as exc:
        raise ConfigError(f"{args.file}: {exc}") from exc
    for line in report.lines():
        print(line)
    print(f"{report.name}: {'PASS' if report.ok else 'FAIL'} "
          f"({sum(c.ok for c in report.checks)}/{len(report.checks)} checks)")
    return 0 if report.ok else 1


# parser

def build_parser():
    p = argparse.ArgumentParser(prog="wasisn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    device = sub.add_parser("device", help="run a device with guest modules").add_subparsers(
        dest="action", required=True)
    d = device.add_parser("run")
    d.add_argument("--config", help="device configuration (YAML or JSON)")
    d.add_argument("--module", action="append", default=[],
                   help="unsigned module (.wat, .wasm or fixture name); signed for --author")
    d.add_argument("--signed", action="append", default=[], help="signed module file")
    d.add_argument("--author", default="/entity/Lab/operator/NULL")
    d.add_argument("--grant", action="append", default=[], metavar="VERB=RESOURCE",
                   help="explicit grant; default derives grants from the device authority")
    d.add_argument("--pkg", help="PKG registry file")
    d.add_argument("--device-key", help="device identity key file")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--duration", type=float, default=0.0, help="simulated seconds to keep running")
    d.add_argument("--udp", metavar="HOST", help="use real UDP sockets bound to HOST")
    d.set_defaults(fn=cmd_device_run)

    gateway = sub.add_parser("gateway", help="run an MQTT-SN gateway on UDP").add_subparsers(
        dest="action", required=True)
    g = gateway.add_parser("run")
    g.add_argument("--bind", default=f"[::]:{DEFAULT_PORT}")
    g.add_argument("--duration", type=float, default=0.0)
    g.set_defaults(fn=cmd_gateway_run)

    dp = sub.add_parser("deploy", help="sign and seal a module for a device")
    dp.add_argument("module")
    dp.add_argument("--author-key", required=True)
    dp.add_argument("--pkg", required=True)
    dp.add_argument("--device", default="device01")
    dp.add_argument("--out", required=True)
    dp.set_defaults(fn=cmd_deploy)

    acl = sub.add_parser("acl", help="access-control workflow").add_subparsers(
        dest="action", required=True)
    r = acl.add_parser("request")
    r.add_argument("--config")
    r.add_argument("--as", dest="as_", required=True, metavar="UII")
    r.add_argument("--resource", required=True)
    r.add_argument("--verb", default="read")
    r.add_argument("--params", default="")
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(fn=cmd_acl_request)
    gp = acl.add_parser("grant-policy")
    gp.add_argument("--config", required=True)
    gp.add_argument("--uii", required=True)
    gp.add_argument("--resource", required=True)
    gp.add_argument("--verbs", default="read")
    gp.set_defaults(fn=cmd_acl_grant_policy)
    rv = acl.add_parser("revoke")
    rv.add_argument("--config", required=True)
    rv.add_argument("--uii", required=True)
    rv.set_defaults(fn=cmd_acl_revoke)

    pkg = sub.add_parser("pkg", help="local key authority").add_subparsers(dest="action", required=True)
    pi = pkg.add_parser("issue")
    pi.add_argument("name")
    pi.add_argument("--registry", required=True)
    pi.add_argument("--out", required=True)
    pi.set_defaults(fn=cmd_pkg_issue)

    b = sub.add_parser("bench", help="benchmarks as CSV")
    b.add_argument("kind", choices=bench.BENCHMARKS)
    b.add_argument("--reps", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--clock", choices=("sim", "wall"), default="sim")
    b.add_argument("--accesses", type=_int_list)
    b.add_argument("--count", type=_int_list)
    b.add_argument("--rtt-ms", type=float, default=25.0)
    b.add_argument("--qos", type=int, choices=(0, 1, 2), default=1)
    b.add_argument("--out")
    b.set_defaults(fn=cmd_bench)

    sc = sub.add_parser("scenario", help="declarative scenarios").add_subparsers(
        dest="action", required=True)
    s = sc.add_parser("run")
    s.add_argument("file")
    s.set_defaults(fn=cmd_scenario_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.ERROR - 10 * min(args.verbose, 3)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"wasisn: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
