"""Benchmarks emitting ``benchmark,param,rep,stage,nanos`` rows.

All four benchmarks run guest modules through the full lifecycle on the
in-process simnet.  With ``clock="sim"`` (the default) durations come from
the simulated clock and the runtime cost model, so output is reproducible
byte for byte; ``clock="wall"`` times the same work on the monotonic clock.
"""

import csv
import statistics
from dataclasses import astuple, dataclass

from ..clock import NS_PER_MS, MonotonicClock
from ..gateway import DEFAULT_PORT
from ..host import fixtures
from ..host.abi import Grants
from ..host.runtime import STAGES, STEP_NAMES, CostModel, WasmRuntime
from .world import GATEWAY_HOST, World, default_device_config

FIELDS = ("benchmark", "param", "rep", "stage", "nanos")
AUTHOR = "/entity/Lab/bench/NULL"
BENCHMARKS = ("lifecycle", "sensor", "topics", "publish")

SENSOR_GRANTS = Grants.of([("/resources/device01/BME280/*", v) for v in ("read", "config", "turnOn")])
NET_GRANTS = Grants.of([("mqttsn", "session"), ("mqttsn:bench/*", "publish")])

DEFAULT_ACCESSES = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)
DEFAULT_COUNTS = tuple(range(1, 21))


@dataclass(frozen=True)
class BenchRecord:
    benchmark: str
    param: int
    rep: int
    stage: str
    nanos: int


def _world(seed, clock, latency_ns=5 * NS_PER_MS, access_ns=NS_PER_MS):
    w = World(seed=seed, latency_ns=latency_ns, device=default_device_config(access_ns=access_ns))
    if clock == "wall":
        wall = MonotonicClock()
        w.sensors.clock = wall
        w.runtime = WasmRuntime(
            sensors=w.sensors, network=w.net, clock=wall, device_id=w.device_id,
            host=w.device_id, pkg=w.pkg, device_identity=w.device_identity,
            authority=w.authority, cost=CostModel.zero())
    elif clock != "sim":
        raise ValueError(f"clock must be 'sim' or 'wall', not {clock!r}")
    return w


def _lifecycle(world, wasm, grants):
    rt = world.runtime
    rt.runtime_init()
    signed = world.sign(wasm, AUTHOR)
    inst = rt.load_module(signed, grants)
    rt.init_module(inst)
    rt.create_exec_env(inst)
    result = rt.call_main(inst)
    if result != 0:
        raise RuntimeError(f"benchmark guest returned {result}")
    rt.deinit_module(inst)
    rt.destroy_runtime()
    return inst


def _stage_rows(name, param, rep, inst):
    return [BenchRecord(name, param, rep, STEP_NAMES[s], inst.stage_timings[s]) for s in STAGES]


def bench_lifecycle(accesses=(1, 10, 100), reps=10, seed=0, clock="sim", access_ns=NS_PER_MS):
    rows = []
    for n in accesses:
        wasm = fixtures.loops(n)
        for rep in range(reps):
            with _world(seed + rep, clock, access_ns=access_ns) as w:
                rows += _stage_rows("lifecycle", n, rep, _lifecycle(w, wasm, SENSOR_GRANTS))
    return rows


def bench_sensor(accesses=DEFAULT_ACCESSES, reps=10, seed=0, clock="sim", access_ns=NS_PER_MS):
    rows = []
    for n in accesses:
        wasm = fixtures.loops(n)
        for rep in range(reps):
            with _world(seed + rep, clock, access_ns=access_ns) as w:
                inst = _lifecycle(w, wasm, SENSOR_GRANTS)
            total = inst.total_ns()
            rows.append(BenchRecord("sensor", n, rep, "total", total))
            rows.append(BenchRecord("sensor", n, rep, "per_access", total // n))
    return rows


def _network_bench(name, make, counts, reps, seed, clock, rtt_ms):
    rows = []
    latency = int(rtt_ms * NS_PER_MS / 2)
    for n in counts:
        wasm = make(n)
        for rep in range(reps):
            with _world(seed + rep, clock, latency_ns=latency) as w:
                inst = _lifecycle(w, wasm, NET_GRANTS)
            rows.append(BenchRecord(name, n, rep, "call_main", inst.timings_by_step()["call_main"]))
    return rows


def bench_topics(counts=DEFAULT_COUNTS, reps=10, seed=0, clock="sim", rtt_ms=25):
    return _network_bench(
        "topics", lambda n: fixtures.topics(n, GATEWAY_HOST, DEFAULT_PORT),
        counts, reps, seed, clock, rtt_ms)


def bench_publish(counts=DEFAULT_COUNTS, reps=10, seed=0, clock="sim", rtt_ms=25, qos=1):
    return _network_bench(
        "publish", lambda n: fixtures.publish(n, GATEWAY_HOST, DEFAULT_PORT, qos=qos),
        counts, reps, seed, clock, rtt_ms)


def write_csv(rows, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FIELDS)
    for row in rows:
        writer.writerow(astuple(row))


def read_csv(fh):
    return [BenchRecord(r["benchmark"], int(r["param"]), int(r["rep"]), r["stage"], int(r["nanos"]))
            for r in csv.DictReader(fh)]


# analysis

def series(rows, stage):
    """param -> mean nanos for one stage, sorted by param."""
    by = {}
    for r in rows:
        if r.stage == stage:
            by.setdefault(r.param, []).append(r.nanos)
    return {p: statistics.fmean(v) for p, v in sorted(by.items())}


def coefficient_of_variation(values):
    values = list(values)
    mean = statistics.fmean(values)
    return statistics.pstdev(values) / mean if mean else 0.0


def linear_fit(xs, ys):
    """(slope, intercept, R^2) of an ordinary least-squares line."""
    slope, intercept = statistics.linear_regression(xs, ys)
    mean = statistics.fmean(ys)
    ss_tot = sum((y - mean) ** 2 for y in ys)
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    r2 = 1.0 - ss_res / ss_tot if ss_tot else 1.0
    return slope, intercept, r2
