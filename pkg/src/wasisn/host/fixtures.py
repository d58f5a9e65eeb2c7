"""Guest fixtures authored in the text format.

``wat(name, **params)`` returns the source with ``%{param}`` placeholders
filled in; ``wasm(name, **params)`` assembles it.  ``passthrough_wat``
builds a guest that re-exports every host call as ``call_<name>`` so tests
can drive the ABI with arbitrary arguments.
"""

from importlib import resources
from string import Template

from .abi import HOST_CALLS, NAMESPACE
from .engine import wat_to_wasm

FIXTURES = ("listing2", "listing3", "ret0", "loops", "topics", "publish")


def _wat_string(raw):
    return "".join(chr(b) if 0x20 <= b < 0x7F and b not in (0x22, 0x5C) else f"\\{b:02x}"
                   for b in raw)


class _WatTemplate(Template):
    # "$" starts identifiers in the text format
    delimiter = "%"


def wat(name, **params):
    text = resources.files(__package__).joinpath("fixtures", f"{name}.wat").read_text()
    return _WatTemplate(text).substitute({k: str(v) for k, v in params.items()})


def wasm(name, **params):
    return wat_to_wasm(wat(name, **params))


def loops(iterations):
    return wasm("loops", iterations=int(iterations))


def _endpoint_params(client_id, gateway, port):
    return {
        "client_id": _wat_string(client_id.encode()), "client_id_len": len(client_id.encode()),
        "gateway": _wat_string(gateway.encode()), "gateway_len": len(gateway.encode()),
        "port": int(port),
    }


def topics(count, gateway, port, client_id="bench", prefix="bench/t"):
    width = len(str(max(count - 1, 0)))
    names = [f"{prefix}{i:0{width}d}" for i in range(count)]
    stride = len(names[0]) if names else 1
    packed = "".join(names).encode()
    if 256 + len(packed) > 65536:
        raise ValueError("too many topics for one page")
    return wasm("topics", count=count, stride=stride, names=_wat_string(packed),
                **_endpoint_params(client_id, gateway, port))


def publish(count, gateway, port, qos=1, client_id="bench", topic="bench/publish"):
    return wasm("publish", count=int(count), qos=int(qos), topic=_wat_string(topic.encode()),
                topic_len=len(topic.encode()), **_endpoint_params(client_id, gateway, port))


def passthrough_wat(calls=HOST_CALLS, pages=1):
    lines = ["(module"]
    for c in calls:
        params = " ".join("i32" for _ in c.params)
        lines.append(f'  (import "{NAMESPACE}" "{c.name}" (func ${c.name} (param {params}) (result i32)))')
    lines.append(f'  (memory (export "memory") {pages})')
    for c in calls:
        params = " ".join(f"(param ${p} i32)" for p in c.params)
        gets = " ".join(f"(local.get ${p})" for p in c.params)
        lines.append(f'  (func (export "call_{c.name}") {params} (result i32) (call ${c.name} {gets}))')
    lines.append('  (func (export "main") (result i32) (i32.const 0)))')
    return "\n".join(lines)


def passthrough(calls=HOST_CALLS, pages=1):
    return wat_to_wasm(passthrough_wat(calls, pages))
