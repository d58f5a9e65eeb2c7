from . import fixtures
from .abi import HOST_CALLS, NAMESPACE, Grants, HostCall, HostCallTable, grants_for, topic_resource
from .engine import Backend, GuestInstance, GuestMemory, WasmtimeBackend, wat_to_wasm
from .runtime import STAGES, STEP_NAMES, CostModel, ModuleInstance, Stage, WasmRuntime

__all__ = [
    "Backend",
    "CostModel",
    "Grants",
    "GuestInstance",
    "GuestMemory",
    "HOST_CALLS",
    "HostCall",
    "HostCallTable",
    "ModuleInstance",
    "NAMESPACE",
    "STAGES",
    "STEP_NAMES",
    "Stage",
    "WasmRuntime",
    "WasmtimeBackend",
    "fixtures",
    "grants_for",
    "topic_resource",
    "wat_to_wasm",
]
