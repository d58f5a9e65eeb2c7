"""Execution backends.

The host layer only needs four things from an engine: compile a binary,
list its imports, instantiate it against a table of host functions and
call an export.  Host functions receive a :class:`GuestMemory` view plus
their integer arguments.  ``WasmtimeBackend`` is the shipped backend; any
other embeddable interpreter can implement the same two classes.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass

import wasmtime

from ..errors import GuestTrap


@dataclass(frozen=True)
class ImportSpec:
    module: str
    name: str
    params: tuple
    results: tuple


class GuestMemory(ABC):
    @abstractmethod
    def size(self):
        ...

    @abstractmethod
    def read(self, offset, length):
        ...

    @abstractmethod
    def write(self, offset, data):
        ...


class CompiledModule(ABC):
    size: int
    imports: tuple
    exports: tuple


class GuestInstance(ABC):
    @abstractmethod
    def call(self, export, *args):
        ...

    @abstractmethod
    def memory(self):
        """Exported linear memory, or None."""

    def close(self):
        pass


class Backend(ABC):
    name = "abstract"

    @abstractmethod
    def compile(self, binary):
        ...

    @abstractmethod
    def instantiate(self, compiled, host_functions):
        """``host_functions`` maps (module, name) to a callable
        ``fn(memory, *args) -> int``; imports without an entry trap."""

    def close(self):
        pass


# wasmtime

_KINDS = {"i32": wasmtime.ValType.i32, "i64": wasmtime.ValType.i64,
          "f32": wasmtime.ValType.f32, "f64": wasmtime.ValType.f64}


def _kind(valtype):
    return str(valtype)


class _WtMemory(GuestMemory):
    __slots__ = ("_mem", "_store")

    def __init__(self, mem, store):
        self._mem = mem
        self._store = store

    def size(self):
        return self._mem.data_len(self._store)

    def read(self, offset, length):
        return bytes(self._mem.read(self._store, offset, offset + length))

    def write(self, offset, data):
        self._mem.write(self._store, bytes(data), offset)


class _NoMemory(GuestMemory):
    def size(self):
        return 0

    def read(self, offset, length):
        raise GuestTrap("module exports no linear memory")

    write = read


class _WtCompiled(CompiledModule):
    def __init__(self, module, size):
        self.module = module
        self.size = size
        self.imports = tuple(
            ImportSpec(
                imp.module, imp.name,
                tuple(_kind(p) for p in imp.type.params),
                tuple(_kind(r) for r in imp.type.results),
            )
            for imp in module.imports
            if isinstance(imp.type, wasmtime.FuncType)
        )
        self.non_function_imports = tuple(
            (imp.module, imp.name) for imp in module.imports
            if not isinstance(imp.type, wasmtime.FuncType)
        )
        self.exports = tuple(e.name for e in module.exports)


class _WtInstance(GuestInstance):
    def __init__(self, store, instance):
        self.store = store
        self.instance = instance
        self._exports = instance.exports(store)

    def memory(self):
        mem = self._exports.get("memory")
        if isinstance(mem, wasmtime.Memory):
            return _WtMemory(mem, self.store)
        return None

    def call(self, export, *args):
        fn = self._exports.get(export)
        if not isinstance(fn, wasmtime.Func):
            raise GuestTrap(f"module exports no function {export!r}")
        try:
            return fn(self.store, *args)
        except wasmtime.Trap as exc:
            raise GuestTrap(str(exc).splitlines()[0]) from exc
        except wasmtime.WasmtimeError as exc:
            raise GuestTrap(str(exc).splitlines()[0]) from exc

    def close(self):
        self._exports = None
        self.instance = None
        self.store = None


class WasmtimeBackend(Backend):
    name = "wasmtime"

    def __init__(self):
        self.engine = wasmtime.Engine()

    def compile(self, binary):
        binary = bytes(binary)
        try:
            return _WtCompiled(wasmtime.Module(self.engine, binary), len(binary))
        except wasmtime.WasmtimeError as exc:
            raise ValueError(f"invalid module: {str(exc).splitlines()[0]}") from exc

    def instantiate(self, compiled, host_functions):
        if compiled.non_function_imports:
            raise ValueError(f"unsupported non-function imports: {compiled.non_function_imports}")
        store = wasmtime.Store(self.engine)
        linker = wasmtime.Linker(self.engine)
        for spec in compiled.imports:
            ftype = wasmtime.FuncType(
                [_KINDS[k]() for k in spec.params], [_KINDS[k]() for k in spec.results])
            fn = host_functions.get((spec.module, spec.name))
            linker.define_func(spec.module, spec.name, ftype,
                               self._adapt(fn, spec), access_caller=True)
        try:
            instance = linker.instantiate(store, compiled.module)
        except wasmtime.Trap as exc:
            raise GuestTrap(str(exc).splitlines()[0]) from exc
        return _WtInstance(store, instance)

    @staticmethod
    def _adapt(fn, spec):
        if fn is None:
            def unknown(caller, *args):
                raise GuestTrap(f"unknown host function {spec.module}.{spec.name}")
            return unknown

        def call(caller, *args):
            mem = caller.get("memory")
            view = _WtMemory(mem, caller) if isinstance(mem, wasmtime.Memory) else _NoMemory()
            return fn(view, *args)
        return call

    def close(self):
        self.engine = None


def wat_to_wasm(text):
    return wasmtime.wat2wasm(text)
