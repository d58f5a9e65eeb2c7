"""Wire framing for ciphertext lists and sealed interface return values."""

import struct

from ..errors import SerializationError


def encode_list(items):
    items = list(items)
    if len(items) > 0xFFFF:
        raise SerializationError("too many ciphertexts")
    out = [struct.pack("<H", len(items))]
    for raw in items:
        if len(raw) > 0xFFFF:
            raise SerializationError("ciphertext too long for a u16 length prefix")
        out.append(struct.pack("<H", len(raw)) + bytes(raw))
    return b"".join(out)


def decode_list(frame):
    frame = bytes(frame)
    if len(frame) < 2:
        raise SerializationError("ciphertext list shorter than its count")
    (count,) = struct.unpack_from("<H", frame, 0)
    pos, items = 2, []
    for _ in range(count):
        if pos + 2 > len(frame):
            raise SerializationError("truncated ciphertext list")
        (n,) = struct.unpack_from("<H", frame, pos)
        pos += 2
        if pos + n > len(frame):
            raise SerializationError("truncated ciphertext")
        items.append(frame[pos:pos + n])
        pos += n
    if pos != len(frame):
        raise SerializationError("trailing bytes after ciphertext list")
    return items


def encode_return(verb, status, value=b""):
    """verb echo (u8 length + ASCII), signed status byte, then the value bytes."""
    v = verb.encode("ascii")
    if len(v) > 0xFF or not -128 <= status <= 127:
        raise SerializationError("verb or status out of range")
    return bytes([len(v)]) + v + struct.pack("<b", status) + bytes(value)


def decode_return(raw):
    raw = bytes(raw)
    if not raw or len(raw) < 2 + raw[0]:
        raise SerializationError("truncated return record")
    n = raw[0]
    verb = raw[1:1 + n].decode("ascii")
    (status,) = struct.unpack_from("<b", raw, 1 + n)
    return verb, status, raw[2 + n:]
