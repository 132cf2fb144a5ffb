"""Length-prefixed framing between audit clients and storage servers.

Frame: body length (u32 big-endian), type byte, body.  Integer fields inside
bodies are big-endian; field symbols use the little-endian symbol encoding of
:mod:`stenforce.field`.

    STORE       bundle_id(16) index(u16) protocol(u8) code(17) offset(u32)
                shard_length(u32) payload
    STORE_ACK   bundle_id(16) index(u16)
    CHALLENGE   bundle_id(16) index(u16) beta(u32)
    RESPONSE    index(u16) symbol
    NO_RESPONSE_DECLARED  index(u16)
    ERROR       UTF-8 text

An RS payload is ``shard_length`` symbols of ``symbol_width(q)`` bytes; a CRT
payload is the shard as a ``shard_length``-byte big-endian integer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Union

from .codes import CODE_PARAMS_SIZE, RS, CodeParams
from .errors import FormatError
from .field import decode_symbol, encode_symbol, symbol_width
from .protocol import PROTOCOL_BYTES

STORE = 0x01
STORE_ACK = 0x02
CHALLENGE = 0x03
RESPONSE = 0x04
NO_RESPONSE_DECLARED = 0x05
ERROR = 0x06
FRAME_TYPES = (STORE, STORE_ACK, CHALLENGE, RESPONSE, NO_RESPONSE_DECLARED, ERROR)

MAX_BODY = 1 << 30
BUNDLE_ID_SIZE = 16

_PREFIX = struct.Struct(">IB")
_STORE_HEAD = struct.Struct(f">{BUNDLE_ID_SIZE}sHB{CODE_PARAMS_SIZE}sII")
_ACK = struct.Struct(f">{BUNDLE_ID_SIZE}sH")
_CHALLENGE = struct.Struct(f">{BUNDLE_ID_SIZE}sHI")
_INDEX = struct.Struct(">H")

_PROTOCOL_NAMES = {v: k for k, v in PROTOCOL_BYTES.items()}


def _bundle(bundle_id: bytes) -> bytes:
    if len(bundle_id) != BUNDLE_ID_SIZE:
        raise FormatError(f"bundle id must be {BUNDLE_ID_SIZE} bytes")
    return bundle_id


@dataclass(frozen=True)
class Store:
    bundle_id: bytes
    index: int
    protocol: str
    code: CodeParams
    offset: int
    shard: tuple[int, ...] | int

    @property
    def shard_length(self) -> int:
        return len(self.shard) if self.code.scheme == RS else self._crt_width()

    def _crt_width(self) -> int:
        return max(1, (self.shard.bit_length() + 7) // 8)

    def body(self) -> bytes:
        if self.code.scheme == RS:
            payload = b"".join(encode_symbol(v, self.code.q) for v in self.shard)
        else:
            payload = self.shard.to_bytes(self._crt_width(), "big")
        head = _STORE_HEAD.pack(
            _bundle(self.bundle_id), self.index, PROTOCOL_BYTES[self.protocol],
            self.code.to_bytes(), self.offset, self.shard_length,
        )
        return head + payload

    @classmethod
    def parse(cls, body: bytes) -> Store:
        if len(body) < _STORE_HEAD.size:
            raise FormatError("STORE body truncated")
        bundle_id, index, proto, code_b, offset, length = _STORE_HEAD.unpack_from(body)
        if proto not in _PROTOCOL_NAMES:
            raise FormatError(f"unknown protocol byte {proto:#04x}")
        code = CodeParams.from_bytes(code_b)
        payload = body[_STORE_HEAD.size :]
        if code.scheme == RS:
            width = symbol_width(code.q)
            if len(payload) != length * width:
                raise FormatError(f"STORE payload is {len(payload)} bytes, expected {length * width}")
            shard = tuple(decode_symbol(payload[i : i + width], code.q) for i in range(0, len(payload), width))
        else:
            if len(payload) != length:
                raise FormatError(f"STORE payload is {len(payload)} bytes, expected {length}")
            shard = int.from_bytes(payload, "big")
        return cls(bundle_id, index, _PROTOCOL_NAMES[proto], code, offset, shard)


@dataclass(frozen=True)
class StoreAck:
    bundle_id: bytes
    index: int

    def body(self) -> bytes:
        return _ACK.pack(_bundle(self.bundle_id), self.index)

    @classmethod
    def parse(cls, body: bytes) -> StoreAck:
        if len(body) != _ACK.size:
            raise FormatError("STORE_ACK body has the wrong size")
        return cls(*_ACK.unpack(body))


@dataclass(frozen=True)
class Challenge:
    bundle_id: bytes
    index: int
    beta: int

    def body(self) -> bytes:
        return _CHALLENGE.pack(_bundle(self.bundle_id), self.index, self.beta)

    @classmethod
    def parse(cls, body: bytes) -> Challenge:
        if len(body) != _CHALLENGE.size:
            raise FormatError("CHALLENGE body has the wrong size")
        return cls(*_CHALLENGE.unpack(body))


@dataclass(frozen=True)
class Response:
    """An answer symbol; ``width`` is the symbol size in bytes for its alphabet."""

    index: int
    value: int
    width: int

    def body(self) -> bytes:
        if not 0 <= self.value < 1 << (8 * self.width):
            raise FormatError(f"response value does not fit in {self.width} bytes")
        return _INDEX.pack(self.index) + self.value.to_bytes(self.width, "little")

    @classmethod
    def parse(cls, body: bytes) -> Response:
        if len(body) < _INDEX.size + 1:
            raise FormatError("RESPONSE body truncated")
        (index,) = _INDEX.unpack_from(body)
        return cls(index, int.from_bytes(body[_INDEX.size :], "little"), len(body) - _INDEX.size)


@dataclass(frozen=True)
class NoResponse:
    index: int

    def body(self) -> bytes:
        return _INDEX.pack(self.index)

    @classmethod
    def parse(cls, body: bytes) -> NoResponse:
        if len(body) != _INDEX.size:
            raise FormatError("NO_RESPONSE_DECLARED body has the wrong size")
        return cls(*_INDEX.unpack(body))


@dataclass(frozen=True)
class Error:
    message: str

    def body(self) -> bytes:
        return self.message.encode("utf-8")

    @classmethod
    def parse(cls, body: bytes) -> Error:
        try:
            return cls(body.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError("ERROR body is not UTF-8") from exc


WireMessage = Union[Store, StoreAck, Challenge, Response, NoResponse, Error]

_TYPES: dict[int, type] = {
    STORE: Store, STORE_ACK: StoreAck, CHALLENGE: Challenge,
    RESPONSE: Response, NO_RESPONSE_DECLARED: NoResponse, ERROR: Error,
}
_CODES = {cls: code for code, cls in _TYPES.items()}


def frame(kind: int, body: bytes) -> bytes:
    if kind not in _TYPES:
        raise FormatError(f"unknown frame type {kind:#04x}")
    if len(body) > MAX_BODY:
        raise FormatError("frame body too large")
    return _PREFIX.pack(len(body), kind) + body


def encode(msg: WireMessage) -> bytes:
    return frame(_CODES[type(msg)], msg.body())


def parse_body(kind: int, body: bytes) -> WireMessage:
    if kind not in _TYPES:
        raise FormatError(f"unknown frame type {kind:#04x}")
    return _TYPES[kind].parse(body)


def decode(data: bytes) -> tuple[WireMessage, int]:
    """Parse one frame from the front of ``data``; returns (message, bytes used)."""
    if len(data) < _PREFIX.size:
        raise FormatError("frame header truncated")
    length, kind = _PREFIX.unpack_from(data)
    if length > MAX_BODY:
        raise FormatError("frame body too large")
    end = _PREFIX.size + length
    if len(data) < end:
        raise FormatError("frame body truncated")
    return parse_body(kind, data[_PREFIX.size : end]), end


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    buf = bytearray()
    while len(buf) < size:
        chunk = stream.read(size - len(buf))
        if not chunk:
            raise EOFError("connection closed mid-frame" if buf else "connection closed")
        buf += chunk
    return bytes(buf)


def read_message(stream: BinaryIO) -> WireMessage:
    """Read one frame from a binary stream (e.g. ``socket.makefile('rb')``)."""
    length, kind = _PREFIX.unpack(_read_exact(stream, _PREFIX.size))
    if length > MAX_BODY:
        raise FormatError("frame body too large")
    if kind not in _TYPES:
        raise FormatError(f"unknown frame type {kind:#04x}")
    return parse_body(kind, _read_exact(stream, length))
