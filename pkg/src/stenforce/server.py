"""Threaded audit server.

Each STORE is written to its own file, ``<bundle hex>_<index>.shard`` in the
storage directory, via a temporary file and an atomic rename; a re-STORE of
the same shard replaces it.  Connections share nothing else.
"""

from __future__ import annotations

import logging
import os
import socketserver
import tempfile
import threading
from pathlib import Path

from .codes import RS
from .errors import FormatError, StenforceError
from .field import symbol_width
from .protocol import honest_shard_response
from .wire import (
    Challenge, Error, NoResponse, Response, Store, StoreAck, encode, read_message,
)

log = logging.getLogger(__name__)

HONEST = "honest"
SILENT = "silent"
DECLINE = "decline"
CORRUPT = "corrupt"
BEHAVIORS = (HONEST, SILENT, DECLINE, CORRUPT)


def shard_path(root: Path, bundle_id: bytes, index: int) -> Path:
    return root / f"{bundle_id.hex()}_{index}.shard"


def _write_atomic(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".incoming-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


class _Handler(socketserver.StreamRequestHandler):
    server: AuditServer

    def handle(self) -> None:
        while True:
            try:
                msg = read_message(self.rfile)
            except EOFError:
                return
            except FormatError as exc:
                self._send(Error(f"malformed frame: {exc}"))
                return
            try:
                reply = self.server.dispatch(msg)
            except (StenforceError, OSError) as exc:
                log.warning("request failed: %s", exc)
                reply = Error(str(exc))
            if reply is not None:
                self._send(reply)

    def _send(self, msg) -> None:
        try:
            self.wfile.write(encode(msg))
            self.wfile.flush()
        except OSError:
            pass


class AuditServer(socketserver.ThreadingTCPServer):
    """Stores shards and answers challenges.

    ``behavior`` is for demonstrations and tests: ``silent`` ignores
    challenges, ``decline`` answers NO_RESPONSE_DECLARED, ``corrupt`` returns
    the honest answer plus one.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], storage: str | os.PathLike, behavior: str = HONEST) -> None:
        if behavior not in BEHAVIORS:
            raise ValueError(f"unknown behavior {behavior!r}")
        self.storage = Path(storage)
        self.storage.mkdir(parents=True, exist_ok=True)
        self.behavior = behavior
        super().__init__(address, _Handler)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def dispatch(self, msg):
        if isinstance(msg, Store):
            _write_atomic(shard_path(self.storage, msg.bundle_id, msg.index), msg.body())
            return StoreAck(msg.bundle_id, msg.index)
        if isinstance(msg, Challenge):
            return self._answer(msg)
        return Error(f"unexpected {type(msg).__name__} frame")

    def _answer(self, msg: Challenge):
        path = shard_path(self.storage, msg.bundle_id, msg.index)
        try:
            stored = Store.parse(path.read_bytes())
        except FileNotFoundError:
            return Error("not stored")
        if self.behavior == SILENT:
            return None
        if self.behavior == DECLINE:
            return NoResponse(msg.index)
        code = stored.code
        if not 0 <= msg.beta < code.n:
            return Error(f"challenge {msg.beta} outside [0, {code.n})")
        value = honest_shard_response(stored.shard, msg.beta, stored.protocol, code, stored.offset)
        alphabet = code.q if code.scheme == RS else code.primes[msg.beta]
        if self.behavior == CORRUPT:
            value = (value + 1) % alphabet
        return Response(msg.index, value, symbol_width(code.max_alphabet))

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, name=f"audit-server-{self.endpoint}", daemon=True)
        thread.start()
        return thread


def serve(address: tuple[str, int], storage: str | os.PathLike, behavior: str = HONEST) -> None:
    with AuditServer(address, storage, behavior) as server:
        log.info("listening on %s, storing under %s", server.endpoint, server.storage)
        server.serve_forever()


__all__ = ["AuditServer", "BEHAVIORS", "serve", "shard_path"]
