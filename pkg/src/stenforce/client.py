"""Client side of the audit protocol: push shards, run one audit round."""

from __future__ import annotations

import socket
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .codes import CRT, Message
from .errors import FormatError, ProtocolError, StenforceError, UsageError
from .protocol import LINEAR, SINGLE, AuditToken, AuditVerdict, shard_offset, verify
from .wire import Challenge, Error, NoResponse, Response, Store, StoreAck, encode, read_message

DEFAULT_TIMEOUT = 5.0

OK = "ok"
TIMEOUT = "timeout"
UNREACHABLE = "unreachable"
DECLINED = "declined"
REFUSED = "error"


class EndpointUnreachable(StenforceError):
    """A server could not be contacted and the scheme cannot treat it as an erasure."""


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.strip().rpartition(":")
    if not sep or not host or not port.isdigit():
        raise UsageError(f"endpoint {text!r} is not host:port")
    return host.strip("[]"), int(port)


def parse_endpoints(text: str) -> list[tuple[str, int]]:
    out = [parse_endpoint(part) for part in text.split(",") if part.strip()]
    if not out:
        raise UsageError("no endpoints given")
    return out


def _exchange(address: tuple[str, int], msg, timeout: float):
    with socket.create_connection(address, timeout=timeout) as sock:
        sock.settimeout(timeout)
        sock.sendall(encode(msg))
        with sock.makefile("rb") as stream:
            return read_message(stream)


def shard_for(x: Message, i: int, scheme: str):
    if scheme == SINGLE:
        return x.symbols if x.scheme != CRT else x.symbols[0]
    return x.shard(i)


def store(token: AuditToken, x: Message, endpoints: Sequence[tuple[str, int]],
          timeout: float = DEFAULT_TIMEOUT) -> bytes:
    """Send shard i to endpoint i; returns the bundle id the servers file it under."""
    if len(endpoints) != token.s:
        raise UsageError(f"{token.scheme} with s={token.s} needs {token.s} endpoints, got {len(endpoints)}")
    bundle = token.bundle_id()
    for i, address in enumerate(endpoints):
        msg = Store(bundle, i, token.scheme, token.code, shard_offset(x, i, token.scheme), shard_for(x, i, token.scheme))
        try:
            reply = _exchange(address, msg, timeout)
        except (OSError, EOFError) as exc:
            raise EndpointUnreachable(f"cannot store on {address[0]}:{address[1]}: {exc}") from exc
        if isinstance(reply, Error):
            raise ProtocolError(f"server {i} refused the shard: {reply.message}")
        if not isinstance(reply, StoreAck) or reply.index != i or reply.bundle_id != bundle:
            raise ProtocolError(f"server {i} sent an unexpected reply to STORE")
    return bundle


@dataclass(frozen=True)
class Answer:
    value: int | None
    status: str
    detail: str = ""


def challenge(address: tuple[str, int], bundle_id: bytes, index: int, beta: int,
              timeout: float = DEFAULT_TIMEOUT) -> Answer:
    try:
        reply = _exchange(address, Challenge(bundle_id, index, beta), timeout)
    except socket.timeout:
        return Answer(None, TIMEOUT)
    except EOFError:
        return Answer(None, TIMEOUT, "connection closed")
    except FormatError as exc:
        return Answer(None, REFUSED, str(exc))
    except OSError as exc:
        return Answer(None, UNREACHABLE, str(exc))
    if isinstance(reply, Response) and reply.index == index:
        return Answer(reply.value, OK)
    if isinstance(reply, NoResponse):
        return Answer(None, DECLINED)
    if isinstance(reply, Error):
        return Answer(None, REFUSED, reply.message)
    return Answer(None, REFUSED, f"unexpected {type(reply).__name__} frame")


@dataclass(frozen=True)
class AuditOutcome:
    verdict: AuditVerdict
    record: int
    beta: int
    answers: tuple[Answer, ...]


def audit(token: AuditToken, endpoints: Sequence[tuple[str, int]], timeout: float = DEFAULT_TIMEOUT,
          parallel: bool = False) -> AuditOutcome:
    """Consume the next record of ``token`` and challenge every endpoint with it.

    The record is marked consumed before any network traffic, so a crashed
    or interrupted audit never reuses a challenge.  Missing answers become
    NO_RESPONSE; for SINGLE and LINEAR an unreachable endpoint raises
    :class:`EndpointUnreachable` instead.
    """
    if len(endpoints) != token.s:
        raise UsageError(f"token expects {token.s} endpoints, got {len(endpoints)}")
    index = token.next_record()
    rec = token.consume(index)
    bundle = token.bundle_id()
    jobs = [(address, bundle, i, rec.beta, timeout) for i, address in enumerate(endpoints)]
    if parallel:
        with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
            answers = tuple(pool.map(lambda job: challenge(*job), jobs))
    else:
        answers = tuple(challenge(*job) for job in jobs)
    down = [i for i, a in enumerate(answers) if a.status == UNREACHABLE]
    if down and token.scheme in (SINGLE, LINEAR):
        raise EndpointUnreachable(f"endpoint(s) {down} unreachable; {token.scheme} cannot tolerate missing servers")
    verdict = verify(token, [a.value for a in answers], index)
    return AuditOutcome(verdict, index, rec.beta, answers)
