"""Audit protocols: token generation, honest responses and verification.

Four schemes share one token format:

SINGLE     one server holds x; the client keeps (b, H(x)_b).
TRIVIAL    s servers hold shards x_i; the client keeps (b, H(x_1)_b, ..., H(x_s)_b).
LINEAR     s servers; the client keeps (b, H(x)_b) and checks the sum of answers.
RS_PARITY  s servers; the client keeps the 2r+e parity symbols of the
           systematic RS encoding of (H(x^_1)_b, ..., H(x^_s)_b).

x^_i is shard i zero-padded to full length, so for an RS hash the
answer of server i is sum_{j in shard i} x_j b**j.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

from .codes import RS, CodeParams, Message, hash_symbol, poly_eval, systematic_rs_encode
from .errors import DecodingFailure, FormatError, ProtocolError, UsageError
from .field import FieldElement, decode_symbol, encode_symbol
from .rsdecode import ReceivedWord, decode_errors_erasures

SINGLE = "SINGLE"
TRIVIAL = "TRIVIAL"
LINEAR = "LINEAR"
RS_PARITY = "RS_PARITY"
PROTOCOLS = (SINGLE, TRIVIAL, LINEAR, RS_PARITY)
PROTOCOL_BYTES = {SINGLE: 0x01, TRIVIAL: 0x02, LINEAR: 0x03, RS_PARITY: 0x04}

NO_RESPONSE = None
DEFAULT_AUDITS = 16

MAGIC = b"STEN"
VERSION = 0x01
_HEADER = struct.Struct("<4sBB17sHHHHQ")


class ChallengeRng:
    """SHA-256 in counter mode.

    Block i is SHA256(seed as 32 little-endian bytes || i as 8 little-endian
    bytes); each block yields four 64-bit little-endian words.  Integers in
    [0, n) come from rejection sampling on those words.
    """

    def __init__(self, seed: int) -> None:
        if not 0 <= seed < 1 << 256:
            raise UsageError("seed must lie in [0, 2**256)")
        self._key = seed.to_bytes(32, "little")
        self._counter = 0
        self._words: list[int] = []

    def next_u64(self) -> int:
        if not self._words:
            block = hashlib.sha256(self._key + self._counter.to_bytes(8, "little")).digest()
            self._counter += 1
            self._words = list(struct.unpack("<4Q", block))[::-1]
        return self._words.pop()

    def randbelow(self, n: int) -> int:
        if n < 1:
            raise UsageError("randbelow needs n >= 1")
        if n > 1 << 64:
            raise UsageError("randbelow supports n <= 2**64")
        limit = (1 << 64) - (1 << 64) % n
        while True:
            w = self.next_u64()
            if w < limit:
                return w % n

    def random(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)


@dataclass
class AuditRecord:
    beta: int
    payload: tuple[int, ...]
    consumed: bool = False


@dataclass
class AuditToken:
    """The client's local state: a bundle of single-use audit records."""

    scheme: str
    code: CodeParams
    s: int = 1
    r: int = 0
    e: int = 0
    original_byte_length: int = 0
    records: list[AuditRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.scheme not in PROTOCOLS:
            raise UsageError(f"unknown protocol {self.scheme!r}")
        if self.s < 1:
            raise UsageError("need at least one server")
        if self.scheme in (LINEAR, RS_PARITY) and self.code.scheme != RS:
            raise UsageError(f"{self.scheme} needs a linear (RS) code")
        if self.scheme == RS_PARITY and self.ell > self.code.q:
            raise UsageError(f"ell = 2r+e+s = {self.ell} exceeds q = {self.code.q}")
        for rec in self.records:
            if not 0 <= rec.beta < self.code.n:
                raise UsageError(f"challenge {rec.beta} outside [0, {self.code.n})")
            if len(rec.payload) != self.arity:
                raise UsageError(f"{self.scheme} payload needs {self.arity} symbols")

    @property
    def ell(self) -> int:
        return 2 * self.r + self.e + self.s

    @property
    def arity(self) -> int:
        return {SINGLE: 1, LINEAR: 1, TRIVIAL: self.s, RS_PARITY: 2 * self.r + self.e}[self.scheme]

    @property
    def t(self) -> int:
        return len(self.records)

    @property
    def remaining(self) -> int:
        return sum(not rec.consumed for rec in self.records)

    def next_record(self) -> int:
        for i, rec in enumerate(self.records):
            if not rec.consumed:
                return i
        raise ProtocolError("no unconsumed audits")

    def record(self, index: int | None = None) -> AuditRecord:
        return self.records[self.next_record() if index is None else index]

    @property
    def beta(self) -> int:
        return self.record().beta

    @property
    def payload(self) -> tuple[int, ...]:
        return self.record().payload

    def consume(self, index: int | None = None) -> AuditRecord:
        idx = self.next_record() if index is None else index
        rec = self.records[idx]
        if rec.consumed:
            raise ProtocolError(f"audit record {idx} already consumed")
        rec.consumed = True
        return rec

    # Serialization ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        if self.t > 0xFFFF:
            raise UsageError(f"{self.t} records do not fit the 16-bit record count")
        width = self.code.symbol_width
        out = bytearray(
            _HEADER.pack(
                MAGIC, VERSION, PROTOCOL_BYTES[self.scheme], self.code.to_bytes(),
                self.s, self.r, self.e, self.t, self.original_byte_length,
            )
        )
        for rec in self.records:
            out += rec.beta.to_bytes(4, "little")
            out.append(1 if rec.consumed else 0)
            for sym in rec.payload:
                out += encode_symbol(sym, self.code.max_alphabet)
        assert len(out) == _HEADER.size + self.t * (5 + self.arity * width)
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> AuditToken:
        if len(data) < _HEADER.size:
            raise FormatError("token file truncated")
        magic, version, scheme_b, code_b, s, r, e, t, orig = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError("bad token magic")
        if version != VERSION:
            raise FormatError(f"unsupported token version {version}")
        schemes = {v: k for k, v in PROTOCOL_BYTES.items()}
        if scheme_b not in schemes:
            raise FormatError(f"unknown protocol byte {scheme_b:#04x}")
        code = CodeParams.from_bytes(code_b)
        scheme = schemes[scheme_b]
        try:
            token = cls(scheme, code, s, r, e, orig)
        except UsageError as exc:
            raise FormatError(str(exc)) from exc
        width = code.symbol_width
        rec_size = 5 + token.arity * width
        if len(data) != _HEADER.size + t * rec_size:
            raise FormatError(f"token body is {len(data) - _HEADER.size} bytes, expected {t * rec_size}")
        pos = _HEADER.size
        for _ in range(t):
            beta = int.from_bytes(data[pos : pos + 4], "little")
            flag = data[pos + 4]
            if flag not in (0, 1):
                raise FormatError(f"bad consumed flag {flag}")
            pos += 5
            payload = []
            for _ in range(token.arity):
                payload.append(decode_symbol(data[pos : pos + width], code.max_alphabet))
                pos += width
            if beta >= code.n:
                raise FormatError(f"challenge {beta} outside [0, {code.n})")
            token.records.append(AuditRecord(beta, tuple(payload), bool(flag)))
        return token

    def bundle_id(self) -> bytes:
        """16-byte identifier shared with the servers; independent of consumption state."""
        fresh = replace(self, records=[replace(rec, consumed=False) for rec in self.records])
        return hashlib.sha256(fresh.to_bytes()).digest()[:16]


@dataclass(frozen=True)
class AuditVerdict:
    """Outcome of one audit.

    ``flagged`` is the per-server failure set (TRIVIAL) or the located
    cheaters T' (RS_PARITY); ``erased`` lists non-responders.
    """

    passed: bool
    flagged: frozenset[int] = frozenset()
    erased: frozenset[int] = frozenset()
    decoding_failure: bool = False

    @property
    def bit(self) -> int:
        return int(self.passed)

    @property
    def label(self) -> str:
        if self.decoding_failure:
            return "DECODING_FAILURE"
        return "PASS" if self.passed else "FAIL"


# --------------------------------------------------------------------------
# Helpers


def _value(a) -> int | None:
    if a is None:
        return None
    return a.value if isinstance(a, FieldElement) else int(a)


def _draw(code: CodeParams, rng_seed: int | None, audits: int, beta_index: int | None) -> list[int]:
    if beta_index is not None:
        if not 0 <= beta_index < code.n:
            raise UsageError(f"challenge {beta_index} outside [0, {code.n})")
        return [beta_index] * audits
    if rng_seed is None:
        raise UsageError("need an rng seed or a forced challenge index")
    rng = ChallengeRng(rng_seed)
    return [rng.randbelow(code.n) for _ in range(audits)]


def _check_message(x: Message, code: CodeParams, per_shard: bool) -> None:
    if x.scheme != code.scheme:
        raise UsageError(f"{x.scheme} message with {code.scheme} code")
    if code.scheme == RS:
        want = x.shard_length if per_shard else x.k
        if want != code.k:
            raise UsageError(f"code dimension {code.k} does not match message length {want}")
        if any(not 0 <= v < code.q for v in x.symbols):
            raise UsageError("message symbols outside the field")
    elif any(not 0 <= v < code.message_bound for v in x.symbols):
        raise UsageError("message exceeds the CRT range p_1*...*p_k")


def shard_offset(x: Message, i: int, scheme: str) -> int:
    """Power offset a server applies: shard start for LINEAR/RS_PARITY, else 0."""
    if scheme in (LINEAR, RS_PARITY):
        return x.shard_range(i).start
    return 0


def honest_shard_response(shard, beta_index: int, scheme: str, code: CodeParams, offset: int = 0) -> int:
    """What an honest server answers for challenge ``beta_index``.

    LINEAR/RS_PARITY evaluate the zero-padded embedding, i.e. the shard's
    monomials start at beta**offset; SINGLE/TRIVIAL hash the shard on its own.
    """
    if scheme not in PROTOCOLS:
        raise UsageError(f"unknown protocol {scheme!r}")
    if scheme in (SINGLE, TRIVIAL):
        offset = 0
    elif code.scheme != RS:
        raise UsageError(f"{scheme} needs a linear (RS) code")
    return hash_symbol(shard, beta_index, code, offset)


def shard_hashes(x: Message, beta_index: int, code: CodeParams) -> list[int]:
    """(H(x^_1)_b, ..., H(x^_s)_b) for an RS message."""
    return [
        honest_shard_response(x.shard(i), beta_index, LINEAR, code, x.shard_range(i).start)
        for i in range(x.s)
    ]


# --------------------------------------------------------------------------
# SINGLE


def preprocess_single(
    x: Message, code: CodeParams, rng_seed: int | None = None, audits: int = 1,
    beta_index: int | None = None,
) -> tuple[AuditToken, Message]:
    if x.s != 1:
        if x.scheme != RS:
            raise UsageError("SINGLE takes an unsharded CRT message")
        x = Message(x.symbols, 1, x.original_byte_length, RS)
    _check_message(x, code, per_shard=False)
    value = x.symbols if code.scheme == RS else x.symbols[0]
    records = [AuditRecord(b, (hash_symbol(value, b, code),)) for b in _draw(code, rng_seed, audits, beta_index)]
    return AuditToken(SINGLE, code, 1, 0, 0, x.original_byte_length, records), x


def verify_single(token: AuditToken, a, record: int | None = None) -> int:
    if token.scheme != SINGLE:
        raise UsageError("verify_single needs a SINGLE token")
    return int(_value(a) == token.record(record).payload[0])


# --------------------------------------------------------------------------
# TRIVIAL


def preprocess_trivial(
    x: Message, code: CodeParams, rng_seed: int | None = None, audits: int = 1,
    beta_index: int | None = None,
) -> AuditToken:
    _check_message(x, code, per_shard=True)
    records = []
    for b in _draw(code, rng_seed, audits, beta_index):
        gammas = tuple(hash_symbol(x.shard(i), b, code) for i in range(x.s))
        records.append(AuditRecord(b, gammas))
    return AuditToken(TRIVIAL, code, x.s, 0, 0, x.original_byte_length, records)


def verify_trivial(token: AuditToken, responses: Sequence, record: int | None = None) -> AuditVerdict:
    if token.scheme != TRIVIAL:
        raise UsageError("verify_trivial needs a TRIVIAL token")
    if len(responses) != token.s:
        raise UsageError(f"expected {token.s} responses, got {len(responses)}")
    gammas = token.record(record).payload
    answers = [_value(a) for a in responses]
    failed = frozenset(i for i, (a, g) in enumerate(zip(answers, gammas)) if a != g)
    silent = frozenset(i for i, a in enumerate(answers) if a is None)
    return AuditVerdict(not failed, failed, silent)


# --------------------------------------------------------------------------
# LINEAR


def preprocess_linear(
    x: Message, code: CodeParams, rng_seed: int | None = None, audits: int = 1,
    beta_index: int | None = None,
) -> AuditToken:
    if code.scheme != RS:
        raise UsageError("LINEAR needs a linear (RS) code")
    _check_message(x, code, per_shard=False)
    records = [
        AuditRecord(b, (poly_eval(x.symbols, b, code.q),))
        for b in _draw(code, rng_seed, audits, beta_index)
    ]
    return AuditToken(LINEAR, code, x.s, 0, 0, x.original_byte_length, records)


def verify_linear(token: AuditToken, responses: Sequence, record: int | None = None) -> int:
    if token.scheme != LINEAR:
        raise UsageError("verify_linear needs a LINEAR token")
    if len(responses) != token.s:
        raise UsageError(f"expected {token.s} responses, got {len(responses)}")
    answers = [_value(a) for a in responses]
    if any(a is None for a in answers):
        raise ProtocolError("linear scheme requires full responses")
    return int(sum(answers) % token.code.q == token.record(record).payload[0])


# --------------------------------------------------------------------------
# RS_PARITY


def preprocess_rs_parity(
    x: Message, s: int, r: int, e: int, code: CodeParams, rng_seed: int | None = None,
    audits: int = 1, beta_index: int | None = None,
) -> AuditToken:
    if code.scheme != RS:
        raise UsageError("RS_PARITY needs a linear (RS) code")
    if x.s != s:
        raise UsageError(f"message laid out for {x.s} servers, not {s}")
    if not (0 <= r <= s and 0 <= e <= s):
        raise UsageError("need 0 <= r, e <= s")
    ell = 2 * r + e + s
    if ell > code.q:
        raise UsageError(f"ell = 2r+e+s = {ell} exceeds q = {code.q}")
    _check_message(x, code, per_shard=False)
    fld = code.field
    records = []
    for b in _draw(code, rng_seed, audits, beta_index):
        v = shard_hashes(x, b, code)
        parity = tuple(c.value for c in systematic_rs_encode(v, ell, fld)[s:])
        records.append(AuditRecord(b, parity))
    return AuditToken(RS_PARITY, code, s, r, e, x.original_byte_length, records)


def verify_rs_parity(
    token: AuditToken, responses: Sequence, record: int | None = None, method: str = "auto"
) -> AuditVerdict:
    """Locate cheaters from the parity symbols; PASS iff decoding succeeds with T' empty."""
    if token.scheme != RS_PARITY:
        raise UsageError("verify_rs_parity needs an RS_PARITY token")
    if len(responses) != token.s:
        raise UsageError(f"expected {token.s} responses, got {len(responses)}")
    answers = [_value(a) for a in responses]
    erased = frozenset(i for i, a in enumerate(answers) if a is None)
    if len(erased) > token.e:
        return AuditVerdict(False, frozenset(), erased, decoding_failure=True)
    fld = token.code.field
    z = ReceivedWord.build(answers + list(token.record(record).payload), token.s, fld)
    try:
        _, cheaters = decode_errors_erasures(z, allowed_error_positions=range(token.s), method=method)
    except DecodingFailure:
        return AuditVerdict(False, frozenset(), erased, decoding_failure=True)
    return AuditVerdict(not cheaters, cheaters, erased)


# --------------------------------------------------------------------------
# Scheme-generic entry points


def preprocess(
    scheme: str, x: Message, code: CodeParams, rng_seed: int | None = None, audits: int = 1,
    beta_index: int | None = None, r: int = 0, e: int = 0,
) -> AuditToken:
    if scheme == SINGLE:
        return preprocess_single(x, code, rng_seed, audits, beta_index)[0]
    if scheme == TRIVIAL:
        return preprocess_trivial(x, code, rng_seed, audits, beta_index)
    if scheme == LINEAR:
        return preprocess_linear(x, code, rng_seed, audits, beta_index)
    if scheme == RS_PARITY:
        return preprocess_rs_parity(x, x.s, r, e, code, rng_seed, audits, beta_index)
    raise UsageError(f"unknown protocol {scheme!r}")


def verify(token: AuditToken, responses: Sequence, record: int | None = None) -> AuditVerdict:
    """Uniform verdict for every scheme; LINEAR with a silent server fails closed."""
    if token.scheme == SINGLE:
        if len(responses) != 1:
            raise UsageError("SINGLE expects exactly one response")
        a = _value(responses[0])
        ok = a is not None and verify_single(token, a, record) == 1
        return AuditVerdict(ok, frozenset() if ok else frozenset({0}), frozenset({0}) if a is None else frozenset())
    if token.scheme == TRIVIAL:
        return verify_trivial(token, responses, record)
    if token.scheme == LINEAR:
        silent = frozenset(i for i, a in enumerate(responses) if a is None)
        if silent:
            return AuditVerdict(False, frozenset(), silent)
        return AuditVerdict(verify_linear(token, responses, record) == 1)
    return verify_rs_parity(token, responses, record)


def honest_responses(x: Message, scheme: str, code: CodeParams, beta_index: int) -> list[int]:
    if scheme == SINGLE:
        value = x.symbols if code.scheme == RS else x.symbols[0]
        return [hash_symbol(value, beta_index, code)]
    return [
        honest_shard_response(x.shard(i), beta_index, scheme, code, shard_offset(x, i, scheme))
        for i in range(x.s)
    ]
