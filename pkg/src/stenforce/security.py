"""Desk-scale versions of the extraction arguments behind the protocols.

A deterministic responder that passes on all but ``t`` challenges yields an
answer vector within Hamming distance ``t`` of H(x).  Enumerating every
message and keeping those whose codeword lies in that ball gives a short
list containing x; an index into the list (the advice) pins x down.  The
functions here run that enumeration for real on small codes, and evaluate
the resulting storage bounds with each slack term itemized.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .codes import RS, CodeParams, Message
from .errors import UsageError
from .protocol import PROTOCOLS, SINGLE, TRIVIAL

ENUMERATION_LIMIT = 1 << 24
_CHUNK = 1 << 16

# Bits charged for the decompressor itself in the compression estimate.
DECODER_STUB_BITS = 2048


@dataclass(frozen=True)
class Responder:
    """A fixed answer function A(b, y) together with its stored string y."""

    answer: Callable[[int, object], int]
    stored: object = b""
    stored_bits: int = 0

    def answers(self, n: int) -> list[int]:
        return [int(self.answer(b, self.stored)) for b in range(n)]


@dataclass(frozen=True)
class ExtractionResult:
    candidates: list
    advice_index: int | None
    list_bound: int
    radius: int
    received: tuple[int, ...] = field(repr=False, default=())

    @property
    def size(self) -> int:
        return len(self.candidates)

    def decode(self, advice: int):
        """The message selected by ``advice``; what the extraction 'outputs'."""
        return self.candidates[advice]


def _radius(code: CodeParams, rho: float | None) -> int:
    if rho is None:
        return code.radius
    if not 0 <= rho <= 1:
        raise UsageError("radius fraction must lie in [0, 1]")
    return math.floor(rho * code.n)


def _message_count(code: CodeParams, alphabet: int | None) -> int:
    if code.scheme == RS:
        a = code.q if alphabet is None else alphabet
        if not 2 <= a <= code.q:
            raise UsageError(f"message alphabet {a} outside [2, q]")
        return a**code.k
    if alphabet is not None:
        raise UsageError("CRT messages are integers; no alphabet applies")
    return code.message_bound


@lru_cache(maxsize=8)
def _codebook(code: CodeParams, alphabet: int | None) -> np.ndarray:
    """All codewords, one row per message in canonical order."""
    count = _message_count(code, alphabet)
    if count > ENUMERATION_LIMIT:
        raise UsageError(f"desk-scale only: {count} messages exceed 2**24")
    if code.scheme == RS:
        q = code.q
        if q >= 1 << 31:
            raise UsageError("desk-scale enumeration needs q < 2**31")
        a = q if alphabet is None else alphabet
        # Canonical order: itertools.product, x_0 most significant.
        digits = np.indices((a,) * code.k).reshape(code.k, -1).T.astype(np.int64)
        powers = np.array([[pow(b, i, q) for b in range(code.n)] for i in range(code.k)], dtype=np.int64)
        book = np.zeros((count, code.n), dtype=np.int64)
        for i in range(code.k):
            book = (book + digits[:, i : i + 1] * powers[i]) % q
        return book
    values = np.arange(count, dtype=object) if count >= 1 << 62 else np.arange(count, dtype=np.int64)
    return np.stack([values % p for p in code.primes], axis=1).astype(np.int64)


def _message_at(code: CodeParams, alphabet: int | None, index: int):
    if code.scheme != RS:
        return index
    a = code.q if alphabet is None else alphabet
    out = []
    for _ in range(code.k):
        index, d = divmod(index, a)
        out.append(d)
    return tuple(reversed(out))


def _message_index(code: CodeParams, alphabet: int | None, message) -> int | None:
    if code.scheme != RS:
        return int(message)
    a = code.q if alphabet is None else alphabet
    idx = 0
    for v in message:
        if not 0 <= v < a:
            return None
        idx = idx * a + v
    return idx


def ball_members(code: CodeParams, z: Sequence[int], radius: int, alphabet: int | None = None) -> list:
    """Messages u (canonical order) with Delta(H(u), z) <= radius."""
    book = _codebook(code, alphabet)
    zz = np.asarray(z, dtype=np.int64)
    if zz.shape != (code.n,):
        raise UsageError(f"received word must have length n={code.n}")
    hits = []
    for start in range(0, book.shape[0], _CHUNK):
        dist = (book[start : start + _CHUNK] != zz).sum(axis=1)
        hits.extend((np.nonzero(dist <= radius)[0] + start).tolist())
    return [_message_at(code, alphabet, i) for i in hits]


def _result(code, alphabet, z, t, true_message) -> ExtractionResult:
    members = ball_members(code, z, t, alphabet)
    advice = None
    if true_message is not None:
        key = true_message if code.scheme != RS else tuple(true_message)
        advice = members.index(key) if key in members else None
    return ExtractionResult(members, advice, code.L, t, tuple(int(v) for v in z))


def extract_list(
    responder: Responder,
    y: object,
    code: CodeParams,
    rho: float | None = None,
    alphabet: int | None = None,
    true_message=None,
) -> ExtractionResult:
    """Run the responder on every challenge and list-decode its answers.

    ``rho`` defaults to the code's Johnson radius; ``alphabet`` restricts RS
    messages to [alphabet]^k (the default is the whole field).
    """
    _message_count(code, alphabet)
    z = [int(responder.answer(b, y)) for b in range(code.n)]
    return _result(code, alphabet, z, _radius(code, rho), true_message)


def extract_coalition(
    responders: Mapping[int, Responder],
    stored: Mapping[int, object],
    honest_shards: Mapping[int, Sequence[int]],
    code: CodeParams,
    rho: float | None = None,
    alphabet: int | None = None,
    true_message: Message | None = None,
) -> ExtractionResult:
    """List-decode the summed answers of a colluding set T.

    Servers outside T are honest and contribute H(x^_i) exactly, so by
    linearity the coalition sum must be close to H(x^_T).  The list is over
    full-length messages; the advice index, when ``true_message`` is given,
    points at x^_T.
    """
    if code.scheme != RS:
        raise UsageError("coalition extraction needs a linear (RS) code")
    members = set(responders)
    if members & set(honest_shards):
        raise UsageError("a server cannot be both colluding and honest")
    if set(stored) != members:
        raise UsageError("need a stored string for every coalition member")
    _message_count(code, alphabet)
    q = code.q
    z = [sum(int(responders[j].answer(b, stored[j])) for j in members) % q for b in range(code.n)]
    target = None
    if true_message is not None:
        target = [0] * code.k
        for j in members:
            for pos in true_message.shard_range(j):
                target[pos] = true_message.symbols[pos]
    return _result(code, alphabet, z, _radius(code, rho), target)


# --------------------------------------------------------------------------
# Storage bounds


@dataclass(frozen=True)
class StorageBound:
    scheme: str
    c_estimate: float
    c0: float
    terms: dict[str, float]
    slack: float
    f_value: float

    def report(self) -> list[str]:
        lines = [f"scheme={self.scheme}", f"C_upper_estimate={self.c_estimate!r}"]
        lines += [f"term[{name}]={value!r}" for name, value in self.terms.items()]
        lines += [f"slack={self.slack!r}", f"c0={self.c0!r}", f"f={self.f_value!r}"]
        return lines


def _log2(x: Decimal) -> Decimal:
    return x.ln() / Decimal(2).ln()


def storage_bound(
    scheme: str, code: CodeParams, s: int, c_estimate: float, c0: float = 0
) -> StorageBound:
    """Lower bound f(x) on the storage of a server set passing with prob >= 1 - rho.

    For CRT codes q is the largest prime alphabet.  See :func:`storage_bound_raw`.
    """
    return storage_bound_raw(scheme, code.max_alphabet, code.n, code.L, s, c_estimate, c0)


def storage_bound_raw(
    scheme: str, q: int, n: int, L: int, s: int, c_estimate: float, c0: float = 0
) -> StorageBound:
    """The bound for explicit alphabet size, block length and list size.

    SINGLE:            f = C - log(qLn^3) - 2 loglog(qn) - c0
    TRIVIAL:           f = C - s - log(s^2 q L^s n^4) - 2 loglog(qn) - c0
    LINEAR, RS_PARITY: f = C - s - log(s^2 q L n^4) - 2 loglog(qn) - c0

    Logs are base 2.  Every term is evaluated at 60 significant digits and
    rounded once to a float; ``c_estimate`` and ``c0`` enter exactly.
    """
    if scheme not in PROTOCOLS:
        raise UsageError(f"unknown protocol {scheme!r}")
    if min(q, n, L, s) < 1:
        raise UsageError("q, n, L and s must be positive")
    if scheme == SINGLE and s != 1:
        raise UsageError("SINGLE has exactly one server")
    if q * n <= 2:
        raise UsageError("log log(qn) undefined for qn <= 2")
    with localcontext() as ctx:
        ctx.prec = 60
        terms: dict[str, Decimal] = {}
        if scheme == SINGLE:
            terms["log2(q*L*n^3)"] = _log2(Decimal(q * L * n**3))
        elif scheme == TRIVIAL:
            terms["s"] = Decimal(s)
            terms["log2(s^2*q*L^s*n^4)"] = _log2(Decimal(s * s * q * L**s * n**4))
        else:
            terms["s"] = Decimal(s)
            terms["log2(s^2*q*L*n^4)"] = _log2(Decimal(s * s * q * L * n**4))
        terms["2*log2(log2(q*n))"] = 2 * _log2(_log2(Decimal(q * n)))
        slack = sum(terms.values())
        f_exact = Decimal(float(c_estimate)) - slack - Decimal(float(c0))
        return StorageBound(
            scheme, float(c_estimate), float(c0), {k: float(v) for k, v in terms.items()},
            float(slack), float(f_exact),
        )


def kolmogorov_upper_estimate(data: bytes) -> int:
    """Upper estimate of C(x) in bits; never C(x) itself.

    Raw DEFLATE (zlib level 9, wbits=-15) output length times 8, plus
    DECODER_STUB_BITS for the decompressor.  The empty string costs only the stub.
    """
    if not data:
        return DECODER_STUB_BITS
    comp = zlib.compressobj(9, zlib.DEFLATED, -15)
    body = comp.compress(data) + comp.flush()
    return 8 * len(body) + DECODER_STUB_BITS


# --------------------------------------------------------------------------
# Ball counting for the list-decoding guarantee


def max_ball_occupancy_bruteforce(codewords: Sequence[Sequence[int]], radius: int,
                                  alphabet_sizes: Sequence[int]) -> int:
    """Max over every centre in prod [q_i] of the codewords within ``radius``."""
    total = math.prod(alphabet_sizes)
    if total > ENUMERATION_LIMIT:
        raise UsageError("too many centres to enumerate")
    book = np.asarray(codewords, dtype=np.int64)
    best = 0
    centres = itertools.product(*(range(q) for q in alphabet_sizes))
    while True:
        block = np.array(list(itertools.islice(centres, _CHUNK)), dtype=np.int64)
        if block.size == 0:
            return best
        dist = (block[:, None, :] != book[None, :, :]).sum(axis=2)
        best = max(best, int((dist <= radius).sum(axis=1).max()))


def ball_search(codewords: Sequence[Sequence[int]], radius: int, threshold: int) -> tuple[int, tuple | None]:
    """Branch-and-bound over centres looking for a ball with > ``threshold`` codewords.

    Only values taken by some codeword matter at each position (any other
    value agrees with nobody), so the search branches over those.  A branch
    is cut when the number of codewords that can still reach the required
    agreement, given the agreements the remaining positions can supply at
    most, is <= the best count so far (initially ``threshold``).
    Returns (best count found above threshold or ``threshold``, a witness
    centre or None).  With ``threshold = -1`` it computes the exact maximum.
    """
    words = [tuple(w) for w in codewords]
    if not words:
        return max(threshold, 0), None
    n = len(words[0])
    need = n - radius
    best = [threshold, None]
    centre: list[int | None] = [None] * n

    def bound(i: int, agree: list[int], alive: list[int]) -> int:
        credit = 0
        for j in range(i, n):
            counts: dict[int, int] = {}
            for w in alive:
                counts[words[w][j]] = counts.get(words[w][j], 0) + 1
            credit += max(counts.values())
        needs = sorted(max(0, need - agree[w]) for w in alive)
        used = count = 0
        for nd in needs:
            if used + nd > credit:
                break
            used += nd
            count += 1
        return count

    def dfs(i: int, agree: list[int], alive: list[int]) -> None:
        if len(alive) <= best[0]:
            return
        if i == n:
            best[0] = len(alive)
            best[1] = tuple(centre)
            return
        if bound(i, agree, alive) <= best[0]:
            return
        rest = n - i - 1
        groups: dict[int, list[int]] = {}
        for w in alive:
            groups.setdefault(words[w][i], []).append(w)
        for value, ws in sorted(groups.items(), key=lambda kv: -len(kv[1])):
            nxt = agree[:]
            for w in ws:
                nxt[w] += 1
            centre[i] = value
            dfs(i + 1, nxt, [w for w in alive if nxt[w] + rest >= need])
        centre[i] = None
        dfs(i + 1, agree, [w for w in alive if agree[w] + rest >= need])

    dfs(0, [0] * len(words), list(range(len(words))))
    return best[0], best[1]


def list_decodable(codewords: Sequence[Sequence[int]], radius: int, L: int) -> bool:
    """True iff every Hamming ball of ``radius`` holds at most ``L`` of ``codewords``."""
    found, witness = ball_search(codewords, radius, L)
    return witness is None


def max_ball_occupancy(codewords: Sequence[Sequence[int]], radius: int) -> int:
    return ball_search(codewords, radius, -1)[0]


def code_codewords(code: CodeParams, alphabet: int | None = None) -> list[tuple[int, ...]]:
    return [tuple(int(v) for v in row) for row in _codebook(code, alphabet)]
