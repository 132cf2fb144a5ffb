"""Hash codes H used by the audit protocols.

Two instantiations are supported:

* ``RS``: Reed-Solomon evaluation hash over F_q, H(x)_b = sum_i x_i * b**i,
  evaluated at the points 0, 1, ..., n-1.
* ``CRT``: Chinese-remainder code, H(x)_i = x mod p_i over the first n primes.

Challenge indices are 0-based throughout: index ``b`` selects evaluation
point ``b`` (RS) or the prime ``p_b`` = ``primes[b]`` (CRT).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import DomainError, FormatError, UsageError
from .field import FieldElement, PrimeField, gen_primes, next_prime, symbol_width

RS = "RS"
CRT = "CRT"
SCHEMES = (RS, CRT)

_SCHEME_BYTES = {RS: 0x01, CRT: 0x02}
CODE_PARAMS_SIZE = 17

_U32 = 1 << 32
_U64 = 1 << 64


@lru_cache(maxsize=64)
def _primes(n: int) -> tuple[int, ...]:
    return tuple(gen_primes(n))


@lru_cache(maxsize=256)
def _prime_product(k: int) -> int:
    return math.prod(_primes(k))


def ceil_sqrt(m: int) -> int:
    if m <= 0:
        return 0
    return math.isqrt(m - 1) + 1


def johnson_radius(n: int, d: int, alphabet_sizes: Sequence[int]) -> tuple[float, int]:
    """List-decoding guarantee (rho, L) implied by distance ``d``.

    rho = 1 - sqrt(1 - d/n) and L = 2 * sum(alphabet_sizes).
    """
    if n < 1:
        raise UsageError("block length must be positive")
    if not 0 <= d <= n:
        raise UsageError(f"distance {d} outside [0, {n}]")
    if len(alphabet_sizes) != n or any(qi < 2 for qi in alphabet_sizes):
        raise UsageError("need n alphabet sizes, each >= 2")
    rho = 1.0 - math.sqrt((n - d) / n)
    return rho, 2 * sum(alphabet_sizes)


def johnson_radius_count(n: int, d: int) -> int:
    """floor(rho * n) computed exactly: the largest t with (n - t)**2 >= n*(n - d)."""
    if not 0 <= d <= n:
        raise UsageError(f"distance {d} outside [0, {n}]")
    return n - ceil_sqrt(n * (n - d))


@dataclass(frozen=True)
class CodeParams:
    """Description of one hash code.

    ``q`` is the field size for RS and unused (``None``) for CRT, whose
    per-position alphabets are the first ``n`` primes.  ``epsilon`` records
    the design slack when the params came from :func:`choose_params`; it is
    not part of the serialized form and does not take part in equality.
    """

    scheme: str
    k: int
    n: int
    q: int | None = None
    epsilon: Fraction | None = dc_field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise UsageError(f"unknown code scheme {self.scheme!r}")
        if not 1 <= self.k <= self.n:
            raise UsageError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.n >= _U32:
            raise UsageError(f"block length {self.n} does not fit in 32 bits")
        if self.scheme == RS:
            if self.q is None or self.q >= _U64:
                raise UsageError("RS code needs a prime q below 2**64")
            PrimeField(self.q)
            if self.n > self.q:
                raise UsageError(f"RS needs n <= q, got n={self.n}, q={self.q}")
        elif self.q is not None:
            raise UsageError("CRT code takes its alphabets from the first n primes")

    @property
    def field(self) -> PrimeField:
        if self.scheme != RS:
            raise UsageError("CRT codes have no single field")
        return PrimeField(self.q)

    @property
    def primes(self) -> tuple[int, ...]:
        if self.scheme != CRT:
            raise UsageError("RS codes have no prime list")
        return _primes(self.n)

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return (self.q,) * self.n if self.scheme == RS else self.primes

    @property
    def max_alphabet(self) -> int:
        """Largest symbol alphabet; fixes the serialized symbol width."""
        return self.q if self.scheme == RS else self.primes[-1]

    @property
    def symbol_width(self) -> int:
        return symbol_width(self.max_alphabet)

    @property
    def message_bound(self) -> int:
        """Number of distinct messages: q**k (RS) or prod(p_1..p_k) (CRT)."""
        return self.q**self.k if self.scheme == RS else _prime_product(self.k)

    @property
    def d(self) -> int:
        return self.n - self.k + 1

    @property
    def delta(self) -> float:
        return self.d / self.n

    @property
    def rho(self) -> float:
        return johnson_radius(self.n, self.d, self.alphabet_sizes)[0]

    @property
    def radius(self) -> int:
        return johnson_radius_count(self.n, self.d)

    @property
    def johnson_list_size(self) -> int:
        return 2 * sum(self.alphabet_sizes)

    @property
    def L(self) -> int:
        """List-size bound: closed form in (k, epsilon) if known, else 2*sum(q_i)."""
        if self.epsilon is None:
            return self.johnson_list_size
        return _list_size_formula(self.scheme, self.k, self.epsilon)

    def to_bytes(self) -> bytes:
        last = self.q if self.scheme == RS else self.n
        return (
            bytes([_SCHEME_BYTES[self.scheme]])
            + self.k.to_bytes(4, "little")
            + self.n.to_bytes(4, "little")
            + last.to_bytes(8, "little")
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> CodeParams:
        if len(data) != CODE_PARAMS_SIZE:
            raise FormatError(f"code params block is {CODE_PARAMS_SIZE} bytes, got {len(data)}")
        schemes = {v: k for k, v in _SCHEME_BYTES.items()}
        if data[0] not in schemes:
            raise FormatError(f"unknown code scheme byte {data[0]:#04x}")
        scheme = schemes[data[0]]
        k = int.from_bytes(data[1:5], "little")
        n = int.from_bytes(data[5:9], "little")
        last = int.from_bytes(data[9:17], "little")
        try:
            if scheme == RS:
                return cls(RS, k, n, last)
            if last != n:
                raise FormatError(f"CRT prime count {last} disagrees with n={n}")
            return cls(CRT, k, n)
        except UsageError as exc:
            raise FormatError(str(exc)) from exc


def _as_fraction(epsilon: float | Fraction | str) -> Fraction:
    if isinstance(epsilon, Fraction):
        return epsilon
    # Decimal reading, so that 0.1 means 1/10 rather than its binary neighbour.
    return Fraction(str(epsilon))


def _list_size_formula(scheme: str, k: int, eps: Fraction) -> int:
    if scheme == RS:
        return math.ceil(2 * k * k / eps**4)
    log_term = math.log2(k) - math.log2(eps * eps)
    return math.ceil(k * k * log_term / float(eps**4))


def choose_params(
    k: int, epsilon: float | Fraction | str, scheme: str = RS, q: int | None = None
) -> CodeParams:
    """Pick n = ceil(k / epsilon**2) and the matching alphabet.

    RS uses the smallest prime q >= n unless ``q`` is given explicitly.
    """
    if scheme not in SCHEMES:
        raise UsageError(f"unknown code scheme {scheme!r}")
    if k < 1:
        raise UsageError("k must be at least 1")
    eps = _as_fraction(epsilon)
    if not 0 < eps < 1:
        raise UsageError(f"epsilon must lie in (0, 1), got {epsilon}")
    n = math.ceil(k / (eps * eps))
    if n >= _U32:
        raise UsageError(f"n = {n} overflows the 32-bit block length field")
    if scheme == RS:
        q = next_prime(n) if q is None else q
        params = CodeParams(RS, k, n, q, epsilon=eps)
    else:
        if q is not None:
            raise UsageError("CRT codes do not take q")
        params = CodeParams(CRT, k, n, epsilon=eps)
    if params.rho <= 0:
        raise UsageError("degenerate parameters: list-decoding radius is zero")
    return params


# --------------------------------------------------------------------------
# Messages


def pack_bits(data: bytes, bits: int) -> list[int]:
    """Split ``data`` into ``bits``-wide symbols, big-endian bit order, zero-padded."""
    out = []
    acc = 0
    held = 0
    mask = (1 << bits) - 1
    for byte in data:
        acc = (acc << 8) | byte
        held += 8
        while held >= bits:
            held -= bits
            out.append((acc >> held) & mask)
        acc &= (1 << held) - 1
    if held:
        out.append((acc << (bits - held)) & mask)
    return out


def unpack_bits(symbols: Iterable[int], bits: int, byte_length: int) -> bytes:
    out = bytearray()
    acc = 0
    held = 0
    for sym in symbols:
        acc = (acc << bits) | sym
        held += bits
        while held >= 8 and len(out) < byte_length:
            held -= 8
            out.append((acc >> held) & 0xFF)
        acc &= (1 << held) - 1
        if len(out) == byte_length:
            break
    if len(out) != byte_length:
        raise FormatError("symbol stream too short for the recorded byte length")
    return bytes(out)


def crt_dimension(byte_length: int) -> int:
    """Smallest k with p_1 * ... * p_k >= 256**byte_length."""
    bound = 1 << (8 * byte_length)
    k = 1
    while _prime_product(k) < bound:
        k += 1
    return k


@dataclass(frozen=True)
class Message:
    """User data laid out for ``s`` servers.

    RS: ``symbols`` holds k field symbols; shard i is the i-th block of k/s.
    CRT: ``symbols`` holds one big natural per shard.
    """

    symbols: tuple[int, ...]
    s: int = 1
    original_byte_length: int = 0
    scheme: str = RS

    def __post_init__(self) -> None:
        if self.s < 1:
            raise UsageError("need at least one server")
        if self.scheme == RS:
            if not self.symbols or len(self.symbols) % self.s:
                raise UsageError(f"{len(self.symbols)} symbols do not split into {self.s} shards")
        elif len(self.symbols) != self.s:
            raise UsageError("CRT message needs exactly one value per shard")

    @property
    def k(self) -> int:
        return len(self.symbols)

    @property
    def shard_length(self) -> int:
        return len(self.symbols) // self.s if self.scheme == RS else 1

    def shard_range(self, i: int) -> range:
        if not 0 <= i < self.s:
            raise UsageError(f"shard index {i} outside [0, {self.s})")
        w = self.shard_length
        return range(i * w, (i + 1) * w)

    def shard(self, i: int):
        r = self.shard_range(i)
        if self.scheme == CRT:
            return self.symbols[i]
        return self.symbols[r.start : r.stop]

    def embedded(self, i: int) -> tuple[int, ...]:
        """The zero-padded embedding of shard i into a length-k vector."""
        if self.scheme != RS:
            raise UsageError("shard embedding is defined for RS messages only")
        r = self.shard_range(i)
        return tuple(v if j in r else 0 for j, v in enumerate(self.symbols))

    @classmethod
    def from_bytes_rs(
        cls, data: bytes, field: PrimeField, s: int = 1, k: int | None = None
    ) -> Message:
        symbols = pack_bits(data, field.symbol_bits) or [0]
        target = max(len(symbols), k or 0)
        target = -(-target // s) * s
        if k is not None and target != k:
            raise UsageError(f"{len(data)} bytes need {target} symbols, not k={k}")
        symbols += [0] * (target - len(symbols))
        return cls(tuple(symbols), s, len(data), RS)

    @classmethod
    def from_bytes_crt(cls, data: bytes, s: int = 1) -> Message:
        chunk = max(1, -(-len(data) // s))
        padded = data + bytes(chunk * s - len(data))
        values = tuple(
            int.from_bytes(padded[i * chunk : (i + 1) * chunk], "big") for i in range(s)
        )
        return cls(values, s, len(data), CRT)

    def crt_shard_bytes(self) -> int:
        return max(1, -(-self.original_byte_length // self.s))

    def to_bytes(self, field: PrimeField | None = None) -> bytes:
        if self.scheme == CRT:
            chunk = self.crt_shard_bytes()
            raw = b"".join(v.to_bytes(chunk, "big") for v in self.symbols)
            return raw[: self.original_byte_length]
        if field is None:
            raise UsageError("RS unpacking needs the field")
        return unpack_bits(self.symbols, field.symbol_bits, self.original_byte_length)


# --------------------------------------------------------------------------
# Hashes


def _check_index(beta_index: int, code: CodeParams) -> None:
    if not 0 <= beta_index < code.n:
        raise UsageError(f"challenge index {beta_index} outside [0, {code.n})")


def poly_eval(coeffs: Sequence[int], point: int, q: int, offset: int = 0) -> int:
    """sum_j coeffs[j] * point**(offset + j) mod q, by Horner."""
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * point + c) % q
    if offset:
        acc = acc * pow(point, offset, q) % q
    return acc


def rs_hash(x: Message | Sequence[int], beta_index: int, code: CodeParams) -> FieldElement:
    """H(x)_b = P_x(b) for the RS code ``code``."""
    if code.scheme != RS:
        raise UsageError("rs_hash needs RS params")
    _check_index(beta_index, code)
    symbols = x.symbols if isinstance(x, Message) else x
    if len(symbols) != code.k:
        raise UsageError(f"message has {len(symbols)} symbols, code expects k={code.k}")
    return code.field(poly_eval(symbols, beta_index, code.q))


def rs_hash_stream(
    symbol_stream: Iterable[int | FieldElement],
    beta: FieldElement,
    k: int,
    offset: int = 0,
) -> FieldElement:
    """One-pass evaluation keeping only an accumulator and a running power.

    Consumes x_0 first.  ``offset`` starts the power at beta**offset, which
    evaluates a shard as if zero-padded into a longer message.
    """
    fld = beta.field
    q = fld.modulus
    b = beta.value
    acc = 0
    power = pow(b, offset, q)
    count = 0
    for sym in symbol_stream:
        if count == k:
            raise FormatError(f"stream longer than the declared k={k}")
        v = sym.value if isinstance(sym, FieldElement) else sym
        acc = (acc + v * power) % q
        power = power * b % q
        count += 1
    if count != k:
        raise FormatError(f"stream ended after {count} of {k} symbols")
    return fld(acc)


def crt_hash(x: int, beta_index: int, code: CodeParams) -> FieldElement:
    """H(x)_b = x mod p_b."""
    if code.scheme != CRT:
        raise UsageError("crt_hash needs CRT params")
    _check_index(beta_index, code)
    if not 0 <= x < _prime_product(code.k):
        raise DomainError(f"message outside [0, p_1*...*p_{code.k})")
    p = code.primes[beta_index]
    return PrimeField(p)(x % p)


def hash_symbol(x, beta_index: int, code: CodeParams, offset: int = 0) -> int:
    """Raw-int hash of one message or shard, dispatching on the code scheme."""
    if code.scheme == RS:
        _check_index(beta_index, code)
        return poly_eval(x, beta_index, code.q, offset)
    return crt_hash(x, beta_index, code).value


def codeword(x, code: CodeParams) -> list[int]:
    """The full codeword H(x) as raw ints."""
    if code.scheme == RS:
        return [poly_eval(x, b, code.q) for b in range(code.n)]
    return [x % p for p in code.primes]


# --------------------------------------------------------------------------
# Systematic RS for parity storage


def interpolate_at(xs: Sequence[int], ys: Sequence[int], targets: Iterable[int], q: int) -> list[int]:
    """Evaluate the unique degree < len(xs) polynomial through (xs, ys) at ``targets``."""
    m = len(xs)
    weights = []
    for j in range(m):
        denom = 1
        for i in range(m):
            if i != j:
                denom = denom * (xs[j] - xs[i]) % q
        weights.append(pow(denom, -1, q))
    where = {x: i for i, x in enumerate(xs)}
    out = []
    for t in targets:
        if t in where:
            out.append(ys[where[t]] % q)
            continue
        total = 0
        for j in range(m):
            term = ys[j] * weights[j] % q
            for i in range(m):
                if i != j:
                    term = term * (t - xs[i]) % q
            total += term
        out.append(total % q)
    return out


def systematic_rs_encode(v: Sequence[int | FieldElement], ell: int, field: PrimeField) -> list[FieldElement]:
    """Systematic RS codeword of length ``ell`` whose first m positions are ``v``.

    Position j carries P(j), where P is the degree < m polynomial with
    P(j) = v[j] for j < m.
    """
    m = len(v)
    if m < 1:
        raise UsageError("empty message")
    if not m <= ell <= field.modulus:
        raise UsageError(f"need m <= ell <= q, got m={m}, ell={ell}, q={field.modulus}")
    vals = [x.value if isinstance(x, FieldElement) else x % field.modulus for x in v]
    parity = interpolate_at(list(range(m)), vals, range(m, ell), field.modulus)
    return [field(x) for x in vals + parity]
