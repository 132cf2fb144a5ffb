"""Prime-field arithmetic, primality testing and prime generation.

Field elements are plain Python integers wrapped in :class:`FieldElement`
at API boundaries; hot loops elsewhere in the package work on raw ints
reduced modulo ``field.modulus``.

Arbitrary-precision naturals (the CRT hash input) are ordinary Python
``int`` values; :data:`BigNat` is an alias kept for readability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import DomainError, FormatError, UsageError

BigNat = int

# Deterministic for every n < 3.3e24, which covers all 64-bit inputs.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24."""
    if n < 2:
        return False
    for p in _MR_WITNESSES:
        if n % p == 0:
            return n == p
    if n >= 3_317_044_064_679_887_385_961_981:
        raise UsageError(f"primality check only certified below 3.3e24, got {n}")
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime >= n."""
    n = max(n, 2)
    while not is_prime(n):
        n += 1
    return n


def _prime_count_upper(n: int) -> int:
    # Rosser's bound p_n < n(ln n + ln ln n) for n >= 6.
    if n < 6:
        return 13
    return int(n * (math.log(n) + math.log(math.log(n)))) + 1


def gen_primes(n: int) -> list[int]:
    """Return the first ``n`` primes in increasing order."""
    if n < 1:
        raise UsageError("gen_primes needs n >= 1")
    limit = _prime_count_upper(n)
    sieve = bytearray([1]) * (limit + 1)
    sieve[0:2] = b"\x00\x00"
    for p in range(2, math.isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p :: p] = bytes(len(range(p * p, limit + 1, p)))
    primes = [i for i, flag in enumerate(sieve) if flag]
    return primes[:n]


@dataclass(frozen=True)
class PrimeField:
    """The field F_q for a prime q."""

    modulus: int

    def __post_init__(self) -> None:
        if not isinstance(self.modulus, int) or not is_prime(self.modulus):
            raise UsageError(f"field modulus must be prime, got {self.modulus!r}")

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(value % self.modulus, self)

    def __repr__(self) -> str:
        return f"GF({self.modulus})"

    @property
    def zero(self) -> FieldElement:
        return FieldElement(0, self)

    @property
    def one(self) -> FieldElement:
        return FieldElement(1, self)

    def elements(self) -> Iterator[FieldElement]:
        for v in range(self.modulus):
            yield FieldElement(v, self)

    @property
    def byte_width(self) -> int:
        """Serialized width: ceil(ceil(log2 q) / 8) bytes."""
        return symbol_width(self.modulus)

    @property
    def symbol_bits(self) -> int:
        """Payload bits packed into one symbol: floor(log2 q)."""
        return self.modulus.bit_length() - 1

    def encode(self, element: FieldElement | int) -> bytes:
        value = element.value if isinstance(element, FieldElement) else element
        return encode_symbol(value, self.modulus)

    def decode(self, data: bytes) -> FieldElement:
        return FieldElement(decode_symbol(data, self.modulus), self)


def symbol_width(alphabet: int) -> int:
    """Bytes needed for a symbol in [0, alphabet)."""
    bits = (alphabet - 1).bit_length()
    return max(1, (bits + 7) // 8)


def encode_symbol(value: int, alphabet: int) -> bytes:
    if not 0 <= value < alphabet:
        raise UsageError(f"symbol {value} outside [0, {alphabet})")
    return value.to_bytes(symbol_width(alphabet), "little")


def decode_symbol(data: bytes, alphabet: int) -> int:
    if len(data) != symbol_width(alphabet):
        raise FormatError(f"expected {symbol_width(alphabet)} bytes, got {len(data)}")
    value = int.from_bytes(data, "little")
    if value >= alphabet:
        raise FormatError(f"symbol {value} outside [0, {alphabet})")
    return value


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: PrimeField

    def __post_init__(self) -> None:
        if not 0 <= self.value < self.field.modulus:
            raise UsageError(f"{self.value} is not reduced modulo {self.field.modulus}")

    def _coerce(self, other: FieldElement | int) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise UsageError(f"mismatched fields {self.field} and {other.field}")
            return other.value
        if isinstance(other, int):
            return other % self.field.modulus
        return NotImplemented

    def __add__(self, other: FieldElement | int) -> FieldElement:
        return self.field(self.value + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other: FieldElement | int) -> FieldElement:
        return self.field(self.value - self._coerce(other))

    def __rsub__(self, other: int) -> FieldElement:
        return self.field(self._coerce(other) - self.value)

    def __mul__(self, other: FieldElement | int) -> FieldElement:
        return self.field(self.value * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self) -> FieldElement:
        return self.field(-self.value)

    def __truediv__(self, other: FieldElement | int) -> FieldElement:
        return self * self.field(self._coerce(other)).inverse()

    def __pow__(self, exponent: int) -> FieldElement:
        if exponent < 0:
            return self.inverse() ** (-exponent)
        return self.field(pow(self.value, exponent, self.field.modulus))

    def inverse(self) -> FieldElement:
        if self.value == 0:
            raise DomainError("no inverse of zero")
        return self.field(pow(self.value, -1, self.field.modulus))

    def __int__(self) -> int:
        return self.value

    def __bool__(self) -> bool:
        return self.value != 0

    def __repr__(self) -> str:
        return f"{self.value} (mod {self.field.modulus})"

    def to_bytes(self) -> bytes:
        return self.field.encode(self)


_OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
}


def ff_arith(op: str, a: FieldElement, b: FieldElement) -> FieldElement:
    """Apply ``op`` in {'add', 'sub', 'mul'} to two elements of one field."""
    if op not in _OPS:
        raise UsageError(f"unknown field operation {op!r}")
    if a.field != b.field:
        raise UsageError(f"mismatched fields {a.field} and {b.field}")
    return _OPS[op](a, b)


def ff_inv(a: FieldElement) -> FieldElement:
    return a.inverse()


def bignat_from_bytes(data: bytes) -> BigNat:
    """Big-endian base-256 interpretation of ``data``."""
    return int.from_bytes(data, "big")


def bignat_to_bytes(x: BigNat, length: int) -> bytes:
    return x.to_bytes(length, "big")


def bignat_mod(x: BigNat, p: int) -> FieldElement:
    if x < 0:
        raise UsageError("BigNat must be nonnegative")
    return PrimeField(p)(x % p)


def horner_mod(digits: Iterable[int], base: int, p: int) -> int:
    """Reduce a most-significant-first digit stream modulo ``p``."""
    acc = 0
    for digit in digits:
        acc = (acc * base + digit) % p
    return acc
