"""Errors-and-erasures decoding for the systematic RS code of ``codes``.

Codeword position j carries P(j) for a polynomial P of degree < m, so the
message is the codeword's first m positions.  Short words (ell <= 16) are
decoded by exhaustive error-set search; longer words go through
Berlekamp-Welch, which is O(ell**3).  Both return the unique codeword
within the (errors, erasures) budget or raise :class:`DecodingFailure`.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

from .codes import interpolate_at
from .errors import DecodingFailure, UsageError
from .field import FieldElement, PrimeField

ERASED = None
EXHAUSTIVE_LIMIT = 16


@dataclass(frozen=True)
class ReceivedWord:
    positions: tuple[int | None, ...]
    m: int
    field: PrimeField

    def __post_init__(self) -> None:
        if not 1 <= self.m <= len(self.positions):
            raise UsageError(f"need 1 <= m <= ell, got m={self.m}, ell={len(self.positions)}")
        if len(self.positions) > self.field.modulus:
            raise UsageError("word longer than the number of evaluation points")

    @classmethod
    def build(cls, values: Iterable[int | FieldElement | None], m: int, field: PrimeField) -> ReceivedWord:
        pos = tuple(
            None if v is None else (v.value if isinstance(v, FieldElement) else v % field.modulus)
            for v in values
        )
        return cls(pos, m, field)

    @property
    def ell(self) -> int:
        return len(self.positions)

    @property
    def erasures(self) -> frozenset[int]:
        return frozenset(i for i, v in enumerate(self.positions) if v is None)


def _check(word: ReceivedWord, cw: Sequence[int], present: list[int], budget: int,
           allowed: frozenset[int] | None) -> frozenset[int]:
    errors = frozenset(j for j in present if cw[j] != word.positions[j])
    if len(errors) > budget:
        raise DecodingFailure("no codeword within the error budget")
    if allowed is not None and not errors <= allowed:
        raise DecodingFailure("error located at a trusted position")
    return errors


def _exhaustive(word: ReceivedWord, present: list[int], budget: int) -> list[int]:
    q = word.field.modulus
    m = word.m
    for r in range(budget + 1):
        for err in combinations(present, r):
            drop = set(err)
            keep = [j for j in present if j not in drop]
            basis = keep[:m]
            cw = interpolate_at(basis, [word.positions[j] for j in basis], range(word.ell), q)
            if all(cw[j] == word.positions[j] for j in keep[m:]):
                return cw
    raise DecodingFailure("no codeword within the error budget")


# Berlekamp-Welch -----------------------------------------------------------


def _solve(rows: list[list[int]], q: int) -> list[int] | None:
    """One solution of the homogeneous-with-rhs system [A | b] mod q, or None."""
    rows = [r[:] for r in rows]
    ncols = len(rows[0]) - 1
    pivots = []
    rank = 0
    for col in range(ncols):
        piv = next((i for i in range(rank, len(rows)) if rows[i][col] % q), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        inv = pow(rows[rank][col], -1, q)
        rows[rank] = [v * inv % q for v in rows[rank]]
        for i in range(len(rows)):
            if i != rank and rows[i][col]:
                f = rows[i][col]
                rows[i] = [(a - f * b) % q for a, b in zip(rows[i], rows[rank])]
        pivots.append(col)
        rank += 1
    if any(all(v == 0 for v in r[:-1]) and r[-1] for r in rows):
        return None
    sol = [0] * ncols
    for i, col in enumerate(pivots):
        sol[col] = rows[i][-1]
    return sol


def _poly_divmod(num: list[int], den: list[int], q: int) -> tuple[list[int], list[int]]:
    num = num[:]
    while den and den[-1] == 0:
        den = den[:-1]
    inv = pow(den[-1], -1, q)
    out = [0] * max(1, len(num) - len(den) + 1)
    for i in range(len(num) - len(den), -1, -1):
        coef = num[i + len(den) - 1] * inv % q
        out[i] = coef
        for j, d in enumerate(den):
            num[i + j] = (num[i + j] - coef * d) % q
    return out, num[: len(den) - 1]


def _berlekamp_welch(word: ReceivedWord, present: list[int], budget: int) -> list[int]:
    q = word.field.modulus
    m = word.m
    e = budget
    # Unknowns: Q_0..Q_{m+e-1}, E_0..E_{e-1}; E is monic of degree e.
    rows = []
    for j in present:
        y = word.positions[j]
        row = [pow(j, i, q) for i in range(m + e)]
        row += [(-y * pow(j, i, q)) % q for i in range(e)]
        row.append(y * pow(j, e, q) % q)
        rows.append(row)
    sol = _solve(rows, q)
    if sol is None:
        raise DecodingFailure("no codeword within the error budget")
    qpoly = sol[: m + e]
    epoly = sol[m + e :] + [1]
    quot, rem = _poly_divmod(qpoly, epoly, q)
    if any(rem):
        raise DecodingFailure("no codeword within the error budget")
    quot = (quot + [0] * m)[:m]
    return [sum(c * pow(j, i, q) for i, c in enumerate(quot)) % q for j in range(word.ell)]


def decode_errors_erasures(
    z: ReceivedWord,
    max_errors: int | None = None,
    allowed_error_positions: Iterable[int] | None = None,
    method: str = "auto",
) -> tuple[list[FieldElement], frozenset[int]]:
    """Recover the message and the error locations from ``z``.

    Succeeds iff some codeword disagrees with ``z`` on at most
    ``(ell - m - |E|) // 2`` non-erased positions (further capped by
    ``max_errors``).  If ``allowed_error_positions`` is given, errors outside
    it are treated as a decoding failure.
    """
    present = [j for j, v in enumerate(z.positions) if v is not None]
    if len(present) < z.m:
        raise DecodingFailure(f"only {len(present)} unerased positions for m={z.m}")
    budget = (len(present) - z.m) // 2
    if max_errors is not None:
        budget = min(budget, max_errors)
    if method == "auto":
        method = "exhaustive" if z.ell <= EXHAUSTIVE_LIMIT else "berlekamp-welch"
    if method == "exhaustive":
        cw = _exhaustive(z, present, budget)
    elif method == "berlekamp-welch":
        cw = _berlekamp_welch(z, present, budget)
    else:
        raise UsageError(f"unknown decoding method {method!r}")
    allowed = None if allowed_error_positions is None else frozenset(allowed_error_positions)
    errors = _check(z, cw, present, budget, allowed)
    return [z.field(v) for v in cw[: z.m]], errors
