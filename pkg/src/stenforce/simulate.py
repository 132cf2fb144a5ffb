"""Adversarial server models and pass-probability measurement.

Every model is a deterministic function of (server index, challenge,
seed, epoch).  ``epoch`` separates independent protocol runs: the
exhaustive sweep holds it fixed, so each model is one fixed answer function
over all challenges; Monte-Carlo trials use the trial number, so every
trial faces a freshly keyed adversary.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import struct
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

from .codes import CRT, RS, CodeParams, Message
from .errors import UsageError
from .protocol import PROTOCOLS, SINGLE, ChallengeRng, honest_shard_response, preprocess, shard_offset, verify

HONEST = "HONEST"
AMNESIAC = "AMNESIAC"
PARTIAL = "PARTIAL"
COLLUDE = "COLLUDE"
SILENT = "SILENT"
KINDS = (HONEST, AMNESIAC, PARTIAL, COLLUDE, SILENT)

SWEEP_LIMIT = 1 << 20


def derive_seed(*parts: int) -> int:
    """Mix integers into a 256-bit seed with SHA-256."""
    data = b"".join(struct.pack("<Q", p & (2**64 - 1)) for p in parts)
    return int.from_bytes(hashlib.sha256(data).digest(), "little")


@dataclass(frozen=True)
class ServerModel:
    """How one server (or a coalition member) stores and answers.

    HONEST      stores its shard, answers correctly.
    AMNESIAC    stores nothing; answers ``constant`` if set, else uniformly at random.
    PARTIAL     keeps the first ``fraction`` of its shard; the rest is a frozen
                pseudorandom guess.
    COLLUDE     member of coalition ``members``.  strategy 'pool' keeps the first
                ``budget_bits`` of the members' concatenated shards (all of it if
                None) and guesses the rest; 'shift' answers honestly plus +c for the
                first member and -c for the second; 'drop_one' answers honestly
                except for the lowest-numbered member, which stores nothing.
    SILENT      never answers (``p`` = 1) or withholds each answer with probability p.
    """

    kind: str = HONEST
    seed: int = 0
    fraction: float = 1.0
    constant: int | None = None
    members: frozenset[int] = frozenset()
    budget_bits: int | None = None
    strategy: str = "pool"
    shift: int = 1
    p: float = 1.0
    epoch: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise UsageError(f"unknown server model {self.kind!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise UsageError("fraction must lie in [0, 1]")
        if not 0.0 <= self.p <= 1.0:
            raise UsageError("p must lie in [0, 1]")
        if self.kind == COLLUDE and self.strategy not in ("pool", "shift", "drop_one"):
            raise UsageError(f"unknown collusion strategy {self.strategy!r}")

    def rekey(self, epoch: int) -> ServerModel:
        return replace(self, epoch=epoch)

    @property
    def label(self) -> str:
        if self.kind == PARTIAL:
            return f"PARTIAL({self.fraction:g})"
        if self.kind == COLLUDE:
            return f"COLLUDE({self.strategy}:{','.join(map(str, sorted(self.members)))})"
        if self.kind == SILENT and self.p < 1:
            return f"SILENT({self.p:g})"
        return self.kind


class Deployment:
    """A message laid out on servers under one scheme; answers challenges per model."""

    def __init__(self, x: Message, scheme: str, code: CodeParams, r: int = 0, e: int = 0) -> None:
        if scheme not in PROTOCOLS:
            raise UsageError(f"unknown protocol {scheme!r}")
        if scheme == SINGLE and x.s != 1:
            raise UsageError("SINGLE needs an unsharded message")
        self.x = x
        self.scheme = scheme
        self.code = code
        self.r = r
        self.e = e
        self._guess_cache: dict = {}

    @property
    def s(self) -> int:
        return self.x.s

    def token(self, beta_index: int | None = None, rng_seed: int | None = None):
        return preprocess(self.scheme, self.x, self.code, rng_seed=rng_seed, beta_index=beta_index,
                          r=self.r, e=self.e)

    def honest(self, i: int, beta: int, shard=None) -> int:
        shard = self.x.shard(i) if shard is None else shard
        return honest_shard_response(shard, beta, self.scheme, self.code, shard_offset(self.x, i, self.scheme))

    def alphabet(self, beta: int) -> int:
        return self.code.q if self.code.scheme == RS else self.code.primes[beta]

    def symbol_bits(self) -> int:
        return (self.code.max_alphabet - 1).bit_length() if self.code.scheme == RS else 8

    # Storage models --------------------------------------------------------

    def _guess(self, model: ServerModel, tag: int, count: int, alphabet: int) -> list[int]:
        # One frozen guess per shard; every fraction uses its tail, so a
        # larger fraction agrees with the shard on a superset of positions.
        key = (model.seed, model.epoch, tag, count, alphabet)
        if key not in self._guess_cache:
            rng = ChallengeRng(derive_seed(model.seed, model.epoch, tag, 0x6775))
            self._guess_cache[key] = [rng.randbelow(alphabet) for _ in range(count)]
        return self._guess_cache[key]

    def _partial_shard(self, model: ServerModel, i: int):
        shard = self.x.shard(i)
        if self.code.scheme == CRT:
            width = max(self.x.crt_shard_bytes(), (shard.bit_length() + 7) // 8)
            raw = shard.to_bytes(width, "big")
            keep = math.floor(model.fraction * width)
            guess = bytes(self._guess(model, i, width, 256)[keep:])
            value = int.from_bytes(raw[:keep] + guess, "big")
            # A guess past the CRT range would not be a valid message; fold it back.
            return (value if value == shard else value % self.code.message_bound), 8 * keep
        keep = math.floor(model.fraction * len(shard))
        guess = self._guess(model, i, len(shard), self.code.q)[keep:]
        return tuple(shard[:keep]) + tuple(guess), keep * self.symbol_bits()

    def _pooled_shards(self, model: ServerModel) -> dict[int, tuple[int, ...]]:
        if self.code.scheme != RS:
            raise UsageError("collusion models need an RS message")
        order = sorted(model.members)
        flat = [v for j in order for v in self.x.shard(j)]
        if model.budget_bits is None:
            keep = len(flat)
        else:
            keep = min(len(flat), model.budget_bits // self.symbol_bits())
        flat = flat[:keep] + self._guess(model, -1, len(flat), self.code.q)[keep:]
        w = self.x.shard_length
        return {j: tuple(flat[t * w : (t + 1) * w]) for t, j in enumerate(order)}

    def stored_bits(self, model: ServerModel, i: int) -> int:
        bits = self.symbol_bits()
        if model.kind == AMNESIAC:
            return 0
        if model.kind == PARTIAL:
            return self._partial_shard(model, i)[1]
        if model.kind == COLLUDE:
            total = len(model.members) * self.x.shard_length * bits
            share = total if model.budget_bits is None else min(total, model.budget_bits)
            return share // max(1, len(model.members))
        if self.code.scheme == CRT:
            return 8 * self.x.crt_shard_bytes()
        return self.x.shard_length * bits

    def respond(self, model: ServerModel, i: int, beta: int) -> int | None:
        kind = model.kind
        if kind == HONEST:
            return self.honest(i, beta)
        if kind == AMNESIAC:
            if model.constant is not None:
                return model.constant % self.alphabet(beta)
            rng = ChallengeRng(derive_seed(model.seed, model.epoch, i, beta, 0x616D))
            return rng.randbelow(self.alphabet(beta))
        if kind == PARTIAL:
            return self.honest(i, beta, self._partial_shard(model, i)[0])
        if kind == SILENT:
            if model.p >= 1.0:
                return None
            rng = ChallengeRng(derive_seed(model.seed, model.epoch, i, beta, 0x7369))
            return None if rng.random() < model.p else self.honest(i, beta)
        # COLLUDE
        if i not in model.members:
            raise UsageError(f"server {i} is not in the coalition {sorted(model.members)}")
        order = sorted(model.members)
        if model.strategy == "pool":
            return self.honest(i, beta, self._pooled_shards(model)[i])
        if model.strategy == "shift":
            delta = {order[0]: model.shift, order[1]: -model.shift} if len(order) > 1 else {}
            return (self.honest(i, beta) + delta.get(i, 0)) % self.alphabet(beta)
        if i == order[0]:
            rng = ChallengeRng(derive_seed(model.seed, model.epoch, i, beta, 0x6472))
            return rng.randbelow(self.alphabet(beta))
        return self.honest(i, beta)

    def audit(self, models: Sequence[ServerModel], beta_index: int | None = None,
              rng_seed: int | None = None):
        token = self.token(beta_index, rng_seed)
        beta = token.beta
        answers = [self.respond(m, i, beta) for i, m in enumerate(models)]
        return verify(token, answers), beta


def _check_models(dep: Deployment, models: Sequence[ServerModel]) -> None:
    if len(models) != dep.s:
        raise UsageError(f"need one model per server ({dep.s}), got {len(models)}")


def exhaustive_pass_probability(
    x: Message, scheme: str, models: Sequence[ServerModel], code: CodeParams, r: int = 0, e: int = 0
) -> Fraction:
    """Exact fraction of challenges b in [n] on which the audit passes."""
    if code.n > SWEEP_LIMIT:
        raise UsageError(f"n = {code.n} too large for a full sweep (limit 2**20)")
    dep = Deployment(x, scheme, code, r, e)
    _check_models(dep, models)
    passed = sum(dep.audit(models, beta_index=b)[0].passed for b in range(code.n))
    return Fraction(passed, code.n)


@dataclass
class TrialReport:
    scheme: str
    trials: int
    passes: int
    histogram: Counter
    flagged: Counter
    erased: Counter
    models: list[str]
    code: CodeParams
    s: int
    r: int = 0
    e: int = 0

    @property
    def pass_rate(self) -> float:
        return self.passes / self.trials

    @property
    def stderr(self) -> float:
        p = self.pass_rate
        return math.sqrt(p * (1 - p) / self.trials)

    def flag_rate(self, i: int) -> float:
        return self.flagged[i] / self.trials

    def erasure_rate(self, i: int) -> float:
        return self.erased[i] / self.trials

    def lines(self) -> list[str]:
        q = self.code.max_alphabet
        out = [
            f"scheme={self.scheme}", f"code={self.code.scheme}", f"q={q}", f"k={self.code.k}",
            f"n={self.code.n}", f"s={self.s}", f"r={self.r}", f"e={self.e}",
            f"models={';'.join(self.models)}", f"trials={self.trials}",
            f"pass_rate={self.pass_rate:.6f}", f"stderr={self.stderr:.6f}",
        ]
        for label in ("PASS", "FAIL", "DECODING_FAILURE"):
            out.append(f"verdict[{label}]={self.histogram.get(label, 0)}")
        for i in range(self.s):
            out.append(f"server[{i}].flag_rate={self.flag_rate(i):.6f}")
            out.append(f"server[{i}].erasure_rate={self.erasure_rate(i):.6f}")
        return out


def run_audit_trials(
    x: Message, scheme: str, models: Sequence[ServerModel], trials: int, seed: int,
    code: CodeParams, r: int = 0, e: int = 0,
) -> TrialReport:
    """Monte-Carlo audits: every trial is a fresh preprocessing + challenge."""
    if trials < 1:
        raise UsageError("need at least one trial")
    dep = Deployment(x, scheme, code, r, e)
    _check_models(dep, models)
    histogram: Counter = Counter()
    flagged: Counter = Counter()
    erased: Counter = Counter()
    passes = 0
    for t in range(trials):
        keyed = [m.rekey(t + 1) for m in models]
        verdict, _ = dep.audit(keyed, rng_seed=derive_seed(seed, t, 0x7472))
        passes += verdict.passed
        histogram[verdict.label] += 1
        flagged.update(verdict.flagged)
        erased.update(verdict.erased)
    return TrialReport(scheme, trials, passes, histogram, flagged, erased,
                       [m.label for m in models], code, x.s, r, e)


@dataclass
class SweepRow:
    fraction: float
    stored_bits: int
    pass_prob: Fraction


@dataclass
class SweepTable:
    scheme: str
    code: CodeParams
    s: int
    rows: list[SweepRow]

    @property
    def monotone(self) -> bool:
        ordered = sorted(self.rows, key=lambda row: row.stored_bits)
        return all(a.pass_prob <= b.pass_prob for a, b in zip(ordered, ordered[1:]))

    def to_csv(self, r: int = 0, e: int = 0) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([
                self.scheme, self.code.max_alphabet, self.code.k, self.code.n, self.s, r, e,
                f"PARTIAL({row.fraction:g})", row.stored_bits, float(row.pass_prob), 0,
            ])
        return buf.getvalue()


CSV_COLUMNS = ["scheme", "q", "k", "n", "s", "r", "e", "model", "stored_bits", "pass_prob", "trials"]


def storage_tradeoff_sweep(
    x: Message, scheme: str, fractions: Sequence[float], code: CodeParams, seed: int,
    r: int = 0, e: int = 0,
) -> SweepTable:
    """Exact pass probability when every server keeps only a prefix of its shard.

    ``stored_bits`` is the total over servers.  The table's ``monotone``
    property reports whether pass probability is nondecreasing in storage
    for this particular guess; it is not guaranteed in general.
    """
    dep = Deployment(x, scheme, code, r, e)
    rows = []
    for f in fractions:
        models = [ServerModel(PARTIAL, seed=seed, fraction=f) for _ in range(x.s)]
        bits = sum(dep.stored_bits(m, i) for i, m in enumerate(models))
        prob = exhaustive_pass_probability(x, scheme, models, code, r, e)
        rows.append(SweepRow(f, bits, prob))
    return SweepTable(scheme, code, x.s, rows)


__all__ = [
    "AMNESIAC", "COLLUDE", "HONEST", "PARTIAL", "SILENT", "Deployment", "ServerModel",
    "SweepTable", "TrialReport", "exhaustive_pass_probability", "run_audit_trials",
    "storage_tradeoff_sweep",
]
