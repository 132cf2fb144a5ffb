"""Command-line interface.

Exit codes: 0 pass, 1 fail, 2 usage error, 3 token exhausted, 4 endpoint
unreachable under a scheme that cannot treat it as an erasure.
"""

from __future__ import annotations

import argparse
import logging
import secrets
import sys
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

from . import client, simulate as sim
from .codes import CRT, RS, CodeParams, Message, choose_params, crt_dimension, hash_symbol
from .errors import DecodingFailure, FormatError, ProtocolError, UsageError
from .field import PrimeField, next_prime
from .protocol import (
    DEFAULT_AUDITS, LINEAR, RS_PARITY, SINGLE, TRIVIAL, AuditToken, ChallengeRng, preprocess,
)
from .security import Responder, extract_list, kolmogorov_upper_estimate, storage_bound
from .server import BEHAVIORS, AuditServer, serve

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_EXHAUSTED, EXIT_UNREACHABLE = 0, 1, 2, 3, 4

SCHEME_NAMES = {"single": SINGLE, "trivial": TRIVIAL, "linear": LINEAR, "rs-parity": RS_PARITY}
CODE_NAMES = {"rs": RS, "crt": CRT}
DEFAULT_STORE_Q = 2**31 - 1


def emit(pairs: Iterable[tuple[str, object]], porcelain: bool, out=None) -> None:
    out = out or sys.stdout
    for key, value in pairs:
        print(f"{key}={value}" if porcelain else f"{key:<20} {value}", file=out)


def _seed(args) -> int:
    return secrets.randbits(256) if args.seed is None else args.seed


def _epsilon(text: str) -> str:
    # Kept as text so that choose_params reads it as an exact decimal.
    try:
        float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    return text


def _code_summary(code: CodeParams) -> list[tuple[str, object]]:
    pairs: list[tuple[str, object]] = [("code", code.scheme.lower()), ("k", code.k), ("n", code.n)]
    if code.scheme == RS:
        pairs.append(("q", code.q))
    else:
        pairs.append(("max_prime", code.max_alphabet))
    pairs += [
        ("d", code.d), ("rho", f"{code.rho:.6f}"), ("radius", code.radius),
        ("L", code.L), ("johnson_L", code.johnson_list_size),
    ]
    return pairs


# --------------------------------------------------------------------------
# params


def cmd_params(args) -> int:
    code = choose_params(args.k, args.epsilon, CODE_NAMES[args.code], args.q)
    emit(_code_summary(code), args.porcelain)
    return EXIT_PASS


# --------------------------------------------------------------------------
# store / audit


def prepare(data: bytes, scheme: str, s: int, code_kind: str, q: int, epsilon: str) -> tuple[Message, CodeParams]:
    """Lay ``data`` out for ``s`` servers and pick the hash code."""
    if scheme == SINGLE and s != 1:
        raise UsageError("single takes exactly one endpoint")
    if code_kind == RS:
        x = Message.from_bytes_rs(data, PrimeField(q), s)
        k = x.shard_length if scheme == TRIVIAL else x.k
        return x, choose_params(k, epsilon, RS, q)
    if scheme in (LINEAR, RS_PARITY):
        raise UsageError(f"{scheme} needs --code rs")
    x = Message.from_bytes_crt(data, s)
    return x, choose_params(crt_dimension(x.crt_shard_bytes()), epsilon, CRT)


def cmd_store(args) -> int:
    endpoints = client.parse_endpoints(args.servers)
    scheme = SCHEME_NAMES[args.scheme]
    x, code = prepare(Path(args.file).read_bytes(), scheme, len(endpoints), CODE_NAMES[args.code], args.q, args.epsilon)
    token = preprocess(scheme, x, code, rng_seed=_seed(args), audits=args.audits, r=args.r, e=args.e)
    bundle = client.store(token, x, endpoints, args.timeout_ms / 1000)
    Path(args.token).write_bytes(token.to_bytes())
    emit([("scheme", args.scheme), *_code_summary(code), ("servers", len(endpoints)),
          ("audits", token.t), ("bundle", bundle.hex()), ("token", args.token)], args.porcelain)
    return EXIT_PASS


def _verdict_pairs(outcome: client.AuditOutcome, endpoints: Sequence[tuple[str, int]]) -> list[tuple[str, object]]:
    v = outcome.verdict
    pairs: list[tuple[str, object]] = [
        ("verdict", v.label), ("record", outcome.record), ("challenge", outcome.beta),
        ("flagged", ",".join(map(str, sorted(v.flagged))) or "-"),
        ("erased", ",".join(map(str, sorted(v.erased))) or "-"),
    ]
    for i, (ans, (host, port)) in enumerate(zip(outcome.answers, endpoints)):
        pairs.append((f"server[{i}]", f"{host}:{port} {ans.status}" + (f" ({ans.detail})" if ans.detail else "")))
    return pairs


def run_audit(token_path: Path, endpoints, timeout: float, porcelain: bool) -> int:
    token = AuditToken.from_bytes(token_path.read_bytes())
    try:
        outcome = client.audit(token, endpoints, timeout)
    finally:
        # Persist consumption even when the round itself failed.
        token_path.write_bytes(token.to_bytes())
    emit([*_verdict_pairs(outcome, endpoints), ("remaining", token.remaining)], porcelain)
    return EXIT_PASS if outcome.verdict.passed else EXIT_FAIL


def cmd_audit(args) -> int:
    token_path = Path(args.token)
    token = AuditToken.from_bytes(token_path.read_bytes())
    if args.scheme and SCHEME_NAMES[args.scheme] != token.scheme:
        raise UsageError(f"token is for {token.scheme}, not {SCHEME_NAMES[args.scheme]}")
    return run_audit(token_path, client.parse_endpoints(args.servers), args.timeout_ms / 1000, args.porcelain)


# --------------------------------------------------------------------------
# simulate


def parse_model(text: str, seed: int) -> sim.ServerModel:
    """honest | amnesiac[:c] | partial:f | silent[:p] | collude-{pool,shift,drop}:i+j[:bits]"""
    name, _, rest = text.strip().lower().partition(":")
    try:
        if name == "honest":
            return sim.ServerModel(sim.HONEST, seed=seed)
        if name == "amnesiac":
            return sim.ServerModel(sim.AMNESIAC, seed=seed, constant=int(rest) if rest else None)
        if name == "partial":
            return sim.ServerModel(sim.PARTIAL, seed=seed, fraction=float(rest))
        if name == "silent":
            return sim.ServerModel(sim.SILENT, seed=seed, p=float(rest) if rest else 1.0)
        if name.startswith("collude-"):
            strategy = {"pool": "pool", "shift": "shift", "drop": "drop_one"}[name[len("collude-"):]]
            members, _, bits = rest.partition(":")
            return sim.ServerModel(
                sim.COLLUDE, seed=seed, strategy=strategy,
                members=frozenset(int(m) for m in members.split("+")),
                budget_bits=int(bits) if bits else None,
            )
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad model {text!r}: {exc}") from None
    raise UsageError(f"unknown model {text!r}")


def _sim_code(args, scheme: str) -> CodeParams:
    kind = CODE_NAMES[args.code]
    if args.n is not None:
        return CodeParams(kind, args.k, args.n, args.q if kind == RS else None)
    return choose_params(args.k, args.epsilon, kind, args.q if kind == RS else None)


def _random_message(code: CodeParams, scheme: str, s: int, rng: ChallengeRng) -> Message:
    if code.scheme == CRT:
        return Message(tuple(rng.randbelow(code.message_bound) for _ in range(s)), s, scheme=CRT)
    length = code.k * s if scheme == TRIVIAL else code.k
    if length % s:
        raise UsageError(f"k={code.k} does not split into {s} shards")
    return Message(tuple(rng.randbelow(code.q) for _ in range(length)), s)


def cmd_simulate(args) -> int:
    scheme = SCHEME_NAMES[args.scheme]
    s = 1 if scheme == SINGLE else args.shards
    if args.q is None and args.code == "rs":
        args.q = 257
    code = _sim_code(args, scheme)
    seed = 0 if args.seed is None else args.seed
    x = _random_message(code, scheme, s, ChallengeRng(seed))
    if args.sweep:
        fractions = [float(f) for f in args.sweep.split(",")]
        table = sim.storage_tradeoff_sweep(x, scheme, fractions, code, seed, args.r, args.e)
        rows = []
        for row in table.rows:
            rows.append((f"fraction[{row.fraction:g}]", f"stored_bits={row.stored_bits} pass_prob={row.pass_prob}"))
        emit([("scheme", args.scheme), *_code_summary(code), *rows, ("monotone", table.monotone)], args.porcelain)
        if args.csv:
            Path(args.csv).write_text(table.to_csv(args.r, args.e))
        return EXIT_PASS
    specs = args.model.split(",")
    if len(specs) == 1:
        specs = specs * s
    models = [parse_model(item, seed) for item in specs]
    # Coalition members share one model object.
    shared = {}
    for i, m in enumerate(models):
        if m.kind == sim.COLLUDE:
            models[i] = shared.setdefault(m.members, m)
    if args.trials == 0:
        prob = sim.exhaustive_pass_probability(x, scheme, models, code, args.r, args.e)
        emit([("scheme", args.scheme), *_code_summary(code), ("models", ";".join(m.label for m in models)),
              ("pass_prob", prob), ("pass_prob_float", f"{float(prob):.6f}")], args.porcelain)
        return EXIT_PASS
    report = sim.run_audit_trials(x, scheme, models, args.trials, seed, code, args.r, args.e)
    for line in report.lines():
        key, _, value = line.partition("=")
        emit([(key, value)], args.porcelain)
    if args.csv:
        dep = sim.Deployment(x, scheme, code, args.r, args.e)
        bits = sum(dep.stored_bits(m, i) for i, m in enumerate(models))
        Path(args.csv).write_text(
            ",".join(sim.CSV_COLUMNS) + "\n"
            + f"{scheme},{code.max_alphabet},{code.k},{code.n},{s},{args.r},{args.e},"
            + f"{'|'.join(m.label for m in models)},{bits},{report.pass_rate},{args.trials}\n"
        )
    return EXIT_PASS


# --------------------------------------------------------------------------
# extract / bound


def cmd_extract(args) -> int:
    p = args.field or next_prime(max(args.n, args.q))
    code = CodeParams(RS, args.k, args.n, p)
    rng = ChallengeRng(0 if args.seed is None else args.seed)
    x = tuple(rng.randbelow(args.q) for _ in range(args.k))
    t = code.radius if args.disagree is None else args.disagree
    honest = [hash_symbol(x, b, code) for b in range(code.n)]
    wrong = set()
    while len(wrong) < min(t, code.n):
        wrong.add(rng.randbelow(code.n))
    shifts = {b: 1 + rng.randbelow(p - 1) for b in sorted(wrong)}
    answers = [(h + shifts.get(b, 0)) % p for b, h in enumerate(honest)]
    result = extract_list(Responder(lambda b, y: y[b], tuple(answers)), tuple(answers), code,
                          alphabet=args.q, true_message=x)
    emit([
        *_code_summary(code), ("message_alphabet", args.q), ("disagreements", len(wrong)),
        ("list_size", result.size), ("list_bound", result.list_bound),
        ("true_in_list", result.advice_index is not None),
        ("advice_index", "-" if result.advice_index is None else result.advice_index),
    ], args.porcelain)
    ok = result.advice_index is not None and result.size <= result.list_bound
    return EXIT_PASS if ok or len(wrong) > code.radius else EXIT_FAIL


def cmd_bound(args) -> int:
    scheme = SCHEME_NAMES[args.scheme]
    kind = CODE_NAMES[args.code]
    if args.n is not None:
        code = CodeParams(kind, args.k, args.n, args.q if kind == RS else None)
    else:
        code = choose_params(args.k, args.epsilon, kind, args.q if kind == RS else None)
    if args.file:
        c_est = kolmogorov_upper_estimate(Path(args.file).read_bytes())
    elif args.c_estimate is not None:
        c_est = args.c_estimate
    else:
        raise UsageError("need --c-estimate or --file")
    result = storage_bound(scheme, code, args.shards if scheme != SINGLE else 1, c_est, args.c0)
    emit([(k, v) for k, _, v in (line.partition("=") for line in result.report())], args.porcelain)
    return EXIT_PASS


# --------------------------------------------------------------------------
# enforce-demo / serve


def cmd_enforce_demo(args) -> int:
    seed = 0 if args.seed is None else args.seed
    rng = ChallengeRng(seed)
    data = b"".join(rng.next_u64().to_bytes(8, "little") for _ in range(-(-args.size // 8)))[: args.size]
    scheme = SCHEME_NAMES[args.scheme]
    with tempfile.TemporaryDirectory(prefix="stenforce-demo-") as tmp:
        local = None
        if args.servers:
            endpoints = client.parse_endpoints(args.servers)
        else:
            s = 1 if scheme == SINGLE else args.shards
            local = [AuditServer(("127.0.0.1", 0), Path(tmp) / f"srv{i}", args.behavior) for i in range(s)]
            for srv in local:
                srv.start_background()
            endpoints = [client.parse_endpoint(srv.endpoint) for srv in local]
        try:
            x, code = prepare(data, scheme, len(endpoints), CODE_NAMES[args.code], args.q, args.epsilon)
            challenge_seed = secrets.randbits(256) if args.seed is None else seed + 1
            token = preprocess(scheme, x, code, rng_seed=challenge_seed, audits=args.audits, r=args.r, e=args.e)
            client.store(token, x, endpoints, args.timeout_ms / 1000)
            token_path = Path(args.token) if args.token else Path(tmp) / "demo.token"
            token_path.write_bytes(token.to_bytes())
            c_est = kolmogorov_upper_estimate(data)
            bound = storage_bound(scheme, code, len(endpoints), c_est)
            emit([("bytes", len(data)), ("C_upper_estimate_bits", c_est), ("f_bits", f"{bound.f_value:.3f}"),
                  *_code_summary(code)], args.porcelain)
            return run_audit(token_path, endpoints, args.timeout_ms / 1000, args.porcelain)
        finally:
            for srv in local or ():
                srv.shutdown()
                srv.server_close()


def cmd_serve(args) -> int:
    host, port = client.parse_endpoint(args.listen)
    serve((host, port), args.storage, args.behavior)
    return EXIT_PASS


# --------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stenforce", description="Storage-enforcing audits over hash codes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, code_default="rs", q_default=None, scheme=True):
        p.add_argument("--porcelain", action="store_true", help="key=value output")
        p.add_argument("--seed", type=int)
        p.add_argument("--code", choices=CODE_NAMES, default=code_default)
        p.add_argument("--q", type=int, default=q_default)
        p.add_argument("--epsilon", type=_epsilon, default="0.5")
        if scheme:
            p.add_argument("--scheme", choices=SCHEME_NAMES, default="single")
        p.add_argument("--r", type=int, default=0)
        p.add_argument("--e", type=int, default=0)

    p = sub.add_parser("params", help="code parameters from k and epsilon")
    p.add_argument("--k", type=int, required=True)
    common(p, scheme=False)
    # --scheme here names the code family, as in "params --scheme rs".
    p.add_argument("--scheme", dest="code", choices=CODE_NAMES)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("store", help="shard a file, push it to servers, write a token")
    p.add_argument("file")
    p.add_argument("--servers", required=True)
    p.add_argument("--token", required=True)
    p.add_argument("--audits", type=int, default=DEFAULT_AUDITS)
    p.add_argument("--timeout-ms", type=int, default=5000)
    common(p, q_default=DEFAULT_STORE_Q)
    p.set_defaults(func=cmd_store)

    p = sub.add_parser("audit", help="spend one token record on an audit round")
    p.add_argument("--servers", required=True)
    p.add_argument("--token", required=True)
    p.add_argument("--scheme", choices=SCHEME_NAMES)
    p.add_argument("--timeout-ms", type=int, default=5000)
    p.add_argument("--porcelain", action="store_true")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("simulate", help="pass probabilities against adversarial server models")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--n", type=int)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--model", default="honest", help="one model for all servers or a comma list")
    p.add_argument("--trials", type=int, default=0, help="0 sweeps every challenge exactly")
    p.add_argument("--sweep", help="comma list of PARTIAL fractions")
    p.add_argument("--csv")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="desk-scale list-decoding extraction")
    p.add_argument("--q", type=int, default=3, help="message alphabet")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--field", type=int, help="field prime (default: smallest prime >= max(n, q))")
    p.add_argument("--disagree", type=int, help="corrupted answers (default: the list-decoding radius)")
    p.add_argument("--seed", type=int)
    p.add_argument("--porcelain", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("bound", help="storage lower bound with itemized slack")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--c-estimate", type=float)
    p.add_argument("--file", help="estimate C(x) of this file by compression")
    p.add_argument("--c0", type=float, default=0.0)
    common(p, q_default=None)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("enforce-demo", help="store and audit a random string")
    p.add_argument("--size", type=int, default=4096)
    p.add_argument("--servers")
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--token")
    p.add_argument("--audits", type=int, default=DEFAULT_AUDITS)
    p.add_argument("--timeout-ms", type=int, default=5000)
    p.add_argument("--behavior", choices=BEHAVIORS, default="honest", help="behavior of the local servers")
    common(p, q_default=DEFAULT_STORE_Q)
    p.set_defaults(func=cmd_enforce_demo)

    p = sub.add_parser("serve", help="run an audit server")
    p.add_argument("--listen", default="127.0.0.1:7070")
    p.add_argument("--storage", required=True)
    p.add_argument("--behavior", choices=BEHAVIORS, default="honest")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except client.EndpointUnreachable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNREACHABLE
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXHAUSTED if "no unconsumed audits" in str(exc) else EXIT_FAIL
    except (UsageError, FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DecodingFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
