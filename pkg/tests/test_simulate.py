import csv
import io
import random
from fractions import Fraction

import pytest

from stenforce.codes import CRT, RS, CodeParams, Message, codeword
from stenforce.errors import UsageError
from stenforce.protocol import LINEAR, RS_PARITY, SINGLE, TRIVIAL
from stenforce.simulate import (
    AMNESIAC, COLLUDE, CSV_COLUMNS, HONEST, PARTIAL, SILENT, Deployment, ServerModel,
    exhaustive_pass_probability, run_audit_trials, storage_tradeoff_sweep,
)

CODE = CodeParams(RS, 8, 16, 17)
X = Message((3, 1, 4, 1, 5, 9, 2, 6))


def _random_x(seed, k=8, q=17, s=1):
    rng = random.Random(seed)
    return Message(tuple(rng.randrange(q) for _ in range(k)), s)


@pytest.mark.parametrize("scheme,s", [(SINGLE, 1), (TRIVIAL, 2), (LINEAR, 4), (RS_PARITY, 4)])
def test_honest_passes_every_challenge(scheme, s):
    code = CodeParams(RS, 8 // s if scheme == TRIVIAL else 8, 16, 17)
    x = _random_x(s, 8, 17, s)
    assert exhaustive_pass_probability(x, scheme, [ServerModel()] * s, code, r=1, e=1) == 1
    report = run_audit_trials(x, scheme, [ServerModel()] * s, 50, 1, code, r=1, e=1)
    assert report.pass_rate == 1.0 and report.histogram["PASS"] == 50


def test_constant_amnesiac_matches_direct_count():
    for c in range(17):
        expected = Fraction(sum(v == c for v in codeword(X.symbols, CODE)), 16)
        got = exhaustive_pass_probability(X, SINGLE, [ServerModel(AMNESIAC, constant=c)], CODE)
        assert got == expected


def test_wrong_message_bounded_by_distance():
    code = CodeParams(RS, 4, 16, 17)
    x = Message((1, 2, 3, 4))
    # PARTIAL with fraction 0 answers H(guess) for a fixed guess, i.e. some x' != x.
    for seed in range(40):
        model = ServerModel(PARTIAL, seed=seed, fraction=0.0)
        guess = Deployment(x, SINGLE, code)._partial_shard(model, 0)[0]
        if guess != x.symbols:
            assert exhaustive_pass_probability(x, SINGLE, [model], code) <= Fraction(3, 16)


def test_partial_fraction_below_one_is_caught_somewhere():
    for seed in range(20):
        x = _random_x(seed)
        for f in (0.0, 0.25, 0.5, 0.75, 0.875):
            model = ServerModel(PARTIAL, seed=seed, fraction=f)
            shard = Deployment(x, SINGLE, CODE)._partial_shard(model, 0)[0]
            prob = exhaustive_pass_probability(x, SINGLE, [model], CODE)
            assert (prob < 1) == (shard != x.symbols)


def test_pooled_collusion_passes_linear():
    x = _random_x(1, s=4)
    pool = ServerModel(COLLUDE, members=frozenset({1, 2}))
    models = [ServerModel(), pool, pool, ServerModel()]
    assert exhaustive_pass_probability(x, LINEAR, models, CODE) == 1
    shift = ServerModel(COLLUDE, members=frozenset({0, 3}), strategy="shift", shift=5)
    assert exhaustive_pass_probability(x, LINEAR, [shift, ServerModel(), ServerModel(), shift], CODE) == 1
    assert exhaustive_pass_probability(x, TRIVIAL, [shift, ServerModel(), ServerModel(), shift],
                                       CodeParams(RS, 2, 16, 17)) == 0


def test_drop_one_member_is_usually_caught():
    x = _random_x(2, s=2)
    drop = ServerModel(COLLUDE, members=frozenset({0, 1}), strategy="drop_one", seed=3)
    prob = exhaustive_pass_probability(x, LINEAR, [drop, drop], CODE)
    assert prob < Fraction(1, 2)


def test_silent_server_under_rs_parity():
    x = _random_x(4, s=4)
    models = [ServerModel(), ServerModel(SILENT), ServerModel(), ServerModel()]
    report = run_audit_trials(x, RS_PARITY, models, 40, 9, CODE, r=1, e=1)
    assert report.pass_rate == 1.0
    assert report.erasure_rate(1) == 1.0 and all(report.flag_rate(i) == 0 for i in range(4))
    linear = run_audit_trials(x, LINEAR, models, 40, 9, CODE)
    assert linear.pass_rate == 0.0


def test_probabilistic_silence():
    x = _random_x(4, s=4)
    models = [ServerModel(SILENT, p=0.5, seed=1)] + [ServerModel()] * 3
    report = run_audit_trials(x, TRIVIAL, models, 400, 9, CodeParams(RS, 2, 16, 17))
    assert 0.35 < report.erasure_rate(0) < 0.65
    assert report.flag_rate(0) == report.erasure_rate(0)


def test_trials_are_reproducible():
    models = [ServerModel(AMNESIAC, seed=5)]
    a = run_audit_trials(X, SINGLE, models, 300, 77, CODE)
    b = run_audit_trials(X, SINGLE, models, 300, 77, CODE)
    assert a.lines() == b.lines()
    c = run_audit_trials(X, SINGLE, models, 300, 78, CODE)
    assert a.lines() != c.lines()


def test_report_format():
    report = run_audit_trials(X, SINGLE, [ServerModel(AMNESIAC, seed=1)], 100, 1, CODE)
    lines = dict(line.split("=", 1) for line in report.lines())
    assert lines["trials"] == "100" and lines["scheme"] == "SINGLE"
    assert float(lines["pass_rate"]) == report.pass_rate
    assert int(lines["verdict[PASS]"]) + int(lines["verdict[FAIL]"]) == 100


def test_sweep_table():
    table = storage_tradeoff_sweep(X, SINGLE, [0, 0.25, 0.5, 0.75, 1], CODE, seed=5)
    assert [row.stored_bits for row in table.rows] == [0, 10, 20, 30, 40]  # 5 bits per GF(17) symbol
    assert table.rows[-1].pass_prob == 1
    fixed = ServerModel(PARTIAL, seed=5, fraction=0.0)
    assert table.rows[0].pass_prob == exhaustive_pass_probability(X, SINGLE, [fixed], CODE)
    rows = list(csv.reader(io.StringIO(table.to_csv())))
    assert rows[0] == CSV_COLUMNS and len(rows) == 6
    assert isinstance(table.monotone, bool)


def test_sweep_at_capped_length():
    code = CodeParams(RS, 8, 17, 17)
    x = _random_x(11)
    table = storage_tradeoff_sweep(x, SINGLE, [0, 0.25, 0.5, 0.75, 1], code, seed=1)
    assert table.rows[-1].pass_prob == 1
    assert all(row.pass_prob.denominator in (1, 17) for row in table.rows)


def test_crt_models():
    code = CodeParams(CRT, 3, 12)
    x = Message((12345 % code.message_bound,), scheme=CRT, original_byte_length=2)
    assert exhaustive_pass_probability(x, SINGLE, [ServerModel()], code) == 1
    p = exhaustive_pass_probability(x, SINGLE, [ServerModel(PARTIAL, fraction=0.5, seed=3)], code)
    assert 0 <= p <= 1


def test_model_validation():
    with pytest.raises(UsageError):
        ServerModel("LAZY")
    with pytest.raises(UsageError):
        ServerModel(PARTIAL, fraction=1.5)
    with pytest.raises(UsageError):
        exhaustive_pass_probability(X, SINGLE, [ServerModel(), ServerModel()], CODE)
    with pytest.raises(UsageError):
        run_audit_trials(X, SINGLE, [ServerModel()], 0, 1, CODE)
    with pytest.raises(UsageError):
        exhaustive_pass_probability(X, SINGLE, [ServerModel()], CodeParams(RS, 8, 2**20 + 1, 2**20 + 7))
    outsider = ServerModel(COLLUDE, members=frozenset({1}))
    with pytest.raises(UsageError):
        exhaustive_pass_probability(_random_x(1, s=2), LINEAR, [outsider, outsider], CODE)
    assert ServerModel(HONEST).label == "HONEST"
