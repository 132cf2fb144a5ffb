import socket

import pytest

from stenforce.cli import main
from stenforce.server import AuditServer


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def porcelain(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture
def cluster(tmp_path):
    live = []

    def start(count, behavior="honest"):
        for i in range(count):
            srv = AuditServer(("127.0.0.1", 0), tmp_path / f"srv{len(live)}", behavior)
            srv.start_background()
            live.append(srv)
        return live[-count:]

    yield start
    for srv in live:
        srv.shutdown()
        srv.server_close()


def test_params(capsys):
    code, out, _ = run(capsys, "params", "--k", "4", "--epsilon", "0.5", "--scheme", "rs", "--porcelain")
    fields = porcelain(out)
    assert code == 0 and (fields["n"], fields["q"], fields["L"]) == ("16", "17", "512")
    code, out, _ = run(capsys, "params", "--k", "4", "--epsilon", "0.5", "--scheme", "crt", "--porcelain")
    assert code == 0 and porcelain(out)["L"] == "1024"


def test_usage_errors(capsys):
    assert run(capsys, "params", "--k", "0")[0] == 2
    assert run(capsys, "params", "--k", "4", "--epsilon", "1.5")[0] == 2
    assert run(capsys, "bound", "--k", "4")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_store_audit_exhaust(capsys, tmp_path, cluster):
    servers = ",".join(s.endpoint for s in cluster(3))
    data = tmp_path / "data.bin"
    data.write_bytes(bytes(range(256)) * 8)
    token = tmp_path / "t.tok"
    code, out, err = run(capsys, "store", str(data), "--servers", servers, "--token", str(token),
                         "--scheme", "rs-parity", "--r", "1", "--audits", "2", "--seed", "7", "--porcelain")
    assert code == 0, err
    assert porcelain(out)["audits"] == "2"
    for left in (1, 0):
        code, out, err = run(capsys, "audit", "--servers", servers, "--token", str(token), "--porcelain")
        fields = porcelain(out)
        assert code == 0 and fields["verdict"] == "PASS" and fields["remaining"] == str(left)
    code, _, err = run(capsys, "audit", "--servers", servers, "--token", str(token))
    assert code == 3 and "no unconsumed audits" in err


def test_audit_fail_and_wrong_scheme(capsys, tmp_path, cluster):
    (bad,) = cluster(1, "corrupt")
    data = tmp_path / "data.bin"
    data.write_bytes(b"payload" * 50)
    token = tmp_path / "t.tok"
    assert run(capsys, "store", str(data), "--servers", bad.endpoint, "--token", str(token), "--seed", "1")[0] == 0
    assert run(capsys, "audit", "--servers", bad.endpoint, "--token", str(token), "--scheme", "linear")[0] == 2
    code, out, _ = run(capsys, "audit", "--servers", bad.endpoint, "--token", str(token), "--porcelain")
    assert code == 1 and porcelain(out)["verdict"] == "FAIL"


def test_unreachable_single(capsys, tmp_path, cluster):
    (srv,) = cluster(1)
    data = tmp_path / "d"
    data.write_bytes(b"abc" * 10)
    token = tmp_path / "t"
    assert run(capsys, "store", str(data), "--servers", srv.endpoint, "--token", str(token))[0] == 0
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        dead = f"127.0.0.1:{sock.getsockname()[1]}"
    assert run(capsys, "audit", "--servers", dead, "--token", str(token), "--timeout-ms", "500")[0] == 4
    assert run(capsys, "store", str(data), "--servers", dead, "--token", str(token))[0] == 4


def test_simulate_exhaustive_and_trials(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--k", "4", "--n", "16", "--q", "17", "--model", "amnesiac:3",
                       "--porcelain")
    assert code == 0 and porcelain(out)["pass_prob"] == "1/16"
    csv = tmp_path / "t.csv"
    code, out, _ = run(capsys, "simulate", "--k", "4", "--n", "16", "--q", "17", "--model", "silent",
                       "--trials", "200", "--csv", str(csv), "--porcelain")
    assert code == 0 and float(porcelain(out)["pass_rate"]) == 0.0
    assert csv.read_text().count("\n") == 2


def test_simulate_sweep(capsys, tmp_path):
    csv = tmp_path / "sweep.csv"
    code, out, _ = run(capsys, "simulate", "--k", "8", "--n", "16", "--q", "17", "--sweep", "0,0.5,1",
                       "--seed", "3", "--csv", str(csv), "--porcelain")
    fields = porcelain(out)
    assert code == 0 and fields["fraction[1]"].endswith("pass_prob=1")
    assert len(csv.read_text().splitlines()) == 4


def test_simulate_coalition(capsys):
    code, out, _ = run(capsys, "simulate", "--scheme", "rs-parity", "--k", "8", "--n", "16", "--q", "17",
                       "--shards", "4", "--r", "1", "--model", "honest,collude-pool:1+2,collude-pool:1+2,honest",
                       "--porcelain")
    assert code == 0 and "pass_prob" in porcelain(out)
    assert run(capsys, "simulate", "--model", "bogus")[0] == 2


def test_extract(capsys):
    code, out, _ = run(capsys, "extract", "--seed", "4", "--porcelain")
    fields = porcelain(out)
    assert code == 0 and fields["true_in_list"] == "True"
    assert int(fields["list_size"]) <= int(fields["list_bound"])


def test_bound(capsys, tmp_path):
    code, out, _ = run(capsys, "bound", "--k", "4", "--c-estimate", "5000", "--porcelain")
    assert code == 0 and float(porcelain(out)["f"]) < 5000
    blob = tmp_path / "blob"
    blob.write_bytes(bytes(4096))
    code, out, _ = run(capsys, "bound", "--k", "16", "--file", str(blob), "--scheme", "trivial", "--shards", "2",
                       "--porcelain")
    assert code == 0


@pytest.mark.parametrize("scheme,behavior,expected", [
    ("single", "honest", 0), ("trivial", "honest", 0), ("linear", "honest", 0),
    ("rs-parity", "honest", 0), ("single", "corrupt", 1), ("linear", "decline", 1),
])
def test_enforce_demo(capsys, scheme, behavior, expected):
    code, out, err = run(capsys, "enforce-demo", "--scheme", scheme, "--shards", "3", "--size", "600",
                         "--behavior", behavior, "--seed", "2", "--porcelain")
    assert code == expected, err
    assert porcelain(out)["verdict"] == ("PASS" if expected == 0 else "FAIL")
