import csv
import io
import json
import subprocess
import sys

import pytest

from specind import cli
from specind.cli import (
    CSV_COLUMNS,
    EXACT_KEYS,
    ConfigError,
    ExperimentConfig,
    config_digest,
    csv_text,
    dumps,
    emit_report,
    main,
    make_record,
    parse_config,
)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def test_defaults_validate():
    cfg, verbose = parse_config(["exact", "--graph", "triangle", "--q", "4"])
    assert cfg.q == 4 and cfg.command == "exact" and not verbose
    assert isinstance(cfg, ExperimentConfig)


@pytest.mark.parametrize("argv", [
    ["exact", "--graph", "triangle", "--q", "0"],
    ["exact", "--q", "3"],
    ["exact", "--graph", "triangle"],
    ["exact", "--graph", "triangle", "--q", "3", "--trials", "0"],
    ["couple", "--graph", "path3", "--model", "ising", "--chain", "flip"],
    ["exact", "--graph", "triangle", "--q", "3", "--criteria", "c99"],
])
def test_invalid_configs_exit_2(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    assert code == 2 and "error" in captured.err


def test_bad_choice_is_an_argparse_error():
    with pytest.raises(SystemExit) as e:
        parse_config(["exact", "--graph", "triangle", "--q", "3", "--chain", "metropolis"])
    assert e.value.code == 2


def test_config_file_and_override(tmp_path, capsys):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"graph": "path3", "q": 3, "lambda": 2.0, "seed": 5}))
    cfg, _ = parse_config(["exact", "--config", str(path), "--q", "4"])
    assert cfg.q == 4 and cfg.graph == "path3" and cfg.lam == 2.0 and cfg.seed == 5
    code, out = run(["exact", "--config", str(path), "--q", "4"], capsys)
    rec = json.loads(out)
    assert code == 0 and rec["config"]["q"] == 4 and rec["config"]["seed"] == 5


def test_unknown_config_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"graph": "path3", "colours": 3}))
    with pytest.raises(ConfigError, match="colours"):
        parse_config(["exact", "--config", str(path)])


def test_digest_ignores_key_order():
    a = {"q": 3, "graph": "edge", "nested": {"x": 1, "y": 2}}
    b = {"nested": {"y": 2, "x": 1}, "graph": "edge", "q": 3}
    assert config_digest(a) == config_digest(b)
    assert config_digest(a) != config_digest({**a, "q": 4})


def test_record_round_trip(monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    cfg = ExperimentConfig(graph="edge", q=3).to_dict()
    rec = make_record(cfg, {"x": [1.5, None]}, 0)
    assert json.loads(dumps(rec)) == rec
    assert rec["timestamp"] is None and rec["schema_version"] == cli.SCHEMA_VERSION
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert make_record(cfg, {}, 0)["timestamp"] == "1970-01-01T00:00:00Z"


def test_empty_payload_and_rows(tmp_path):
    cfg = ExperimentConfig(command="verify", bundle="stein", graph="edge", q=3).to_dict()
    rec = make_record(cfg, {}, 2, "ValueError: boom")
    buf = io.StringIO()
    emit_report(rec, [], "json", None, stream=buf)
    assert json.loads(buf.getvalue())["error"] == "ValueError: boom"
    paths = emit_report(rec, None, "csv", str(tmp_path / "r.csv"))
    assert [p.rsplit("/", 1)[1] for p in paths] == ["r.csv", "r.json"]
    assert (tmp_path / "r.csv").read_text().strip() == ",".join(CSV_COLUMNS["verify"])


@pytest.mark.parametrize("command", sorted(CSV_COLUMNS))
def test_csv_columns(command):
    rows = [{c: i for i, c in enumerate(CSV_COLUMNS[command])}, {"extra": 1}]
    table = list(csv.reader(io.StringIO(csv_text(command, rows))))
    assert all(len(r) == len(CSV_COLUMNS[command]) for r in table)
    assert table[0] == list(CSV_COLUMNS[command])


def test_exact_report(capsys):
    code, out = run(["exact", "--graph", "path3", "--q", "3"], capsys)
    p = json.loads(out)["payload"]
    assert code == 0
    assert set(EXACT_KEYS) <= set(p)
    assert p["Z"] == 12 and p["support_size"] == 12
    code, out = run(["exact", "--graph", "path3", "--q", "3", "--format", "csv"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 9
    assert sum(float(r["marginal"]) for r in rows) == pytest.approx(3)


def test_exact_reducible_kernel(capsys):
    code, out = run(["exact", "--graph", "triangle", "--q", "3"], capsys)
    p = json.loads(out)["payload"]
    assert code == 0 and p["gap"] is None and p["tmix"] is None and p["notes"]


def test_verify_is_byte_identical(capsys, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    argv = ["verify", "stein", "--graph", "triangle", "--q", "3", "--seed", "7"]
    c1, o1 = run(argv, capsys)
    c2, o2 = run(argv, capsys)
    assert o1 == o2 and c1 == c2 and c1 in (0, 1)


def test_verify_stein_passes(capsys):
    code, out = run(["verify", "stein", "--graph", "path3", "--q", "4"], capsys)
    certs = json.loads(out)["payload"]["certificates"]
    assert code == 0 and certs
    assert {c["status"] for c in certs} <= {"pass", "inapplicable", "skipped"}


def test_failed_certificate_exits_1(capsys):
    code, out = run(["verify", "blackbox", "--graph", "path3", "--q", "4",
                     "--const-bound", "0.001"], capsys)
    assert code == 1
    assert any(c["status"] == "fail" for c in json.loads(out)["payload"]["certificates"])


def test_couple_flip_writes_csv_and_json(tmp_path):
    out = tmp_path / "couple.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "specind.cli", "couple", "--chain", "flip", "--preset", "vigoda",
         "--graph", "cycle6", "--q", "6", "--trials", "200", "--pairs", "4",
         "--format", "csv", "--out", str(out)],
        capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr
    rows = list(csv.DictReader(out.open()))
    assert rows and list(rows[0]) == list(CSV_COLUMNS["couple"])
    p = json.loads(out.with_suffix(".json").read_text())["payload"]
    for k in ("alpha_hat", "W", "beta", "M"):
        assert k in p
    assert p["W_ceiling"] == 13 and 0 < p["alpha_hat"] <= 1


def test_sample_report(capsys):
    code, out = run(["sample", "--graph", "path3", "--model", "ising", "--beta", "0.5",
                     "--trials", "400", "--horizon", "60", "--stride", "20"], capsys)
    p = json.loads(out)["payload"]
    assert code == 0
    code, out = run(["sample", "--graph", "path3", "--model", "ising", "--beta", "0.5",
                     "--trials", "400", "--horizon", "60", "--stride", "20", "--format", "csv"],
                    capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["t"]) for r in rows][-1] == 60
    assert p


def test_out_json_with_csv_keeps_both(tmp_path, capsys):
    out = tmp_path / "e.json"
    assert main(["exact", "--graph", "edge", "--q", "3", "--format", "csv", "--out", str(out)]) == 0
    assert (tmp_path / "e.csv").read_text().startswith("vertex,color,marginal")
    assert json.loads(out.read_text())["payload"]["Z"] == 6
