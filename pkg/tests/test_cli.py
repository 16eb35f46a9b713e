from __future__ import annotations

import csv
import io
import json

import pytest

from sstperm.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_no_args_prints_usage(capsys):
    code, _, err = run(capsys)
    assert code == 2
    assert "usage" in err


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["plan", "--n", "4", "--epsilon", "0.01", "--bogus"])
    assert exc.value.code == 2


def test_plan(capsys):
    code, out, _ = run(capsys, "plan", "--n", "4", "--epsilon", "0.01")
    assert code == 0 and out.strip() == "26"


def test_plan_out_of_range(capsys):
    code, _, err = run(capsys, "plan", "--n", "4", "--epsilon", "0.05")
    assert code == 1 and "epsilon" in err


def test_advantage_csv_rows(capsys):
    code, out, _ = run(capsys, "advantage", "--n", "256", "--t", "256", "512", "768")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["k"] for r in rows] == ["0", "256", "512"]
    assert rows[0]["plus"] == "0.5671382998250798"
    assert rows[0]["minus"] == "0.4328617001749202"
    assert rows[0]["log2_epsilon"] == "-3.89672"
    assert rows[1]["plus"].startswith("0.509015")
    assert rows[2]["plus"] == "0.5012105173235390"


def test_advantage_full_precision_and_json(capsys):
    _, out, _ = run(capsys, "advantage", "--k", "1024", "--full-precision")
    row = list(csv.DictReader(io.StringIO(out)))[0]
    assert len(row["plus"].split(".")[1]) == 40
    assert row["plus"].startswith("0.5000218258757580")
    _, out, _ = run(capsys, "advantage", "--k", "0", "--out", "json")
    doc = json.loads(out)
    assert doc["rows"][0]["plus"].startswith("0.5671382998250798")


def test_shuffle_deck_and_json(capsys):
    code, out, _ = run(capsys, "shuffle", "--n", "16", "--key-hex", "00112233", "--scheme", "ctrt-klz")
    deck = [int(x) for x in out.split()]
    assert code == 0 and sorted(deck) == list(range(16))
    _, out2, _ = run(capsys, "shuffle", "--n", "16", "--key-hex", "00112233", "--scheme", "ctrt-klz", "--emit", "json")
    doc = json.loads(out2)
    assert doc["deck"] == deck
    assert doc["bits_used"] == doc["steps"] * 4
    assert doc["config"]["scheme"] == "ctrt-klz"


def test_shuffle_system_random(capsys):
    code, out, _ = run(capsys, "shuffle", "--n", "8", "--system-random")
    assert code == 0 and sorted(map(int, out.split())) == list(range(8))


def test_shuffle_needs_a_source(capsys):
    code, _, _ = run(capsys, "shuffle", "--n", "8")
    assert code == 2


def test_simulate_json_and_env_seed(capsys, monkeypatch):
    monkeypatch.setenv("SSTPERM_SEED", "17")
    _, out, _ = run(capsys, "simulate", "--kind", "rtrt", "--rule", "klz", "--n", "4", "--trials", "200", "--out", "json")
    doc = json.loads(out)
    assert doc["config"]["seed"] == 17
    assert sum(doc["histogram"].values()) == 200
    _, again, _ = run(capsys, "simulate", "--kind", "rtrt", "--rule", "klz", "--n", "4", "--trials", "200",
                      "--seed", "17", "--out", "json")
    assert again == out


def test_simulate_csv(capsys):
    _, out, _ = run(capsys, "simulate", "--kind", "ctrt", "--rule", "mironov", "--n", "8", "--trials", "50")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["kind"] == "ctrt" and float(rows[0]["mean_steps"]) > 0


def test_simulate_invalid_pairing(capsys):
    code, _, err = run(capsys, "simulate", "--kind", "t2r", "--rule", "klz", "--n", "4", "--trials", "5")
    assert code == 1 and "not a strong stationary time" in err


def test_config_file_supplies_defaults(capsys, tmp_path):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"simulate": {"trials": 30, "seed": 5}}))
    _, out, _ = run(capsys, "--config", str(conf), "simulate", "--kind", "rtrt", "--rule", "mironov",
                    "--n", "3", "--out", "json")
    doc = json.loads(out)
    assert doc["trials"] == 30 and doc["config"]["seed"] == 5
    _, out, _ = run(capsys, "--config", str(conf), "simulate", "--kind", "rtrt", "--rule", "mironov",
                    "--n", "3", "--trials", "40", "--out", "json")
    assert json.loads(out)["trials"] == 40


def test_oracle_reports_each_pair(capsys):
    code, out, _ = run(capsys, "oracle", "--n", "3")
    assert code == 0
    assert out.count("PASS") == 6


def test_oracle_exits_nonzero_on_violation(capsys):
    code, out, _ = run(capsys, "oracle", "--n", "4")
    assert code == 1
    assert "FAIL rtrt+klz n=4" in out


def test_mask_roundtrip(capsys, tmp_path):
    plain = tmp_path / "p.bin"
    plain.write_bytes(bytes(range(256)) * 2)
    enc, dec = tmp_path / "c.bin", tmp_path / "d.bin"
    assert run(capsys, "mask", "encrypt", "--key-hex", "abcd", "--in", str(plain), "--out", str(enc))[0] == 0
    assert enc.read_bytes() != plain.read_bytes()
    assert run(capsys, "mask", "decrypt", "--key-hex", "abcd", "--in", str(enc), "--out", str(dec))[0] == 0
    assert dec.read_bytes() == plain.read_bytes()


def test_mask_rejects_partial_block(capsys, tmp_path):
    plain = tmp_path / "p.bin"
    plain.write_bytes(bytes(20))
    code, _, err = run(capsys, "mask", "encrypt", "--key-hex", "ab", "--in", str(plain), "--out", str(tmp_path / "o"))
    assert code == 1 and "block" in err


def test_bench(capsys):
    code, out, _ = run(capsys, "bench", "--blocks", "500")
    doc = json.loads(out)
    assert code == 0 and doc["fast_blocks_per_sec"] > 0
