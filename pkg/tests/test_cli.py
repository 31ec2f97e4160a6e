from __future__ import annotations

import json
import subprocess
import sys
from importlib import resources

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from flashtaint.bytecode import selector_of
from flashtaint.cli import main
from flashtaint.fixtures import BLOCK, CASES, addr

from .conftest import FIXTURES

FX = ["--fixtures", str(FIXTURES)]
DATA = resources.files("flashtaint") / "data"


def analyze(*extra: str, address: str = addr("a1"), sig: str = "harvest()") -> list[str]:
    return ["analyze", "--address", address, "--selector", selector_of(sig).hex, "--block", str(BLOCK), *FX, *extra]


def test_analyze_vulnerable_writes_canonical_json(capsys):
    assert main(analyze()) == 1
    out = capsys.readouterr().out
    doc = json.loads(out)
    assert doc["verdict"] == "vulnerable"
    assert out == json.dumps(doc, sort_keys=True, indent=2) + "\n"


def test_analyze_not_detected(capsys):
    assert main(analyze(address=addr("b1"), sig="payout()")) == 0
    assert json.loads(capsys.readouterr().out)["findings"] == []


def test_analyze_profile_changes_the_verdict():
    assert main(analyze("--profile", "baseline", address=addr("a2"), sig="redeem()")) == 0
    assert main(analyze("--profile", "expanded", address=addr("a2"), sig="redeem()")) == 1


def test_analyze_missing_code_is_an_analysis_error(capsys):
    assert main(analyze(address=addr("dead"))) == 2
    assert "no code" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["analyze", "--address", addr("a1"), "--selector", "0x4641257d"],  # no block
        ["analyze", "--address", "0x12", "--selector", "0x4641257d", "--block", "1", *FX],
        ["analyze", "--address", addr("a1"), "--selector", "0xa555989", "--block", "1", *FX],
        ["analyze", "--address", addr("a1"), "--selector", "0x4641257d", "--block", "0", *FX],
        ["analyze", "--address", addr("a1"), "--selector", "0x4641257d", "--block", "1", "--profile", "nope", *FX],
        ["analyze", "--address", addr("a1"), "--selector", "0x4641257d", "--block", "1", *FX, "--rpc-url", "http://x"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_64(argv):
    assert main(argv) == 64


def test_missing_rpc_configuration_is_usage(monkeypatch):
    monkeypatch.delenv("FLASHTAINT_RPC_URL", raising=False)
    assert main(["analyze", "--address", addr("a1"), "--selector", "0x4641257d", "--block", "1"]) == 64


def test_analyze_out_and_dumps(tmp_path, capsys):
    argv = analyze("--out", str(tmp_path / "r"), "--graph-dump", str(tmp_path / "g.dot"),
                   "--facts-dump", str(tmp_path / "facts"), "--cfg-dump", str(tmp_path / "cfg.txt"),
                   address=addr("a4"), sig="rebalance()")
    assert main(argv) == 1
    assert capsys.readouterr().out == ""
    name = f"{addr('a4')}-{selector_of('rebalance()').hex}-{BLOCK}.report"
    assert json.loads((tmp_path / "r" / name).read_text())["verdict"] == "vulnerable"
    assert (tmp_path / "g.dot").read_text().startswith("digraph scg {")
    assert (tmp_path / "facts" / "SinkHit.facts").read_text().strip()
    assert (tmp_path / "facts" / "ExtCall.facts").is_file()
    assert (tmp_path / "cfg.txt").read_text().startswith("0x0\t")


def test_storage_address_option(capsys):
    argv = analyze("--storage-address", addr("a4"), address=addr("1a4"), sig="rebalance()")
    assert main(argv) == 0
    assert json.loads(capsys.readouterr().out)["root"]["storage_address"] == addr("a4")


def test_batch_over_the_corpus(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["batch", str(FIXTURES / "dataset-expanded.csv"), *FX, "--out", str(out)]) == 0
    table = capsys.readouterr().out
    assert "detected 5  missed 2  errored 0" in table
    summary = json.loads((out / "summary.json").read_text())
    assert summary["detection_rate"] == round(5 / 7, 6)
    t = summary["totals"]
    assert t["detected"] + t["missed"] == len(summary["incidents"]) - t["errored"]
    assert [i["date"] for i in summary["incidents"]] == sorted(i["date"] for i in summary["incidents"])
    assert len(list(out.glob("*.report"))) == 7


def test_batch_reports_expectation_mismatches(capsys):
    assert main(["batch", str(FIXTURES / "dataset-expanded.csv"), *FX, "--profile", "baseline"]) == 1
    assert "MISMATCH" in capsys.readouterr().out


def test_batch_empty_dataset(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("date,name,logic_address,entry_selector,block\n")
    assert main(["batch", str(p), *FX]) == 0
    assert "detection rate n/a" in capsys.readouterr().out


def test_batch_malformed_row_exits_65(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("date,name,logic_address,entry_selector,block\n2023-01-01,x,0xnope,0x4641257d,1\n")
    assert main(["batch", str(p), *FX]) == 65
    assert "line 2" in capsys.readouterr().err


def test_batch_unreadable_dataset_is_usage(tmp_path):
    assert main(["batch", str(tmp_path / "missing.csv"), *FX]) == 64


def test_batch_with_errors_counts_them(tmp_path, capsys):
    p = tmp_path / "d.csv"
    p.write_text(f"date,name,logic_address,entry_selector,block\n2023-01-01,gone,{addr('dead')},0x4641257d,1\n")
    assert main(["batch", str(p), *FX]) == 0
    assert "errored 1" in capsys.readouterr().out


def test_selectors_check_against_shipped_table(capsys):
    argv = ["selectors", str(DATA / "signatures.txt"), "--check", str(DATA / "signatures.csv"),
            "--discrepancies", str(DATA / "signature-discrepancies.csv")]
    assert main(argv) == 0
    cap = capsys.readouterr()
    assert len(cap.out.splitlines()) == 12
    assert "12 of 12 match" in cap.err


def test_selectors_mismatch_and_documented_discrepancy(tmp_path, capsys):
    sigs = tmp_path / "s.txt"
    sigs.write_text("transfer(address,uint256)\nwithdraw(uint256)  # trailing comment\n")
    want = tmp_path / "want.txt"
    want.write_text("transfer(address,uint256) 0xa9059cbb\nwithdraw(uint256) 0xdeadbeef\n")
    assert main(["selectors", str(sigs), "--check", str(want)]) == 1
    assert "MISMATCH: withdraw(uint256)" in capsys.readouterr().err
    known = tmp_path / "known.csv"
    known.write_text("signature,hex\nwithdraw(uint256),0xdeadbeef\n")
    assert main(["selectors", str(sigs), "--check", str(want), "--discrepancies", str(known)]) == 0
    assert "1 of 2 match" in capsys.readouterr().err


def test_selectors_bad_signature_exits_65(tmp_path, capsys):
    sigs = tmp_path / "s.txt"
    sigs.write_text("totalSupply()\ntransfer(address, uint256)\n")
    assert main(["selectors", str(sigs)]) == 65
    assert "line 2" in capsys.readouterr().err


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "flashtaint.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("flashtaint ")


def test_selectors_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    assert main(["selectors", str(empty)]) == 0
    assert capsys.readouterr().out == ""


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.sampled_from(CASES), st.sampled_from(["baseline", "expanded"]))
def test_exit_code_contract_over_the_corpus(capsys, case, profile):
    code = main(analyze("--profile", profile, address=case.address, sig=case.entry))
    verdict = json.loads(capsys.readouterr().out)["verdict"]
    assert verdict == case.expected[profile]
    assert code == (1 if verdict == "vulnerable" else 0)
