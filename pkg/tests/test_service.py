from __future__ import annotations

import json

import httpx
import pytest
from fastapi.testclient import TestClient

from flashtaint import __version__, cli
from flashtaint.bytecode import selector_of
from flashtaint.fixtures import BLOCK, addr
from flashtaint.service import create_app
from flashtaint.state import fixture_provider

from .conftest import FIXTURES

SERVER = "http://flashtaint.test"


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(fixture_provider(FIXTURES)))


def body(address=addr("a1"), sig="harvest()", **kw):
    return {"address": address, "selector": selector_of(sig).hex, "block": BLOCK, **kw}


def test_health(client):
    assert client.get("/health").json() == {"status": "ok", "version": __version__}


def test_analyze_matches_the_local_report(client, capsys):
    resp = client.post("/analyze", json=body())
    assert resp.status_code == 200
    doc = resp.json()
    assert doc["status"] == "vulnerable" and doc["exit_code"] == 1
    assert doc["report_name"] == f"{addr('a1')}-{selector_of('harvest()').hex}-{BLOCK}.report"
    cli.main(["analyze", "--address", addr("a1"), "--selector", selector_of("harvest()").hex,
              "--block", str(BLOCK), "--fixtures", str(FIXTURES)])
    assert json.loads(capsys.readouterr().out) == doc["report"]


def test_analyze_normalizes_inputs(client):
    resp = client.post("/analyze", json=body(address=addr("b1").upper().replace("0X", "0x"), sig="payout()",
                                             profile="baseline"))
    assert resp.json()["status"] == "not_detected" and resp.json()["exit_code"] == 0


def test_analyze_errors(client):
    resp = client.post("/analyze", json=body(address=addr("dead")))
    assert resp.status_code == 200 and resp.json()["status"] == "error" and resp.json()["exit_code"] == 2
    assert client.post("/analyze", json=body(profile="nope")).json()["detail"]["kind"] == "usage"
    assert client.post("/analyze", json={**body(), "selector": "0xa555989"}).status_code == 422
    assert client.post("/analyze", json={**body(), "block": 0}).status_code == 422


def test_batch(client):
    dataset = (FIXTURES / "dataset-expanded.csv").read_text()
    doc = client.post("/batch", json={"dataset": dataset, "parallel": 3}).json()
    assert doc["exit_code"] == 0 and doc["summary"]["totals"] == {"detected": 5, "missed": 2, "errored": 0}
    assert len(doc["reports"]) == 7 and "detection rate" in doc["table"]


def test_batch_dataset_error(client):
    resp = client.post("/batch", json={"dataset": "date,name\n"})
    assert resp.status_code == 400
    assert resp.json()["detail"] == {"kind": "dataset", "message": "line 1: header lacks column(s) logic_address, "
                                     "entry_selector, block", "line": 1}


def test_selectors(client):
    doc = client.post("/selectors", json={"signatures": ["transfer(address,uint256)"]}).json()
    assert doc == {"selectors": [{"signature": "transfer(address,uint256)", "selector": "0xa9059cbb"}]}
    assert client.post("/selectors", json={"signatures": ["transfer(address, uint256)"]}).status_code == 400


# -- the CLI as a thin client ------------------------------------------------------


@pytest.fixture
def routed(client, monkeypatch):
    """Send the CLI's HTTP requests to the in-process app."""

    def post(url, json, timeout):
        assert url.startswith(SERVER)
        return client.post(url[len(SERVER):], json=json)

    monkeypatch.setattr(cli.httpx, "post", post)


def test_thin_client_analyze(routed, tmp_path, capsys):
    argv = ["analyze", "--address", addr("a2"), "--selector", selector_of("redeem()").hex, "--block", str(BLOCK)]
    assert cli.main([*argv, "--server", SERVER, "--profile", "baseline"]) == 0
    remote = capsys.readouterr().out
    assert cli.main([*argv, "--fixtures", str(FIXTURES), "--profile", "baseline"]) == 0
    assert capsys.readouterr().out == remote
    assert cli.main([*argv, "--server", SERVER, "--out", str(tmp_path)]) == 1
    assert len(list(tmp_path.glob("*.report"))) == 1


def test_thin_client_errors(routed, tmp_path, capsys):
    argv = ["analyze", "--address", addr("dead"), "--selector", "0x4641257d", "--block", "1", "--server", SERVER]
    assert cli.main(argv) == 2
    assert cli.main([*argv[:-2], "--server", SERVER, "--graph-dump", str(tmp_path / "g")]) == 64
    bad = tmp_path / "bad.csv"
    bad.write_text("date,name,logic_address,entry_selector,block\n2023-01-01,x,0x12,0x4641257d,1\n")
    assert cli.main(["batch", str(bad), "--server", SERVER]) == 65
    assert "line 2" in capsys.readouterr().err


def test_thin_client_batch_matches_local(routed, tmp_path):
    data = str(FIXTURES / "dataset-expanded.csv")
    assert cli.main(["batch", data, "--server", SERVER, "--out", str(tmp_path / "remote")]) == 0
    assert cli.main(["batch", data, "--fixtures", str(FIXTURES), "--out", str(tmp_path / "local")]) == 0
    remote = sorted(p.name for p in (tmp_path / "remote").iterdir())
    assert remote == sorted(p.name for p in (tmp_path / "local").iterdir())
    for name in remote:
        assert (tmp_path / "remote" / name).read_text() == (tmp_path / "local" / name).read_text()


def test_unreachable_server_is_an_analysis_error(monkeypatch):
    def post(url, json, timeout):
        raise httpx.ConnectError("refused")

    monkeypatch.setattr(cli.httpx, "post", post)
    argv = ["analyze", "--address", addr("a1"), "--selector", "0x4641257d", "--block", "1", "--server", SERVER]
    assert cli.main(argv) == 2
