from __future__ import annotations

import json

import httpx
import pytest

from flashtaint.fixtures import BLOCK, IMPL_SLOT, PAIR, TOKEN, addr, write_corpus
from flashtaint.state import (
    RPC_URL_ENV,
    CachingProvider,
    RpcError,
    RpcProvider,
    StateError,
    fixture_provider,
    normalize_address,
    parse_word,
    rpc_provider,
)

from .conftest import FIXTURES


def test_shipped_fixtures_match_the_generator(tmp_path):
    write_corpus(tmp_path)
    ours = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
    shipped = sorted(p.relative_to(FIXTURES) for p in FIXTURES.rglob("*") if p.is_file() and p.name != "README.md")
    assert ours == shipped
    for rel in ours:
        assert (tmp_path / rel).read_text() == (FIXTURES / rel).read_text(), rel


def test_fixture_reads(state):
    assert len(state.get_code(TOKEN, BLOCK).code) > 0
    assert state.get_code(addr("dead"), BLOCK).code == b""
    assert state.get_storage(PAIR, 0, BLOCK) == 10**21
    assert state.get_storage(PAIR, 1, BLOCK) == 0
    assert state.get_storage(addr("a4"), IMPL_SLOT, BLOCK) == int(addr("1a4"), 16)


def test_fixture_address_case_is_ignored():
    p = fixture_provider(FIXTURES)
    assert p.get_code(TOKEN.upper().replace("0X", "0x"), 1).code == p.get_code(TOKEN, 1).code


def test_bad_fixtures(tmp_path):
    with pytest.raises(StateError):
        fixture_provider(tmp_path / "missing")
    a = tmp_path / TOKEN
    a.mkdir()
    (a / "code.hex").write_text("0xabc")
    (a / "storage.json").write_text("[1, 2]")
    p = fixture_provider(tmp_path)
    with pytest.raises(StateError):
        p.get_code(TOKEN, 1)
    with pytest.raises(StateError):
        p.get_storage(TOKEN, 0, 1)


def test_parse_word_and_addresses():
    assert parse_word("0x0") == 0
    assert parse_word("ff") == 255
    assert parse_word("0x") == 0
    for bad in ("0xzz", "0x1" + "0" * 64):
        with pytest.raises(ValueError):
            parse_word(bad)
    assert normalize_address(" 0xABCDEF0123456789abcdef0123456789ABCDEF01 ") == "0xabcdef0123456789abcdef0123456789abcdef01"
    with pytest.raises(ValueError):
        normalize_address("0x1234")


class Node:
    """Scripted JSON-RPC endpoint: each request pops the next response."""

    def __init__(self, *responses):
        self.responses = list(responses)
        self.requests: list[dict] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(json.loads(request.content))
        r = self.responses.pop(0)
        if isinstance(r, Exception):
            raise r
        if isinstance(r, int):
            return httpx.Response(r)
        if isinstance(r, str):
            return httpx.Response(200, content=r.encode())
        return httpx.Response(200, json={"jsonrpc": "2.0", "id": self.requests[-1]["id"], **r})

    def provider(self, attempts: int = 3) -> RpcProvider:
        client = httpx.Client(transport=httpx.MockTransport(self))
        return RpcProvider("http://node.invalid", attempts=attempts, backoff=0, client=client)


def test_rpc_requests_are_well_formed():
    node = Node({"result": "0x6000"}, {"result": "0x05"})
    p = node.provider()
    assert p.get_code(TOKEN, 17).code == bytes.fromhex("6000")
    assert p.get_storage(TOKEN, 3, 17) == 5
    (a, b) = node.requests
    assert a["method"] == "eth_getCode" and a["params"] == [TOKEN, "0x11"]
    assert b["method"] == "eth_getStorageAt" and b["params"] == [TOKEN, "0x" + "0" * 63 + "3", "0x11"]
    assert a["id"] != b["id"]


def test_rpc_retries_transport_and_status_errors():
    node = Node(httpx.ConnectError("refused"), 503, {"result": "0x1"})
    assert node.provider().get_storage(TOKEN, 0, 1) == 1
    assert len(node.requests) == 3


def test_rpc_gives_up_after_the_last_attempt():
    node = Node(500, 500)
    with pytest.raises(RpcError) as err:
        node.provider(attempts=2).get_code(TOKEN, 1)
    assert err.value.attempts == 2


@pytest.mark.parametrize("response", [{"result": 12}, {"result": "xyz"}, {"error": {"code": -32000}}, "not json"])
def test_rpc_malformed_responses_are_errors(response):
    with pytest.raises(RpcError):
        Node(response).provider().get_code(TOKEN, 1)


def test_rpc_url_from_environment(monkeypatch):
    monkeypatch.delenv(RPC_URL_ENV, raising=False)
    with pytest.raises(StateError):
        rpc_provider()
    monkeypatch.setenv(RPC_URL_ENV, "http://example.invalid")
    assert rpc_provider().url == "http://example.invalid"
    assert rpc_provider("http://other.invalid").url == "http://other.invalid"


def test_caching_serves_repeats_and_does_not_cache_errors():
    node = Node({"result": "0x07"}, 500, {"result": "0x6000"})
    p = CachingProvider(node.provider(attempts=1))
    assert p.get_storage(TOKEN, 0, 1) == 7
    assert p.get_storage(TOKEN.upper().replace("0X", "0x"), 0, 1) == 7
    with pytest.raises(RpcError):
        p.get_code(TOKEN, 1)
    assert p.get_code(TOKEN, 1).code == b"\x60\x00"
    assert p.get_code(TOKEN, 1).code == b"\x60\x00"
    assert len(node.requests) == 3
