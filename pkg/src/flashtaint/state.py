"""Contract code and storage at a pinned block: JSON-RPC, fixture directories, caching."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from pathlib import Path
from typing import Protocol

import httpx

from .bytecode import Bytecode, CodeSource

log = logging.getLogger(__name__)

RPC_URL_ENV = "FLASHTAINT_RPC_URL"
ZERO_WORD = 0
_ADDRESS = re.compile(r"0x[0-9a-fA-F]{40}")


class StateError(RuntimeError):
    """A read that could not be served (transport, malformed response, bad fixture)."""


class RpcError(StateError):
    def __init__(self, message: str, attempts: int) -> None:
        super().__init__(f"{message} (after {attempts} attempt{'s' if attempts != 1 else ''})")
        self.attempts = attempts


def normalize_address(address: str) -> str:
    if not _ADDRESS.fullmatch(address.strip()):
        raise ValueError(f"not a 20-byte hex address: {address!r}")
    return address.strip().lower()


_QUANTITY = re.compile(r"(0x)?([0-9a-fA-F]*)")


def parse_word(text: str) -> int:
    """Hex word, with or without 0x; odd digit counts are fine (``0x0``)."""
    m = _QUANTITY.fullmatch(text.strip())
    if not m:
        raise ValueError(f"not a hex word: {text!r}")
    value = int(m.group(2) or "0", 16)
    if value >> 256:
        raise ValueError(f"storage word wider than 32 bytes: {text!r}")
    return value


class StateProvider(Protocol):
    def get_code(self, address: str, block: int) -> Bytecode: ...

    def get_storage(self, address: str, slot: int, block: int) -> int: ...


class FixtureProvider:
    """Reads ``<dir>/<address>/code.hex`` and ``<dir>/<address>/storage.json``.

    Fixtures describe one pinned state, so the block argument is accepted and
    ignored. Missing code is empty bytecode; missing slots read as zero.
    """

    def __init__(self, directory: str | Path) -> None:
        self.root = Path(directory)
        if not self.root.is_dir():
            raise StateError(f"fixture directory not readable: {self.root}")
        self._storage: dict[str, dict[int, int]] = {}
        self._lock = threading.Lock()

    def get_code(self, address: str, block: int) -> Bytecode:
        path = self.root / normalize_address(address) / "code.hex"
        if not path.is_file():
            return Bytecode(b"", CodeSource.FIXTURE)
        try:
            return Bytecode.from_hex(path.read_text(), CodeSource.FIXTURE)
        except ValueError as exc:
            raise StateError(f"{path}: {exc}") from exc

    def _load_storage(self, address: str) -> dict[int, int]:
        with self._lock:
            if address in self._storage:
                return self._storage[address]
        path = self.root / address / "storage.json"
        table: dict[int, int] = {}
        if path.is_file():
            try:
                raw = json.loads(path.read_text())
                table = {parse_word(k): parse_word(v) for k, v in raw.items()}
            except (ValueError, AttributeError) as exc:
                raise StateError(f"{path}: {exc}") from exc
        with self._lock:
            self._storage.setdefault(address, table)
        return table

    def get_storage(self, address: str, slot: int, block: int) -> int:
        return self._load_storage(normalize_address(address)).get(slot, ZERO_WORD)


class RpcProvider:
    """eth_getCode / eth_getStorageAt over JSON-RPC 2.0 (HTTP)."""

    def __init__(
        self,
        url: str,
        *,
        attempts: int = 3,
        backoff: float = 0.25,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
    ) -> None:
        self.url = url
        self.attempts = attempts
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._ids = 0
        self._lock = threading.Lock()

    def _call(self, method: str, params: list) -> str:
        with self._lock:
            self._ids += 1
            rid = self._ids
        payload = {"jsonrpc": "2.0", "id": rid, "method": method, "params": params}
        for attempt in range(1, self.attempts + 1):
            try:
                resp = self._client.post(self.url, json=payload)
                resp.raise_for_status()
                body = resp.json()
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                if attempt == self.attempts:
                    raise RpcError(f"{method}: {exc}", attempt) from exc
                delay = self.backoff * 2 ** (attempt - 1)
                log.warning("%s failed (%s); retrying in %.2fs", method, exc, delay)
                time.sleep(delay)
            except ValueError as exc:
                raise RpcError(f"{method}: response is not JSON", attempt) from exc
        if "error" in body:
            raise RpcError(f"{method}: {body['error']}", attempt)
        result = body.get("result")
        if not isinstance(result, str) or not re.fullmatch(r"0x[0-9a-fA-F]*", result):
            raise RpcError(f"{method}: malformed result {result!r}", attempt)
        return result

    def get_code(self, address: str, block: int) -> Bytecode:
        result = self._call("eth_getCode", [normalize_address(address), hex(block)])
        return Bytecode.from_hex(result, CodeSource.RPC)

    def get_storage(self, address: str, slot: int, block: int) -> int:
        result = self._call("eth_getStorageAt", [normalize_address(address), f"0x{slot:064x}", hex(block)])
        return parse_word(result)

    def close(self) -> None:
        self._client.close()


class CachingProvider:
    """Memoizes successful reads by (address, slot, block); errors are not cached."""

    def __init__(self, inner: StateProvider) -> None:
        self.inner = inner
        self._code: dict[tuple[str, int], Bytecode] = {}
        self._words: dict[tuple[str, int, int], int] = {}
        self._lock = threading.Lock()

    def get_code(self, address: str, block: int) -> Bytecode:
        key = (normalize_address(address), block)
        with self._lock:
            if key in self._code:
                return self._code[key]
        code = self.inner.get_code(address, block)
        with self._lock:
            return self._code.setdefault(key, code)

    def get_storage(self, address: str, slot: int, block: int) -> int:
        key = (normalize_address(address), slot, block)
        with self._lock:
            if key in self._words:
                return self._words[key]
        word = self.inner.get_storage(address, slot, block)
        with self._lock:
            return self._words.setdefault(key, word)


def fixture_provider(directory: str | Path) -> FixtureProvider:
    return FixtureProvider(directory)


def rpc_provider(endpoint_url: str | None = None, **kwargs) -> RpcProvider:
    url = endpoint_url or os.environ.get(RPC_URL_ENV)
    if not url:
        raise StateError(f"no RPC endpoint given and {RPC_URL_ENV} is unset")
    return RpcProvider(url, **kwargs)


def caching(inner: StateProvider) -> CachingProvider:
    return CachingProvider(inner)
