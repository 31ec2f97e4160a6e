"""Hand-assembled regression contracts and their pinned state.

Every contract is written in the mini assembler, so the expected taint trace
can be read straight off the source below.

    v1-direct        balanceOf result, scaled, becomes the transferFrom amount
    v2-reserves      getReserves word becomes the withdraw amount (expanded only)
    v3-oracle        price read through a storage-resolved oracle contract
    v4-proxy         implementation stores a balance in proxy storage via
                     DELEGATECALL; the proxy later transfers that slot
    v5-router        call target passed in by the caller as an argument
    s1-constant      transfer of a constant amount
    s2-record        balance stored, never transferred
    chain-*          a three-deep call chain for depth-limit checks
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .asm import assemble
from .bytecode import encode_hex, selector_of

BLOCK = 17_000_000
IMPL_SLOT = 0x360894A13BA1A3210667C828492DB98DCA3E2076CC3735A920A3CA505D382BBC
ADDRESS_MASK = (1 << 160) - 1


def addr(tag: str) -> str:
    return "0x" + "f1a5" + tag.rjust(36, "0")


TOKEN = addr("70c3")
PAIR = addr("9a12")
VAULT = addr("7a17")
USER = addr("beef")


def sel(sig: str) -> int:
    return selector_of(sig).int


# -- snippets --------------------------------------------------------------------


def dispatcher(entries: list[tuple[str, str]], idiom: str = "shr") -> str:
    """Selector dispatch; ``entries`` are (signature, label)."""
    if idiom == "shr":
        out = ["PUSH 0 CALLDATALOAD PUSH 0xe0 SHR"]
    else:
        out = [f"PUSH {1 << 224:#x} PUSH 0 CALLDATALOAD DIV PUSH 0xffffffff AND"]
    for sig, label in entries:
        out.append(f"DUP1 PUSH4 {sel(sig):#010x} EQ PUSH @{label} JUMPI")
    out.append("PUSH 0 DUP1 REVERT")
    return "\n".join(out)


def call(kind: str, sig: str, target: str, args: list[str], ret: bool = True) -> str:
    """External call with selector at 0x100, argument words from 0x104 and
    a 32-byte return buffer at 0x200. ``target`` and each arg are assembler
    fragments that leave one word on the stack. Leaves the success flag."""
    out = [f"PUSH {sel(sig) << 224:#x} PUSH 0x100 MSTORE"]
    for i, a in enumerate(args):
        out.append(f"{a} PUSH {0x104 + 32 * i:#x} MSTORE")
    ret_len = "PUSH 0x20" if ret else "PUSH 0"
    head = f"{ret_len} PUSH 0x200 PUSH {4 + 32 * len(args):#x} PUSH 0x100"
    if kind in ("call", "callcode"):
        head += " PUSH 0"
    out.append(f"{head} {target} GAS {kind.upper()}")
    return "\n".join(out)


def const(a: str) -> str:
    return f"PUSH20 {a}"


def from_slot(slot: int) -> str:
    return f"PUSH {slot:#x} SLOAD PUSH20 {ADDRESS_MASK:#x} AND"


RET_WORD = "PUSH 0x200 MLOAD"


def returns(value: str) -> str:
    return f"{value} PUSH 0 MSTORE PUSH 0x20 PUSH 0 RETURN"


# -- contracts -------------------------------------------------------------------

TOKEN_SRC = f"""
{dispatcher([("balanceOf(address)", "bal"), ("transfer(address,uint256)", "xfer"),
             ("transferFrom(address,address,uint256)", "xfer"), ("decimals()", "dec")])}
bal: {returns("PUSH 0x4 CALLDATALOAD SLOAD")}
xfer: {returns("PUSH 1")}
dec: {returns("PUSH 18")}
"""

PAIR_SRC = f"""
{dispatcher([("getReserves()", "res")], idiom="div")}
res: {returns("PUSH 0 SLOAD")}
"""

VAULT_SRC = f"""
{dispatcher([("withdraw(uint256)", "wd")])}
wd: STOP
"""

V1_SRC = f"""
{dispatcher([("harvest()", "harvest")])}
harvest:
  {call("staticcall", "balanceOf(address)", const(TOKEN), [const(PAIR)])} POP
  {RET_WORD} PUSH 3 MUL PUSH 1 ADD                  ; amount = 3 * balance + 1
  PUSH 0x300 MSTORE
  {call("call", "transferFrom(address,address,uint256)", const(TOKEN),
        [const(PAIR), "CALLER", "PUSH 0x300 MLOAD"])} POP
  STOP
"""

V2_SRC = f"""
{dispatcher([("redeem()", "redeem")], idiom="div")}
redeem:
  {call("staticcall", "getReserves()", const(PAIR), [])} POP
  {RET_WORD} PUSH 2 SWAP1 DIV                       ; half the reserve
  PUSH 0x300 MSTORE
  {call("call", "withdraw(uint256)", const(VAULT), ["PUSH 0x300 MLOAD"])} POP
  STOP
"""

V3_ORACLE_SRC = f"""
{dispatcher([("getPrice()", "price")])}
price:
  {call("staticcall", "balanceOf(address)", from_slot(0), [const(PAIR)])} POP
  {returns(f"{RET_WORD} PUSH 1000 MUL")}
"""

V3_SRC = f"""
{dispatcher([("claim()", "claim")])}
claim:
  {call("staticcall", "getPrice()", from_slot(0), [])} POP
  {RET_WORD} PUSH 0x300 MSTORE
  {call("call", "transfer(address,uint256)", const(TOKEN), ["CALLER", "PUSH 0x300 MLOAD"])} POP
  STOP
"""

V4_IMPL_SRC = f"""
{dispatcher([("rebalance()", "rebalance")])}
rebalance:
  {call("staticcall", "balanceOf(address)", const(TOKEN), [from_slot(2)])} POP
  {RET_WORD} PUSH 1 SSTORE                          ; lands in the proxy's slot 1
  STOP
"""

# no dispatcher: forward the whole calldata to the implementation
V4_PROXY_SRC = f"""
  CALLDATASIZE PUSH 0 PUSH 0 CALLDATACOPY
  PUSH 0 PUSH 0 CALLDATASIZE PUSH 0 PUSH32 {IMPL_SLOT:#x} SLOAD GAS DELEGATECALL POP
  {call("call", "transfer(address,uint256)", const(TOKEN), ["CALLER", "PUSH 1 SLOAD"])} POP
  STOP
"""

V5_HELPER_SRC = f"""
{dispatcher([("quote(address)", "quote")])}
quote:
  {call("staticcall", "balanceOf(address)", "PUSH 0x4 CALLDATALOAD", [const(PAIR)])} POP
  {returns(RET_WORD)}
"""

V5_SRC = f"""
{dispatcher([("route()", "route")])}
route:
  {call("staticcall", "quote(address)", const(addr("05e1")), [const(TOKEN)])} POP
  {RET_WORD} PUSH 0x300 MSTORE
  {call("call", "transfer(address,uint256)", const(TOKEN), ["CALLER", "PUSH 0x300 MLOAD"])} POP
  STOP
"""

S1_SRC = f"""
{dispatcher([("payout()", "payout")])}
payout:
  {call("staticcall", "decimals()", const(TOKEN), [])} POP
  {call("call", "transfer(address,uint256)", const(TOKEN), ["CALLER", "PUSH 1000"])} POP
  STOP
"""

S2_SRC = f"""
{dispatcher([("sync()", "sync")], idiom="div")}
sync:
  {call("staticcall", "balanceOf(address)", from_slot(0), [const(PAIR)])} POP
  {RET_WORD} PUSH 5 SSTORE
  STOP
"""


def _chain_src(next_addr: str | None) -> str:
    body = f"{call('call', 'step()', const(next_addr), [])} POP" if next_addr else ""
    return f"""
{dispatcher([("step()", "step")])}
step: {body}
  STOP
"""


@dataclass(frozen=True, slots=True)
class Contract:
    address: str
    source: str
    storage: dict[int, int]


@dataclass(frozen=True, slots=True)
class Case:
    name: str
    date: str
    address: str
    entry: str
    expected: dict[str, str]  # profile -> verdict


CONTRACTS = [
    Contract(TOKEN, TOKEN_SRC, {}),
    Contract(PAIR, PAIR_SRC, {0: 10**21}),
    Contract(VAULT, VAULT_SRC, {}),
    Contract(addr("a1"), V1_SRC, {}),
    Contract(addr("a2"), V2_SRC, {}),
    Contract(addr("a3"), V3_SRC, {0: int(addr("0ac3"), 16)}),
    Contract(addr("0ac3"), V3_ORACLE_SRC, {0: int(TOKEN, 16)}),
    Contract(addr("a4"), V4_PROXY_SRC, {IMPL_SLOT: int(addr("1a4"), 16), 2: int(PAIR, 16)}),
    Contract(addr("1a4"), V4_IMPL_SRC, {}),
    Contract(addr("a5"), V5_SRC, {}),
    Contract(addr("05e1"), V5_HELPER_SRC, {}),
    Contract(addr("b1"), S1_SRC, {}),
    Contract(addr("b2"), S2_SRC, {0: int(TOKEN, 16)}),
    Contract(addr("c1"), _chain_src(addr("c2")), {}),
    Contract(addr("c2"), _chain_src(addr("c3")), {}),
    Contract(addr("c3"), _chain_src(None), {}),
]

VULN = {"baseline": "vulnerable", "expanded": "vulnerable"}
SAFE = {"baseline": "not_detected", "expanded": "not_detected"}

CASES = [
    Case("v1-direct", "2023-01-10", addr("a1"), "harvest()", VULN),
    Case("v2-reserves", "2023-02-14", addr("a2"), "redeem()", {"baseline": "not_detected", "expanded": "vulnerable"}),
    Case("v3-oracle", "2023-03-03", addr("a3"), "claim()", VULN),
    Case("v4-proxy", "2023-04-21", addr("a4"), "rebalance()", VULN),
    Case("v5-router", "2023-05-05", addr("a5"), "route()", VULN),
    Case("s1-constant", "2023-06-30", addr("b1"), "payout()", SAFE),
    Case("s2-record", "2023-07-18", addr("b2"), "sync()", SAFE),
]

DATASET_COLUMNS = [
    "date", "name", "loss_usd", "logic_address", "storage_address", "entry_selector", "block", "expected_verdict",
]


def dataset_csv(profile: str = "expanded") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_COLUMNS)
    for c in CASES:
        w.writerow([c.date, c.name, "", c.address, c.address, selector_of(c.entry).hex, BLOCK, c.expected[profile]])
    return buf.getvalue()


def write_corpus(directory: str | Path) -> Path:
    """Write per-address code and storage files plus the two datasets."""
    root = Path(directory)
    for c in CONTRACTS:
        d = root / c.address
        d.mkdir(parents=True, exist_ok=True)
        (d / "code.hex").write_text(encode_hex(assemble(c.source)) + "\n")
        storage = {f"{k:#x}": f"{v:#066x}" for k, v in sorted(c.storage.items())}
        (d / "storage.json").write_text(json.dumps(storage, indent=2, sort_keys=True) + "\n")
    for profile in ("baseline", "expanded"):
        (root / f"dataset-{profile}.csv").write_text(dataset_csv(profile))
    return root


if __name__ == "__main__":  # pragma: no cover
    import sys

    write_corpus(sys.argv[1] if len(sys.argv) > 1 else "fixtures")
