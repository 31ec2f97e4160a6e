"""Stack-to-register lifting of public functions and emission of relational facts.

Relations emitted per function (terms are node-qualified strings):

    Def(v, s)  Use(v, s)  Flow(u, v)
    StoreSlot(k, v)  LoadSlot(k, v)
    MemWrite(r, v)  MemRead(r, v)  MayAlias(r, q)
    ExtCall(s, kind, selector, target)  CallArgRegion(s, r)  CallRetValue(s, v)
    CallArgWord(s, i, r)      r covers argument word i of call s ("*" = unknown layout)
    CalldataArg(n, i, v)      v was loaded from argument word i of node n's calldata
    CalldataAny(n, v)         v was loaded from calldata at a non-constant position
    ReturnRegion(n, r)

Memory is modelled by regions: a (offset, length) pair. Regions with equal
constant bounds share one id; regions with a non-constant bound may alias
anything. Storage slots are keyed by the storage address, so a slot written
under DELEGATECALL lands in the caller's storage.
"""

from __future__ import annotations

import enum
from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field

from .bytecode import Selector
from .bytecode.fold import PURE_OPS, fold
from .bytecode.opcodes import info
from .cfg import DEFAULT_VISIT_BOUND, Cfg, PublicFunction
from .engine import FactBase

ENTRY_STACK_DEPTH = 16
ADDRESS_MASK = (1 << 160) - 1

FACT_SCHEMA = {
    "Def": 2,
    "Use": 2,
    "Flow": 2,
    "StoreSlot": 2,
    "LoadSlot": 2,
    "MemWrite": 2,
    "MemRead": 2,
    "MayAlias": 2,
    "ExtCall": 4,
    "CallArgRegion": 2,
    "CallRetValue": 2,
    "CallArgWord": 3,
    "CalldataArg": 3,
    "CalldataAny": 2,
    "ReturnRegion": 2,
}


class Origin(str, enum.Enum):
    CONST = "const"
    CALLDATA = "calldata"
    ENV = "env"
    SLOAD = "sload"
    MLOAD = "mload"
    OP = "op"
    RETURNDATA = "returndata"
    PHI = "phi"
    STACK_IN = "stack_in"
    CALL_FLAG = "call_flag"


class CallKind(str, enum.Enum):
    CALL = "call"
    STATICCALL = "staticcall"
    DELEGATECALL = "delegatecall"
    CALLCODE = "callcode"


class StmtKind(str, enum.Enum):
    ASSIGN = "assign_op"
    MSTORE = "mstore"
    MLOAD = "mload"
    SSTORE = "sstore"
    SLOAD = "sload"
    CALL = "external_call"
    RETURN = "return_stmt"
    REVERT = "revert_stmt"
    LOG = "log_stmt"


@dataclass(frozen=True, slots=True)
class ValueId:
    id: int
    origin: Origin
    # const word, opcode name, call offset, phi block, ...; never another value id
    detail: object = None


@dataclass(frozen=True, slots=True)
class Region:
    offset: int  # value id
    length: int  # value id


@dataclass(frozen=True, slots=True)
class CallInfo:
    call_kind: CallKind
    target: int
    value: int | None
    args: Region
    ret: Region
    result_flag: int
    ret_value: int


@dataclass(frozen=True, slots=True)
class IrStatement:
    id: int
    offset: int
    kind: StmtKind
    opcode: str
    operands: tuple[int, ...] = ()
    result: int | None = None
    region: Region | None = None
    # value written by mstore/sstore
    value: int | None = None
    call: CallInfo | None = None


class Resolution(str, enum.Enum):
    CONST_PUSH = "const_push"
    STORAGE_SLOT = "storage_slot"
    PARAMETER = "parameter"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True, slots=True)
class CallSite:
    statement: int
    call_kind: CallKind
    resolution: Resolution
    # slot for storage_slot, argument index for parameter
    resolution_detail: int | None = None
    resolved_target: str | None = None
    resolved_selector: Selector | None = None
    # how the selector was found: "const", "forwarded", "param:<i>:<left|low>", or None
    selector_source: str | None = None
    note: str = ""


def format_address(value: int) -> str:
    return f"0x{value & ADDRESS_MASK:040x}"


class _Underflow(Exception):
    pass


# -- lifting -------------------------------------------------------------------


@dataclass
class _BlockResult:
    entry: tuple[int, ...]
    stmts: list[dict]
    exit: tuple[int, ...] | None


class _Lifter:
    def __init__(self, func: PublicFunction, cfg: Cfg, visit_bound: int) -> None:
        self.func = func
        self.cfg = cfg
        self.visit_bound = visit_bound
        self.values: dict[int, ValueId] = {}
        self._keys: dict[tuple, int] = {}
        self.diagnostics: list[str] = []
        self.phi_ops: dict[int, tuple[int, ...]] = {}

    def vid(self, key: tuple, origin: Origin, detail: object = None) -> int:
        i = self._keys.get(key)
        if i is None:
            i = self._keys[key] = len(self.values)
            self.values[i] = ValueId(i, origin, detail)
        return i

    # one block, given its entry stack (last element = top)
    def lift_block(self, bid: int, entry: tuple[int, ...]) -> _BlockResult:
        block = self.cfg.blocks[bid]
        stack = list(entry)
        stmts: list[dict] = []
        last_call: int | None = None

        def pop(n: int) -> list[int]:
            if len(stack) < n:
                raise _Underflow
            return [stack.pop() for _ in range(n)]

        def const_vid(off: int, tag: str, word: int) -> int:
            return self.vid((off, tag), Origin.CONST, word)

        try:
            for ins in block.instructions:
                off, name = ins.offset, ins.name
                if ins.is_push or name == "PUSH0" or name == "PC":
                    word = ins.push_value if ins.is_push else (0 if name == "PUSH0" else off)
                    v = const_vid(off, "push", word)
                    stmts.append(dict(offset=off, kind=StmtKind.ASSIGN, opcode=name, result=v))
                    stack.append(v)
                elif name.startswith("DUP"):
                    n = int(name[3:])
                    if len(stack) < n:
                        raise _Underflow
                    stack.append(stack[-n])
                elif name.startswith("SWAP"):
                    n = int(name[4:])
                    if len(stack) < n + 1:
                        raise _Underflow
                    stack[-1], stack[-1 - n] = stack[-1 - n], stack[-1]
                elif name == "POP":
                    pop(1)
                elif name in ("JUMPDEST", "STOP", "INVALID"):
                    pass
                elif name == "JUMP":
                    pop(1)
                elif name == "JUMPI":
                    pop(2)
                elif name in PURE_OPS:
                    args = pop(info(ins.opcode).pops)
                    v = self.vid((off, "r"), Origin.OP, name)
                    stmts.append(dict(offset=off, kind=StmtKind.ASSIGN, opcode=name, operands=tuple(args), result=v))
                    stack.append(v)
                elif name == "CALLDATALOAD":
                    (o,) = pop(1)
                    v = self.vid((off, "r"), Origin.CALLDATA, "load")
                    stmts.append(dict(offset=off, kind=StmtKind.ASSIGN, opcode=name, operands=(o,), result=v))
                    stack.append(v)
                elif name == "MLOAD":
                    (o,) = pop(1)
                    v = self.vid((off, "r"), Origin.MLOAD)
                    region = Region(o, const_vid(off, "len", 32))
                    stmts.append(dict(offset=off, kind=StmtKind.MLOAD, opcode=name, operands=(o,), result=v, region=region))
                    stack.append(v)
                elif name in ("MSTORE", "MSTORE8"):
                    o, val = pop(2)
                    region = Region(o, const_vid(off, "len", 32 if name == "MSTORE" else 1))
                    stmts.append(dict(offset=off, kind=StmtKind.MSTORE, opcode=name, operands=(o, val), region=region, value=val))
                elif name == "SLOAD":
                    (slot,) = pop(1)
                    v = self.vid((off, "r"), Origin.SLOAD)
                    stmts.append(dict(offset=off, kind=StmtKind.SLOAD, opcode=name, operands=(slot,), result=v))
                    stack.append(v)
                elif name == "SSTORE":
                    slot, val = pop(2)
                    stmts.append(dict(offset=off, kind=StmtKind.SSTORE, opcode=name, operands=(slot, val), value=val))
                elif name in ("CALLDATACOPY", "RETURNDATACOPY", "CODECOPY"):
                    dest, src, length = pop(3)
                    fresh = True
                    if name == "CALLDATACOPY":
                        v = self.vid((off, "r"), Origin.CALLDATA, "copy")
                    elif name == "RETURNDATACOPY" and last_call is not None:
                        # output of the most recent call in this block
                        v, fresh = self._keys[(last_call, "ret")], False
                    elif name == "RETURNDATACOPY":
                        v = self.vid((off, "r"), Origin.RETURNDATA, None)
                    else:
                        v = self.vid((off, "r"), Origin.ENV, name)
                    stmts.append(dict(offset=off, kind=StmtKind.MSTORE, opcode=name, operands=(dest, src, length),
                                      region=Region(dest, length), value=v, result=v if fresh else None))
                elif name == "EXTCODECOPY":
                    _addr, dest, src, length = pop(4)
                    v = self.vid((off, "r"), Origin.ENV, name)
                    stmts.append(dict(offset=off, kind=StmtKind.MSTORE, opcode=name, operands=(_addr, dest, src, length),
                                      region=Region(dest, length), value=v, result=v))
                elif name == "MCOPY":
                    dest, src, length = pop(3)
                    v = self.vid((off, "r"), Origin.MLOAD)
                    stmts.append(dict(offset=off, kind=StmtKind.MLOAD, opcode=name, operands=(src, length), result=v,
                                      region=Region(src, length)))
                    stmts.append(dict(offset=off, kind=StmtKind.MSTORE, opcode=name, operands=(dest, v, length),
                                      region=Region(dest, length), value=v))
                elif name in ("CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"):
                    if name in ("CALL", "CALLCODE"):
                        gas, target, value, a_off, a_len, r_off, r_len = pop(7)
                    else:
                        gas, target, a_off, a_len, r_off, r_len = pop(6)
                        value = None
                    flag = self.vid((off, "flag"), Origin.CALL_FLAG, off)
                    ret = self.vid((off, "ret"), Origin.RETURNDATA, off)
                    call = CallInfo(CallKind(name.lower()), target, value, Region(a_off, a_len), Region(r_off, r_len), flag, ret)
                    operands = tuple(x for x in (gas, target, value, a_off, a_len, r_off, r_len) if x is not None)
                    stmts.append(dict(offset=off, kind=StmtKind.CALL, opcode=name, operands=operands, result=flag, call=call))
                    stack.append(flag)
                    last_call = off
                elif name in ("RETURN", "REVERT"):
                    o, length = pop(2)
                    kind = StmtKind.RETURN if name == "RETURN" else StmtKind.REVERT
                    stmts.append(dict(offset=off, kind=kind, opcode=name, operands=(o, length), region=Region(o, length)))
                elif name.startswith("LOG"):
                    args = pop(info(ins.opcode).pops)
                    stmts.append(dict(offset=off, kind=StmtKind.LOG, opcode=name, operands=tuple(args),
                                      region=Region(args[0], args[1])))
                else:
                    meta = info(ins.opcode)
                    args = pop(meta.pops)
                    if meta.pushes:
                        v = self.vid((off, "r"), Origin.ENV, name)
                        stmts.append(dict(offset=off, kind=StmtKind.ASSIGN, opcode=name, operands=tuple(args), result=v))
                        stack.append(v)
        except _Underflow:
            return _BlockResult(entry, [], None)
        return _BlockResult(entry, stmts, tuple(stack))

    def run(self) -> tuple[list[IrStatement], dict[int, tuple[int, ...]]]:
        func, cfg = self.func, self.cfg
        blocks = func.reachable_blocks
        initial = tuple(self.vid(("in", d), Origin.STACK_IN, d) for d in reversed(range(ENTRY_STACK_DEPTH)))
        incoming: dict[int, dict[int, tuple[int, ...]]] = {b: {} for b in blocks}
        results: dict[int, _BlockResult] = {}
        visits: dict[int, int] = {}
        capped: set[int] = set()

        def entry_state(bid: int) -> tuple[int, ...] | None:
            states = [incoming[bid][p] for p in sorted(incoming[bid])]
            if bid == func.entry_block:
                states.append(initial)
            if not states:
                return None
            n = min(len(s) for s in states)
            out = []
            for depth in range(n, 0, -1):
                vals = sorted({s[len(s) - depth] for s in states})
                if len(vals) == 1:
                    out.append(vals[0])
                else:
                    phi = self.vid(("phi", bid, depth), Origin.PHI, bid)
                    self.phi_ops[phi] = tuple(vals)
                    out.append(phi)
            return tuple(out)

        queue = deque([func.entry_block])
        queued = {func.entry_block}
        while queue:
            bid = queue.popleft()
            queued.discard(bid)
            visits[bid] = visits.get(bid, 0) + 1
            if visits[bid] > self.visit_bound:
                if bid not in capped:
                    capped.add(bid)
                    self.diagnostics.append(f"visit bound reached in block {bid:#x}")
                continue
            entry = entry_state(bid)
            res = self.lift_block(bid, entry)
            results[bid] = res
            if res.exit is None:
                continue
            for s in cfg.successors(bid):
                if s not in blocks:
                    continue
                incoming[s][bid] = res.exit
                if s not in results or results[s].entry != entry_state(s):
                    if s not in queued:
                        queue.append(s)
                        queued.add(s)

        for bid in sorted(results):
            if results[bid].exit is None:
                self.diagnostics.append(f"stack underflow in block {bid:#x}; statements dropped")

        # statements in block order; phis first in their block
        protos: list[dict] = []
        phis_by_block: dict[int, list[int]] = {}
        live_values = {v for r in results.values() for v in r.entry}
        for phi, ops in self.phi_ops.items():
            if phi in live_values:
                phis_by_block.setdefault(self.values[phi].detail, []).append(phi)
        for bid in sorted(results):
            for phi in sorted(phis_by_block.get(bid, ())):
                protos.append(dict(offset=bid, kind=StmtKind.ASSIGN, opcode="PHI", operands=self.phi_ops[phi], result=phi))
            protos.extend(results[bid].stmts)
        stmts = [IrStatement(id=i, **p) for i, p in enumerate(protos)]
        return stmts, {b: r.entry for b, r in results.items()}


@dataclass
class LiftedFunction:
    function: PublicFunction
    statements: tuple[IrStatement, ...]
    values: dict[int, ValueId]
    diagnostics: tuple[str, ...] = ()
    call_sites: tuple[CallSite, ...] = ()
    _def: dict[int, IrStatement] = field(default_factory=dict, repr=False)
    _const: dict[int, int | None] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for s in self.statements:
            if s.result is not None:
                self._def.setdefault(s.result, s)
            if s.call is not None:
                self._def.setdefault(s.call.ret_value, s)

    def defining(self, vid: int) -> IrStatement | None:
        return self._def.get(vid)

    def const(self, vid: int) -> int | None:
        if vid in self._const:
            return self._const[vid]
        self._const[vid] = None  # cycle guard; phis are never constant
        v = self.values[vid]
        result = None
        if v.origin is Origin.CONST:
            result = v.detail
        elif v.origin is Origin.OP:
            s = self._def.get(vid)
            if s is not None:
                result = fold(s.opcode, [self.const(a) for a in s.operands])
        self._const[vid] = result
        return result

    def calls(self) -> list[IrStatement]:
        return [s for s in self.statements if s.kind is StmtKind.CALL]

    def statement(self, sid: int) -> IrStatement:
        return self.statements[sid]

    def region_bounds(self, region: Region) -> tuple[int | None, int | None]:
        return self.const(region.offset), self.const(region.length)

    # -- value tracing -------------------------------------------------------

    def trace(self, vid: int, _seen: frozenset[int] = frozenset()) -> tuple[str, int | None]:
        """Where a word comes from: ("const", w), ("storage", slot), ("param", i) or ("unknown", None).

        Address masks (AND with 2**160-1 or wider) are looked through.
        """
        c = self.const(vid)
        if c is not None:
            return ("const", c)
        if vid in _seen:
            return ("unknown", None)
        seen = _seen | {vid}
        v = self.values[vid]
        d = self._def.get(vid)
        if d is None:
            return ("unknown", None)
        if v.origin is Origin.SLOAD:
            slot = self.const(d.operands[0])
            return ("storage", slot) if slot is not None else ("unknown", None)
        if v.origin is Origin.CALLDATA and d.opcode == "CALLDATALOAD":
            idx = calldata_arg_index(self.const(d.operands[0]))
            return ("param", idx) if idx is not None else ("unknown", None)
        if v.origin is Origin.MLOAD and d.opcode == "MLOAD":
            src = self.memory_word(self.const(d.region.offset), before=d.id)
            if src is not None:
                return self.trace(src, seen)
        if v.origin is Origin.OP and v.detail == "AND":
            a, b = d.operands
            for mask, other in ((self.const(a), b), (self.const(b), a)):
                if mask is not None and mask & ADDRESS_MASK == ADDRESS_MASK:
                    return self.trace(other, seen)
        if v.origin is Origin.PHI:
            results = {self.trace(o, seen) for o in d.operands}
            if len(results) == 1:
                return results.pop()
        return ("unknown", None)

    def memory_word(self, offset: int | None, before: int | None = None) -> int | None:
        """Value id last stored by MSTORE at exactly ``offset`` (constant), if any."""
        if offset is None:
            return None
        found = None
        for s in self.statements:
            if before is not None and s.id >= before:
                break
            if s.kind is StmtKind.MSTORE and s.opcode == "MSTORE" and self.const(s.region.offset) == offset:
                found = s.value
        return found

    def forwarded_calldata(self, offset: int | None, before: int) -> bool:
        """True when memory at ``offset`` holds this function's own calldata from byte 0."""
        if offset is None:
            return False
        for s in self.statements:
            if s.id >= before:
                break
            if s.opcode == "CALLDATACOPY" and self.const(s.region.offset) == offset and self.const(s.operands[1]) == 0:
                return True
        return False

    def arg_word(self, call_stmt: IrStatement, index: int) -> tuple[str, int | None]:
        """Trace argument word ``index`` of an external call in this function."""
        a_off = self.const(call_stmt.call.args.offset)
        if a_off is None:
            return ("unknown", None)
        if self.forwarded_calldata(a_off, call_stmt.id):
            return ("param", index)
        v = self.memory_word(a_off + 4 + 32 * index, before=call_stmt.id)
        return self.trace(v) if v is not None else ("unknown", None)


def calldata_arg_index(offset: int | None) -> int | None:
    if offset is None or offset < 4 or (offset - 4) % 32:
        return None
    return (offset - 4) // 32


def _static_call_site(lf: LiftedFunction, s: IrStatement) -> CallSite:
    kind, detail = lf.trace(s.call.target)
    resolution = {
        "const": Resolution.CONST_PUSH,
        "storage": Resolution.STORAGE_SLOT,
        "param": Resolution.PARAMETER,
    }.get(kind, Resolution.UNRESOLVED)
    target = format_address(detail) if kind == "const" else None
    sel, source = _selector(lf, s)
    return CallSite(
        s.id,
        s.call.call_kind,
        resolution,
        detail if kind in ("storage", "param") else None,
        target,
        sel,
        source,
    )


def _selector(lf: LiftedFunction, s: IrStatement) -> tuple[Selector | None, str | None]:
    a_off = lf.const(s.call.args.offset)
    if a_off is None:
        return None, None
    if lf.forwarded_calldata(a_off, s.id):
        return None, "forwarded"
    # last full-word MSTORE covering the first four argument bytes
    chosen = None
    for st in lf.statements:
        if st.id >= s.id:
            break
        if st.kind is StmtKind.MSTORE and st.opcode == "MSTORE":
            o = lf.const(st.region.offset)
            if o is not None and o <= a_off and a_off + 4 <= o + 32:
                chosen = (st, a_off - o)
    if chosen is None:
        return None, None
    st, shift = chosen
    word = lf.const(st.value)
    if word is not None:
        sel = (word >> (8 * (28 - shift))) & 0xFFFFFFFF
        return Selector.from_int(sel), "const"
    if shift == 0:
        kind, idx = lf.trace(st.value)
        if kind == "param":
            return None, f"param:{idx}:left"
        v = lf.values[st.value]
        d = lf.defining(st.value)
        if v.origin is Origin.OP and v.detail == "SHL" and d is not None and lf.const(d.operands[0]) == 224:
            kind, idx = lf.trace(d.operands[1])
            if kind == "param":
                return None, f"param:{idx}:low"
    return None, None


def selector_from_word(word: int, source: str) -> Selector:
    if source.endswith(":left"):
        return Selector.from_int((word >> 224) & 0xFFFFFFFF)
    return Selector.from_int(word & 0xFFFFFFFF)


def lift_function(func: PublicFunction, cfg: Cfg, visit_bound: int = DEFAULT_VISIT_BOUND) -> LiftedFunction:
    """Lift the blocks of one public function to three-address statements."""
    lifter = _Lifter(func, cfg, visit_bound)
    stmts, _ = lifter.run() if func.entry_block in cfg.blocks else ([], {})
    lf = LiftedFunction(func, tuple(stmts), lifter.values, tuple(lifter.diagnostics))
    lf.call_sites = tuple(_static_call_site(lf, s) for s in lf.calls())
    return lf


# -- facts ---------------------------------------------------------------------


class _Regions:
    def __init__(self, lf: LiftedFunction, node: str) -> None:
        self.lf = lf
        self.node = node
        self.ids: dict[tuple, str] = {}
        self.bounds: dict[str, tuple[int | None, int | None]] = {}

    def get(self, region: Region, owner: int, role: str) -> str:
        o, n = self.lf.region_bounds(region)
        return self.const(o, n) if o is not None and n is not None else self._dynamic(owner, role, o, n)

    def const(self, o: int, n: int) -> str:
        key = ("c", o, n)
        if key not in self.ids:
            rid = self.ids[key] = f"{self.node}:r{len(self.ids)}"
            self.bounds[rid] = (o, n)
        return self.ids[key]

    def _dynamic(self, owner: int, role: str, o, n) -> str:
        key = ("d", owner, role)
        if key not in self.ids:
            rid = self.ids[key] = f"{self.node}:r{len(self.ids)}"
            self.bounds[rid] = (o, n)
        return self.ids[key]

    def aliases(self) -> Iterable[tuple[str, str]]:
        rids = sorted(self.bounds)
        for a in rids:
            for b in rids:
                if a == b or _may_alias(self.bounds[a], self.bounds[b]):
                    yield a, b


def _may_alias(a: tuple[int | None, int | None], b: tuple[int | None, int | None]) -> bool:
    (ao, an), (bo, bn) = a, b
    if ao is None or bo is None:
        return True
    # unknown length extends to the end of memory
    a_end = ao + an if an is not None else float("inf")
    b_end = bo + bn if bn is not None else float("inf")
    return ao < b_end and bo < a_end and (an != 0 and bn != 0)


FLOW_OPS = PURE_OPS | {"PHI"}


def slot_key(storage: str, slot: int | None) -> str:
    return f"{storage}:{slot:#x}" if slot is not None else f"{storage}:*"


def emit_facts(lf: LiftedFunction, node: str = "n0", storage: str = "self", sites: Iterable[CallSite] | None = None) -> FactBase:
    """Relational facts for one lifted function (see the module docstring)."""
    fb = FactBase(FACT_SCHEMA)
    val = lambda v: f"{node}:v{v}"  # noqa: E731
    stm = lambda s: f"{node}:s{s}"  # noqa: E731
    regions = _Regions(lf, node)
    site_map = {c.statement: c for c in (sites if sites is not None else lf.call_sites)}

    for s in lf.statements:
        sid = stm(s.id)
        for o in s.operands:
            fb.add("Use", val(o), sid)
        if s.result is not None:
            fb.add("Def", val(s.result), sid)
        if s.kind is StmtKind.ASSIGN:
            if s.opcode in FLOW_OPS:
                for o in s.operands:
                    fb.add("Flow", val(o), val(s.result))
            if s.opcode == "CALLDATALOAD":
                c = lf.const(s.operands[0])
                idx = calldata_arg_index(c)
                if idx is not None:
                    fb.add("CalldataArg", node, idx, val(s.result))
                elif c is None or c >= 4:
                    fb.add("CalldataAny", node, val(s.result))
        elif s.kind is StmtKind.MSTORE:
            fb.add("MemWrite", regions.get(s.region, s.id, "w"), val(s.value))
            if s.opcode == "CALLDATACOPY":
                fb.add("CalldataAny", node, val(s.value))
        elif s.kind is StmtKind.MLOAD:
            fb.add("MemRead", regions.get(s.region, s.id, "r"), val(s.result))
        elif s.kind is StmtKind.SSTORE:
            fb.add("StoreSlot", slot_key(storage, lf.const(s.operands[0])), val(s.value))
        elif s.kind is StmtKind.SLOAD:
            fb.add("LoadSlot", slot_key(storage, lf.const(s.operands[0])), val(s.result))
        elif s.kind is StmtKind.RETURN:
            fb.add("ReturnRegion", node, regions.get(s.region, s.id, "ret"))
        elif s.kind is StmtKind.CALL:
            call = s.call
            site = site_map.get(s.id)
            sel = site.resolved_selector.hex if site and site.resolved_selector else "none"
            target = site.resolved_target if site and site.resolved_target else "none"
            fb.add("ExtCall", sid, call.call_kind.value, sel, target)
            args = regions.get(call.args, s.id, "args")
            fb.add("CallArgRegion", sid, args)
            fb.add("CallRetValue", sid, val(call.ret_value))
            fb.add("Def", val(call.ret_value), sid)
            ret = regions.get(call.ret, s.id, "ret")
            fb.add("MemWrite", ret, val(call.ret_value))
            a_off, a_len = lf.region_bounds(call.args)
            if a_off is not None and a_len is not None:
                for i in range(max(0, (a_len - 4) // 32)):
                    fb.add("CallArgWord", sid, i, regions.const(a_off + 4 + 32 * i, 32))
            else:
                fb.add("CallArgWord", sid, "*", args)
    for a, b in regions.aliases():
        fb.add("MayAlias", a, b)
    return fb


__all__ = [
    "CallInfo",
    "CallKind",
    "CallSite",
    "FACT_SCHEMA",
    "IrStatement",
    "LiftedFunction",
    "Origin",
    "Region",
    "Resolution",
    "StmtKind",
    "ValueId",
    "emit_facts",
    "format_address",
    "lift_function",
    "selector_from_word",
    "slot_key",
]
