"""Control flow recovery for one contract: basic blocks with resolved jumps, plus dispatcher entry points."""

from __future__ import annotations

import enum
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .bytecode import ZERO_SELECTOR, Instruction, Selector
from .bytecode.fold import PURE_OPS, fold
from .bytecode.opcodes import info

STACK_LIMIT = 1024
DEFAULT_VISIT_BOUND = 64


class Terminator(str, enum.Enum):
    JUMP = "jump"
    JUMPI = "jumpi"
    FALLTHROUGH = "fallthrough"
    RETURN = "return"
    REVERT = "revert"
    STOP = "stop"
    SELFDESTRUCT = "selfdestruct"
    INVALID = "invalid"


_TERMINATORS = {
    "JUMP": Terminator.JUMP,
    "JUMPI": Terminator.JUMPI,
    "RETURN": Terminator.RETURN,
    "REVERT": Terminator.REVERT,
    "STOP": Terminator.STOP,
    "SELFDESTRUCT": Terminator.SELFDESTRUCT,
    "INVALID": Terminator.INVALID,
}


class EdgeKind(str, enum.Enum):
    TAKEN = "taken"
    FALLTHROUGH = "fallthrough"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True, slots=True, order=True)
class Edge:
    src: int
    dst: int | None
    kind: EdgeKind
    note: str = ""

    def sort_key(self) -> tuple:
        return (self.src, -1 if self.dst is None else self.dst, self.kind.value, self.note)


@dataclass(frozen=True, slots=True)
class BasicBlock:
    id: int
    start_offset: int
    end_offset: int  # exclusive
    instructions: tuple[Instruction, ...]
    terminator: Terminator

    @property
    def last(self) -> Instruction:
        return self.instructions[-1]

    @property
    def starts_with_jumpdest(self) -> bool:
        return self.instructions[0].name == "JUMPDEST"


@dataclass(frozen=True)
class Cfg:
    blocks: dict[int, BasicBlock]
    edges: frozenset[Edge]
    entry: int = 0
    # times a block hit the re-analysis bound during jump resolution
    bound_hits: int = 0
    _succ: dict[int, tuple[int, ...]] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        succ: dict[int, set[int]] = {b: set() for b in self.blocks}
        for e in self.edges:
            if e.dst is not None:
                succ[e.src].add(e.dst)
        object.__setattr__(self, "_succ", {b: tuple(sorted(s)) for b, s in succ.items()})

    def successors(self, block_id: int) -> tuple[int, ...]:
        return self._succ.get(block_id, ())

    def predecessors(self, block_id: int) -> tuple[int, ...]:
        return tuple(sorted({e.src for e in self.edges if e.dst == block_id}))

    def unresolved(self) -> list[Edge]:
        return sorted((e for e in self.edges if e.kind is EdgeKind.UNRESOLVED), key=Edge.sort_key)

    def reachable(self, start: int, avoid: Iterable[int] = ()) -> frozenset[int]:
        if start not in self.blocks:
            return frozenset()
        blocked = set(avoid) - {start}
        seen = {start}
        todo = [start]
        while todo:
            for s in self.successors(todo.pop()):
                if s not in seen and s not in blocked:
                    seen.add(s)
                    todo.append(s)
        return frozenset(seen)

    def block_at(self, offset: int) -> BasicBlock | None:
        return self.blocks.get(offset)


def partition(instructions: Sequence[Instruction]) -> dict[int, BasicBlock]:
    """Split at JUMPDESTs and after terminators; block id is its start offset."""
    blocks: dict[int, BasicBlock] = {}
    current: list[Instruction] = []

    def close(term: Terminator) -> None:
        first, last = current[0], current[-1]
        blocks[first.offset] = BasicBlock(first.offset, first.offset, last.next_offset, tuple(current), term)
        current.clear()

    for ins in instructions:
        if ins.name == "JUMPDEST" and current:
            close(Terminator.FALLTHROUGH)
        current.append(ins)
        term = _TERMINATORS.get(ins.name)
        if term is not None:
            close(term)
    if current:
        close(Terminator.FALLTHROUGH)
    return blocks


def _jump_edge(blocks: dict[int, BasicBlock], src: int, target: int) -> Edge:
    dst = blocks.get(target)
    if dst is None or not dst.starts_with_jumpdest:
        return Edge(src, None, EdgeKind.UNRESOLVED, f"invalid_target:{target:#x}")
    return Edge(src, target, EdgeKind.TAKEN)


def _fallthrough_edges(blocks: dict[int, BasicBlock]) -> set[Edge]:
    edges = set()
    for b in blocks.values():
        if b.terminator in (Terminator.FALLTHROUGH, Terminator.JUMPI) and b.end_offset in blocks:
            edges.add(Edge(b.id, b.end_offset, EdgeKind.FALLTHROUGH))
    return edges


def build_cfg(instructions: Sequence[Instruction]) -> Cfg:
    """Partition into blocks; resolve only jumps whose target is pushed right before them."""
    blocks = partition(instructions)
    edges = _fallthrough_edges(blocks)
    for b in blocks.values():
        if b.terminator not in (Terminator.JUMP, Terminator.JUMPI):
            continue
        prev = b.instructions[-2] if len(b.instructions) > 1 else None
        if prev is not None and prev.is_push:
            edges.add(_jump_edge(blocks, b.id, prev.push_value))
        else:
            edges.add(Edge(b.id, None, EdgeKind.UNRESOLVED, "unknown"))
    return Cfg(blocks, frozenset(edges))


# -- constant-stack abstract interpretation ---------------------------------
# A state lists the known top of the stack (last element = top); anything
# below the listed part is unknown. None is the unknown constant.

State = tuple


def join_states(a: State, b: State) -> State:
    n = min(len(a), len(b))
    merged = [x if x == y else None for x, y in zip(a[len(a) - n :], b[len(b) - n :])]
    while merged and merged[0] is None:
        merged.pop(0)
    return tuple(merged)


def _pop(stack: list, n: int) -> list:
    """Pop n values (top first); missing values are unknown."""
    out = []
    for _ in range(n):
        out.append(stack.pop() if stack else None)
    return out


def _step_const(stack: list, ins: Instruction) -> None:
    name = ins.name
    if ins.is_push:
        stack.append(ins.push_value)
    elif name == "PUSH0":
        stack.append(0)
    elif name.startswith("DUP"):
        n = int(name[3:])
        stack.append(stack[-n] if len(stack) >= n else None)
    elif name.startswith("SWAP"):
        n = int(name[4:])
        while len(stack) < n + 1:
            stack.insert(0, None)
        stack[-1], stack[-1 - n] = stack[-1 - n], stack[-1]
    elif name == "PC":
        stack.append(ins.offset)
    else:
        meta = info(ins.opcode)
        args = _pop(stack, meta.pops)
        if meta.pushes:
            stack.append(fold(name, args) if name in PURE_OPS else None)
    if len(stack) > STACK_LIMIT:
        del stack[: len(stack) - STACK_LIMIT]


def _block_exit(block: BasicBlock, entry: State) -> tuple[State, int | None]:
    """Run a block; return the exit state and the jump target (for JUMP/JUMPI)."""
    stack = list(entry)
    body = block.instructions
    if block.terminator in (Terminator.JUMP, Terminator.JUMPI):
        body = body[:-1]
    for ins in body:
        _step_const(stack, ins)
    target = None
    if block.terminator is Terminator.JUMP:
        target = _pop(stack, 1)[0]
    elif block.terminator is Terminator.JUMPI:
        target = _pop(stack, 2)[0]
    return tuple(stack), target


def resolve_jumps(cfg: Cfg, visit_bound: int = DEFAULT_VISIT_BOUND) -> Cfg:
    """Propagate constant stacks to a fixpoint and resolve jump targets.

    Resolved edges of the input are always kept. A jump stays unresolved
    when its target is unknown at the fixpoint, when its block is never
    reached from the entry, or when its block exceeded ``visit_bound``.
    """
    blocks = cfg.blocks
    if cfg.entry not in blocks:
        return cfg
    resolved = {e for e in cfg.edges if e.kind is not EdgeKind.UNRESOLVED}
    resolved |= _fallthrough_edges(blocks)
    entry_state: dict[int, State] = {cfg.entry: ()}
    visits: dict[int, int] = {}
    targets: dict[int, State] = {}
    capped: set[int] = set()
    bound_hits = 0
    queue = deque([cfg.entry])
    queued = {cfg.entry}

    def succ_of(bid: int) -> set[int]:
        return {e.dst for e in resolved if e.src == bid and e.dst is not None}

    while queue:
        bid = queue.popleft()
        queued.discard(bid)
        visits[bid] = visits.get(bid, 0) + 1
        if visits[bid] > visit_bound:
            if bid not in capped:
                capped.add(bid)
                bound_hits += 1
            continue
        block = blocks[bid]
        out, target = _block_exit(block, entry_state[bid])
        if block.terminator in (Terminator.JUMP, Terminator.JUMPI):
            # record the target as a one-slot state so the join logic applies
            targets[bid] = join_states(targets[bid], (target,)) if bid in targets else (target,)
            if target is not None:
                edge = _jump_edge(blocks, bid, target)
                if edge.kind is EdgeKind.TAKEN:
                    resolved.add(edge)
        for s in sorted(succ_of(bid)):
            new = out if s not in entry_state else join_states(entry_state[s], out)
            if s not in entry_state or new != entry_state[s]:
                entry_state[s] = new
                if s not in queued:
                    queue.append(s)
                    queued.add(s)

    edges = set(resolved)
    for b in blocks.values():
        if b.terminator not in (Terminator.JUMP, Terminator.JUMPI):
            continue
        if b.id not in visits:
            edges.update(e for e in cfg.edges if e.src == b.id and e.kind is EdgeKind.UNRESOLVED)
        elif b.id in capped:
            edges.add(Edge(b.id, None, EdgeKind.UNRESOLVED, "visit_bound"))
        else:
            known = targets.get(b.id, ())
            final = known[0] if known else None
            if final is None:
                edges.add(Edge(b.id, None, EdgeKind.UNRESOLVED, "unknown"))
            else:
                edges.add(_jump_edge(blocks, b.id, final))
    return Cfg(blocks, frozenset(edges), cfg.entry, bound_hits)


def recover_cfg(instructions: Sequence[Instruction], visit_bound: int = DEFAULT_VISIT_BOUND) -> Cfg:
    return resolve_jumps(build_cfg(instructions), visit_bound)


# -- dispatcher recovery ------------------------------------------------------

_CD0 = ("calldata0",)
_SEL = ("selector",)
_SHIFT_224 = 224
_DIV_224 = 1 << 224


@dataclass(frozen=True, slots=True)
class PublicFunction:
    selector: Selector
    entry_block: int
    reachable_blocks: frozenset[int]


def _match(v) -> bool:
    return isinstance(v, tuple) and len(v) == 2 and v[0] == "match"


def _step_sym(stack: list, ins: Instruction) -> None:
    name = ins.name
    if name == "CALLDATALOAD":
        off = _pop(stack, 1)[0]
        stack.append(_CD0 if off == 0 else None)
        return
    if name in ("SHR", "DIV", "AND", "EQ"):
        a, b = _pop(stack, 2)
        if name == "SHR" and a == _SHIFT_224 and b == _CD0:
            stack.append(_SEL)
        elif name == "DIV" and a == _CD0 and b == _DIV_224:
            stack.append(_SEL)
        elif name == "AND" and {a, b} == {0xFFFFFFFF, _SEL}:
            stack.append(_SEL)
        elif name == "EQ" and _SEL in (a, b):
            c = b if a == _SEL else a
            stack.append(("match", c) if isinstance(c, int) and c < 1 << 32 else None)
        elif isinstance(a, int) and isinstance(b, int):
            stack.append(fold(name, [a, b]))
        else:
            stack.append(None)
        return
    if name in PURE_OPS:
        meta = info(ins.opcode)
        args = _pop(stack, meta.pops)
        ints = [a if isinstance(a, int) else None for a in args]
        stack.append(fold(name, ints))
        return
    _step_const(stack, ins)


def _dispatcher_scan(cfg: Cfg, visit_bound: int) -> tuple[dict[int, int], frozenset[int]]:
    """Walk the entry region; return {selector: entry block} and the region's blocks."""
    matches: dict[int, int] = {}
    state: dict[int, State] = {cfg.entry: ()}
    visits: dict[int, int] = {}
    queue = deque([cfg.entry])
    while queue:
        bid = queue.popleft()
        visits[bid] = visits.get(bid, 0) + 1
        if visits[bid] > visit_bound:
            continue
        block = cfg.blocks[bid]
        stack = list(state[bid])
        body = block.instructions[:-1] if block.terminator in (Terminator.JUMP, Terminator.JUMPI) else block.instructions
        for ins in body:
            _step_sym(stack, ins)
        skip: set[int] = set()
        if block.terminator is Terminator.JUMPI:
            target, cond = _pop(stack, 2)
            if _match(cond) and isinstance(target, int) and target in cfg.blocks:
                matches.setdefault(cond[1], target)
                skip.add(target)
        elif block.terminator is Terminator.JUMP:
            _pop(stack, 1)
        out = tuple(stack)
        for s in cfg.successors(bid):
            if s in skip or s in matches.values():
                continue
            new = out if s not in state else join_states(state[s], out)
            if s not in state or new != state[s]:
                state[s] = new
                queue.append(s)
    region = frozenset(b for b in state if b not in matches.values())
    return matches, region


def extract_public_functions(cfg: Cfg, visit_bound: int = DEFAULT_VISIT_BOUND) -> list[PublicFunction]:
    """One PublicFunction per selector the dispatcher compares against.

    Without a recognizable dispatcher a single function with selector
    0x00000000 covers every block.
    """
    if not cfg.blocks:
        return []
    matches, region = _dispatcher_scan(cfg, visit_bound)
    if not matches:
        return [PublicFunction(ZERO_SELECTOR, cfg.entry, frozenset(cfg.blocks))]
    funcs = [
        PublicFunction(Selector.from_int(sel), entry, cfg.reachable(entry, avoid=region))
        for sel, entry in matches.items()
    ]
    return sorted(funcs, key=lambda f: f.selector.value)


def dump_cfg(cfg: Cfg) -> str:
    """One line per block: id, offset range, terminator, successors."""
    lines = []
    for bid in sorted(cfg.blocks):
        b = cfg.blocks[bid]
        succ = [f"{e.dst:#x}" if e.dst is not None else f"?({e.note})" for e in sorted(
            (e for e in cfg.edges if e.src == bid), key=Edge.sort_key)]
        lines.append(f"{bid:#x}\t[{b.start_offset:#x},{b.end_offset:#x})\t{b.terminator.value}\t{' '.join(succ)}")
    return "\n".join(lines) + ("\n" if lines else "")


__all__ = [
    "BasicBlock",
    "Cfg",
    "Edge",
    "EdgeKind",
    "PublicFunction",
    "Terminator",
    "build_cfg",
    "dump_cfg",
    "extract_public_functions",
    "join_states",
    "partition",
    "recover_cfg",
    "resolve_jumps",
]
