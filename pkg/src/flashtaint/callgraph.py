"""Inter-contract sub-call graph rooted at one (contract, entry function).

Expansion alternates two phases until nothing new appears:

1. generation: drain a worklist of call sites whose target and selector are
   known from the function itself (constants, storage reads or forwarded
   calldata), lifting each new callee;
2. dataflow: for call sites whose target or selector arrives as a function
   argument, look at what every known caller passes for that argument and
   link the callees this restores.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache

from .bytecode import ZERO_SELECTOR, Selector, disassemble
from .cfg import Cfg, PublicFunction, extract_public_functions, recover_cfg
from .engine import FactBase
from .ir import (
    CallKind,
    CallSite,
    LiftedFunction,
    Resolution,
    emit_facts,
    format_address,
    lift_function,
    selector_from_word,
)
from .state import StateError, StateProvider

log = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 5
DEFAULT_MAX_NODES = 64
_PARAM_TRACE_DEPTH = 8


class AnalysisError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True, order=True)
class ContractRef:
    logic_address: str
    storage_address: str
    block: int


@dataclass(frozen=True, slots=True)
class CgNode:
    contract: ContractRef
    selector: Selector

    @property
    def key(self) -> tuple[str, str, bytes]:
        return (self.contract.logic_address, self.contract.storage_address, self.selector.value)

    @property
    def label(self) -> str:
        base = f"{self.contract.logic_address}:{self.selector.hex}"
        if self.contract.storage_address != self.contract.logic_address:
            base += f"@{self.contract.storage_address}"
        return base


@dataclass(frozen=True, slots=True)
class CgEdge:
    caller: CgNode
    call_site: CallSite
    callee: CgNode | None
    note: str = ""


@dataclass
class Truncation:
    depth_limited: bool = False
    node_limited: bool = False
    cycles_cut: int = 0


@dataclass
class SubCallGraph:
    root: CgNode
    nodes: list[CgNode] = field(default_factory=list)
    edges: list[CgEdge] = field(default_factory=list)
    lifted: dict[CgNode, LiftedFunction] = field(default_factory=dict)
    # call sites with restored target and selector
    sites: dict[CgNode, list[CallSite]] = field(default_factory=dict)
    per_node_facts: dict[CgNode, FactBase] = field(default_factory=dict)
    truncation: Truncation = field(default_factory=Truncation)
    diagnostics: list[str] = field(default_factory=list)
    rounds: int = 0
    parameter_sites: int = 0
    sealed: bool = False

    def node_id(self, node: CgNode) -> str:
        return f"n{self.nodes.index(node)}"

    def site_id(self, node: CgNode, site: CallSite) -> str:
        return f"{self.node_id(node)}:s{site.statement}"

    def edge_facts(self) -> FactBase:
        fb = FactBase({"CallEdge": 2})
        for e in self.edges:
            if e.callee is not None:
                fb.add("CallEdge", self.site_id(e.caller, e.call_site), self.node_id(e.callee))
        return fb.seal()

    def unresolved_edges(self) -> list[CgEdge]:
        return [e for e in self.edges if e.callee is None]

    def to_dot(self) -> str:
        lines = ["digraph scg {"]
        for node in self.nodes:
            lines.append(f'  "{self.node_id(node)}" [label="{node.label}"];')
        stubs = 0
        for e in self.edges:
            src = self.node_id(e.caller)
            label = f"{e.call_site.call_kind.value} {_resolution_text(e.call_site)}"
            if e.callee is None:
                dst = f"u{stubs}"
                stubs += 1
                lines.append(f'  "{dst}" [shape=box,label="unresolved {e.note}"];')
            else:
                dst = self.node_id(e.callee)
            lines.append(f'  "{src}" -> "{dst}" [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _resolution_text(site: CallSite) -> str:
    if site.resolution in (Resolution.STORAGE_SLOT, Resolution.PARAMETER):
        detail = site.resolution_detail
        shown = f"{detail:#x}" if site.resolution is Resolution.STORAGE_SLOT else str(detail)
        return f"{site.resolution.value}({shown})"
    return site.resolution.value


def delegate_context(caller: ContractRef, callee_code_addr: str, kind: CallKind | str) -> ContractRef:
    """DELEGATECALL and CALLCODE run callee code against the caller's storage."""
    kind = CallKind(kind)
    if kind in (CallKind.DELEGATECALL, CallKind.CALLCODE):
        return ContractRef(callee_code_addr, caller.storage_address, caller.block)
    return ContractRef(callee_code_addr, callee_code_addr, caller.block)


@lru_cache(maxsize=256)
def analyze_code(code: bytes) -> tuple[Cfg, tuple[PublicFunction, ...]]:
    cfg = recover_cfg(disassemble(code))
    return cfg, tuple(extract_public_functions(cfg))


def pick_function(functions: tuple[PublicFunction, ...], selector: Selector | None) -> PublicFunction | None:
    by_sel = {f.selector: f for f in functions}
    if selector is not None and selector in by_sel:
        return by_sel[selector]
    # a contract without a dispatcher handles every selector in one body
    if len(functions) == 1 and functions[0].selector == ZERO_SELECTOR:
        return functions[0]
    return None


@dataclass(frozen=True, slots=True)
class TargetResolution:
    resolution: Resolution
    address: str | None = None
    detail: int | None = None
    note: str = ""


def resolve_call_target(
    site: CallSite, lifted: LiftedFunction, contract: ContractRef, state: StateProvider
) -> TargetResolution:
    """Resolve a call target from the calling function alone.

    Precedence: constant, storage slot read against ``contract``'s storage at
    its block, then argument index (resolvable only through callers).
    """
    if site.resolution is Resolution.CONST_PUSH:
        return TargetResolution(Resolution.CONST_PUSH, site.resolved_target)
    if site.resolution is Resolution.STORAGE_SLOT:
        slot = site.resolution_detail
        try:
            word = state.get_storage(contract.storage_address, slot, contract.block)
        except StateError as exc:
            return TargetResolution(Resolution.UNRESOLVED, None, slot, f"storage read failed: {exc}")
        if word == 0:
            return TargetResolution(Resolution.UNRESOLVED, None, slot, f"storage slot {slot:#x} is empty")
        return TargetResolution(Resolution.STORAGE_SLOT, format_address(word), slot)
    if site.resolution is Resolution.PARAMETER:
        return TargetResolution(Resolution.PARAMETER, None, site.resolution_detail, "needs caller argument")
    return TargetResolution(Resolution.UNRESOLVED, None, None, "target not statically known")


class _Builder:
    def __init__(self, state: StateProvider, max_depth: int, max_nodes: int) -> None:
        self.state = state
        self.max_depth = max_depth
        self.max_nodes = max_nodes
        self.depth: dict[CgNode, int] = {}
        self.linked: set[tuple[tuple, int, tuple | None]] = set()

    def load(self, address: str, block: int) -> tuple[Cfg, tuple[PublicFunction, ...]]:
        code = self.state.get_code(address, block)
        return analyze_code(code.code)

    def build(self, root: ContractRef, entry: Selector) -> SubCallGraph:
        try:
            _, funcs = self.load(root.logic_address, root.block)
        except StateError as exc:
            raise AnalysisError(f"cannot fetch root code: {exc}") from exc
        if not funcs:
            raise AnalysisError(f"no code at {root.logic_address} (block {root.block})")
        func = pick_function(funcs, entry)
        if func is None:
            raise AnalysisError(f"{root.logic_address} has no function {entry.hex}")
        root_node = CgNode(root, entry)
        self.scg = SubCallGraph(root_node)
        self.sites = self.scg.sites
        self._add_node(root_node, func, 0)
        self.work: deque[tuple[CgNode, CallSite]] = deque((root_node, s) for s in self.sites[root_node])
        self.param_sites: list[tuple[CgNode, CallSite]] = []

        while True:
            self.scg.rounds += 1
            while self.work:
                self._process(*self.work.popleft())
            if not self._dataflow():
                break

        for node, site in self.param_sites:
            if not any(e.caller == node and e.call_site.statement == site.statement for e in self.scg.edges):
                self._stub(node, site, "parameter not restorable from callers")
        self.scg.parameter_sites = len(self.param_sites)
        self.scg.edges.sort(key=lambda e: (self.scg.nodes.index(e.caller), e.call_site.statement,
                                           -1 if e.callee is None else self.scg.nodes.index(e.callee)))
        return seal(self.scg)

    def _add_node(self, node: CgNode, func: PublicFunction, depth: int) -> None:
        cfg, _ = self.load(node.contract.logic_address, node.contract.block)
        lf = lift_function(func, cfg)
        self.scg.nodes.append(node)
        self.scg.lifted[node] = lf
        self.depth[node] = depth
        self.sites[node] = list(lf.call_sites)
        for d in lf.diagnostics:
            self.scg.diagnostics.append(f"{node.label}: {d}")

    def _current(self, node: CgNode, site: CallSite) -> CallSite:
        return next(s for s in self.sites[node] if s.statement == site.statement)

    def _stub(self, node: CgNode, site: CallSite, note: str) -> None:
        key = (node.key, site.statement, None)
        if key not in self.linked:
            self.linked.add(key)
            self.scg.edges.append(CgEdge(node, self._current(node, site), None, note))

    def _update_site(self, node: CgNode, site: CallSite) -> None:
        sites = self.sites[node]
        for i, s in enumerate(sites):
            if s.statement == site.statement:
                # first restoration wins; it is what ExtCall facts report
                if s.resolved_target is None or s.resolved_selector is None:
                    sites[i] = replace(
                        s,
                        resolved_target=s.resolved_target or site.resolved_target,
                        resolved_selector=s.resolved_selector or site.resolved_selector,
                    )
                return

    def _selector_for(self, node: CgNode, site: CallSite) -> tuple[Selector | None, bool]:
        """(selector, needs_callers)."""
        if site.resolved_selector is not None:
            return site.resolved_selector, False
        if site.selector_source == "forwarded":
            return node.selector, False
        if site.selector_source and site.selector_source.startswith("param:"):
            return None, True
        return None, False

    def _process(self, node: CgNode, site: CallSite) -> None:
        lf = self.scg.lifted[node]
        target = resolve_call_target(site, lf, node.contract, self.state)
        selector, sel_needs_callers = self._selector_for(node, site)
        if target.resolution is Resolution.PARAMETER or sel_needs_callers:
            self.param_sites.append((node, site))
            if selector is not None:
                self._update_site(node, replace(site, resolved_selector=selector))
            if target.address is not None:
                self._update_site(node, replace(site, resolved_target=target.address))
            return
        if target.address is None:
            if target.note.startswith("storage read failed"):
                self.scg.diagnostics.append(f"{node.label}: {target.note}")
            if selector is not None:
                self._update_site(node, replace(site, resolved_selector=selector))
            self._stub(node, site, target.note)
            return
        self._link(node, site, target.address, selector)

    def _link(self, node: CgNode, site: CallSite, address: str, selector: Selector | None) -> bool:
        """Create the edge for a concrete target; True if it is new."""
        self._update_site(node, replace(site, resolved_target=address, resolved_selector=selector))
        site = self._current(node, site)
        if self.depth[node] + 1 > self.max_depth:
            self.scg.truncation.depth_limited = True
            self._stub(node, site, "depth limit")
            return False
        ref = delegate_context(node.contract, address, site.call_kind)
        try:
            _, funcs = self.load(address, ref.block)
        except StateError as exc:
            self.scg.diagnostics.append(f"{node.label}: code fetch for {address} failed: {exc}")
            self._stub(node, site, "code fetch failed")
            return False
        func = pick_function(funcs, selector)
        if not funcs:
            self._stub(node, site, f"no code at {address}")
            return False
        if func is None:
            self._stub(node, site, "selector unknown" if selector is None else f"{selector.hex} not dispatched")
            return False
        callee = CgNode(ref, selector if selector is not None else ZERO_SELECTOR)
        key = (node.key, site.statement, callee.key)
        if key in self.linked:
            return False
        if callee in self.depth:
            self.linked.add(key)
            self.scg.truncation.cycles_cut += 1
            self.scg.edges.append(CgEdge(node, site, callee, "revisit"))
            return True
        if len(self.scg.nodes) >= self.max_nodes:
            self.scg.truncation.node_limited = True
            self._stub(node, site, "node limit")
            return False
        self.linked.add(key)
        self._add_node(callee, func, self.depth[node] + 1)
        self.scg.edges.append(CgEdge(node, site, callee))
        self.work.extend((callee, s) for s in self.sites[callee])
        return True

    # -- parameter restoration ---------------------------------------------

    def _arg_words(self, node: CgNode, index: int, depth: int = 0) -> set[int]:
        """Concrete words the callers of ``node`` pass as argument ``index``."""
        if depth > _PARAM_TRACE_DEPTH:
            return set()
        words: set[int] = set()
        for e in self.scg.edges:
            if e.callee != node:
                continue
            caller_lf = self.scg.lifted[e.caller]
            kind, detail = caller_lf.arg_word(caller_lf.statement(e.call_site.statement), index)
            if kind == "const":
                words.add(detail)
            elif kind == "storage":
                try:
                    words.add(self.state.get_storage(e.caller.contract.storage_address, detail, e.caller.contract.block))
                except StateError as exc:
                    self.scg.diagnostics.append(f"{e.caller.label}: {exc}")
            elif kind == "param":
                words |= self._arg_words(e.caller, detail, depth + 1)
        return words

    def _dataflow(self) -> bool:
        progress = False
        for node, site in list(self.param_sites):
            site = self._current(node, site)
            lf = self.scg.lifted[node]
            target = resolve_call_target(site, lf, node.contract, self.state)
            if target.resolution is Resolution.PARAMETER:
                addresses = sorted({format_address(w) for w in self._arg_words(node, target.detail) if w})
            elif target.address is not None:
                addresses = [target.address]
            else:
                addresses = []
            selector, needs = self._selector_for(node, site)
            if needs:
                idx = int(site.selector_source.split(":")[1])
                selectors = sorted({selector_from_word(w, site.selector_source) for w in self._arg_words(node, idx)})
            else:
                selectors = [selector]
            for address in addresses:
                for sel in selectors:
                    if self._link(node, site, address, sel):
                        progress = True
        return progress


def seal(scg: SubCallGraph) -> SubCallGraph:
    """Emit and freeze per-node facts using the restored call-site information."""
    for node in scg.nodes:
        sites = scg.sites.get(node, scg.lifted[node].call_sites)
        fb = emit_facts(scg.lifted[node], scg.node_id(node), node.contract.storage_address, sites)
        scg.per_node_facts[node] = fb.seal()
    scg.sealed = True
    return scg


def build_scg(
    root_contract: ContractRef,
    entry_selector: Selector,
    state: StateProvider,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> SubCallGraph:
    return _Builder(state, max_depth, max_nodes).build(root_contract, entry_selector)
