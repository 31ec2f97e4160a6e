"""Source-to-sink taint detection over a sealed sub-call graph."""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from .bytecode import Selector, SignatureError, param_count, selector_of
from .callgraph import AnalysisError, CgNode, SubCallGraph
from .engine import FactBase, Rule, Var, parse_rules, run_to_fixpoint, term_key, tuple_key

PROFILES = ("baseline", "expanded")
ALL_PARAMS = "all"
TAINT_RELATIONS = ("Tainted", "TaintedSlot", "TaintedRegion", "TaintedArg", "TaintedRet", "SinkHit")
CONFIG_SCHEMA = {"Source": 1, "SinkParam": 2, "CallEdge": 2, "SlotAlias": 2}


class ProfileError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TaintConfig:
    """Sources are selectors whose call return data is tainted; sinks map a
    selector to the argument word indices that must not receive taint."""

    sources: frozenset[Selector]
    sinks: dict[Selector, frozenset[int]]
    profile_name: str = "custom"

    def sink_pairs(self) -> frozenset[tuple[Selector, int]]:
        return frozenset((sel, i) for sel, params in self.sinks.items() for i in params)

    def issubset(self, other: TaintConfig) -> bool:
        return self.sources <= other.sources and self.sink_pairs() <= other.sink_pairs()


_LINE = re.compile(
    r"(?P<kind>source|sink)\s+(?P<sig>[^\s=]+)(?:\s*=\s*|\s+)?(?P<hex>0x[0-9a-fA-F]+)?"
    r"(?:\s+params=(?P<params>\S+))?"
)


def parse_profile(text: str, name: str = "custom") -> TaintConfig:
    """Parse the line format ``source <sig> [<hex>]`` / ``sink <sig> [<hex>] params=<list|all>``.

    The selector is always computed from the signature text; a hex value
    given alongside must agree with it.
    """
    sources: set[Selector] = set()
    sinks: dict[Selector, frozenset[int]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.fullmatch(line)
        if not m:
            raise ProfileError(f"line {lineno}: cannot parse {line!r}")
        sig = m["sig"]
        try:
            sel = selector_of(sig)
            count = param_count(sig)
        except SignatureError as exc:
            raise ProfileError(f"line {lineno}: {exc}") from None
        if m["hex"] is not None:
            try:
                given = Selector.parse(m["hex"])
            except ValueError:
                raise ProfileError(f"line {lineno}: {m['hex']} is not a 4-byte selector") from None
            if given != sel:
                raise ProfileError(f"line {lineno}: {sig} hashes to {sel.hex}, file says {given.hex}")
        if m["kind"] == "source":
            if m["params"] is not None:
                raise ProfileError(f"line {lineno}: params= only applies to sinks")
            sources.add(sel)
            continue
        param_text = m["params"]
        if param_text is None:
            raise ProfileError(f"line {lineno}: sink without params=")
        if param_text == ALL_PARAMS:
            params = frozenset(range(count))
        else:
            try:
                params = frozenset(int(p) for p in param_text.split(","))
            except ValueError:
                raise ProfileError(f"line {lineno}: bad params list {param_text!r}") from None
            bad = sorted(p for p in params if not 0 <= p < count)
            if bad:
                raise ProfileError(f"line {lineno}: {sig} has {count} parameters, not {bad}")
        sinks[sel] = sinks.get(sel, frozenset()) | params
    return TaintConfig(frozenset(sources), sinks, name)


def load_profile(name_or_path: str | Path) -> TaintConfig:
    if str(name_or_path) in PROFILES:
        text = resources.files("flashtaint").joinpath(f"profiles/{name_or_path}.profile").read_text()
        return parse_profile(text, str(name_or_path))
    path = Path(name_or_path)
    if not path.is_file():
        raise ProfileError(f"unknown profile {str(name_or_path)!r} (not one of {', '.join(PROFILES)} or a file)")
    return parse_profile(path.read_text(), path.stem)


def load_taint_rules() -> list[Rule]:
    return parse_rules(resources.files("flashtaint").joinpath("rules/taint.dl").read_text())


# -- findings ------------------------------------------------------------------

Fact = tuple[str, tuple]


@dataclass(frozen=True, slots=True)
class Hop:
    rule: str
    fact: Fact
    premises: tuple[Fact, ...]

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "fact": [self.fact[0], list(self.fact[1])],
            "premises": [[rel, list(tup)] for rel, tup in self.premises],
        }


@dataclass(frozen=True, slots=True)
class SiteRef:
    node: str
    label: str
    site: str
    selector: str

    def to_json(self) -> dict:
        return {"node": self.node, "label": self.label, "site": self.site, "selector": self.selector}


@dataclass(frozen=True, slots=True)
class Finding:
    source: SiteRef
    sink: SiteRef
    param: int
    witness: tuple[Hop, ...]

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.source.site, self.sink.site, self.param)

    def to_json(self) -> dict:
        return {
            "source": self.source.to_json(),
            "sink": {**self.sink.to_json(), "param": self.param},
            "witness": [h.to_json() for h in self.witness],
        }


@dataclass
class TaintRun:
    base: FactBase
    fixpoint: FactBase
    rules: list[Rule]


@dataclass
class DetectionReport:
    root: dict
    findings: list[Finding]
    stats: dict
    config_profile: str
    tool_version: str = __version__
    run: TaintRun | None = field(default=None, repr=False, compare=False)

    @property
    def verdict(self) -> str:
        return "vulnerable" if self.findings else "not_detected"

    def to_json(self) -> dict:
        return {
            "root": self.root,
            "verdict": self.verdict,
            "findings": [f.to_json() for f in self.findings],
            "stats": self.stats,
            "config_profile": self.config_profile,
            "tool_version": self.tool_version,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"


def _slot_aliases(keys: set[str]) -> list[tuple[str, str]]:
    out = []
    for k in keys:
        k_store = k.rsplit(":", 1)[0]
        for q in keys:
            if k == q or (k_store == q.rsplit(":", 1)[0] and (k.endswith(":*") or q.endswith(":*"))):
                out.append((k, q))
    return out


def build_base(scg: SubCallGraph, config: TaintConfig) -> FactBase:
    if not scg.sealed or any(n not in scg.per_node_facts for n in scg.nodes):
        raise AnalysisError("sub-call graph is not sealed")
    base = FactBase(CONFIG_SCHEMA)
    for node in scg.nodes:
        base.update(scg.per_node_facts[node])
    base.update(scg.edge_facts())
    for sel in config.sources:
        base.add("Source", sel.hex)
    for sel, params in config.sinks.items():
        for i in params:
            base.add("SinkParam", sel.hex, i)
    keys = {k for rel in ("StoreSlot", "LoadSlot") if rel in base.arity for k, _ in base.tuples(rel)}
    for k, q in _slot_aliases(keys):
        base.add("SlotAlias", k, q)
    return base.seal()


def run_taint(scg: SubCallGraph, config: TaintConfig) -> TaintRun:
    rules = load_taint_rules()
    base = build_base(scg, config)
    fixpoint = run_to_fixpoint(base, rules, provenance=TAINT_RELATIONS).seal()
    return TaintRun(base, fixpoint, rules)


def _carrier(body: tuple[Fact, ...]) -> Fact | None:
    carriers = [p for p in body if p[0] in TAINT_RELATIONS]
    return carriers[0] if carriers else None


def _deriv_key(d: tuple[int, tuple[Fact, ...]]) -> tuple:
    return (d[0], tuple((rel, tuple_key(tup)) for rel, tup in d[1]))


def witnesses(run: TaintRun, sink: Fact) -> dict[str, tuple[Hop, ...]]:
    """Shortest witness from each source call site to ``sink``.

    Backward breadth-first search over recorded derivations, expanding
    derivations in sorted order so ties resolve the same way every run.
    """
    derivs = run.fixpoint.derivations
    labels = [r.label for r in run.rules]
    parent: dict[Fact, tuple[Fact, tuple[int, tuple[Fact, ...]]]] = {}
    seen = {sink}
    queue = deque([sink])
    found: dict[str, tuple[Hop, ...]] = {}
    while queue:
        fact = queue.popleft()
        for d in sorted(derivs.get(fact, ()), key=_deriv_key):
            carrier = _carrier(d[1])
            if carrier is None:
                site = next(tup[0] for rel, tup in d[1] if rel == "ExtCall")
                if site in found:
                    continue
                hops = [Hop(labels[d[0]], fact, d[1])]
                cur = fact
                while cur != sink:
                    child, cd = parent[cur]
                    hops.append(Hop(labels[cd[0]], child, cd[1]))
                    cur = child
                found[site] = tuple(hops)
            elif carrier not in seen:
                seen.add(carrier)
                parent[carrier] = (fact, d)
                queue.append(carrier)
    return found


def _unify(atom, fact: Fact, binding: dict) -> bool:
    rel, tup = fact
    if atom.relation != rel or len(atom.terms) != len(tup):
        return False
    for t, v in zip(atom.terms, tup):
        if isinstance(t, Var):
            if binding.setdefault(t.name, v) != v:
                return False
        elif t != v or type(t) is not type(v):
            return False
    return True


def replay(witness: tuple[Hop, ...], fixpoint: FactBase, rules: list[Rule]) -> None:
    """Check a witness hop by hop; raises AssertionError naming the first bad hop.

    Every premise and conclusion must be in the fixpoint, the named rule must
    derive the conclusion from exactly those premises, the first hop must
    start at a source and each later hop must consume the previous conclusion.
    """
    by_label: dict[str, list[Rule]] = {}
    for r in rules:
        by_label.setdefault(r.label, []).append(r)
    if not witness:
        raise AssertionError("empty witness")
    prev: Fact | None = None
    for n, hop in enumerate(witness):
        for rel, tup in (hop.fact, *hop.premises):
            if not fixpoint.contains(rel, tup):
                raise AssertionError(f"hop {n}: {rel}{tup} not in fixpoint")
        ok = False
        for rule in by_label.get(hop.rule, []):
            if len(rule.body) != len(hop.premises):
                continue
            binding: dict = {}
            if all(_unify(a, p, binding) for a, p in zip(rule.body, hop.premises)) and _unify(
                rule.head, hop.fact, binding
            ):
                ok = True
                break
        if not ok:
            raise AssertionError(f"hop {n}: rule {hop.rule} does not derive {hop.fact} from {hop.premises}")
        carrier = _carrier(hop.premises)
        if (carrier is None) != (n == 0) or (n and carrier != prev):
            raise AssertionError(f"hop {n}: does not continue the chain")
        prev = hop.fact
    if witness[-1].fact[0] != "SinkHit":
        raise AssertionError("witness does not end at a sink")


def _site_ref(scg: SubCallGraph, run: TaintRun, site: str) -> SiteRef:
    node_id = site.split(":", 1)[0]
    node: CgNode = scg.nodes[int(node_id[1:])]
    sel = next((t[2] for t in run.fixpoint.tuples("ExtCall") if t[0] == site), "none")
    return SiteRef(node_id, node.label, site, sel)


def analyze(scg: SubCallGraph, config: TaintConfig) -> DetectionReport:
    run = run_taint(scg, config)
    findings: dict[tuple, Finding] = {}
    for sink_site, param in run.fixpoint.sorted("SinkHit"):
        for src_site, hops in witnesses(run, ("SinkHit", (sink_site, param))).items():
            f = Finding(_site_ref(scg, run, src_site), _site_ref(scg, run, sink_site), param, hops)
            old = findings.get(f.key)
            if old is None or (len(hops), _hops_key(hops)) < (len(old.witness), _hops_key(old.witness)):
                findings[f.key] = f
    ordered = [findings[k] for k in sorted(findings, key=lambda k: tuple(term_key(t) for t in k))]
    root = scg.root
    t = scg.truncation
    stats = {
        "nodes": len(scg.nodes),
        "edges": len(scg.edges),
        "unresolved_calls": len(scg.unresolved_edges()),
        "facts": len(run.fixpoint),
        "rounds": run.fixpoint.rounds,
        "scg_rounds": scg.rounds,
        "truncation": {"depth_limited": t.depth_limited, "node_limited": t.node_limited, "cycles_cut": t.cycles_cut},
    }
    return DetectionReport(
        root={
            "logic_address": root.contract.logic_address,
            "storage_address": root.contract.storage_address,
            "selector": root.selector.hex,
            "block": root.contract.block,
        },
        findings=ordered,
        stats=stats,
        config_profile=config.profile_name,
        run=run,
    )


def _hops_key(hops: tuple[Hop, ...]) -> tuple:
    return tuple((h.fact[0], tuple_key(h.fact[1])) for h in hops)
