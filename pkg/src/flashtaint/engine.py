"""A small monotone Datalog engine: relational fact base, rule parser, semi-naive fixpoint."""

from __future__ import annotations

import re
from collections import defaultdict
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

Term = int | str


class ArityError(ValueError):
    pass


class RuleError(ValueError):
    pass


class UnknownRelation(KeyError):
    pass


def term_key(t: Term) -> tuple:
    return (0, t, "") if isinstance(t, int) else (1, 0, t)


def tuple_key(tup: tuple) -> tuple:
    return tuple(term_key(t) for t in tup)


class FactBase:
    """Named relations of fixed arity. Append-only; ``seal`` makes it read-only."""

    def __init__(self, schema: dict[str, int] | None = None) -> None:
        self.arity: dict[str, int] = {}
        self._rel: dict[str, set[tuple]] = {}
        self.sealed = False
        # filled by run_to_fixpoint
        self.rounds = 0
        self.derivations: dict[tuple[str, tuple], set[tuple[int, tuple]]] = {}
        for name, n in (schema or {}).items():
            self.declare(name, n)

    def declare(self, name: str, arity: int) -> None:
        known = self.arity.get(name)
        if known is not None and known != arity:
            raise ArityError(f"{name} declared with arity {known}, not {arity}")
        if known is None:
            self.arity[name] = arity
            self._rel[name] = set()

    def add(self, name: str, *terms: Term) -> None:
        self.add_tuple(name, terms)

    def add_tuple(self, name: str, tup: tuple) -> None:
        if self.sealed:
            raise RuntimeError("fact base is sealed")
        if name not in self.arity:
            self.declare(name, len(tup))
        elif len(tup) != self.arity[name]:
            raise ArityError(f"{name}{tup}: expected arity {self.arity[name]}")
        self._rel[name].add(tuple(tup))

    def update(self, other: FactBase) -> None:
        for name in other.relations():
            self.declare(name, other.arity[name])
            for tup in other.tuples(name):
                self.add_tuple(name, tup)

    def relations(self) -> list[str]:
        return sorted(self._rel)

    def tuples(self, name: str) -> frozenset[tuple]:
        if name not in self._rel:
            raise UnknownRelation(name)
        return frozenset(self._rel[name])

    def sorted(self, name: str) -> list[tuple]:
        return sorted(self.tuples(name), key=tuple_key)

    def contains(self, name: str, tup: tuple) -> bool:
        return tuple(tup) in self._rel.get(name, ())

    def copy(self) -> FactBase:
        fb = FactBase(dict(self.arity))
        for name, rows in self._rel.items():
            fb._rel[name] = set(rows)
        return fb

    def seal(self) -> FactBase:
        self.sealed = True
        return self

    def __len__(self) -> int:
        return sum(len(r) for r in self._rel.values())

    def counts(self) -> dict[str, int]:
        return {name: len(self._rel[name]) for name in self.relations()}

    def dump(self) -> dict[str, list[tuple]]:
        return {name: self.sorted(name) for name in self.relations()}

    def write_tsv(self, directory: str | Path) -> list[Path]:
        """One ``<Relation>.facts`` file per relation, tab separated, sorted."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in self.relations():
            path = out / f"{name}.facts"
            path.write_text("".join("\t".join(str(t) for t in row) + "\n" for row in self.sorted(name)))
            written.append(path)
        return written


# -- rules ---------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Atom:
    relation: str
    terms: tuple[Var | Term, ...]

    def variables(self) -> set[str]:
        return {t.name for t in self.terms if isinstance(t, Var)}

    def __str__(self) -> str:
        def fmt(t):
            return str(t) if isinstance(t, (Var, int)) else f'"{t}"'

        return f"{self.relation}({', '.join(fmt(t) for t in self.terms)})"


@dataclass(frozen=True, slots=True)
class Rule:
    head: Atom
    body: tuple[Atom, ...]
    label: str = ""

    def __post_init__(self) -> None:
        if not self.body:
            raise RuleError(f"rule for {self.head.relation} has an empty body")
        missing = self.head.variables() - set().union(*(a.variables() for a in self.body))
        if missing:
            raise RuleError(f"head variables {sorted(missing)} not bound in body of {self}")

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(str(a) for a in self.body)}."


_ATOM = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(([^()]*)\)\s*")
_LABEL = re.compile(r"^\[([A-Za-z0-9_.-]+)\]\s*")


def _parse_term(tok: str, fresh: list[int]) -> Var | Term:
    tok = tok.strip()
    if not tok:
        raise RuleError("empty term")
    if tok == "_":
        fresh[0] += 1
        return Var(f"_{fresh[0]}")
    if tok[0] == '"' and tok[-1] == '"' and len(tok) >= 2:
        return tok[1:-1]
    if re.fullmatch(r"-?[0-9]+", tok):
        return int(tok)
    if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
        return Var(tok)
    raise RuleError(f"bad term {tok!r}")


def _parse_atoms(text: str, fresh: list[int]) -> list[Atom]:
    atoms = []
    pos = 0
    while pos < len(text):
        m = _ATOM.match(text, pos)
        if not m:
            raise RuleError(f"cannot parse atom at {text[pos:]!r}")
        terms = tuple(_parse_term(t, fresh) for t in m.group(2).split(",")) if m.group(2).strip() else ()
        atoms.append(Atom(m.group(1), terms))
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise RuleError(f"expected ',' between atoms in {text!r}")
            pos += 1
    return atoms


def parse_rules(text: str) -> list[Rule]:
    """Parse ``Head(x,y) :- Body1(x,z), Body2(z,y).`` lines; ``#`` starts a comment.

    A rule may carry a label in brackets: ``[R2] Tainted(v) :- ...``. Quoted
    strings and integers are constants, ``_`` is anonymous, other bare
    identifiers are variables.
    """
    rules = []
    pending = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        pending = f"{pending} {line}".strip()
        if not pending.endswith("."):
            continue
        stmt, pending = pending[:-1], ""
        label = ""
        m = _LABEL.match(stmt)
        if m:
            label, stmt = m.group(1), stmt[m.end() :]
        if ":-" not in stmt:
            raise RuleError(f"line {lineno}: missing ':-' in {stmt!r}")
        head_txt, body_txt = stmt.split(":-", 1)
        fresh = [0]
        try:
            heads = _parse_atoms(head_txt, fresh)
            body = _parse_atoms(body_txt, fresh)
            if len(heads) != 1:
                raise RuleError("exactly one head atom expected")
            rules.append(Rule(heads[0], tuple(body), label))
        except RuleError as exc:
            raise RuleError(f"line {lineno}: {exc}") from None
    if pending:
        raise RuleError(f"unterminated rule: {pending!r}")
    return rules


def load_rules(path: str | Path) -> list[Rule]:
    return parse_rules(Path(path).read_text())


def check_arities(base: FactBase, rules: Sequence[Rule]) -> dict[str, int]:
    """Arity of every relation mentioned by base or rules; raises on conflict."""
    arity = dict(base.arity)
    for rule in rules:
        for atom in (rule.head, *rule.body):
            n = arity.setdefault(atom.relation, len(atom.terms))
            if n != len(atom.terms):
                raise ArityError(f"{atom} has arity {len(atom.terms)}, {atom.relation} is declared with {n}")
    return arity


# -- evaluation ----------------------------------------------------------------


class SymbolTable:
    def __init__(self) -> None:
        self._ids: dict[Term, int] = {}
        self.symbols: list[Term] = []

    def intern(self, t: Term) -> int:
        # keep 1 and "1" apart
        key = (type(t), t)
        i = self._ids.get(key)  # type: ignore[arg-type]
        if i is None:
            i = self._ids[key] = len(self.symbols)  # type: ignore[index]
            self.symbols.append(t)
        return i


@dataclass
class _CompiledAtom:
    relation: str
    # per position: ("v", slot) or ("c", symbol id)
    terms: tuple[tuple[str, int], ...]


@dataclass
class _CompiledRule:
    index: int
    head: _CompiledAtom
    body: list[_CompiledAtom]
    nvars: int


def _compile(rule: Rule, index: int, syms: SymbolTable) -> _CompiledRule:
    slots: dict[str, int] = {}

    def comp(atom: Atom) -> _CompiledAtom:
        terms = []
        for t in atom.terms:
            if isinstance(t, Var):
                terms.append(("v", slots.setdefault(t.name, len(slots))))
            else:
                terms.append(("c", syms.intern(t)))
        return _CompiledAtom(atom.relation, tuple(terms))

    body = [comp(a) for a in rule.body]
    head = comp(rule.head)
    return _CompiledRule(index, head, body, len(slots))


@dataclass
class _Indexes:
    rows: dict[str, set[tuple]]
    cache: dict[tuple[str, tuple[int, ...]], dict[tuple, list[tuple]]] = field(default_factory=dict)

    def lookup(self, rel: str, positions: tuple[int, ...], key: tuple) -> Iterable[tuple]:
        if not positions:
            return self.rows.get(rel, ())
        idx = self.cache.get((rel, positions))
        if idx is None:
            idx = defaultdict(list)
            for row in self.rows.get(rel, ()):
                idx[tuple(row[p] for p in positions)].append(row)
            self.cache[(rel, positions)] = idx
        return idx.get(key, ())


def _matches(
    rule: _CompiledRule, order: list[int], sources: list[_Indexes]
) -> Iterator[tuple[list, list[tuple]]]:
    """Yield (bindings, matched body rows in body order) for one join order."""
    binding: list = [None] * rule.nvars
    matched: list = [None] * len(rule.body)

    def rec(k: int) -> Iterator[tuple[list, list[tuple]]]:
        if k == len(order):
            yield binding, matched
            return
        bi = order[k]
        atom = rule.body[bi]
        positions, key = [], []
        for pos, (kind, val) in enumerate(atom.terms):
            if kind == "c":
                positions.append(pos)
                key.append(val)
            elif binding[val] is not None:
                positions.append(pos)
                key.append(binding[val])
        for row in sources[k].lookup(atom.relation, tuple(positions), tuple(key)):
            newly = []
            ok = True
            for pos, (kind, val) in enumerate(atom.terms):
                if kind == "v":
                    cur = binding[val]
                    if cur is None:
                        binding[val] = row[pos]
                        newly.append(val)
                    elif cur != row[pos]:
                        ok = False
                        break
            if ok:
                matched[bi] = row
                yield from rec(k + 1)
            for v in newly:
                binding[v] = None

    yield from rec(0)


def run_to_fixpoint(
    base: FactBase, rules: Sequence[Rule], provenance: Iterable[str] = ()
) -> FactBase:
    """Least model of ``rules`` over ``base`` by semi-naive iteration.

    Each round joins only against tuples that were new in the previous
    round (at one body position; full relations elsewhere). For relations
    named in ``provenance`` every distinct derivation is recorded as
    ``(rule index, ((relation, tuple), ...))`` in the result's
    ``derivations``.
    """
    arity = check_arities(base, rules)
    syms = SymbolTable()
    compiled = [_compile(r, i, syms) for i, r in enumerate(rules)]
    full: dict[str, set[tuple]] = {name: set() for name in arity}
    for name in base.relations():
        full[name] = {tuple(syms.intern(t) for t in row) for row in base.tuples(name)}
    delta = {name: set(rows) for name, rows in full.items() if rows}
    track = set(provenance)
    derivs: dict[tuple[str, tuple], set[tuple[int, tuple]]] = defaultdict(set)
    rounds = 0

    while delta:
        rounds += 1
        full_ix = _Indexes(full)
        delta_ix = _Indexes(delta)
        new: dict[str, set[tuple]] = defaultdict(set)
        for rule in compiled:
            n = len(rule.body)
            for i, atom in enumerate(rule.body):
                if atom.relation not in delta:
                    continue
                order = [i] + [j for j in range(n) if j != i]
                sources = [delta_ix] + [full_ix] * (n - 1)
                head = rule.head
                for binding, matched in _matches(rule, order, sources):
                    tup = tuple(binding[v] if k == "v" else v for k, v in head.terms)
                    if tup not in full[head.relation]:
                        new[head.relation].add(tup)
                    if head.relation in track:
                        body = tuple((rule.body[j].relation, matched[j]) for j in range(n))
                        derivs[(head.relation, tup)].add((rule.index, body))
        delta = {}
        for rel, rows in new.items():
            rows -= full[rel]
            if rows:
                full[rel] |= rows
                delta[rel] = rows

    out = FactBase(arity)
    sym = syms.symbols
    for name, rows in full.items():
        out._rel[name] = {tuple(sym[i] for i in row) for row in rows}
    out.rounds = rounds
    out.derivations = {
        (rel, tuple(sym[i] for i in tup)): {
            (ri, tuple((brel, tuple(sym[i] for i in brow)) for brel, brow in body)) for ri, body in ds
        }
        for (rel, tup), ds in derivs.items()
    }
    return out


def query(base: FactBase, relation: str, pattern: Sequence[Term | None] | None = None) -> list[tuple]:
    """Tuples of ``relation`` matching ``pattern`` (None or "_" is a wildcard), sorted."""
    rows = base.tuples(relation)
    if pattern is None:
        return base.sorted(relation)
    if len(pattern) != base.arity[relation]:
        raise ArityError(f"pattern arity {len(pattern)} != {base.arity[relation]} for {relation}")
    fixed = [(i, p) for i, p in enumerate(pattern) if p is not None and p != "_"]
    hits = [r for r in rows if all(r[i] == p for i, p in fixed)]
    return sorted(hits, key=tuple_key)
