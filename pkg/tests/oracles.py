"""Reference implementations that share no code with the package."""

from __future__ import annotations

from Crypto.Hash import keccak as _keccak

HALTS = {0x00, 0x56, 0x57, 0xF3, 0xFD, 0xFE, 0xFF}
# every byte the EVM defines as an instruction (Cancun)
DEFINED = (
    set(range(0x00, 0x0C)) | set(range(0x10, 0x1E)) | {0x20} | set(range(0x30, 0x4B))
    | set(range(0x50, 0x5F)) | set(range(0x5F, 0xA5)) | {0xF0, 0xF1, 0xF2, 0xF3, 0xF4, 0xF5, 0xFA, 0xFD, 0xFE, 0xFF}
)


def keccak256(data: bytes) -> bytes:
    h = _keccak.new(digest_bits=256)
    h.update(data)
    return h.digest()


def selector(sig: str) -> str:
    return "0x" + keccak256(sig.encode())[:4].hex()


def decode(code: bytes) -> list[tuple[int, int, bytes]]:
    """(offset, opcode byte, immediate) with immediates zero-padded at the end of code."""
    out = []
    i = 0
    while i < len(code):
        op = code[i]
        n = op - 0x5F if 0x60 <= op <= 0x7F else 0
        imm = code[i + 1 : i + 1 + n]
        out.append((i, op, imm + bytes(n - len(imm))))
        i += 1 + n
    return out


def block_starts(code: bytes) -> list[int]:
    """Leaders: offset 0, every JUMPDEST, every instruction after a block-ending one."""
    ins = decode(code)
    leaders = set()
    if ins:
        leaders.add(0)
    for k, (off, op, _) in enumerate(ins):
        if op == 0x5B:
            leaders.add(off)
        ends = op in HALTS or op not in DEFINED
        if ends and k + 1 < len(ins):
            leaders.add(ins[k + 1][0])
    return sorted(leaders)


def naive_fixpoint(facts: dict[str, set[tuple]], rules: list[tuple[tuple, list[tuple]]]) -> dict[str, set[tuple]]:
    """Re-evaluate every rule over full relations until nothing changes.

    A rule is (head, body); atoms are (relation, terms) where a term is
    ("var", name) or ("const", value).
    """
    db = {k: set(v) for k, v in facts.items()}
    for head, body in rules:
        for rel, _ in [head, *body]:
            db.setdefault(rel, set())

    def solve(body, env):
        if not body:
            yield env
            return
        (rel, terms), rest = body[0], body[1:]
        for row in db[rel]:
            e = dict(env)
            if all(
                (t == v) if kind == "const" else (e.setdefault(t, v) == v)
                for (kind, t), v in zip(terms, row)
            ):
                yield from solve(rest, e)

    changed = True
    while changed:
        changed = False
        for head, body in rules:
            derived = {tuple(env[t] if k == "var" else t for k, t in head[1]) for env in solve(body, {})}
            new = derived - db[head[0]]
            if new:
                db[head[0]] |= new
                changed = True
    return db
