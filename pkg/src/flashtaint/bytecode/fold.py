"""Constant evaluation of pure EVM arithmetic over 256-bit words."""

from __future__ import annotations

WORD = 1 << 256
MASK = WORD - 1
SIGN = 1 << 255


def _signed(v: int) -> int:
    return v - WORD if v & SIGN else v


def _sdiv(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    q = abs(sa) // abs(sb)
    return (-q if (sa < 0) != (sb < 0) else q) & MASK


def _smod(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    r = abs(sa) % abs(sb)
    return (-r if sa < 0 else r) & MASK


def _signextend(b: int, x: int) -> int:
    if b >= 31:
        return x
    bit = 8 * b + 7
    mask = (1 << bit) - 1
    return (x | ~mask) & MASK if x & (1 << bit) else x & mask


def _byte(i: int, x: int) -> int:
    return (x >> (8 * (31 - i))) & 0xFF if i < 32 else 0


def _sar(shift: int, v: int) -> int:
    if shift >= 256:
        return MASK if v & SIGN else 0
    return (_signed(v) >> shift) & MASK


# operands are in pop order: args[0] was the top of the stack
_OPS = {
    "ADD": lambda a, b: (a + b) & MASK,
    "MUL": lambda a, b: (a * b) & MASK,
    "SUB": lambda a, b: (a - b) & MASK,
    "DIV": lambda a, b: a // b if b else 0,
    "SDIV": _sdiv,
    "MOD": lambda a, b: a % b if b else 0,
    "SMOD": _smod,
    "ADDMOD": lambda a, b, n: (a + b) % n if n else 0,
    "MULMOD": lambda a, b, n: (a * b) % n if n else 0,
    "EXP": lambda a, b: pow(a, b, WORD),
    "SIGNEXTEND": _signextend,
    "LT": lambda a, b: int(a < b),
    "GT": lambda a, b: int(a > b),
    "SLT": lambda a, b: int(_signed(a) < _signed(b)),
    "SGT": lambda a, b: int(_signed(a) > _signed(b)),
    "EQ": lambda a, b: int(a == b),
    "ISZERO": lambda a: int(a == 0),
    "AND": lambda a, b: a & b,
    "OR": lambda a, b: a | b,
    "XOR": lambda a, b: a ^ b,
    "NOT": lambda a: ~a & MASK,
    "BYTE": _byte,
    "SHL": lambda s, v: (v << s) & MASK if s < 256 else 0,
    "SHR": lambda s, v: v >> s if s < 256 else 0,
    "SAR": _sar,
}

PURE_OPS = frozenset(_OPS)


def fold(name: str, args: list[int | None]) -> int | None:
    """Evaluate ``name`` if it is pure arithmetic and every operand is known."""
    fn = _OPS.get(name)
    if fn is None or any(a is None for a in args):
        return None
    return fn(*args)
