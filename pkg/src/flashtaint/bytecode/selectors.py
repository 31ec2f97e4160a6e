"""Function selectors: the first four bytes of keccak256(canonical signature)."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .keccak import keccak256

_IDENT = re.compile(r"[A-Za-z_$][A-Za-z0-9_$]*")
_ELEMENTARY = re.compile(
    r"(address|bool|string|bytes([1-9]|[12][0-9]|3[0-2])?|u?int(8|16|24|32|40|48|56|64|72|80|88|96"
    r"|104|112|120|128|136|144|152|160|168|176|184|192|200|208|216|224|232|240|248|256)"
    r"|function)"
)
_TYPE_WORD = re.compile(r"[a-z0-9]+")
_ARRAY_SUFFIX = re.compile(r"\[([0-9]*)\]")
_HEX8 = re.compile(r"0x[0-9a-fA-F]{8}")


class SignatureError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Selector:
    value: bytes
    text: str | None = None

    def __post_init__(self) -> None:
        if len(self.value) != 4:
            raise ValueError(f"selector must be 4 bytes, got {len(self.value)}")

    @classmethod
    def parse(cls, hex_text: str) -> Selector:
        """Exactly ``0x`` plus 8 hex digits; shorter forms are rejected, never padded."""
        s = hex_text.strip()
        if not _HEX8.fullmatch(s):
            raise ValueError(f"selector must be 0x followed by exactly 8 hex digits: {hex_text!r}")
        return cls(bytes.fromhex(s[2:]))

    @classmethod
    def from_int(cls, value: int) -> Selector:
        return cls(value.to_bytes(4, "big"))

    @property
    def hex(self) -> str:
        return "0x" + self.value.hex()

    @property
    def int(self) -> int:
        return int.from_bytes(self.value, "big")

    def __str__(self) -> str:
        return self.hex

    # identity is the 4 bytes; the text is annotation only
    def __eq__(self, other: object) -> bool:
        return isinstance(other, Selector) and other.value == self.value

    def __hash__(self) -> int:
        return hash(self.value)

    def __lt__(self, other: Selector) -> bool:
        return self.value < other.value


ZERO_SELECTOR = Selector(b"\x00\x00\x00\x00")


def _parse_type(s: str, i: int) -> int:
    """Consume one ABI type starting at s[i]; return the index after it."""
    if i < len(s) and s[i] == "(":
        i = _parse_list(s, i)
    else:
        m = _TYPE_WORD.match(s, i)
        if not m or not _ELEMENTARY.fullmatch(m.group(0)):
            raise SignatureError(f"bad type at position {i} in {s!r}")
        i = m.end()
    while True:
        m = _ARRAY_SUFFIX.match(s, i)
        if not m:
            return i
        i = m.end()


def _parse_list(s: str, i: int) -> int:
    assert s[i] == "("
    i += 1
    if i < len(s) and s[i] == ")":
        return i + 1
    while True:
        i = _parse_type(s, i)
        if i >= len(s):
            raise SignatureError(f"unterminated parameter list in {s!r}")
        if s[i] == ")":
            return i + 1
        if s[i] != ",":
            raise SignatureError(f"expected ',' or ')' at position {i} in {s!r}")
        i += 1


def parse_signature(text: str) -> tuple[str, int]:
    """Validate a canonical signature; return (name, number of top-level params)."""
    m = _IDENT.match(text)
    if not m or m.end() >= len(text) or text[m.end()] != "(":
        raise SignatureError(f"not a canonical signature: {text!r}")
    end = _parse_list(text, m.end())
    if end != len(text):
        raise SignatureError(f"trailing characters in signature: {text!r}")
    return m.group(0), param_count(text)


def param_count(text: str) -> int:
    inner = text[text.index("(") + 1 : -1]
    if not inner:
        return 0
    depth, count = 0, 1
    for ch in inner:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            count += 1
    return count


def selector_of(text_signature: str) -> Selector:
    parse_signature(text_signature)
    return Selector(keccak256(text_signature.encode())[:4], text_signature)
