"""A tiny two-pass EVM assembler used to author fixture contracts.

Source is whitespace separated; ``;`` starts a comment.

    name:           define a label (emits JUMPDEST)
    PUSH 0x1234     push with the smallest width that fits (at least 1 byte)
    PUSH4 7         push with an explicit width
    PUSH @name      push a label address (always PUSH2)
    ADD, SSTORE...  any mnemonic from the opcode table
    .byte 0xfe      raw byte
"""

from __future__ import annotations

from .bytecode.opcodes import BY_NAME


class AsmError(ValueError):
    pass


def _int(tok: str) -> int:
    try:
        return int(tok, 0)
    except ValueError as exc:
        raise AsmError(f"bad integer literal {tok!r}") from exc


def _tokens(source: str) -> list[str]:
    out = []
    for line in source.splitlines():
        out.extend(line.split(";", 1)[0].split())
    return out


def assemble(source: str) -> bytes:
    toks = _tokens(source)
    # pass 1: sizes and label offsets
    items: list[tuple] = []
    labels: dict[str, int] = {}
    pc = 0
    i = 0
    while i < len(toks):
        tok = toks[i]
        i += 1
        if tok.endswith(":"):
            name = tok[:-1]
            if name in labels:
                raise AsmError(f"duplicate label {name!r}")
            labels[name] = pc
            items.append(("op", BY_NAME["JUMPDEST"]))
            pc += 1
            continue
        if tok == ".byte":
            items.append(("raw", _int(toks[i])))
            i += 1
            pc += 1
            continue
        up = tok.upper()
        if up.startswith("PUSH") and up != "PUSH0":
            if i >= len(toks):
                raise AsmError(f"{tok} without immediate")
            imm = toks[i]
            i += 1
            if imm.startswith("@"):
                width = 2 if up == "PUSH" else int(up[4:])
                items.append(("push", width, imm[1:]))
            else:
                value = _int(imm)
                width = max(1, (value.bit_length() + 7) // 8) if up == "PUSH" else int(up[4:])
                if value.bit_length() > 8 * width or not 1 <= width <= 32:
                    raise AsmError(f"{imm} does not fit in {width} bytes")
                items.append(("push", width, value))
            pc += 1 + width
            continue
        if up not in BY_NAME:
            raise AsmError(f"unknown mnemonic {tok!r}")
        items.append(("op", BY_NAME[up]))
        pc += 1

    # pass 2: emit
    out = bytearray()
    for item in items:
        if item[0] == "op":
            out.append(item[1])
        elif item[0] == "raw":
            out.append(item[1] & 0xFF)
        else:
            _, width, value = item
            if isinstance(value, str):
                if value not in labels:
                    raise AsmError(f"undefined label {value!r}")
                value = labels[value]
            out.append(0x5F + width)
            out += value.to_bytes(width, "big")
    return bytes(out)
