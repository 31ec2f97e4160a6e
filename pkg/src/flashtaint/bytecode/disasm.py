"""Bytecode container with hex codec; total EVM disassembler."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .opcodes import info


class CodeSource(str, enum.Enum):
    RPC = "rpc"
    FIXTURE = "fixture"
    INLINE = "inline"


def decode_hex(text: str) -> bytes:
    """Accept hex with or without a 0x prefix, any case, surrounding whitespace."""
    s = text.strip()
    if s[:2] in ("0x", "0X"):
        s = s[2:]
    if len(s) % 2:
        raise ValueError(f"odd-length hex string ({len(s)} digits)")
    return bytes.fromhex(s)


def encode_hex(data: bytes) -> str:
    return "0x" + data.hex()


@dataclass(frozen=True, slots=True)
class Bytecode:
    code: bytes = b""
    source: CodeSource = CodeSource.INLINE

    @classmethod
    def from_hex(cls, text: str, source: CodeSource = CodeSource.INLINE) -> Bytecode:
        return cls(decode_hex(text), source)

    def hex(self) -> str:
        return encode_hex(self.code)

    def __len__(self) -> int:
        return len(self.code)


@dataclass(frozen=True, slots=True)
class Instruction:
    offset: int
    opcode: int
    name: str
    push_data: bytes | None = None
    # number of zero bytes appended because the code ended inside the immediate
    missing: int = 0

    @property
    def truncated(self) -> bool:
        return self.missing > 0

    @property
    def size(self) -> int:
        """Encoded length in the original code (truncated PUSHes are shorter)."""
        return 1 + (len(self.push_data) - self.missing if self.push_data is not None else 0)

    @property
    def next_offset(self) -> int:
        return self.offset + self.size

    @property
    def push_value(self) -> int | None:
        if self.push_data is None:
            return None
        return int.from_bytes(self.push_data, "big")

    @property
    def is_push(self) -> bool:
        return self.push_data is not None

    def __str__(self) -> str:
        if self.push_data is None:
            return f"{self.offset:#06x} {self.name}"
        return f"{self.offset:#06x} {self.name} 0x{self.push_data.hex()}"


def disassemble(code: Bytecode | bytes) -> tuple[Instruction, ...]:
    """Decode every byte of ``code`` exactly once.

    Undefined opcodes become one-byte INVALID instructions (the raw byte is
    kept in ``opcode``). A PUSH running off the end is zero-padded and its
    ``missing`` count records the padding.
    """
    raw = code.code if isinstance(code, Bytecode) else bytes(code)
    out: list[Instruction] = []
    i, n = 0, len(raw)
    while i < n:
        op = raw[i]
        meta = info(op)
        if meta.imm:
            data = raw[i + 1 : i + 1 + meta.imm]
            missing = meta.imm - len(data)
            out.append(Instruction(i, op, meta.name, data + b"\x00" * missing, missing))
            i += 1 + len(data)
        else:
            out.append(Instruction(i, op, meta.name))
            i += 1
    return tuple(out)


def encode(instructions: tuple[Instruction, ...] | list[Instruction]) -> bytes:
    """Inverse of :func:`disassemble`; drops the padding of truncated PUSHes."""
    buf = bytearray()
    for ins in instructions:
        buf.append(ins.opcode)
        if ins.push_data is not None:
            buf += ins.push_data[: len(ins.push_data) - ins.missing]
    return bytes(buf)


def jumpdest_positions(code: Bytecode | bytes) -> frozenset[int]:
    return frozenset(ins.offset for ins in disassemble(code) if ins.name == "JUMPDEST")
