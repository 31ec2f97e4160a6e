from .disasm import (
    Bytecode,
    CodeSource,
    Instruction,
    decode_hex,
    disassemble,
    encode,
    encode_hex,
    jumpdest_positions,
)
from .keccak import keccak256
from .opcodes import CALL_OPS, OPCODES, info
from .selectors import ZERO_SELECTOR, Selector, SignatureError, param_count, parse_signature, selector_of

__all__ = [
    "Bytecode",
    "CALL_OPS",
    "CodeSource",
    "Instruction",
    "OPCODES",
    "Selector",
    "SignatureError",
    "ZERO_SELECTOR",
    "decode_hex",
    "disassemble",
    "encode",
    "encode_hex",
    "info",
    "jumpdest_positions",
    "keccak256",
    "param_count",
    "parse_signature",
    "selector_of",
]
