from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flashtaint.asm import assemble
from flashtaint.bytecode import ZERO_SELECTOR, disassemble, selector_of
from flashtaint.cfg import (
    EdgeKind,
    Terminator,
    build_cfg,
    dump_cfg,
    extract_public_functions,
    join_states,
    partition,
    recover_cfg,
    resolve_jumps,
)
from flashtaint.fixtures import CONTRACTS

from . import oracles

CORPUS = [pytest.param(assemble(c.source), id=c.address[-4:]) for c in CONTRACTS]


def _check_edges_target_jumpdests(cfg):
    for e in cfg.edges:
        if e.kind is EdgeKind.TAKEN:
            assert cfg.blocks[e.dst].starts_with_jumpdest


def test_jump_over_invalid():
    code = assemble("PUSH1 4 JUMP .byte 0xfe .byte 0x5b STOP")
    cfg = recover_cfg(disassemble(code))
    # the INVALID byte is a block of its own, unreachable from the entry
    assert sorted(cfg.blocks) == [0, 3, 4]
    assert cfg.reachable(0) == frozenset({0, 4})
    assert cfg.blocks[3].terminator is Terminator.INVALID
    assert cfg.blocks[4].terminator is Terminator.STOP


def test_empty_code_has_no_blocks():
    cfg = recover_cfg(())
    assert cfg.blocks == {} and cfg.edges == frozenset()
    assert extract_public_functions(cfg) == []


@settings(max_examples=300)
@given(st.binary(max_size=200))
def test_partition_matches_reference_leaders(code):
    assert sorted(partition(disassemble(code))) == oracles.block_starts(code)


@settings(max_examples=200)
@given(st.binary(max_size=200))
def test_blocks_tile_the_instruction_stream(code):
    blocks = partition(disassemble(code))
    pos = 0
    for bid in sorted(blocks):
        assert blocks[bid].start_offset == pos
        pos = blocks[bid].end_offset
    assert pos == len(code)


@settings(max_examples=200)
@given(st.binary(max_size=200))
def test_resolution_is_sound_and_idempotent_on_random_code(code):
    cfg = recover_cfg(disassemble(code))
    _check_edges_target_jumpdests(cfg)
    assert resolve_jumps(cfg).edges == cfg.edges


def test_push_before_jump_is_resolved_locally():
    cfg = build_cfg(disassemble(assemble("PUSH @x JUMP x: STOP")))
    assert [e.kind for e in cfg.edges] == [EdgeKind.TAKEN]


def test_stack_shuffled_target_needs_propagation():
    code = assemble("PUSH @x PUSH 1 SWAP1 PUSH 2 POP SWAP1 POP JUMP x: STOP")
    assert build_cfg(disassemble(code)).unresolved()
    cfg = recover_cfg(disassemble(code))
    assert not cfg.unresolved()
    assert cfg.successors(0) == (cfg.blocks[max(cfg.blocks)].id,)


def test_target_through_arithmetic():
    cfg = recover_cfg(disassemble(assemble("PUSH 2 PUSH 4 ADD JUMP x: STOP")))
    assert cfg.successors(0) == (6,)


def test_jump_to_non_jumpdest_is_unresolved():
    cfg = recover_cfg(disassemble(assemble("PUSH 3 JUMP STOP STOP")))
    (e,) = cfg.unresolved()
    assert e.note == "invalid_target:0x3"


def test_calldata_target_is_unknown():
    cfg = recover_cfg(disassemble(assemble("PUSH 0 CALLDATALOAD JUMP")))
    assert [e.note for e in cfg.unresolved()] == ["unknown"]


DIAMOND = """
  PUSH 0 CALLDATALOAD PUSH @a JUMPI
  PUSH 7 PUSH @join JUMP
  a: PUSH 8 PUSH @mid JUMP
  mid: PUSH @join JUMP
  join: POP PUSH @end JUMP
  end: STOP
"""


def test_join_of_differing_states_still_resolves_shared_target():
    cfg = recover_cfg(disassemble(assemble(DIAMOND)))
    assert not cfg.unresolved()
    assert cfg.bound_hits == 0


def test_visit_bound_is_reported():
    cfg = recover_cfg(disassemble(assemble(DIAMOND)), visit_bound=1)
    assert cfg.bound_hits >= 1
    assert any(e.note == "visit_bound" for e in cfg.unresolved())


def test_join_states_aligns_from_the_top():
    assert join_states((1, 2, 3), (9, 2, 3)) == (2, 3)
    assert join_states((5, 3), (3,)) == (3,)
    assert join_states((1, None), (1, 2)) == (1, None)
    assert join_states((None, 4), (2, 4)) == (4,)


@pytest.mark.parametrize("code", CORPUS)
def test_corpus_cfg_soundness(code):
    ins = disassemble(code)
    assert bytes(code) == __import__("flashtaint.bytecode", fromlist=["encode"]).encode(ins)
    cfg = recover_cfg(ins)
    _check_edges_target_jumpdests(cfg)
    assert resolve_jumps(cfg).edges == cfg.edges
    assert not cfg.unresolved()


def test_dispatcher_recovery_both_idioms():
    for src, sigs in [
        (CONTRACTS[0].source, ["balanceOf(address)", "transfer(address,uint256)",
                               "transferFrom(address,address,uint256)", "decimals()"]),
        (CONTRACTS[1].source, ["getReserves()"]),  # DIV idiom
    ]:
        funcs = extract_public_functions(recover_cfg(disassemble(assemble(src))))
        assert {f.selector for f in funcs} == {selector_of(s) for s in sigs}


def test_function_blocks_exclude_the_dispatcher():
    src = """
      PUSH 0 CALLDATALOAD PUSH 0xe0 SHR
      DUP1 PUSH4 0x11111111 EQ PUSH @f JUMPI
      DUP1 PUSH4 0x22222222 EQ PUSH @g JUMPI
      PUSH 0 DUP1 REVERT
      f: PUSH 1 PUSH 0 SSTORE STOP
      g: PUSH @f JUMP
    """
    cfg = recover_cfg(disassemble(assemble(src)))
    funcs = {f.selector.hex: f for f in extract_public_functions(cfg)}
    f, g = funcs["0x11111111"], funcs["0x22222222"]
    assert f.reachable_blocks == frozenset({f.entry_block})
    assert g.reachable_blocks == frozenset({g.entry_block, f.entry_block})
    assert 0 not in f.reachable_blocks | g.reachable_blocks


def test_no_dispatcher_means_one_catch_all_function():
    cfg = recover_cfg(disassemble(assemble("CALLDATASIZE PUSH 0 PUSH 0 CALLDATACOPY STOP")))
    (f,) = extract_public_functions(cfg)
    assert f.selector == ZERO_SELECTOR and f.reachable_blocks == frozenset(cfg.blocks)


def test_dump_cfg_lists_every_block():
    cfg = recover_cfg(disassemble(assemble(DIAMOND)))
    lines = dump_cfg(cfg).splitlines()
    assert len(lines) == len(cfg.blocks)
    assert lines[0].split("\t")[:3] == ["0x0", "[0x0,0x7)", "jumpi"]
