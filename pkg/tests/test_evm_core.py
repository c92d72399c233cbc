import pytest
from hypothesis import given, settings, strategies as st

from evmfix.concrete import (DEFAULT_GAS, ConcreteState, ExecutionEnv, GasTable, Halt,
                             run_concrete, sha3_words, step_concrete)
from evmfix.errors import (InvalidJumpTarget, ParseError, StackOverflow, StackUnderflow,
                           StepLimitExceeded, UnknownOpcode)
from evmfix.opcodes import OPCODES, SEMANTIC_MNEMONICS, SEMANTIC_TABLE, Rule
from evmfix.program import Instruction, decode_program

from conftest import load

MASK = (1 << 256) - 1
words = st.integers(min_value=0, max_value=MASK)


def instr(mnemonic, imm=None, pc=0):
    return Instruction(pc, OPCODES[mnemonic], imm)


def test_decode_four_opcodes():
    prog = decode_program("PUSH 0x05\nPUSH 0x06\nADD\nSTOP")
    assert list(prog.pcs) == [0, 1, 2, 3]
    trace, gas = run_concrete(prog)
    assert len(trace) == 4
    assert trace.final.stack == (11,)
    assert trace.halt == "STOP"


def test_decode_labels_and_comments():
    prog = decode_program("# header\nPUSH @end\nJUMP\n@end:\nJUMPDEST  # landing\nSTOP\n")
    assert prog[0].immediate == 2
    assert prog[2].mnemonic == "JUMPDEST"


@pytest.mark.parametrize("text", ["", "   \n# only a comment\n"])
def test_decode_empty(text):
    with pytest.raises(ParseError):
        decode_program(text)


def test_decode_unknown():
    with pytest.raises(UnknownOpcode) as exc:
        decode_program("PUSH 0x01\nFOO\n")
    assert "FOO" in str(exc.value)


@pytest.mark.parametrize("text", ["PUSH\n", "ADD 0x01\n", "PUSH @nowhere\n", "PUSH 0xZZ\n",
                                  "@a:\nSTOP\n@a:\nSTOP\n", "PUSH 0x" + "f" * 65 + "\n"])
def test_decode_malformed(text):
    with pytest.raises(ParseError):
        decode_program(text)


def test_add_example():
    s = step_concrete(ConcreteState(stack=(6, 5)), instr("ADD"))
    assert s.stack == (11,) and s.pc == 1


def test_pop_example():
    assert step_concrete(ConcreteState(stack=(7,)), instr("POP")).stack == ()


def test_underflow():
    with pytest.raises(StackUnderflow):
        step_concrete(ConcreteState(stack=()), instr("ADD"))


def test_overflow():
    with pytest.raises(StackOverflow):
        step_concrete(ConcreteState(stack=(0,) * 1024), instr("PUSH", 1))


def test_jumpi_both_ways():
    prog = decode_program("PUSH 0x01\nPUSH 0x05\nJUMPI\nSTOP\nSTOP\nJUMPDEST\nSTOP")
    j = prog[2]
    taken = step_concrete(ConcreteState(pc=2, stack=(5, 1)), j, program=prog)
    fall = step_concrete(ConcreteState(pc=2, stack=(5, 0)), j, program=prog)
    assert taken.pc == 5 and fall.pc == 3
    with pytest.raises(InvalidJumpTarget):
        step_concrete(ConcreteState(pc=2, stack=(99, 1)), j, program=prog)


def test_call_result_stub():
    env = ExecutionEnv(call_results=[0, 7])
    a = step_concrete(ConcreteState(stack=(0,) * 7), instr("CALL"), env)
    b = step_concrete(ConcreteState(stack=(0,) * 7, calls=1), instr("CALL"), env)
    assert a.stack[0] == 0 and a.calls == 1
    assert b.stack[0] == 7
    # past the stub list the default is success
    c = step_concrete(ConcreteState(stack=(0,) * 7, calls=5), instr("CALL"), env)
    assert c.stack[0] == 1


def test_step_limit():
    prog = decode_program("@top:\nJUMPDEST\nPUSH @top\nJUMP\n")
    with pytest.raises(StepLimitExceeded):
        run_concrete(prog, step_limit=50)


def test_absent_keys_read_zero():
    prog = decode_program("PUSH 0x40\nMLOAD\nPUSH 0x07\nSLOAD\nSTOP")
    trace, _ = run_concrete(prog)
    assert trace.final.stack == (0, 0)


def test_memory_word_granular():
    prog = decode_program("PUSH 0x1234\nPUSH 0x00\nMSTORE8\nPUSH 0x00\nMLOAD\nSTOP")
    trace, _ = run_concrete(prog)
    assert trace.final.stack == (0x34,)


def test_sha3_equal_ranges():
    prog = decode_program("PUSH 0x2a\nPUSH 0x00\nMSTORE\nPUSH 0x2a\nPUSH 0x40\nMSTORE\n"
                          "PUSH 0x20\nPUSH 0x00\nSHA3\nPUSH 0x20\nPUSH 0x40\nSHA3\nSTOP")
    trace, _ = run_concrete(prog)
    a, b = trace.final.stack
    assert a == b == sha3_words([0x2A])


# -- guarded transfer: three nested conditions, two stores -----------------

def _guarded_env(balance, value=10):
    sender, to = 0xA11CE, 0xB0B
    return ExecutionEnv(calldata=[0, to, value], caller=sender,
                        storage={sha3_words([sender, 0]): balance})


def test_guarded_transfer_sufficient():
    b = load("guarded_transfer")
    trace, _ = run_concrete(b.program, _guarded_env(100))
    stores = [s for s in trace.steps if s.mnemonic == "SSTORE"]
    assert len(stores) == 2
    assert trace.storage[sha3_words([0xA11CE, 0])] == 90
    assert trace.storage[sha3_words([0xB0B, 0])] == 10


def test_guarded_transfer_insufficient():
    b = load("guarded_transfer")
    trace, _ = run_concrete(b.program, _guarded_env(3))
    ops = [s.mnemonic for s in trace.steps]
    assert "SSTORE" not in ops
    # leaves through the second condition (the balance check)
    jumpis = [i for i, m in enumerate(ops) if m == "JUMPI"]
    assert len(jumpis) == 2
    assert trace.halt == "STOP"


# -- rule groups ------------------------------------------------------------

def test_partition():
    seen = {}
    for rule, names in SEMANTIC_TABLE.items():
        for n in names:
            assert n not in seen, f"{n} listed under {seen[n]} and {rule}"
            seen[n] = rule
    assert set(seen) == SEMANTIC_MNEMONICS
    assert len(SEMANTIC_MNEMONICS) == 85
    assert all(OPCODES[n].rule is r for n, r in seen.items())
    assert OPCODES["SELFDESTRUCT"].rule is Rule.STOP
    assert {OPCODES[f"DUP{i}"].index for i in range(1, 17)} == set(range(1, 17))
    assert {OPCODES[f"SWAP{i}"].index for i in range(1, 17)} == set(range(1, 17))


@pytest.mark.parametrize("mnemonic", sorted(OPCODES))
def test_stack_discipline(mnemonic):
    op = OPCODES[mnemonic]
    depth = 20
    state = ConcreteState(stack=tuple(range(1, depth + 1)))
    i = instr(mnemonic, 1 if op.rule is Rule.PUSH else None)
    if op.rule in (Rule.JUMP, Rule.JUMPI):
        state = ConcreteState(stack=(0,) + tuple(range(1, depth)))
    out = step_concrete(state, i)
    if op.rule is Rule.STOP:
        assert isinstance(out, Halt)
        return
    assert len(out.stack) - depth == op.pushes - op.pops


@given(words, words)
def test_binary_wraps(a, b):
    s = step_concrete(ConcreteState(stack=(a, b)), instr("ADD"))
    assert s.stack == ((a + b) & MASK,)
    s = step_concrete(ConcreteState(stack=(a, b)), instr("SUB"))
    assert s.stack == ((a - b) & MASK,)


@settings(max_examples=30, deadline=None)
@given(st.lists(words, min_size=1, max_size=6))
def test_determinism(vals):
    lines = [f"PUSH {v:#x}" for v in vals] + ["DUP1", "ADD", "SSTORE" if len(vals) > 1 else "POP", "STOP"]
    prog = decode_program("\n".join(lines))
    a, ga = run_concrete(prog)
    b, gb = run_concrete(prog)
    assert a.steps == b.steps and ga == gb


def test_gas_is_sum_of_costs():
    b = load("transfer_proxy")
    env = ExecutionEnv.from_json(b.transactions[0])
    trace, gas = run_concrete(b.program, env)
    assert gas == sum(DEFAULT_GAS(b.program[s.pc]) for s in trace.steps)


def test_gas_defaults():
    g = GasTable()
    assert g(instr("ADD")) == 3
    assert g(instr("SLOAD")) == 200
    assert g(instr("SSTORE")) == 5000
    assert g(instr("CALL")) == 700
    assert g(instr("SHA3")) == 30
    assert 8 <= g(instr("JUMP")) <= 10 and 8 <= g(instr("JUMPI")) <= 10
