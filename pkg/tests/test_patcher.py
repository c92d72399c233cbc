import sys
from dataclasses import replace
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from evmfix.concrete import ExecutionEnv, run_concrete
from evmfix.detectors import ARITH, VulnerabilityReport
from evmfix.errors import SanityCheckFailed, SpanConflict, SpanOutOfBounds, UnmappedReport
from evmfix.patcher import (INJECT_HELPER, INSERT_MODIFIER, LOCK_VAR, MODIFIER, REPLACE_CALL,
                            REPLACE_IDENTIFIER, TEMPLATES, Edit, PatchPlan, apply_patches,
                            contract_end, plan_fixes, rewrite_arithmetic, sanity_check,
                            verify_fixed)
from evmfix.program import decode_program

from conftest import FIXTURES, analysis, fixture_names, load
from oracles import BOUNDARY, MASK, checked

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tools"))
from emitter import Emitter  # noqa: E402

PAIRS = ["bank", "wallet", "masburn", "transfer_proxy", "fees", "tip"]
OPS = ("ADD", "SUB", "MUL", "DIV", "EXP")


def fix(name):
    b, res = load(name), analysis(name)
    return apply_patches(b.source, plan_fixes(res.reports, b, res.dp))


# -- golden repairs ------------------------------------------------------------

@pytest.mark.parametrize("name", PAIRS)
def test_golden(name):
    assert fix(name) == (FIXTURES / "golden" / f"{name}.fixed.sol").read_text()


@pytest.mark.parametrize("name", PAIRS)
def test_fixed_source_matches_fixed_bundle(name):
    assert fix(name) == load(f"{name}.fixed").source


def test_bank_plan_kinds():
    b, res = load("bank"), analysis("bank")
    plan = plan_fixes(res.reports, b, res.dp)
    assert plan.kinds().count(INSERT_MODIFIER) == 2
    assert plan.kinds().count(REPLACE_CALL) == 1
    assert plan.kinds()[-1] == INJECT_HELPER


def test_single_modifier_definition():
    text = fix("bank")
    assert text.count(f"modifier {MODIFIER}") == 1
    assert text.count(f"bool private {LOCK_VAR}") == 1
    # the lock sits after every existing state variable
    assert text.index(LOCK_VAR) > text.index("mapping(address => uint) private balances")


def test_guarded_function_not_modified_twice():
    b, res = load("bank_guarded"), analysis("bank_guarded")
    plan = plan_fixes(res.reports, b, res.dp)
    headers = [e for e in plan.edits if e.kind == INSERT_MODIFIER]
    assert len(headers) == 1
    # the existing modifier definition is reused, not injected again
    assert apply_patches(b.source, plan).count(f"modifier {MODIFIER}") == 1


def test_wallet_identifier():
    b, res = load("wallet"), analysis("wallet")
    plan = plan_fixes(res.reports, b, res.dp)
    assert plan.kinds() == [REPLACE_IDENTIFIER]
    assert "tx.origin" not in apply_patches(b.source, plan)


def test_empty_plan_is_identity():
    b = load("write_after_call")
    plan = plan_fixes([], b)
    assert not plan and apply_patches(b.source, plan) == b.source


@pytest.mark.parametrize("name", PAIRS)
def test_second_round_is_noop(name):
    fixed = load(f"{name}.fixed")
    res = analysis(f"{name}.fixed")
    plan = plan_fixes(res.reports, fixed, res.dp)
    assert not plan
    assert apply_patches(fixed.source, plan) == fixed.source


def test_already_safe_call_not_wrapped_again():
    # point the ADD of the original at a call site that is already wrapped
    b = load("tip")
    fixed_src = load("tip.fixed").source
    at = fixed_src.index("add_uint256(a, b)")
    (r,) = analysis("tip").reports
    pc = r.culprit_pcs[0]
    entries = [replace(e, start=at, length=len("add_uint256(a, b)")) if e.pc == pc else e
               for e in b.sourcemap]
    wrapped = replace(b, source=fixed_src, sourcemap=entries)
    assert not plan_fixes([r], wrapped)


# -- rewriting ------------------------------------------------------------------------

@pytest.mark.parametrize("text,op,node,out", [
    ("a - b", "SUB", "BinaryOperation", "sub_uint256(a, b)"),
    ("a + b", "ADD", "BinaryOperation", "add_uint256(a, b)"),
    ("a * b", "MUL", "BinaryOperation", "mul_uint256(a, b)"),
    ("a / rate", "DIV", "BinaryOperation", "div_uint256(a, rate)"),
    ("a ** b", "EXP", "BinaryOperation", "exp_uint256(a, b)"),
    ("x -= y", "SUB", "Assignment", "x = sub_uint256(x, y)"),
    ("i--", "SUB", "UnaryOperation", "i = sub_uint256(i, 1)"),
    ("++n", "ADD", "UnaryOperation", "n = add_uint256(n, 1)"),
    ("a - b - c", "SUB", "BinaryOperation", "sub_uint256(a - b, c)"),
    ("f(a - b) + c", "ADD", "BinaryOperation", "add_uint256(f(a - b), c)"),
    ("x[i] += a <= b ? 1 : 2", "ADD", "Assignment", "x[i] = add_uint256(x[i], a <= b ? 1 : 2)"),
])
def test_rewrite(text, op, node, out):
    assert rewrite_arithmetic(text, op, node) == out


def test_rewrite_missing_operator():
    with pytest.raises(UnmappedReport):
        rewrite_arithmetic("a + b", "SUB", "BinaryOperation")


def test_nested_edits_compose():
    src = "contract C {\n    function f(uint a, uint b, uint c) public { g(a + b - c); }\n}\n"
    outer = src.index("a + b - c")
    inner = src.index("a + b")
    plan = PatchPlan([
        Edit(REPLACE_CALL, outer, len("a + b - c"), "sub_uint256(a + b, c)", op="SUB",
             node="BinaryOperation"),
        Edit(REPLACE_CALL, inner, len("a + b"), "add_uint256(a, b)", op="ADD",
             node="BinaryOperation"),
        Edit(INJECT_HELPER, contract_end(src), 0, TEMPLATES["ADD"].body + TEMPLATES["SUB"].body),
    ])
    out = apply_patches(src, plan)
    assert "g(sub_uint256(add_uint256(a, b), c));" in out


# -- failure modes -------------------------------------------------------------------

def test_span_conflict():
    src = "contract C { uint x; }"
    plan = PatchPlan([Edit(REPLACE_IDENTIFIER, 13, 4, "a"), Edit(REPLACE_IDENTIFIER, 15, 4, "b")])
    with pytest.raises(SpanConflict):
        apply_patches(src, plan)


def test_same_span_twice():
    src = "contract C { uint x; }"
    plan = PatchPlan([Edit(REPLACE_CALL, 13, 4, "a", op="ADD", node="BinaryOperation"),
                      Edit(REPLACE_IDENTIFIER, 13, 4, "b")])
    with pytest.raises(SpanConflict):
        apply_patches(src, plan)


def test_span_out_of_bounds():
    with pytest.raises(SpanOutOfBounds):
        apply_patches("contract C {}", PatchPlan([Edit(REPLACE_IDENTIFIER, 10, 40, "x")]))


@pytest.mark.parametrize("text", [
    "contract C { function f() public { g(; } }",
    "contract C { function f() public { add_uint256(1, 2); } }",
    "contract C { function f() nonReentrant public { } }",
])
def test_sanity_failures(text):
    with pytest.raises(SanityCheckFailed):
        sanity_check(text)


def test_unbalanced_patch_rejected():
    src = "contract C { function f() public { x = 1; } }"
    plan = PatchPlan([Edit(REPLACE_IDENTIFIER, src.index("x"), 1, "x)")])
    with pytest.raises(SanityCheckFailed):
        apply_patches(src, plan)


def test_unmapped_report():
    b = load("tip")
    with pytest.raises(UnmappedReport):
        plan_fixes([VulnerabilityReport(ARITH, 0, (1,))], b)


# -- re-verification ---------------------------------------------------------------

@pytest.mark.parametrize("name", PAIRS)
def test_fixed_verifies_clean(name):
    v = verify_fixed(load(f"{name}.fixed"), timeout=60)
    assert v.clean and v.status == "Clean"


@pytest.mark.parametrize("name", fixture_names("mutant"))
def test_mutant_not_clean(name):
    v = verify_fixed(load(name), timeout=60)
    assert v.status == "NotClean" and v.reports


def test_mutex_blocks_reentry():
    b = load("bank.fixed")
    tx = next(t for t in load("bank").transactions if "reentry" in t)
    tr, _ = run_concrete(b.program, ExecutionEnv.from_json(tx))
    assert tr.nested and tr.nested[0].reverted
    # without the guard the nested call goes through
    tr, _ = run_concrete(load("bank").program, ExecutionEnv.from_json(tx))
    assert tr.nested and not tr.nested[0].reverted


# -- safe-math templates ------------------------------------------------------------

@pytest.mark.parametrize("op", OPS)
def test_reference_exhaustive_8bit(op):
    tpl = TEMPLATES[op]
    for a in range(256):
        for b in range(256):
            reverts, result = checked(op, a, b, 8)
            assert tpl.reference(a, b, 8) == (None if reverts else result), (a, b)


@pytest.mark.parametrize("op", OPS)
def test_reference_boundaries_256(op):
    tpl = TEMPLATES[op]
    for a in BOUNDARY:
        for b in BOUNDARY:
            reverts, result = checked(op, a, b, 256)
            assert tpl.reference(a, b) == (None if reverts else result), (op, a, b)


HELPERS = "contract H {\n" + "".join(TEMPLATES[op].body for op in OPS) + "}\n"


def run_snippet(op, a, b):
    """Assemble the inlined checked sequence for ``a op b`` and run it."""
    e = Emitter(HELPERS)
    e.push(a)
    e.push(b)
    e.arith(op, safe=True)
    e.op("STOP")
    tr, _ = run_concrete(decode_program(e.assembly()))
    return None if tr.reverted else tr.final.stack[0]


@pytest.mark.parametrize("op", ("ADD", "SUB", "MUL", "DIV"))
def test_compiled_checks_boundaries(op):
    tpl = TEMPLATES[op]
    for a in BOUNDARY:
        for b in BOUNDARY:
            assert run_snippet(op, a, b) == tpl.reference(a, b), (op, a, b)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(("ADD", "SUB", "MUL", "DIV")),
       st.integers(0, MASK), st.integers(0, MASK))
def test_compiled_checks_random(op, a, b):
    assert run_snippet(op, a, b) == TEMPLATES[op].reference(a, b)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 1 << 20), st.integers(0, 600))
def test_exp_no_false_reverts(a, b):
    exact = a ** b if a < 2 or b * a.bit_length() <= 300 else None
    got = TEMPLATES["EXP"].reference(a, b)
    if exact is not None and exact <= MASK:
        assert got == exact
    if got is not None:
        assert got == pow(a, b)
