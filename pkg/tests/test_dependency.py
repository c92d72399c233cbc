import pytest
from hypothesis import given, settings, strategies as st

from evmfix.concrete import ExecutionEnv, sha3_words
from evmfix.dependency import (UNRESOLVABLE, AddressRange, DependencyContext, address_range,
                               closure_of, data_deps, full_dependency, occurrence_pcs,
                               oracle_data_deps, ranges_intersect, same_base, stack_taint)
from evmfix.errors import OracleBudgetExceeded
from evmfix.program import decode_program
from evmfix.symbolic import Concrete, Node
from evmfix.traces import enumerate_traces

from conftest import analysis, fixture_names, load
from envgen import samples, soundness_violations
from test_cfg import _guard_points

C = Concrete


def sha(*words):
    return Node("SHA3", (Node("MLOAD", tuple(words)),))


def reader_deps(res, pc):
    occs = set()
    ctx = DependencyContext(res.traces)
    for tr in res.traces:
        for s in tr.steps:
            if s.pc == pc:
                occs |= data_deps(tr, s.pos, res.traces, ctx)
    return occurrence_pcs(res.traces, occs)


def by_text(name):
    b = load(name)
    return {(b.source[e.start:e.start + e.length], b.program[e.pc].mnemonic): e.pc
            for e in b.sourcemap}


# -- address ranges -----------------------------------------------------------

def test_constant_address():
    assert address_range(C(5)) == AddressRange(C(5))


def test_sha3_plus_offsets():
    base = sha(C(0), C(1))
    assert address_range(Node("ADD", (base, C(3)))) == AddressRange(base, 3, 3)
    nested = Node("ADD", (C(1), Node("ADD", (base, C(3)))))
    assert address_range(nested) == AddressRange(base, 4, 4)


def test_array_index_is_open_ended():
    base = sha(C(6))
    idx = Node("CALLDATALOAD", (C(4),))
    rng = address_range(Node("ADD", (base, idx)))
    assert rng.base == base and rng.lo == 0 and rng.hi >= 1 << 255


def test_unresolvable():
    k = Node("CALLDATALOAD", (C(4),))
    assert address_range(Node("MUL", (k, C(2)))) is UNRESOLVABLE
    assert address_range(k) is UNRESOLVABLE


def test_intersections():
    base = sha(C(0), C(1))
    a, b = AddressRange(base, 0, 0), AddressRange(base, 1, 1)
    assert ranges_intersect(a, a)
    assert not ranges_intersect(a, b)
    assert ranges_intersect(a, b, size_a=2)
    assert not ranges_intersect(AddressRange(C(0)), AddressRange(C(32)), 32, 32)
    assert ranges_intersect(AddressRange(C(0)), AddressRange(C(31)), 32, 32)
    # constant slot vs hashed slot never alias
    assert not ranges_intersect(AddressRange(C(0)), a)


def test_unresolvable_follows_flag():
    r = AddressRange(C(0))
    assert ranges_intersect(UNRESOLVABLE, r, over_approx=True)
    assert not ranges_intersect(UNRESOLVABLE, r, over_approx=False)


def test_same_base_tags():
    x = Node("SHA3", (Node("MLOAD", (C(0), C(64))),), ("bal", None))
    y = Node("SHA3", (Node("MLOAD", (C(0), C(64))),), ("bal", 7))
    z = Node("SHA3", (Node("MLOAD", (C(0), C(64))),), ("other", 7))
    assert same_base(x, y) and not same_base(y, z)


def test_bad_range():
    with pytest.raises(ValueError):
        AddressRange(C(0), 3, 1)


@given(st.integers(0, 1000), st.integers(0, 1000), st.integers(1, 64), st.integers(1, 64))
def test_constant_overlap_matches_sets(a, b, n, m):
    expect = bool(set(range(a, a + n)) & set(range(b, b + m)))
    assert ranges_intersect(AddressRange(C(a)), AddressRange(C(b)), n, m) == expect


# -- stack flow -----------------------------------------------------------------

def test_swap_taint():
    prog = decode_program("PUSH 0x04\nCALLDATALOAD\nPUSH 0x00\nSWAP1\nPOP\nPUSH 0x01\nADD\nSTOP")
    tr = enumerate_traces(prog)[0]
    add = next(s.pos for s in tr.steps if s.mnemonic == "ADD")
    taint = stack_taint(tr, add)
    # the POP drops the calldata word; ADD sees the swapped-down 0 and the 1
    assert {p for p, _ in taint} == {2, 3, 5}
    deps = data_deps(tr, add, [tr])
    assert {p for _, p in deps} == {3}


def test_memory_roundtrip():
    prog = decode_program("PUSH 0x04\nCALLDATALOAD\nPUSH 0x80\nMSTORE\nPUSH 0x80\nMLOAD\nSTOP")
    tr = enumerate_traces(prog)[0]
    mload = next(s.pos for s in tr.steps if s.mnemonic == "MLOAD")
    assert {p for _, p in data_deps(tr, mload, [tr])} == {3}


def test_storage_across_traces():
    # one branch writes a hashed slot, the other reads the same slot
    text = """\
PUSH 0x04
CALLDATALOAD
PUSH 0x00
MSTORE
PUSH 0x24
CALLDATALOAD
PUSH @read
JUMPI
PUSH 0x07
PUSH 0x20
PUSH 0x00
SHA3
SSTORE
STOP
@read:
JUMPDEST
PUSH 0x20
PUSH 0x00
SHA3
SLOAD
STOP
"""
    prog = decode_program(text)
    traces = enumerate_traces(prog)
    reader = next(tr for tr in traces if any(s.mnemonic == "SLOAD" for s in tr.steps))
    pos = next(s.pos for s in reader.steps if s.mnemonic == "SLOAD")
    got = occurrence_pcs(traces, data_deps(reader, pos, traces))
    assert 12 in got


# -- the soundness oracle ------------------------------------------------------

@pytest.mark.parametrize("name", fixture_names())
def test_oracle_within_data_deps(name):
    bad, _, _ = soundness_violations(name)
    assert bad == []


def test_oracle_finds_edges_somewhere():
    # guards against a vacuous check: the oracle must see real flows
    _, edges, n = soundness_violations("guarded_transfer")
    assert n > 0 and edges > 20


def test_disjoint_slots_empty():
    b, res = load("disjoint_slots"), analysis("disjoint_slots")
    names = by_text("disjoint_slots")
    store_b = names[("b = 1", "SSTORE")]
    envs = samples(b, res.traces)
    call = names[('msg.sender.call.value(a)("")', "CALL")]
    assert oracle_data_deps(b.program, call, envs) == frozenset()
    assert store_b not in reader_deps(res, call)


def test_scaled_slot_strict_superset():
    b, res = load("scaled_slot"), analysis("scaled_slot")
    names = by_text("scaled_slot")
    put, get = names[("sstore(mul(k, 2), v)", "SSTORE")], names[("sload(4)", "SLOAD")]
    envs = samples(b, res.traces)
    oracle = oracle_data_deps(b.program, get, envs)
    mine = reader_deps(res, get)
    assert put in mine
    # the oracle only sees k = 2; data_deps keeps the edge regardless of k
    assert oracle <= mine
    quiet = [[ExecutionEnv(calldata=[0xB8E010DE, 3, 9]), ExecutionEnv(calldata=[0x6D4CE63C])]]
    assert put not in oracle_data_deps(b.program, get, quiet)


def test_oracle_budget():
    b = load("guarded_transfer")
    envs = samples(b, analysis("guarded_transfer").traces)
    with pytest.raises(OracleBudgetExceeded):
        oracle_data_deps(b.program, 22, envs, budget=3)


# -- guarded transfer ------------------------------------------------------------

def test_guarded_cross_trace_storage_edges():
    res = analysis("guarded_transfer")
    _, isz1, isz2, s3, s4 = _guard_points()
    for r in (isz1, isz2):
        got = reader_deps(res, r)
        assert {s3, s4} <= got
    # some trace reads at ISZERO1 without executing SSTORE3 itself
    ctx = DependencyContext(res.traces)
    lone = next(tr for tr in res.traces if isz1 in tr.pcs and s3 not in tr.pcs)
    occ = data_deps(lone, lone.pcs.index(isz1), res.traces, ctx)
    assert any(ctx.pc(o) == s3 for o in occ)


def test_guarded_oracle_agrees():
    b = load("guarded_transfer")
    prog = b.program
    _, isz1, isz2, s3, s4 = _guard_points()
    a, c = 0xA11CE, 0xB0B
    pre = {sha3_words([a, 0]): 100, sha3_words([c, 0]): 100}

    def tx(sender, to, **kw):
        return ExecutionEnv(calldata=[0, to, 10], caller=sender, **kw)

    # pay back and pay twice: each store reaches the other transfer's reads
    envs = [[tx(a, c, storage=pre), tx(c, a)], [tx(a, c, storage=pre), tx(a, c)]]
    loads = [i.pc for i in prog if i.mnemonic == "SLOAD" and i.pc < isz2]
    first = [p for p in loads if p < isz1]
    second = [p for p in loads if isz1 < p]
    assert first and second
    for group in (first, second):
        found = set()
        for r in group:
            found |= oracle_data_deps(prog, r, envs)
        assert {s3, s4} <= found
        res = analysis("guarded_transfer")
        mine = set()
        for r in group:
            mine |= reader_deps(res, r)
        assert found <= mine


def test_write_after_call_counter_not_a_call_dependency():
    res = analysis("write_after_call")
    names = by_text("write_after_call")
    call = names[('msg.sender.call.value(amount)("")', "CALL")]
    counter = names[("numWithdraw = numWithdraw + 1", "SSTORE")]
    assert not res.dp.depends(call, counter)
    assert counter not in reader_deps(res, call)


# -- the closure -----------------------------------------------------------------

@pytest.mark.parametrize("name", ["guarded_transfer", "bank", "masburn", "three_path_loop"])
def test_closure_matches_reference(name):
    dp = analysis(name).dp
    ref = closure_of(dp.edges)
    assert {k: v for k, v in dp.closure.items()} == ref


@pytest.mark.parametrize("name", ["bank", "fees"])
def test_closure_kernels_agree(name):
    res = analysis(name)
    a = full_dependency(res.traces, res.cds, use_numba=True)
    b = full_dependency(res.traces, res.cds, use_numba=False)
    assert a.closure == b.closure


def test_closure_transitive_and_idempotent():
    dp = analysis("bank").dp
    for a, deps in dp.closure.items():
        for b in deps:
            assert dp.closure.get(b, frozenset()) <= deps
    again = closure_of({(a, b) for a, deps in dp.closure.items() for b in deps})
    assert {a: d for a, d in again.items() if d} == {a: d for a, d in dp.closure.items() if d}


@pytest.mark.parametrize("name", ["scaled_slot", "masburn", "bank"])
def test_over_approx_monotone(name):
    res = analysis(name)
    loose = full_dependency(res.traces, res.cds, over_approx=True)
    tight = full_dependency(res.traces, res.cds, over_approx=False)
    for pc, deps in tight.closure.items():
        assert deps <= loose.closure.get(pc, frozenset())


def test_scaled_slot_needs_over_approx():
    res = analysis("scaled_slot")
    names = by_text("scaled_slot")
    put, get = names[("sstore(mul(k, 2), v)", "SSTORE")], names[("sload(4)", "SLOAD")]
    loose = full_dependency(res.traces, res.cds, over_approx=True)
    tight = full_dependency(res.traces, res.cds, over_approx=False)
    assert loose.depends(get, put) and not tight.depends(get, put)


def test_path_is_real_edges():
    dp = analysis("guarded_transfer").dp
    _, isz1, _, s3, _ = _guard_points()
    path = dp.path(s3, isz1)
    assert path[0] == s3 and path[-1] == isz1
    assert all((a, b) in dp.edges for a, b in zip(path, path[1:]))


def test_edge_list_kinds():
    items = analysis("guarded_transfer").dp.edge_list()
    assert {e["kind"] for e in items} == {"data", "control"}
    assert items == sorted(items, key=lambda e: (e["from_pc"], e["to_pc"], e["kind"]))


def test_address_stats():
    stats = analysis("scaled_slot").dp.stats.to_json()
    assert stats["SSTORE"]["failed"] >= 1
    assert stats["SLOAD"]["resolved"] >= 1
    bank = analysis("bank").dp.stats
    assert bank.rate("SLOAD") == 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7)), max_size=25))
def test_random_closure(edges):
    from evmfix.dependency import _closure
    edges = {e: {"data"} for e in edges}
    for use in (True, False):
        assert _closure(edges, use) == {k: v for k, v in closure_of(edges).items()}


def test_sample_generation_is_seeded():
    b, res = load("bank"), analysis("bank")
    a = samples(b, res.traces, seed=3)
    c = samples(b, res.traces, seed=3)
    assert [[e.calldata for e in s] for s in a] == [[e.calldata for e in s] for s in c]
