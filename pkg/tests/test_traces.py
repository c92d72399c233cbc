import time

import pytest
from hypothesis import given, settings, strategies as st

from evmfix.analysis import analyze_bundle
from evmfix.cfg import static_cfg
from evmfix.errors import AnalysisTimeout
from evmfix.opcodes import HALTING
from evmfix.program import decode_program
from evmfix.traces import LoopBounds, compute_loop_bounds, enumerate_traces

from conftest import analysis, fixture_names, load
from oracles import count_paths, succ_map


def _head(bounds):
    [h] = bounds.loop_heads
    return h


def test_three_path_loop_bound():
    b = load("three_path_loop")
    bounds = compute_loop_bounds(b.program, static_cfg(b.program), b.sourcemap)
    assert bounds[_head(bounds)] == 5


def test_single_assignment_loop_bound():
    b = load("single_assignment_loop")
    bounds = compute_loop_bounds(b.program, static_cfg(b.program), b.sourcemap)
    assert bounds[_head(bounds)] == 1


@pytest.mark.parametrize("name", ["three_path_loop", "single_assignment_loop", "masburn"])
def test_non_loop_nodes_bound_one(name):
    b = load(name)
    cfg = static_cfg(b.program)
    bounds = compute_loop_bounds(b.program, cfg, b.sourcemap)
    outside = [n for n in cfg.nodes if n not in bounds.scc_of]
    assert outside and all(bounds[n] == 1 for n in outside)


def test_straight_line_bounds():
    prog = decode_program("PUSH 0x01\nPUSH 0x02\nSWAP1\nADD\nSTOP")
    bounds = compute_loop_bounds(prog)
    assert not bounds.loop_heads
    assert all(bounds[n] == 1 for n in prog.pcs)
    assert len(enumerate_traces(prog, bounds)) == 1


def test_one_branch_two_traces():
    prog = decode_program("PUSH 0x04\nCALLDATALOAD\nPUSH @a\nJUMPI\nSTOP\n@a:\nJUMPDEST\nSTOP")
    assert len(enumerate_traces(prog)) == 2


@pytest.mark.parametrize("name,expected", [("three_path_loop", 121), ("single_assignment_loop", 1)])
def test_trace_count_matches_brute_force(name, expected):
    b = load(name)
    res = analysis(name)
    cfg = static_cfg(b.program)
    budget = {h: res.bounds.budget(h) for h in res.bounds.loop_heads}
    brute = count_paths(succ_map(cfg), cfg.entry, budget)
    assert len(res.traces) == brute == expected


def test_head_visits_three_path_loop():
    res = analysis("three_path_loop")
    h = _head(res.bounds)
    visits = [tr.pcs.count(h) for tr in res.traces]
    assert max(visits) == 5 and min(visits) == 1


@pytest.mark.parametrize("name", fixture_names())
def test_budgets_and_maximality(name):
    res = analysis(name)
    assert not res.timed_out
    for tr in res.traces:
        for h in res.bounds.loop_heads:
            assert tr.pcs.count(h) <= res.bounds.budget(h)
        assert tr.steps[-1].mnemonic in HALTING


def test_cap_truncates():
    b = load("three_path_loop")
    res = analyze_bundle(b, loop_cap=2)
    assert res.traces.truncated
    h = _head(res.bounds)
    assert all(tr.pcs.count(h) <= 2 for tr in res.traces)
    assert len(res.traces) == 1 + 3  # zero or one iteration


def test_zero_bound_still_enters_head():
    # a loop with no counted assignment: budget clamps to one visit
    bounds = LoopBounds({5: 0}, frozenset({5}))
    assert bounds.budget(5) == 1


def test_timeout_partial():
    b = load("explode")
    t0 = time.monotonic()
    with pytest.raises(AnalysisTimeout) as exc:
        enumerate_traces(b.program, compute_loop_bounds(b.program), timeout=0.5)
    assert time.monotonic() - t0 < 1.5
    assert exc.value.partial.timed_out and len(exc.value.partial) > 0


# -- bound oracle on generated loops ----------------------------------------
# body = list of items; item is "A" (one assignment) or ("B", left, right)

body = st.recursive(
    st.lists(st.just("A"), max_size=3),
    lambda inner: st.lists(st.one_of(st.just("A"), st.tuples(st.just("B"), inner, inner)),
                           max_size=3),
    max_leaves=8,
)


def _rules(seq, tail=0):
    """Hand application of the bound rules, walking the body backwards.

    ``tail`` is the bound of whatever follows ``seq``; the back edge itself
    contributes 0. An assignment adds one, a branch sums both arms.
    """
    for item in reversed(seq):
        if item == "A":
            tail += 1
        else:
            tail = _rules(item[1], tail) + _rules(item[2], tail)
    return tail


class _Asm:
    def __init__(self):
        self.lines, self.n = [], 0

    def label(self):
        self.n += 1
        return f"L{self.n}"

    def seq(self, items):
        for item in items:
            if item == "A":
                self.lines += ["PUSH 0x04", "CALLDATALOAD", "SWAP1", "POP"]
            else:
                other, join = self.label(), self.label()
                self.lines += ["PUSH 0x24", "CALLDATALOAD", f"PUSH @{other}", "JUMPI"]
                self.seq(item[1])
                self.lines += [f"PUSH @{join}", "JUMP", f"@{other}:", "JUMPDEST"]
                self.seq(item[2])
                self.lines += [f"@{join}:", "JUMPDEST"]


def loop_program(items):
    a = _Asm()
    a.lines = ["PUSH 0x00", "@head:", "JUMPDEST", "PUSH 0x44", "CALLDATALOAD", "ISZERO",
               "PUSH @exit", "JUMPI"]
    a.seq(items)
    a.lines += ["PUSH @head", "JUMP", "@exit:", "JUMPDEST", "STOP"]
    return decode_program("\n".join(a.lines))


def _head_bound(items):
    prog = loop_program(items)
    bounds = compute_loop_bounds(prog)
    return bounds[_head(bounds)]


@settings(max_examples=60, deadline=None)
@given(body)
def test_bound_matches_rules(items):
    assert _head_bound(items) == _rules(items)


def test_rules_oracle_on_three_paths():
    # if/else-if/else with 2, 2 and 1 assignments
    assert _rules([("B", ["A", "A"], [("B", ["A", "A"], ["A"])])]) == 5


@settings(max_examples=60, deadline=None)
@given(body, st.data())
def test_bound_monotone(items, data):
    k = data.draw(st.integers(0, len(items)))
    bigger = items[:k] + ["A"] + items[k:]
    assert _head_bound(bigger) >= _head_bound(items)
