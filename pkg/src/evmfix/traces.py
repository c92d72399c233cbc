"""Loop bounds and bounded enumeration of maximal symbolic traces."""

from dataclasses import dataclass, field, replace
import time

import networkx as nx

from .cfg import static_cfg
from .errors import AnalysisTimeout, StepLimitExceeded
from .opcodes import Rule
from .symbolic import SymbolicState, step_symbolic, steps_of

DEFAULT_CAP = 50


@dataclass(frozen=True)
class LoopBounds:
    bound: dict  # pc -> visit budget
    loop_heads: frozenset
    cap: int = DEFAULT_CAP
    scc_of: dict = field(default_factory=dict, compare=False)  # pc -> scc index, loop nodes only

    def budget(self, pc):
        return max(1, min(self.bound.get(pc, 1), self.cap))

    def __getitem__(self, pc):
        return self.bound.get(pc, 1)


def assignment_pcs(program, cfg, sourcemap=None):
    """Instructions that count as assignments when bounding loops.

    SWAP counts when the source maps it to an assignment; MSTORE counts
    unless it stores a literal. Storage writes never count.
    """
    kinds = {}
    if sourcemap is not None:
        kinds = {e.pc: e.node for e in sourcemap}
    out = set()
    for pc in cfg.nodes:
        instr = program[pc]
        if pc in cfg.constant_assignments:
            continue
        if instr.op.rule is Rule.SWAP:
            if sourcemap is None or kinds.get(pc, "").startswith("Assignment"):
                out.add(pc)
        elif instr.op.rule is Rule.MSTORE:
            out.add(pc)
    return frozenset(out)


def _loop_structure(cfg):
    g = nx.DiGraph()
    g.add_nodes_from(cfg.nodes)
    g.add_edges_from(cfg.edges)
    scc_of = {}
    for k, comp in enumerate(nx.strongly_connected_components(g)):
        if len(comp) > 1 or any(g.has_edge(n, n) for n in comp):
            for n in comp:
                scc_of[n] = k
    return scc_of, _back_edges(cfg)


def _back_edges(cfg):
    """Edges into a node still on the DFS stack."""
    back = set()
    on_stack, done = set(), set()
    roots = [cfg.entry] + sorted(cfg.nodes)
    for root in roots:
        if root in done or root not in cfg.nodes:
            continue
        on_stack.add(root)
        stack = [(root, iter(cfg.succ[root]))]
        while stack:
            v, it = stack[-1]
            for m in it:
                if m in on_stack:
                    back.add((v, m))
                elif m not in done:
                    on_stack.add(m)
                    stack.append((m, iter(cfg.succ[m])))
                    break
            else:
                stack.pop()
                on_stack.discard(v)
                done.add(v)
    return back


def compute_loop_bounds(program, cfg=None, sourcemap=None, cap=DEFAULT_CAP):
    """Per-location bounds by fixpoint over the CFG minus back edges."""
    if cfg is None:
        cfg = static_cfg(program)
    assigns = assignment_pcs(program, cfg, sourcemap)
    scc_of, back = _loop_structure(cfg)
    heads = frozenset(b for _, b in back)
    bound = {n: 1 for n in cfg.nodes}
    loop_nodes = [n for n in sorted(cfg.nodes) if n in scc_of]
    for n in loop_nodes:
        bound[n] = 0
    changed = True
    while changed:
        changed = False
        for n in reversed(loop_nodes):
            new = _rule(n, cfg, bound, assigns, scc_of, back)
            if new != bound[n]:
                bound[n] = new
                changed = True
    return LoopBounds(bound, heads, cap, scc_of)


def _rule(n, cfg, bound, assigns, scc_of, back):
    a = 1 if n in assigns else 0
    succs = cfg.succ[n]
    if len(succs) > 1:
        return sum(bound[m] for m in succs
                   if scc_of.get(m) == scc_of[n] and (n, m) not in back)
    if not succs:
        return a
    m = succs[0]
    if (n, m) in back:
        return a
    return bound[m] + a


@dataclass(frozen=True)
class Trace:
    id: int
    steps: tuple
    final: SymbolicState

    @property
    def pcs(self):
        return [s.pc for s in self.steps]

    @property
    def halt(self):
        return self.final.halted

    def __len__(self):
        return len(self.steps)

    def to_json(self):
        return {"id": self.id, "halt": self.halt,
                "steps": [{"pos": s.pos, "pc": s.pc, "op": s.mnemonic,
                           "result": None if s.result is None else repr(s.result)}
                          for s in self.steps]}


@dataclass
class TraceSet:
    traces: list
    truncated: bool = False
    bounds: LoopBounds | None = None
    timed_out: bool = False

    def __iter__(self):
        return iter(self.traces)

    def __len__(self):
        return len(self.traces)

    def __getitem__(self, i):
        return self.traces[i]


def enumerate_traces(program, bounds=None, timeout=None, step_limit=200_000):
    """Depth-first enumeration of maximal traces under per-head budgets.

    A path that would enter a loop head beyond its budget is dropped. When a
    loop's continuation is decided by a concrete condition, the exit branch
    is also explored (``forced``) on the last permitted iteration so such
    loops still yield maximal traces.
    """
    if bounds is None:
        bounds = compute_loop_bounds(program)
    heads = bounds.loop_heads
    head_scc = {}
    for h in heads:
        head_scc.setdefault(bounds.scc_of.get(h), []).append(h)
    deadline = None if timeout is None else time.monotonic() + timeout
    truncated = False
    found = []
    work = [(SymbolicState(pc=program.entry), {})]
    ticks = 0
    while work:
        state, counts = work.pop()
        ticks += 1
        if deadline is not None and ticks % 256 == 0 and time.monotonic() > deadline:
            raise AnalysisTimeout(timeout, _finish(found, truncated, bounds, True))
        if state.depth > step_limit:
            raise StepLimitExceeded(step_limit, steps_of(state))
        pc = state.pc
        if pc in heads:
            seen = counts.get(pc, 0)
            if seen >= bounds.budget(pc):
                continue
            if bounds[pc] > bounds.cap:
                truncated = True
            counts = {**counts, pc: seen + 1}
        instr = program[pc]
        nexts = step_symbolic(state, instr, program)
        if instr.op.rule is Rule.JUMPI and len(nexts) == 1:
            forced = _forced_exit(state, instr, nexts[0], counts, bounds, head_scc, program)
            if forced is not None:
                nexts.append(forced)
        for nxt in reversed(nexts):
            if nxt.halted:
                found.append(nxt)
            elif nxt.pc not in program:
                # running off the end behaves like STOP
                found.append(nxt)
            else:
                work.append((nxt, counts))
    return _finish(found, truncated, bounds, False)


def _forced_exit(state, instr, taken, counts, bounds, head_scc, program):
    scc = bounds.scc_of.get(instr.pc)
    if scc is None:
        return None
    if not any(counts.get(h, 0) >= bounds.budget(h) for h in head_scc.get(scc, ())):
        return None
    other = state.pc + 1 if taken.pc != state.pc + 1 else state.stack[0].value
    if other not in program or bounds.scc_of.get(other) == scc:
        return None
    step = taken.trail[0]
    flipped = replace(step, branch=not step.branch, forced=True)
    return replace(taken, pc=other, trail=(flipped, taken.trail[1]))


def _finish(found, truncated, bounds, timed_out):
    traces = []
    for i, st in enumerate(found):
        traces.append(Trace(i, tuple(steps_of(st)), st))
    return TraceSet(traces, truncated, bounds, timed_out)
