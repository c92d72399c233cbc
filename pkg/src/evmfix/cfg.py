"""Control-flow graphs, post-dominators and control dependency."""

from dataclasses import dataclass, field
from functools import cached_property
import logging

from . import kernels
from .errors import EmptyTraceSet, SymbolicJumpTarget
from .opcodes import HALTING, Rule

log = logging.getLogger(__name__)

SINK = -1


@dataclass(frozen=True)
class CFG:
    nodes: frozenset
    edges: frozenset
    entry: int = 0
    exits: frozenset = frozenset()
    # pcs of SWAP/MSTORE whose assigned value is always a literal (static CFGs only)
    constant_assignments: frozenset = field(default=frozenset(), compare=False)

    @cached_property
    def succ(self):
        out = {n: [] for n in self.nodes}
        for a, b in sorted(self.edges):
            out[a].append(b)
        return {n: tuple(s) for n, s in out.items()}

    @cached_property
    def pred(self):
        out = {n: [] for n in self.nodes}
        for a, b in sorted(self.edges):
            out[b].append(a)
        return {n: tuple(p) for n, p in out.items()}

    @cached_property
    def branches(self):
        return frozenset(n for n, s in self.succ.items() if len(s) > 1)

    def to_dot(self, program=None, name="cfg"):
        lines = [f"digraph {name} {{", "  node [shape=box, fontname=monospace];"]
        for n in sorted(self.nodes):
            label = str(n) if program is None else f"{n}: {program[n]}"
            shape = ", peripheries=2" if n in self.exits else ""
            lines.append(f'  n{n} [label="{label}"{shape}];')
        for a, b in sorted(self.edges):
            lines.append(f"  n{a} -> n{b};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def static_cfg(program, max_stacks_per_pc=256):
    """Over-approximate CFG of ``program`` by abstract stack interpretation.

    Only PUSH literals are tracked (moved by DUP/SWAP); everything else is
    unknown. Jump targets must resolve to literals.
    """
    start = (program.entry, ())
    seen = {program.entry: {()}}
    work = [start]
    edges = set()
    exits = set()
    nonconst = set()  # assignment pcs observed with a non-literal value
    assigns = set()
    while work:
        pc, stack = work.pop()
        instr = program[pc]
        op = instr.op
        rule = op.rule
        succs = []
        if rule is Rule.PUSH:
            succs.append((pc + 1, (instr.immediate,) + stack))
        elif rule is Rule.DUP:
            succs.append((pc + 1, (_at(stack, op.index - 1),) + stack))
        elif rule is Rule.SWAP:
            assigns.add(pc)
            if _at(stack, 0) is None:
                nonconst.add(pc)
            s = list(stack) + [None] * max(0, op.index + 1 - len(stack))
            s[0], s[op.index] = s[op.index], s[0]
            succs.append((pc + 1, tuple(s)))
        elif rule is Rule.JUMP or rule is Rule.JUMPI:
            target = _at(stack, 0)
            if target is None:
                raise SymbolicJumpTarget(pc, "unknown")
            rest = stack[op.pops:]
            if target in program:
                succs.append((target, rest))
            if rule is Rule.JUMPI and pc + 1 in program:
                succs.append((pc + 1, rest))
        elif op.mnemonic in HALTING:
            exits.add(pc)
        else:
            if rule is Rule.MSTORE:
                assigns.add(pc)
                if _at(stack, 1) is None:
                    nonconst.add(pc)
            succs.append((pc + 1, (None,) * op.pushes + stack[op.pops:]))
        for nxt, nstack in succs:
            if nxt not in program:
                exits.add(pc)
                continue
            edges.add((pc, nxt))
            nstack = nstack[:64]  # deeper slots never feed a jump in practice
            bucket = seen.setdefault(nxt, set())
            if nstack in bucket:
                continue
            if len(bucket) >= max_stacks_per_pc:
                log.warning("pc %d: abstract stack limit reached, widening", nxt)
                continue
            bucket.add(nstack)
            work.append((nxt, nstack))
    nodes = frozenset(seen)
    return CFG(nodes, frozenset(edges), program.entry, frozenset(exits),
               frozenset(assigns - nonconst))


def _at(stack, i):
    return stack[i] if i < len(stack) else None


def build_cfg(traces):
    """CFG whose nodes and edges are exactly those observed in ``traces``."""
    traces = list(traces)
    if not traces:
        raise EmptyTraceSet("no traces to build a CFG from")
    nodes, edges, exits = set(), set(), set()
    for tr in traces:
        pcs = tr.pcs
        nodes.update(pcs)
        edges.update(zip(pcs, pcs[1:]))
        if pcs:
            exits.add(pcs[-1])
    entry = traces[0].pcs[0] if traces[0].pcs else 0
    return CFG(frozenset(nodes), frozenset(edges), entry, frozenset(exits))


@dataclass(frozen=True)
class PostDomTree:
    pd: dict  # pc -> frozenset of pcs post-dominating it (itself included)

    def __getitem__(self, pc):
        return self.pd[pc]

    def postdominates(self, a, b):
        """True when ``a`` post-dominates ``b``."""
        return a in self.pd[b]


def post_dominators(cfg, use_numba=None):
    """Iterative post-dominator sets with a synthetic sink behind every exit."""
    order = sorted(cfg.nodes)
    index = {n: i for i, n in enumerate(order)}
    sink = len(order)
    succ = {}
    for n in order:
        s = [index[m] for m in cfg.succ[n]]
        if n in cfg.exits or not s:
            s.append(sink)
        succ[index[n]] = s
    n_all = sink + 1
    indptr, indices = kernels.to_csr(n_all, succ)
    roots = [index[cfg.entry]] if cfg.entry in index else None
    post = kernels.postorder(n_all, indptr, indices, roots)
    rows = kernels.postdom_bits(indptr, indices, post, use_numba=use_numba)
    pd = {}
    for n in order:
        members = kernels.row_members(rows[index[n]], n_all)
        pd[n] = frozenset(order[i] for i in members if i != sink)
    return PostDomTree(pd)


def static_control_deps(cfg, pdt):
    """pc -> branch pcs it is control dependent on (self-dependency excluded)."""
    deps = {n: set() for n in cfg.nodes}
    for b in cfg.branches:
        succs = cfg.succ[b]
        pds = [pdt[m] for m in succs]
        union = frozenset().union(*pds)
        common = frozenset.intersection(*pds)
        for j in union - common:
            if j != b:
                deps[j].add(b)
    return {n: frozenset(s) for n, s in deps.items()}


@dataclass(frozen=True)
class ControlDeps:
    deps: dict  # trace position -> frozenset of earlier JUMPI positions

    def __getitem__(self, pos):
        return self.deps.get(pos, frozenset())


def control_deps(trace, cfg, pdt, static=None):
    """Project per-pc control dependency onto the positions of ``trace``."""
    if static is None:
        static = static_control_deps(cfg, pdt)
    seen = {}  # branch pc -> positions so far
    out = {}
    for pos, pc in enumerate(trace.pcs):
        srcs = static.get(pc, ())
        out[pos] = frozenset(p for b in srcs for p in seen.get(b, ()))
        if pc in cfg.branches:
            seen.setdefault(pc, []).append(pos)
    return ControlDeps(out)
