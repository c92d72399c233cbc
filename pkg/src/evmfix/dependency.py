"""Data dependency, address ranges and the control+data closure."""

from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace

from . import kernels
from .concrete import ExecutionEnv, run_concrete
from .errors import EvmFixError, OracleBudgetExceeded
from .opcodes import OPCODES, Rule
from .symbolic import Concrete, Node

UNBOUNDED = 1 << 256


class _Unresolvable:
    __slots__ = ()

    def __repr__(self):
        return "Unresolvable"

    def __bool__(self):
        return False


UNRESOLVABLE = _Unresolvable()


@dataclass(frozen=True)
class AddressRange:
    base: object  # Concrete constant, or a SHA3 node
    lo: int = 0
    hi: int = 0

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("lo must not exceed hi")

    @property
    def constant(self):
        return isinstance(self.base, Concrete)


def address_range(addr):
    """Base-plus-offset form of a symbolic address, or UNRESOLVABLE."""
    if isinstance(addr, Concrete):
        return AddressRange(addr)
    if not isinstance(addr, Node):
        return UNRESOLVABLE
    if addr.op == "SHA3":
        return AddressRange(addr)
    if addr.op == "MLOAD" and isinstance(addr.tag, tuple) and addr.tag[0] == "fp":
        # free memory pointer, resolved to its estimated value
        return AddressRange(Concrete(addr.tag[1]))
    if addr.op == "ADD":
        a, b = addr.operands
        if isinstance(a, Concrete):
            a, b = b, a
        inner = address_range(a)
        if inner is UNRESOLVABLE:
            return UNRESOLVABLE
        if isinstance(b, Concrete):
            k = b.value
            if inner.hi + k >= UNBOUNDED:
                return AddressRange(inner.base, inner.lo, UNBOUNDED)
            return AddressRange(inner.base, inner.lo + k, inner.hi + k)
        if address_range(b) is UNRESOLVABLE and not inner.constant:
            # array-style base + symbolic index
            return AddressRange(inner.base, inner.lo, UNBOUNDED)
    return UNRESOLVABLE


def _tags_compatible(t1, t2):
    if t1 is None or t2 is None:
        return True
    if len(t1) != len(t2):
        return False
    return all(a is None or b is None or a == b for a, b in zip(t1, t2))


def same_base(b1, b2):
    if b1 == b2:
        return True
    if isinstance(b1, Node) and isinstance(b2, Node) and b1.op == b2.op == "SHA3":
        return b1.operands == b2.operands and _tags_compatible(b1.tag, b2.tag)
    return False


def ranges_intersect(a, b, size_a=1, size_b=1, over_approx=True):
    """May the regions ``[a, a+size_a)`` and ``[b, b+size_b)`` overlap?

    Sizes are in address units (bytes for memory, slots for storage); a
    size of None means unknown.
    """
    if a is UNRESOLVABLE or b is UNRESOLVABLE:
        return over_approx
    size_a = UNBOUNDED if size_a is None else size_a
    size_b = UNBOUNDED if size_b is None else size_b
    if a.constant and b.constant:
        lo_a, lo_b = a.base.value + a.lo, b.base.value + b.lo
        return lo_a < b.base.value + b.hi + size_b and lo_b < a.base.value + a.hi + size_a
    if a.constant or b.constant or not same_base(a.base, b.base):
        return False
    return a.lo < b.hi + size_b and b.lo < a.hi + size_a


def _size(v):
    return v.value if isinstance(v, Concrete) else None


@dataclass
class AddressStats:
    """Resolved vs unresolvable address transforms per opcode class."""
    counts: Counter = field(default_factory=Counter)

    def record(self, mnemonic, rng):
        self.counts[(mnemonic, rng is not UNRESOLVABLE)] += 1

    def rate(self, mnemonic):
        ok, bad = self.counts[(mnemonic, True)], self.counts[(mnemonic, False)]
        return ok / (ok + bad) if ok + bad else 1.0

    def to_json(self):
        out = {}
        for (m, ok), n in sorted(self.counts.items()):
            out.setdefault(m, {"resolved": 0, "failed": 0})["resolved" if ok else "failed"] += n
        return out


_MOVES = (Rule.DUP, Rule.SWAP)


class _TraceInfo:
    """Per-trace indices: def parents, memory writes, reads."""

    def __init__(self, trace, stats):
        self.trace = trace
        self.steps = trace.steps
        self.parents = {}
        for s in self.steps:
            for d, ps in s.defs:
                self.parents[d] = ps
        # memory writes: (pos, range, size, is_assignment)
        self.mem_writes = []
        for addr, size, _, pos in trace.final.memory:
            rng = address_range(addr)
            mnem = self.steps[pos].mnemonic
            if mnem.startswith("MSTORE"):
                stats.record("MSTORE", rng)
            self.mem_writes.append((pos, rng, _size(size), mnem.startswith("MSTORE")))
        self.mem_reads = {}
        for s in self.steps:
            if s.mem_read is not None:
                rng = address_range(s.mem_read[0])
                if s.mnemonic == "MLOAD":
                    stats.record("MLOAD", rng)
                self.mem_reads[s.pos] = (rng, _size(s.mem_read[1]))

    def rule(self, pos):
        return OPCODES[self.steps[pos].mnemonic].rule

    def direct_producers(self, pos):
        """Steps whose stack writes ``pos`` reads, walking through DUP/SWAP moves."""
        out = set()
        todo = list(self.steps[pos].reads)
        seen = set()
        while todo:
            d = todo.pop()
            if d in seen:
                continue
            seen.add(d)
            p = d[0]
            out.add(p)
            if self.rule(p) in _MOVES:
                todo.extend(self.parents.get(d, ()))
        return out

    def tainters(self, pos):
        """All steps that transitively taint ``pos`` through the stack."""
        out = set()
        todo = list(self.steps[pos].reads)
        seen = set()
        while todo:
            d = todo.pop()
            if d in seen:
                continue
            seen.add(d)
            out.add(d[0])
            todo.extend(self.parents.get(d, ()))
        return out

    def memory_writers(self, pos, over_approx=True, assignments_only=False):
        """Earlier writes that may supply bytes read at ``pos``.

        Walks writes backwards; a write whose bytes are all overwritten later
        (before the read) is dead and skipped.
        """
        if pos not in self.mem_reads:
            return []
        r_rng, r_size = self.mem_reads[pos]
        live = _exact(r_rng, r_size)
        live = [live] if live else None  # uncovered byte intervals of the read
        out = []
        for w_pos, w_rng, w_size, is_assign in reversed(self.mem_writes):
            if w_pos >= pos:
                continue
            exact = _exact(w_rng, w_size)
            if live is not None and exact is not None:
                hit = [iv for iv in live if iv[0] < exact[1] and exact[0] < iv[1]]
                if not hit:
                    continue
                if not assignments_only or is_assign:
                    out.append(w_pos)
                live = _subtract(live, exact)
                if not live:
                    break
                continue
            if assignments_only and not is_assign:
                continue
            if ranges_intersect(w_rng, r_rng, w_size, r_size, over_approx):
                out.append(w_pos)
        return out


def _exact(rng, size):
    """Concrete byte interval [lo, hi) for a constant single-offset range."""
    if rng is UNRESOLVABLE or size is None or not rng.constant or rng.lo != rng.hi:
        return None
    lo = rng.base.value + rng.lo
    return (lo, lo + size)


def _subtract(intervals, cut):
    out = []
    for lo, hi in intervals:
        if hi <= cut[0] or cut[1] <= lo:
            out.append((lo, hi))
            continue
        if lo < cut[0]:
            out.append((lo, cut[0]))
        if cut[1] < hi:
            out.append((cut[1], hi))
    return out


class DependencyContext:
    """Shared indices over a TraceSet (built once, read-only afterwards)."""

    def __init__(self, traces, over_approx=True):
        self.traces = list(traces)
        self.over_approx = over_approx
        self.stats = AddressStats()
        self.info = {tr.id: _TraceInfo(tr, self.stats) for tr in self.traces}
        self.by_id = {tr.id: tr for tr in self.traces}
        # storage writes across every trace: (trace id, pos, range)
        self.sto_writes = []
        self.sto_reads = {}
        for tr in self.traces:
            for s in tr.steps:
                if s.sto_write is not None:
                    rng = address_range(s.sto_write[0])
                    self.stats.record("SSTORE", rng)
                    self.sto_writes.append((tr.id, s.pos, rng))
                if s.sto_read is not None:
                    rng = address_range(s.sto_read)
                    self.stats.record("SLOAD", rng)
                    self.sto_reads[(tr.id, s.pos)] = rng

    def storage_writers(self, tid, pos):
        rng = self.sto_reads.get((tid, pos))
        if (tid, pos) not in self.sto_reads:
            return []
        return [(t, p) for t, p, w in self.sto_writes
                if ranges_intersect(w, rng, 1, 1, self.over_approx)]

    def pc(self, occ):
        return self.by_id[occ[0]].steps[occ[1]].pc


def data_deps(tr, op_i, all_traces, ctx=None):
    """Assignment occurrences ``op_i`` is data dependent on.

    ``op_i`` is a position in ``tr``; results are ``(trace id, pos)`` pairs.
    The reader itself is examined alongside its tainters, so an MLOAD or
    SLOAD query picks up its own writers.
    """
    ctx = ctx or DependencyContext(all_traces)
    out = set()
    visited_sto = set()
    done = set()
    todo = [(tr.id, op_i)]
    while todo:
        tid, pos = todo.pop()
        if (tid, pos) in done:
            continue
        done.add((tid, pos))
        info = ctx.info[tid]
        for j in info.tainters(pos) | {pos}:
            step = info.steps[j]
            if j != pos and info.rule(j) is Rule.SWAP:
                out.add((tid, j))
            for k in info.memory_writers(j, ctx.over_approx, assignments_only=True):
                out.add((tid, k))
                todo.append((tid, k))
            if step.sto_read is not None:
                for t2, k in ctx.storage_writers(tid, j):
                    key = ctx.pc((t2, k))
                    out.add((t2, k))
                    if key in visited_sto:
                        continue
                    visited_sto.add(key)
                    # every trace containing that SSTORE
                    for tr2 in ctx.traces:
                        for s2 in tr2.steps:
                            if s2.pc == key:
                                todo.append((tr2.id, s2.pos))
    return frozenset(out)


def occurrence_pcs(traces, occs):
    by_id = {tr.id: tr for tr in traces}
    return frozenset(by_id[t].steps[p].pc for t, p in occs)


@dataclass
class DependencyRelation:
    data: dict  # (trace id, pos) -> set of (trace id, pos)
    control: dict
    closure: dict  # pc -> frozenset of pcs it (transitively) depends on
    edges: dict  # (pc, pc) -> {"data", "control"}
    stats: AddressStats | None = None

    def depends(self, a, b):
        """True if pc ``a`` depends on pc ``b``."""
        return b in self.closure.get(a, ())

    def path(self, a, b):
        """An explicit edge path from pc ``a`` to pc ``b`` (list of pcs) or None."""
        succ = defaultdict(list)
        for x, y in self.edges:
            succ[x].append(y)
        prev = {a: None}
        frontier = [a]
        while frontier:
            nxt = []
            for x in frontier:
                for y in sorted(succ[x]):
                    if y in prev:
                        continue
                    prev[y] = x
                    if y == b:
                        out = [b]
                        while prev[out[-1]] is not None:
                            out.append(prev[out[-1]])
                        return out[::-1]
                    nxt.append(y)
            frontier = nxt
        return None

    def edge_list(self):
        return [{"from_pc": a, "to_pc": b, "kind": k}
                for (a, b), kinds in sorted(self.edges.items()) for k in sorted(kinds)]


def full_dependency(traces, cds, over_approx=True, use_numba=None):
    """Direct data and control edges per occurrence plus the pc-level closure.

    ``cds`` maps trace id -> ControlDeps. Data edges cover stack producers,
    earlier intersecting memory writes in the same trace and intersecting
    storage writes in any trace.
    """
    ctx = DependencyContext(traces, over_approx)
    data, control = {}, {}
    edges = defaultdict(set)
    for tr in ctx.traces:
        info = ctx.info[tr.id]
        for s in tr.steps:
            occ = (tr.id, s.pos)
            d = set()
            if info.rule(s.pos) not in _MOVES:
                # moves are sinks so a SWAP does not merge its two slots
                d.update((tr.id, p) for p in info.direct_producers(s.pos))
            d.update((tr.id, p) for p in info.memory_writers(s.pos, over_approx))
            if s.sto_read is not None:
                d.update(ctx.storage_writers(tr.id, s.pos))
            c = {(tr.id, p) for p in cds[tr.id][s.pos]} if tr.id in cds else set()
            data[occ], control[occ] = d, c
            for o in d:
                edges[(s.pc, ctx.pc(o))].add("data")
            for o in c:
                edges[(s.pc, ctx.pc(o))].add("control")
    closure = _closure(edges, use_numba)
    return DependencyRelation(data, control, closure, dict(edges), ctx.stats)


def _closure(edges, use_numba=None):
    pcs = sorted({p for e in edges for p in e})
    if not pcs:
        return {}
    index = {p: i for i, p in enumerate(pcs)}
    succ = defaultdict(list)
    for a, b in edges:
        succ[index[a]].append(index[b])
    n = len(pcs)
    indptr, indices = kernels.to_csr(n, succ)
    order = kernels.postorder(n, indptr, indices)
    rows = kernels.closure_bits(indptr, indices, order, use_numba=use_numba)
    return {p: frozenset(pcs[j] for j in kernels.row_members(rows[index[p]], n)) for p in pcs}


def closure_of(edges):
    """Reference closure by repeated relaxation (no kernels); for checks."""
    succ = defaultdict(set)
    for a, b in edges:
        succ[a].add(b)
    out = {}
    for a in {x for e in edges for x in e}:
        seen, todo = set(), list(succ[a])
        while todo:
            y = todo.pop()
            if y in seen:
                continue
            seen.add(y)
            todo.extend(succ[y])
        out[a] = frozenset(seen)
    return out


_WRITER_RULES = (Rule.SSTORE, Rule.MSTORE, Rule.SWAP)


def _perturber(rule, index, delta):
    def sstore(state, step):
        slot, value = step.operands
        return replace(state, storage={**state.storage, slot: value ^ delta})

    def mstore(state, step):
        addr = step.operands[0]
        return replace(state, memory={**state.memory, addr: state.memory.get(addr, 0) ^ delta})

    def swap(state, step):
        s = list(state.stack)
        s[0] ^= delta
        s[index] ^= delta
        return replace(state, stack=tuple(s))

    return {Rule.SSTORE: sstore, Rule.MSTORE: mstore, Rule.SWAP: swap}[rule]


def _run_sequence(program, sample, perturb=None, limits=None):
    # the first env's storage is the pre-state; later ones inherit
    storage = dict(sample[0].storage) if sample else {}
    paths, reads = [], []
    for k, env in enumerate(sample):
        env = replace(env, storage=dict(storage))
        kw = {"step_limit": limits[k]} if limits else {}
        tr, _ = run_concrete(program, env, perturb=perturb, **kw)
        storage = tr.storage
        paths.append(tuple(tr.path))
        reads.append(tr)
    return paths, reads


def oracle_data_deps(program, reader, envs, deltas=(1, 1 << 200), budget=20_000):
    """Writer pcs whose perturbation changes a value read at pc ``reader``.

    ``envs`` is a list of samples; each sample is an ExecutionEnv or a list
    of them run in sequence with storage carried over. Runs whose control
    path changes are discarded, so only data flow is measured.
    """
    return oracle_data_deps_many(program, [reader], envs, deltas, budget)[reader]


def oracle_data_deps_many(program, readers, envs, deltas=(1, 1 << 200), budget=20_000):
    """Same as oracle_data_deps for several readers, sharing the perturbed runs."""
    samples = [[e] if isinstance(e, ExecutionEnv) else list(e) for e in envs]
    readers = set(readers)
    found = {r: set() for r in readers}
    runs = 0

    def reads(trs):
        out = defaultdict(list)
        for tr in trs:
            for s in tr.steps:
                if s.pc in readers:
                    out[s.pc].append((s.operands, s.loaded))
        return out

    for sample in samples:
        base_paths, base = _run_sequence(program, sample)
        base_reads = reads(base)
        # a longer perturbed run cannot follow the same path, so stop it early
        limits = [len(p) + 1 for p in base_paths]
        writers = sorted({s.pc for tr in base for s in tr.steps
                          if program[s.pc].op.rule in _WRITER_RULES})
        for w in writers:
            if all(w in found[r] for r in readers):
                continue
            instr = program[w]
            for delta in deltas:
                runs += 1
                if runs > budget:
                    raise OracleBudgetExceeded(f"more than {budget} oracle runs")
                fn = _perturber(instr.op.rule, instr.op.index, delta)
                try:
                    paths, trs = _run_sequence(program, sample, {w: fn}, limits)
                except EvmFixError:
                    continue
                if paths != base_paths:
                    continue
                got = reads(trs)
                for r in readers:
                    if got.get(r) != base_reads.get(r):
                        found[r].add(w)
    return {r: frozenset(f) for r, f in found.items()}


def stack_taint(trace, pos):
    """TaintSet for a position: (producer position, stack slot) pairs."""
    info = _TraceInfo(trace, AddressStats())
    out = set()
    for d in info.steps[pos].reads:
        out.add(d)
    todo = list(out)
    while todo:
        d = todo.pop()
        for p in info.parents.get(d, ()):
            if p not in out:
                out.add(p)
                todo.append(p)
    return frozenset(out)


__all__ = [
    "UNRESOLVABLE", "AddressRange", "AddressStats", "DependencyContext", "DependencyRelation",
    "address_range", "closure_of", "data_deps", "full_dependency", "occurrence_pcs",
    "oracle_data_deps", "oracle_data_deps_many", "ranges_intersect", "same_base", "stack_taint",
]
