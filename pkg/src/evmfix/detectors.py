"""Vulnerability detectors over traces and the dependency closure."""

from dataclasses import dataclass

from .opcodes import ARITHMETIC, CRITICAL
from .program import FALLBACK
from .symbolic import Concrete, Node

INTRA = "IntraReentrancy"
CROSS = "CrossReentrancy"
TX_ORIGIN = "TxOrigin"
ARITH = "Arithmetic"
KINDS = (INTRA, CROSS, TX_ORIGIN, ARITH)


@dataclass(frozen=True, order=True)
class VulnerabilityReport:
    kind: str
    critical_pc: int
    culprit_pcs: tuple
    function: str = FALLBACK
    trace_id: int = 0
    source_span: tuple | None = None

    def key(self):
        return (self.kind, self.critical_pc, self.culprit_pcs)

    def to_json(self):
        span = None
        if self.source_span is not None:
            span = {"start": self.source_span[0], "length": self.source_span[1]}
        return {"kind": self.kind, "function": self.function, "critical_pc": self.critical_pc,
                "culprits": list(self.culprit_pcs), "source": span, "trace_id": self.trace_id}


def function_of(pc, functions):
    for fn in functions or ():
        if pc in fn:
            return fn.name
    return FALLBACK


def _span(pc, sourcemap):
    for e in sourcemap or ():
        if e.pc == pc:
            return (e.start, e.length)
    return None


def strip_iszero(v):
    """Remove ISZERO layers; returns (core, number of layers)."""
    k = 0
    while isinstance(v, Node) and v.op == "ISZERO":
        v = v.operands[0]
        k += 1
    return v, k


def lock_holdings(trace):
    """Per position, the constant lock slots held (mutex pattern).

    A lock ``L`` is acquired by a branch that continues only when
    ``SLOAD(L) == 0`` followed by ``SSTORE(L, nonzero)``, and released by
    ``SSTORE(L, 0)``; the releasing store still counts as held.
    """
    checked, held = set(), set()
    out = []
    for s in trace.steps:
        release = None
        if s.mnemonic == "JUMPI":
            core, k = strip_iszero(s.operands[1])
            if isinstance(core, Node) and core.op == "SLOAD" and isinstance(core.operands[0], Concrete):
                zero_branch = (k % 2 == 1) == bool(s.branch)
                if zero_branch:
                    checked.add(core.operands[0].value)
        elif s.sto_write is not None and isinstance(s.sto_write[0], Concrete):
            slot = s.sto_write[0].value
            value = s.sto_write[1]
            if isinstance(value, Concrete) and slot in checked | held:
                if value.value:
                    held.add(slot)
                elif slot in held:
                    release = slot
        out.append(frozenset(held))
        if release is not None:
            held.discard(release)
            checked.discard(release)
    return out


class DetectorContext:
    """Trace-set facts shared by the detectors."""

    def __init__(self, traces, dp, functions=(), sourcemap=None):
        self.traces = list(traces)
        self.dp = dp
        self.functions = functions
        self.sourcemap = sourcemap
        self.locks = {tr.id: lock_holdings(tr) for tr in self.traces}
        self._arith = _arith_facts(self.traces)

    def fn(self, pc):
        return function_of(pc, self.functions)

    def span(self, pc):
        return _span(pc, self.sourcemap)

    def guarded(self, c_occ, s_occ):
        (tc, pc_), (ts, ps) = c_occ, s_occ
        return bool(self.locks[tc][pc_] & self.locks[ts][ps])

    def benign_arith(self, pc):
        return pc in self._arith


def _arith_facts(traces):
    """Arithmetic pcs that never need a report: constant or always checked."""
    occs = {}
    for tr in traces:
        reverts = tr.halt in ("REVERT", "INVALID")
        for s in tr.steps:
            if s.mnemonic not in ARITHMETIC:
                continue
            ok = (reverts or all(isinstance(o, Concrete) for o in s.operands)
                  or _slot_offset(s) or _const_divisor(s) or _checked(tr, s))
            occs[s.pc] = occs.get(s.pc, True) and ok
    return {pc for pc, ok in occs.items() if ok}


def _slot_offset(step):
    """Array element addressing: keccak base plus an index."""
    return step.mnemonic == "ADD" and any(
        isinstance(o, Node) and o.op == "SHA3" for o in step.operands)


def _const_divisor(step):
    """Division by a nonzero literal cannot misbehave."""
    return (step.mnemonic == "DIV" and isinstance(step.operands[1], Concrete)
            and step.operands[1].value != 0)


def _cores(trace, lo, hi):
    for s in trace.steps[lo:hi]:
        if s.mnemonic == "JUMPI":
            yield strip_iszero(s.operands[1])[0]


def _is(node, op, *operands):
    return isinstance(node, Node) and node.op == op and node.operands == operands


def _checked(trace, step):
    m, pos = step.mnemonic, step.pos
    a, b = step.operands
    r = step.result
    if m == "ADD":
        return any(_is(c, "LT", r, a) or _is(c, "LT", r, b) or _is(c, "GT", a, r)
                   or _is(c, "GT", b, r) for c in _cores(trace, pos + 1, None))
    if m == "SUB":
        return any(_is(c, "LT", a, b) or _is(c, "GT", b, a) for c in _cores(trace, 0, pos))
    if m == "MUL":
        for c in _cores(trace, pos + 1, None):
            if isinstance(c, Node) and c.op == "EQ":
                x, y = c.operands
                for q, other in ((x, y), (y, x)):
                    if (_is(q, "DIV", r, a) and other == b) or (_is(q, "DIV", r, b) and other == a):
                        return True
        return False
    if m == "DIV":
        zero = Concrete(0)
        return any(c == b or _is(c, "EQ", b, zero) or _is(c, "EQ", zero, b)
                   or _is(c, "GT", b, zero) or _is(c, "LT", zero, b)
                   for c in _cores(trace, 0, pos))
    return False


def _criticals(trace):
    return [s for s in trace.steps if s.mnemonic in CRITICAL]


def _intra_candidates(tr, dp, ctx):
    for c in _criticals(tr):
        fc = ctx.fn(c.pc)
        for s in tr.steps[c.pos + 1:]:
            if s.mnemonic == "SSTORE" and ctx.fn(s.pc) == fc and dp.depends(c.pc, s.pc):
                yield c, s


def detect_intra_reentrancy(tr, dp, ctx):
    out = []
    for c, s in _intra_candidates(tr, dp, ctx):
        if ctx.guarded((tr.id, c.pos), (tr.id, s.pos)):
            continue
        out.append(VulnerabilityReport(INTRA, c.pc, (s.pc,), ctx.fn(c.pc), tr.id, ctx.span(s.pc)))
    return out


def detect_cross_reentrancy(traces, dp, ctx):
    """SSTOREs of one function that a reentrant call in another depends on.

    The reentrant side uses unsuppressed intra-function candidates so a
    call guarded only in its own function still exposes other functions.
    """
    calls = {}
    for tr in traces:
        for c, _ in _intra_candidates(tr, dp, ctx):
            calls.setdefault((tr.id, c.pos), c)
    out = []
    for (tc, cpos), c in sorted(calls.items()):
        fc = ctx.fn(c.pc)
        for tr in traces:
            for s in tr.steps:
                if s.mnemonic != "SSTORE" or ctx.fn(s.pc) == fc or not dp.depends(c.pc, s.pc):
                    continue
                if ctx.guarded((tc, cpos), (tr.id, s.pos)):
                    continue
                out.append(VulnerabilityReport(CROSS, c.pc, (s.pc,), ctx.fn(s.pc), tr.id,
                                               ctx.span(s.pc)))
    return out


def _program_mnemonics(traces):
    out = {}
    for tr in traces:
        for s in tr.steps:
            out[s.pc] = s.mnemonic
    return out


def detect_tx_origin(tr, dp, ctx, mnemonics=None):
    mnemonics = mnemonics or _program_mnemonics(ctx.traces)
    out = []
    for c in _criticals(tr):
        for pc in sorted(dp.closure.get(c.pc, ())):
            if mnemonics.get(pc) == "ORIGIN":
                out.append(VulnerabilityReport(TX_ORIGIN, c.pc, (pc,), ctx.fn(c.pc), tr.id,
                                               ctx.span(pc)))
    return out


def detect_arithmetic(tr, dp, ctx, mnemonics=None):
    mnemonics = mnemonics or _program_mnemonics(ctx.traces)
    out = []
    for c in _criticals(tr):
        for pc in sorted(dp.closure.get(c.pc, ())):
            if mnemonics.get(pc) in ARITHMETIC and not ctx.benign_arith(pc):
                out.append(VulnerabilityReport(ARITH, c.pc, (pc,), ctx.fn(c.pc), tr.id,
                                               ctx.span(pc)))
    return out


def dedupe(reports):
    seen = {}
    for r in reports:
        seen.setdefault(r.key(), r)
    return sorted(seen.values(), key=lambda r: (KINDS.index(r.kind), r.critical_pc, r.culprit_pcs))


def detect_all(traces, dp, functions=(), sourcemap=None):
    """Every report of the four kinds, deduplicated by (kind, critical, culprit)."""
    traces = list(traces)
    ctx = DetectorContext(traces, dp, functions, sourcemap)
    mnemonics = _program_mnemonics(traces)
    reports = []
    for tr in traces:
        reports += detect_intra_reentrancy(tr, dp, ctx)
        reports += detect_tx_origin(tr, dp, ctx, mnemonics)
        reports += detect_arithmetic(tr, dp, ctx, mnemonics)
    reports += detect_cross_reentrancy(traces, dp, ctx)
    return dedupe(reports)
