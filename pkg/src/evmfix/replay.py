"""Differential replay of fixture transactions on original vs fixed bytecode."""

from dataclasses import dataclass, field
from difflib import SequenceMatcher
from fractions import Fraction
import time

from .concrete import DEFAULT_GAS, ExecutionEnv, run_concrete
from .errors import BundleError, DivergentRun
from .opcodes import ARITHMETIC
from .patcher import REPLACE_CALL, plan_fixes

MAX_TRANSACTIONS = 10
INJECTED_PREFIX = "Injected"
_ARITH_NODES = ("BinaryOperation", "Assignment", "UnaryOperation")


@dataclass
class TxOutcome:
    index: int
    halt_original: str
    halt_fixed: str
    gas_original: int
    gas_fixed: int
    time_original: float
    time_fixed: float
    triggered: bool

    @property
    def gas_overhead(self):
        if self.gas_original == 0:
            return Fraction(0)
        return Fraction(self.gas_fixed - self.gas_original, self.gas_original)

    @property
    def time_overhead(self):
        if self.time_original <= 0:
            return 0.0
        return (self.time_fixed - self.time_original) / self.time_original

    def to_json(self):
        return {"index": self.index, "halt_original": self.halt_original,
                "halt_fixed": self.halt_fixed, "gas_original": self.gas_original,
                "gas_fixed": self.gas_fixed, "time_original": self.time_original,
                "time_fixed": self.time_fixed, "triggered": self.triggered,
                "gas_overhead_pct": float(self.gas_overhead * 100)}


@dataclass
class OverheadStats:
    transactions: list = field(default_factory=list)
    targeted: dict = field(default_factory=dict)  # op -> count of patched sites
    blanket: dict = field(default_factory=dict)  # op -> count of all sites

    @property
    def comparable(self):
        """Transactions where no injected check fired; only these are costed."""
        return [t for t in self.transactions if not t.triggered]

    @property
    def gas_overhead(self):
        """Mean per-transaction gas overhead as an exact fraction (not percent)."""
        txs = self.comparable
        if not txs:
            return Fraction(0)
        return sum((t.gas_overhead for t in txs), Fraction(0)) / len(txs)

    @property
    def gas_overhead_pct(self):
        return self.gas_overhead * 100

    @property
    def time_overhead_pct(self):
        txs = self.comparable
        if not txs:
            return 0.0
        return 100 * sum(t.time_overhead for t in txs) / len(txs)

    @property
    def check_counts(self):
        return {"targeted": sum(self.targeted.values()), "blanket": sum(self.blanket.values())}

    def to_json(self):
        g = self.gas_overhead_pct
        return {
            "transactions": [t.to_json() for t in self.transactions],
            "mean_gas_overhead_pct": float(g),
            "mean_gas_overhead_exact": f"{g.numerator}/{g.denominator}",
            "mean_time_overhead_pct": self.time_overhead_pct,
            "bound_checks": {**self.check_counts, "targeted_by_op": self.targeted,
                             "blanket_by_op": self.blanket},
        }


def _nonzero(storage):
    return {k: v for k, v in storage.items() if v}


def _edited_regions(before, after):
    """Character ranges of ``after`` that differ from ``before``."""
    sm = SequenceMatcher(None, before, after, autojunk=False)
    return [(j1, j2) for tag, _, _, j1, j2 in sm.get_opcodes() if tag != "equal"]


def _injected_pcs(fixed, original=None):
    """pcs of the fixed program whose source span was added or changed by the fix."""
    pcs = {e.pc for e in fixed.sourcemap if e.node.startswith(INJECTED_PREFIX)}
    if original is not None and original.source and fixed.source:
        regions = _edited_regions(original.source, fixed.source)
        for e in fixed.sourcemap:
            end = e.start + e.length
            if any(e.start < j2 and j1 < end or e.start <= j1 < end for j1, j2 in regions):
                pcs.add(e.pc)
    return pcs


def _fired(trace, injected):
    """Whether an injected check reverted anywhere in the run, reentrant frames included."""
    if trace.reverted and trace.steps and trace.steps[-1].pc in injected:
        return True
    return any(_fired(t, injected) for t in trace.nested)


def _timed(program, env, gas_table):
    t0 = time.perf_counter()
    trace, gas = run_concrete(program, env, gas_table=gas_table)
    return trace, gas, time.perf_counter() - t0


def replay_transactions(original, fixed, transactions, gas_table=DEFAULT_GAS,
                        limit=MAX_TRANSACTIONS):
    """Run each transaction on both programs from the same pre-state.

    Storage is carried along the original's run. A transaction *triggers*
    when the fixed run reverts at an injected check or at code whose source
    text the fix changed; any other difference in
    halt kind, return data or final storage raises DivergentRun.
    """
    injected = _injected_pcs(fixed, original)
    p_orig, p_fixed = original.program, fixed.program
    storage = None
    out = []
    for i, tx in enumerate(transactions[:limit]):
        env = ExecutionEnv.from_json(tx, storage)
        env_fixed = ExecutionEnv.from_json(tx, dict(env.storage))
        t_o, g_o, s_o = _timed(p_orig, env, gas_table)
        t_f, g_f, s_f = _timed(p_fixed, env_fixed, gas_table)
        triggered = _fired(t_f, injected)
        if not triggered:
            same = (t_o.halt == t_f.halt and t_o.returndata == t_f.returndata
                    and _nonzero(t_o.storage) == _nonzero(t_f.storage))
            if not same:
                raise DivergentRun(i, f"original {t_o.halt} {t_o.returndata} "
                                      f"{_nonzero(t_o.storage)} vs fixed {t_f.halt} "
                                      f"{t_f.returndata} {_nonzero(t_f.storage)}")
        out.append(TxOutcome(i, t_o.halt, t_f.halt, g_o, g_f, s_o, s_f, triggered))
        storage = dict(t_o.storage)
    return out


def arithmetic_sites(bundle):
    """Source spans of arithmetic operations, keyed by span -> opcode."""
    prog = bundle.program
    sites = {}
    for e in bundle.sourcemap:
        if e.pc in prog and prog[e.pc].mnemonic in ARITHMETIC and e.node.startswith(_ARITH_NODES):
            sites.setdefault((e.start, e.length), prog[e.pc].mnemonic)
    return sites


def _by_op(ops):
    out = {op: 0 for op in sorted(ARITHMETIC)}
    for op in ops:
        out[op] += 1
    return out


def check_counts(bundle, reports, dp=None):
    """(targeted, blanket) per-opcode bound-check counts."""
    plan = plan_fixes(reports, bundle, dp)
    targeted = [e.op for e in plan.edits if e.kind == REPLACE_CALL and e.op in ARITHMETIC]
    return _by_op(targeted), _by_op(arithmetic_sites(bundle).values())


def replay(bundle, fixed=None, analysis=None, gas_table=DEFAULT_GAS, limit=MAX_TRANSACTIONS):
    """Overhead statistics for one bundle and its paired fix."""
    if not bundle.transactions:
        raise BundleError(f"{bundle.name}: no transactions to replay")
    if fixed is None:
        fixed = bundle.fixed_bundle() or bundle
    if analysis is None:
        from .analysis import analyze_bundle
        analysis = analyze_bundle(bundle)
    txs = replay_transactions(bundle, fixed, bundle.transactions, gas_table, limit)
    targeted, blanket = check_counts(bundle, analysis.reports, analysis.dp)
    return OverheadStats(txs, targeted, blanket)
