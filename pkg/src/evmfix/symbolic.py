"""Symbolic values and the symbolic step relation."""

from dataclasses import dataclass, replace

from .concrete import STACK_LIMIT, fold, to_word
from .errors import ArityMismatch, InvalidJumpTarget, StackOverflow, StackUnderflow, SymbolicJumpTarget
from .opcodes import CALL_LIKE, ENV_READERS, OPCODES, Rule, stack_need

FREE_PTR_SLOT = 0x40
FREE_PTR_INIT = 0x80
# memory assumed for a variable whose size is only known at run time
FREE_PTR_SLOTS = 10


class Concrete:
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = to_word(value)

    def __eq__(self, other):
        return isinstance(other, Concrete) and other.value == self.value

    def __hash__(self):
        return hash(self.value)

    def __repr__(self):
        return f"{self.value:#04x}"


class Node:
    __slots__ = ("op", "operands", "tag", "_hash")

    def __init__(self, op, operands=(), tag=None):
        self.op = op
        self.operands = tuple(operands)
        self.tag = tag
        self._hash = hash((op, self.operands, tag))

    def __eq__(self, other):
        if self is other:
            return True
        return (isinstance(other, Node) and self._hash == other._hash and self.op == other.op
                and self.tag == other.tag and self.operands == other.operands)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"{self.op}({','.join(map(repr, self.operands))})"


def is_concrete(v):
    return isinstance(v, Concrete)


def _never_folds(mnemonic):
    return (mnemonic in ("MLOAD", "SLOAD", "SHA3") or mnemonic in ENV_READERS
            or mnemonic in CALL_LIKE)


def eval_symbolic(op, operands, tag=None):
    """Build the symbolic value of ``op`` applied to ``operands`` (top first).

    Pure opcodes fold to a Concrete when every operand is concrete; loads,
    environment reads, hashes and calls always stay symbolic.
    """
    info = OPCODES[op] if isinstance(op, str) else op
    mnemonic = info.mnemonic
    operands = tuple(operands)
    expected = info.pops
    if mnemonic in CALL_LIKE:
        expected = 2  # (site, occurrence)
    if len(operands) != expected:
        raise ArityMismatch(f"{mnemonic} expects {expected} operands, got {len(operands)}")
    if mnemonic == "SHA3":
        p, n = operands
        return Node("SHA3", (Node("MLOAD", (p, n)),), tag)
    if _never_folds(mnemonic):
        return Node(mnemonic, operands, tag)
    if all(isinstance(o, Concrete) for o in operands):
        return Concrete(fold(mnemonic, tuple(o.value for o in operands)))
    return Node(mnemonic, operands, tag)


@dataclass(frozen=True, slots=True)
class Step:
    pos: int
    pc: int
    mnemonic: str
    reads: tuple  # def ids consumed from the stack, top first
    defs: tuple  # ((def_id, parent def ids), ...) created by this step
    operands: tuple
    result: object = None
    mem_read: tuple | None = None  # (address value, size value)
    mem_write: tuple | None = None
    sto_read: object = None
    sto_write: tuple | None = None  # (address value, stored value)
    branch: bool | None = None  # JUMPI: True when the jump was taken
    forced: bool = False


@dataclass(frozen=True, slots=True)
class SymbolicState:
    pc: int = 0
    stack: tuple = ()  # SymbolicValue, top first
    stack_defs: tuple = ()  # parallel def ids
    memory: tuple = ()  # write log: (address, size, value, pos)
    storage: tuple = ()  # write log: (address, value, pos)
    trail: tuple | None = None  # cons list (step, previous trail)
    depth: int = 0
    calls: int = 0
    free_ptr: int = FREE_PTR_INIT
    halted: str | None = None

    @property
    def path(self):
        return [(s.pc, s.mnemonic) for s in steps_of(self)]


def steps_of(state):
    out = []
    node = state.trail
    while node is not None:
        out.append(node[0])
        node = node[1]
    out.reverse()
    return out


def const_address(v, free_ptr_aware=True):
    """Concrete address denoted by ``v`` when it is a constant offset chain."""
    if isinstance(v, Concrete):
        return v.value
    if isinstance(v, Node):
        if v.op == "MLOAD" and free_ptr_aware and isinstance(v.tag, tuple) and v.tag[0] == "fp":
            return v.tag[1]
        if v.op == "ADD":
            a, b = v.operands
            if isinstance(b, Concrete):
                base = const_address(a)
                return None if base is None else to_word(base + b.value)
            if isinstance(a, Concrete):
                base = const_address(b)
                return None if base is None else to_word(base + a.value)
    return None


def memory_word(log, addr):
    """Best-effort concrete content of memory word ``addr`` (None if unknown)."""
    for a, size, value, _ in reversed(log):
        c = const_address(a)
        n = size.value if isinstance(size, Concrete) else None
        if c is None or n is None:
            return None
        if c == addr and n == 32:
            return value.value if isinstance(value, Concrete) else None
        if c < addr + 32 and addr < c + n:
            return None
    return 0


def _memory_pattern(log, p, n):
    if not (isinstance(p, Concrete) and isinstance(n, Concrete)) or n.value > 32 * 64:
        return None
    return tuple(memory_word(log, p.value + 32 * k) for k in range((n.value + 31) // 32))


def _mem_read_region(mnemonic, args):
    if mnemonic == "MLOAD":
        return (args[0], Concrete(32))
    if mnemonic in ("SHA3", "RETURN", "REVERT") or mnemonic.startswith("LOG"):
        return (args[0], args[1])
    if mnemonic in ("CALL", "CALLCODE"):
        return (args[3], args[4])
    if mnemonic in ("DELEGATECALL", "STATICCALL"):
        return (args[2], args[3])
    if mnemonic in ("CREATE", "CREATE2"):
        return (args[1], args[2])
    return None


def _ret_region(mnemonic, args):
    if mnemonic in ("CALL", "CALLCODE"):
        return (args[5], args[6])
    if mnemonic in ("DELEGATECALL", "STATICCALL"):
        return (args[4], args[5])
    return None


def step_symbolic(state: SymbolicState, instr, program=None):
    """Symbolically execute ``instr``; returns a list of successor states.

    A JUMPI on a symbolic condition yields both branch states. Halting
    opcodes yield one state with ``halted`` set.
    """
    op = instr.op
    mnemonic = op.mnemonic
    stack, sdefs = state.stack, state.stack_defs
    need = stack_need(op)
    if len(stack) < need:
        raise StackUnderflow(state.pc, mnemonic, need, len(stack))
    pos = state.depth
    args, rest = stack[:op.pops], stack[op.pops:]
    reads, rest_defs = sdefs[:op.pops], sdefs[op.pops:]
    rule = op.rule
    new = {"pc": state.pc + 1, "depth": pos + 1}
    step = {"pos": pos, "pc": instr.pc, "mnemonic": mnemonic, "reads": reads,
            "defs": (), "operands": args}
    mem_read = _mem_read_region(mnemonic, args)
    if mem_read is not None and not (isinstance(mem_read[1], Concrete) and mem_read[1].value == 0):
        step["mem_read"] = mem_read

    def push(value, parents=reads):
        if len(rest) >= STACK_LIMIT:
            raise StackOverflow(f"pc {state.pc}: stack limit exceeded")
        d = (pos, 0)
        step["defs"] = ((d, tuple(parents)),)
        step["result"] = value
        new["stack"] = (value,) + rest
        new["stack_defs"] = (d,) + rest_defs

    def finish(**extra):
        s = Step(**{**step, **extra})
        return replace(state, trail=(s, state.trail), **new)

    if rule is Rule.STOP:
        new["stack"], new["stack_defs"] = rest, rest_defs
        new["halted"] = mnemonic
        return [finish()]
    if rule in (Rule.POP, Rule.JUMPDEST, Rule.LOG):
        new["stack"], new["stack_defs"] = rest, rest_defs
        return [finish()]
    if rule is Rule.PUSH:
        push(Concrete(instr.immediate), ())
        return [finish()]
    if rule is Rule.ENV:
        push(Node(mnemonic))
        return [finish()]
    if rule is Rule.TERNARY and op.pushes == 0:
        dest, _, size = args
        new["stack"], new["stack_defs"] = rest, rest_defs
        new["memory"] = state.memory + ((dest, size, None, pos),)
        return [finish()]
    if rule in (Rule.UNARY, Rule.BINARY, Rule.TERNARY):
        push(eval_symbolic(op, args))
        return [finish()]
    if rule is Rule.MLOAD:
        p = args[0]
        tag = None
        if isinstance(p, Concrete) and p.value == FREE_PTR_SLOT:
            tag = ("fp", state.free_ptr)
        push(Node("MLOAD", (p,), tag))
        return [finish()]
    if rule is Rule.SHA3:
        p, n = args
        push(eval_symbolic(op, args, _memory_pattern(state.memory, p, n)))
        return [finish()]
    if rule is Rule.MSTORE:
        p, v = args
        size = Concrete(1 if mnemonic == "MSTORE8" else 32)
        new["stack"], new["stack_defs"] = rest, rest_defs
        new["memory"] = state.memory + ((p, size, v, pos),)
        if isinstance(p, Concrete) and p.value == FREE_PTR_SLOT and mnemonic == "MSTORE":
            c = const_address(v)
            new["free_ptr"] = c if c is not None else state.free_ptr + FREE_PTR_SLOTS * 0x20
        return [finish(mem_write=(p, size))]
    if rule is Rule.SLOAD:
        push(Node("SLOAD", (args[0],)))
        return [finish(sto_read=args[0])]
    if rule is Rule.SSTORE:
        p, v = args
        new["stack"], new["stack_defs"] = rest, rest_defs
        new["storage"] = state.storage + ((p, v, pos),)
        return [finish(sto_write=(p, v))]
    if rule is Rule.DUP:
        src = sdefs[op.index - 1]
        d = (pos, 0)
        step["reads"] = (src,)
        step["defs"] = ((d, (src,)),)
        step["result"] = stack[op.index - 1]
        new["stack"] = (stack[op.index - 1],) + stack
        new["stack_defs"] = (d,) + sdefs
        return [finish()]
    if rule is Rule.SWAP:
        i = op.index
        top, deep = (pos, 0), (pos, 1)
        s = list(stack)
        s[0], s[i] = s[i], s[0]
        d = list(sdefs)
        step["reads"] = (sdefs[0], sdefs[i])
        step["defs"] = ((top, (sdefs[i],)), (deep, (sdefs[0],)))
        d[0], d[i] = top, deep
        new["stack"], new["stack_defs"] = tuple(s), tuple(d)
        return [finish()]
    if rule is Rule.JUMP:
        new["pc"] = _jump_target(state.pc, args[0], program)
        new["stack"], new["stack_defs"] = rest, rest_defs
        return [finish()]
    if rule is Rule.JUMPI:
        lbl, c = args
        target = _jump_target(state.pc, lbl, program)
        new["stack"], new["stack_defs"] = rest, rest_defs
        if isinstance(c, Concrete):
            if c.value != 0:
                new["pc"] = target
                return [finish(branch=True)]
            return [finish(branch=False)]
        taken = finish(branch=True)
        taken = replace(taken, pc=target)
        return [taken, finish(branch=False)]
    if rule is Rule.CALL:
        push(eval_symbolic(op, (Concrete(instr.pc), Concrete(state.calls))))
        new["calls"] = state.calls + 1
        ret = _ret_region(mnemonic, args)
        if ret is not None:
            new["memory"] = state.memory + ((ret[0], ret[1], None, pos),)
        return [finish()]
    raise AssertionError(op)


def _jump_target(pc, lbl, program):
    if not isinstance(lbl, Concrete):
        raise SymbolicJumpTarget(pc, lbl)
    if program is not None and lbl.value not in program:
        raise InvalidJumpTarget(pc, lbl.value)
    return lbl.value
