"""Concrete operational semantics, gas accounting and concrete runs."""

import hashlib
from dataclasses import dataclass, field, replace

from .errors import InvalidJumpTarget, StackOverflow, StackUnderflow, StepLimitExceeded
from .opcodes import ENV_READERS, Rule, stack_need

WORD = 1 << 256
MASK = WORD - 1
SIGN = 1 << 255
STACK_LIMIT = 1024


def to_signed(x):
    return x - WORD if x & SIGN else x


def to_word(x):
    return x & MASK


def _sdiv(x, y):
    if y == 0:
        return 0
    a, b = to_signed(x), to_signed(y)
    q = abs(a) // abs(b)
    return to_word(-q if (a < 0) != (b < 0) else q)


def _smod(x, y):
    if y == 0:
        return 0
    a, b = to_signed(x), to_signed(y)
    r = abs(a) % abs(b)
    return to_word(-r if a < 0 else r)


def _signextend(b, v):
    if b >= 31:
        return v
    bit = b * 8 + 7
    if v & (1 << bit):
        return v | (MASK - (1 << bit) + 1)
    return v & ((1 << bit) - 1 + (1 << bit))


def _byte(i, v):
    return (v >> (248 - i * 8)) & 0xFF if i < 32 else 0


def _sar(shift, v):
    if shift >= 256:
        return MASK if v & SIGN else 0
    return to_word(to_signed(v) >> shift)


# operands are passed top-of-stack first
BINARY_OPS = {
    "ADD": lambda x, y: (x + y) & MASK,
    "MUL": lambda x, y: (x * y) & MASK,
    "SUB": lambda x, y: (x - y) & MASK,
    "DIV": lambda x, y: x // y if y else 0,
    "SDIV": _sdiv,
    "MOD": lambda x, y: x % y if y else 0,
    "SMOD": _smod,
    "EXP": lambda x, y: pow(x, y, WORD),
    "SIGNEXTEND": _signextend,
    "LT": lambda x, y: int(x < y),
    "GT": lambda x, y: int(x > y),
    "SLT": lambda x, y: int(to_signed(x) < to_signed(y)),
    "SGT": lambda x, y: int(to_signed(x) > to_signed(y)),
    "EQ": lambda x, y: int(x == y),
    "AND": lambda x, y: x & y,
    "OR": lambda x, y: x | y,
    "XOR": lambda x, y: x ^ y,
    "BYTE": _byte,
    "SHL": lambda x, y: (y << x) & MASK if x < 256 else 0,
    "SHR": lambda x, y: y >> x if x < 256 else 0,
    "SAR": _sar,
}

UNARY_OPS = {
    "NOT": lambda x: MASK ^ x,
    "ISZERO": lambda x: int(x == 0),
}

TERNARY_OPS = {
    "ADDMOD": lambda a, b, n: (a + b) % n if n else 0,
    "MULMOD": lambda a, b, n: (a * b) % n if n else 0,
}


def fold(mnemonic, operands):
    """Apply a pure opcode to concrete operands (top first)."""
    if mnemonic in BINARY_OPS:
        return BINARY_OPS[mnemonic](*operands)
    if mnemonic in UNARY_OPS:
        return UNARY_OPS[mnemonic](*operands)
    if mnemonic in TERNARY_OPS:
        return TERNARY_OPS[mnemonic](*operands)
    raise KeyError(mnemonic)


def sha3_words(words):
    data = b"".join(w.to_bytes(32, "big") for w in words)
    return int.from_bytes(hashlib.sha3_256(data).digest(), "big")


def word_range(p, n):
    """Word-granular addresses covering bytes [p, p+n)."""
    return [p + 32 * k for k in range((n + 31) // 32)]


@dataclass(frozen=True)
class GasTable:
    cost: dict = field(default_factory=lambda: dict(DEFAULT_GAS_COSTS))

    def __call__(self, instr):
        c = self.cost
        return c.get(instr.mnemonic, c[instr.op.rule.value])


DEFAULT_GAS_COSTS = {
    "STOP": 0, "POP": 2, "UNARY": 3, "BINARY": 3, "TERNARY": 8,
    "MLOAD": 3, "SHA3": 30, "MSTORE": 3, "SLOAD": 200, "SSTORE": 5000,
    "DUP": 3, "SWAP": 3, "JUMPI": 10, "JUMP": 8, "CALL": 700,
    "PUSH": 3, "ENV": 2, "JUMPDEST": 1, "LOG": 375,
    "EXP": 10,
}

DEFAULT_GAS = GasTable()


@dataclass
class ExecutionEnv:
    calldata: list = field(default_factory=list)  # [selector, arg0, arg1, ...]
    origin: int = 0xA11CE
    caller: int = 0xA11CE
    callvalue: int = 0
    address: int = 0xC0DE
    call_results: list = field(default_factory=list)
    storage: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    reentry: dict = field(default_factory=dict)  # call index -> calldata of a nested call

    @classmethod
    def from_json(cls, data, storage=None):
        data = dict(data)
        st = {int(k, 0) if isinstance(k, str) else k: v
              for k, v in data.pop("storage", {}).items()}
        reentry = {int(k): v for k, v in data.pop("reentry", {}).items()}
        env = cls(**data, reentry=reentry)
        env.storage = storage if storage is not None else st
        return env

    def calldata_word(self, offset):
        if offset == 0:
            return self.calldata[0] if self.calldata else 0
        if offset >= 4 and (offset - 4) % 32 == 0:
            i = 1 + (offset - 4) // 32
            return self.calldata[i] if i < len(self.calldata) else 0
        return 0

    def env_value(self, mnemonic):
        fixed = {"ORIGIN": self.origin, "CALLER": self.caller,
                 "CALLVALUE": self.callvalue, "ADDRESS": self.address,
                 "CALLDATASIZE": 4 + 32 * max(0, len(self.calldata) - 1)}
        if mnemonic in fixed:
            return fixed[mnemonic]
        return self.extra.get(mnemonic, 0)

    def call_result(self, k):
        return self.call_results[k] if k < len(self.call_results) else 1


@dataclass(frozen=True)
class ConcreteState:
    pc: int = 0
    stack: tuple = ()  # top at index 0
    memory: dict = field(default_factory=dict)
    storage: dict = field(default_factory=dict)
    calls: int = 0


@dataclass(frozen=True)
class Halt:
    kind: str
    state: ConcreteState
    returndata: tuple = ()


def _evolve(state, **changes):
    # dataclasses.replace on a frozen class is slow enough to dominate the step loop
    new = object.__new__(ConcreteState)
    d = new.__dict__
    d.update(state.__dict__)
    d.update(changes)
    return new


def _read_range(memory, p, n):
    return tuple(memory.get(a, 0) for a in word_range(p, n))


def step_concrete(state: ConcreteState, instr, env: ExecutionEnv | None = None,
                  program=None):
    """Execute one instruction; return the next state or a Halt."""
    env = env or ExecutionEnv()
    op = instr.op
    stack = state.stack
    need = stack_need(op)
    if len(stack) < need:
        raise StackUnderflow(state.pc, op.mnemonic, need, len(stack))
    args, rest = stack[:op.pops], stack[op.pops:]
    pc1 = state.pc + 1
    rule = op.rule

    if rule is Rule.STOP:
        kind = op.mnemonic
        if kind in ("RETURN", "REVERT"):
            return Halt(kind, _evolve(state, stack=rest), _read_range(state.memory, args[0], args[1]))
        return Halt(kind, _evolve(state, stack=rest))
    if rule is Rule.POP or rule is Rule.JUMPDEST or rule is Rule.LOG:
        return _evolve(state, pc=pc1, stack=rest)
    if rule is Rule.PUSH:
        return _push(state, pc1, stack, instr.immediate)
    if rule is Rule.ENV:
        return _push(state, pc1, stack, to_word(env.env_value(op.mnemonic)))
    if op.mnemonic in ENV_READERS:
        if op.mnemonic == "CALLDATALOAD":
            v = env.calldata_word(args[0])
        else:
            v = env.extra.get(op.mnemonic, 0)
        return _push(state, pc1, rest, to_word(v))
    if rule in (Rule.UNARY, Rule.BINARY) or op.mnemonic in TERNARY_OPS:
        return _push(state, pc1, rest, fold(op.mnemonic, args))
    if rule is Rule.TERNARY:
        dest, off, size = args
        memory = dict(state.memory)
        for k, a in enumerate(word_range(dest, size)):
            memory[a] = env.calldata_word(off + 32 * k) if op.mnemonic == "CALLDATACOPY" else 0
        return _evolve(state, pc=pc1, stack=rest, memory=memory)
    if rule is Rule.MLOAD:
        return _push(state, pc1, rest, state.memory.get(args[0], 0))
    if rule is Rule.MSTORE:
        p, v = args
        memory = dict(state.memory)
        if op.mnemonic == "MSTORE8":
            v = (memory.get(p, 0) & ~0xFF & MASK) | (v & 0xFF)
        memory[p] = v
        return _evolve(state, pc=pc1, stack=rest, memory=memory)
    if rule is Rule.SHA3:
        p, n = args
        return _push(state, pc1, rest, sha3_words(_read_range(state.memory, p, n)))
    if rule is Rule.SLOAD:
        return _push(state, pc1, rest, state.storage.get(args[0], 0))
    if rule is Rule.SSTORE:
        p, v = args
        storage = dict(state.storage)
        storage[p] = v
        return _evolve(state, pc=pc1, stack=rest, storage=storage)
    if rule is Rule.DUP:
        return _push(state, pc1, stack, stack[op.index - 1])
    if rule is Rule.SWAP:
        s = list(stack)
        s[0], s[op.index] = s[op.index], s[0]
        return _evolve(state, pc=pc1, stack=tuple(s))
    if rule is Rule.JUMP:
        return _evolve(state, pc=_target(state.pc, args[0], program), stack=rest)
    if rule is Rule.JUMPI:
        lbl, c = args
        if c != 0:
            return _evolve(state, pc=_target(state.pc, lbl, program), stack=rest)
        return _evolve(state, pc=pc1, stack=rest)
    if rule is Rule.CALL:
        res = to_word(env.call_result(state.calls))
        return _evolve(_push(state, pc1, rest, res), calls=state.calls + 1)
    raise AssertionError(op)


def _push(state, pc, stack, value):
    if len(stack) >= STACK_LIMIT:
        raise StackOverflow(f"pc {state.pc}: stack limit {STACK_LIMIT} exceeded")
    return _evolve(state, pc=pc, stack=(value,) + stack)


def _target(pc, lbl, program):
    if program is not None and lbl not in program:
        raise InvalidJumpTarget(pc, lbl)
    return lbl


@dataclass(frozen=True)
class ConcreteStep:
    pc: int
    mnemonic: str
    operands: tuple
    loaded: object = None  # value an SLOAD/MLOAD produced


@dataclass
class ConcreteTrace:
    steps: list
    halt: str
    returndata: tuple
    storage: dict
    final: ConcreteState
    gas: int = 0
    nested: list = field(default_factory=list)  # traces of reentrant calls

    def __len__(self):
        return len(self.steps)

    @property
    def reverted(self):
        return self.halt in ("REVERT", "INVALID")

    @property
    def path(self):
        return [s.pc for s in self.steps]


def run_concrete(program, env: ExecutionEnv | None = None, step_limit=100_000,
                 gas_table=DEFAULT_GAS, perturb=None, _depth=0):
    """Run ``program`` from pc 0 until it halts.

    Returns ``(trace, gas_used)``. ``perturb`` maps a pc to ``f(state, step)``, applied
    to the state right after that pc executes (used by the data oracle).
    """
    env = env or ExecutionEnv()
    state = ConcreteState(storage=dict(env.storage))
    steps = []
    nested_runs = []
    gas = 0
    while True:
        if len(steps) >= step_limit:
            raise StepLimitExceeded(step_limit, steps)
        if state.pc not in program:
            raise InvalidJumpTarget(steps[-1].pc if steps else 0, state.pc)
        instr = program[state.pc]
        gas += gas_table(instr)
        operands = _operands(instr, state.stack)
        if instr.op.rule is Rule.CALL and state.calls in env.reentry and _depth < 4:
            nested_env = replace(env, calldata=list(env.reentry[state.calls]),
                                 caller=env.address, storage=state.storage,
                                 reentry={}, call_results=[])
            nested, nested_gas = run_concrete(program, nested_env, step_limit, gas_table,
                                              _depth=_depth + 1)
            gas += nested_gas
            nested_runs.append(nested)
            state = replace(state, storage=nested.storage)
            if nested.reverted:
                env = replace(env, call_results=_with_result(env.call_results, state.calls, 0))
        nxt = step_concrete(state, instr, env, program)
        loaded = nxt.stack[0] if instr.op.rule in _LOADS else None
        steps.append(ConcreteStep(instr.pc, instr.mnemonic, operands, loaded))
        if isinstance(nxt, Halt):
            storage = dict(env.storage) if nxt.kind in ("REVERT", "INVALID") else nxt.state.storage
            return ConcreteTrace(steps, nxt.kind, nxt.returndata, storage, nxt.state, gas,
                                 nested_runs), gas
        if perturb and instr.pc in perturb:
            nxt = perturb[instr.pc](nxt, steps[-1])
        state = nxt


_LOADS = (Rule.SLOAD, Rule.MLOAD)


def _with_result(results, k, value):
    out = list(results) + [1] * max(0, k + 1 - len(results))
    out[k] = value
    return out


def _operands(instr, stack):
    op = instr.op
    if op.rule is Rule.DUP:
        return (stack[op.index - 1],) if len(stack) >= op.index else ()
    if op.rule is Rule.SWAP:
        return (stack[0], stack[op.index]) if len(stack) > op.index else ()
    return tuple(stack[:op.pops])
