"""Hand-assembly helper: named stack slots, labels and source-span recording."""

from evmfix.opcodes import OPCODES, PUSH_ALIASES, Rule

REVERT_NODE = "Revert"
INJECTED_CHECK = "InjectedCheck"
INJECTED_GUARD = "InjectedGuard"


class Emitter:
    def __init__(self, source):
        self.source = source
        self.lines = []
        self.pc = 0
        self.sourcemap = []
        self.functions = []
        self.stack = []  # slot names, top last; None for temporaries
        self._fresh = 0
        self._fn = None

    # -- source spans --------------------------------------------------------
    def loc(self, text, line=None, nth=0, after=None):
        if after is not None:
            base = self.source.index(after)
            hay = self.source[base:]
        elif line is None:
            base, hay = 0, self.source
        else:
            rows = self.source.splitlines(keepends=True)
            base, hay = sum(len(r) for r in rows[:line - 1]), rows[line - 1]
        i = -1
        for _ in range(nth + 1):
            i = hay.find(text, i + 1)
            if i < 0:
                raise ValueError(f"{text!r} not found (line={line}, nth={nth})")
        return base + i, len(text)

    # -- raw instructions ----------------------------------------------------
    def op(self, mnemonic, imm=None, src=None, node=None, line=None, nth=0, after=None):
        name = PUSH_ALIASES.get(mnemonic, mnemonic)
        info = OPCODES[name]
        st = self.stack
        if info.rule is Rule.DUP:
            st.append(None)
        elif info.rule is Rule.SWAP:
            k = info.index
            st[-1], st[-1 - k] = st[-1 - k], st[-1]
        else:
            if info.pops > len(st):
                raise AssertionError(f"model underflow at {mnemonic} (pc {self.pc})")
            del st[len(st) - info.pops:]
            st.extend([None] * info.pushes)
        if imm is None:
            self.lines.append(mnemonic)
        elif isinstance(imm, str):
            self.lines.append(f"{mnemonic} @{imm}")
        else:
            self.lines.append(f"{mnemonic} {imm:#x}")
        if src is not None:
            start, length = self.loc(src, line, nth, after)
            self.sourcemap.append({"pc": self.pc, "start": start, "length": length,
                                   "node": node or "Expression"})
        self.pc += 1
        return self.pc - 1

    def push(self, value, **kw):
        return self.op("PUSH", value, **kw)

    def fresh(self, prefix="L"):
        self._fresh += 1
        return f"{prefix}{self._fresh}"

    def label(self, name, stack=None):
        if stack is not None:
            self.stack = list(stack)
        self.lines.append(f"@{name}:")
        self.op("JUMPDEST")

    def jump(self, target):
        self.push(target)
        self.op("JUMP")

    def jumpi(self, target, **kw):
        """Consume the condition on top and branch to ``target`` when nonzero."""
        self.push(target)
        return self.op("JUMPI", **kw)

    # -- named slots ---------------------------------------------------------
    def name(self, var):
        self.stack[-1] = var

    def depth(self, var):
        for k in range(1, len(self.stack) + 1):
            if self.stack[-k] == var:
                return k
        raise KeyError(var)

    def get(self, var, **kw):
        return self.op(f"DUP{self.depth(var)}", **kw)

    def assign(self, var, src=None, line=None, nth=0, node="Assignment"):
        """Move the top value into ``var`` (SWAP + POP)."""
        k = self.depth(var)
        pc = self.op(f"SWAP{k - 1}", src=src, node=node, line=line, nth=nth)
        self.stack[-k] = var
        self.stack[-1] = None
        self.op("POP")
        return pc

    def drop(self, var):
        k = self.depth(var)
        if k > 1:
            self.op(f"SWAP{k - 1}")
        self.op("POP")

    # -- common sequences ----------------------------------------------------
    def arg(self, i, var=None, **kw):
        self.push(4 + 32 * i)
        self.op("CALLDATALOAD", **kw)
        if var:
            self.name(var)

    def mapping_slot(self, slot):
        """Top value is a key; replace it with keccak(key . slot)."""
        self.push(0)
        self.op("MSTORE")
        self.push(slot)
        self.push(0x20)
        self.op("MSTORE")
        self.push(0x40)
        self.push(0)
        self.op("SHA3")

    def array_elem(self, slot):
        """Top value is an index; replace it with keccak(slot) + index."""
        self.push(slot)
        self.push(0)
        self.op("MSTORE")
        self.push(0x20)
        self.push(0)
        self.op("SHA3")
        self.op("ADD")

    def sload(self, slot, var=None, **kw):
        self.push(slot)
        self.op("SLOAD", **kw)
        if var:
            self.name(var)

    def revert(self, src=None, line=None, node=REVERT_NODE, after=None):
        self.push(0)
        self.push(0)
        self.op("REVERT", src=src, node=node, line=line, after=after)

    def require(self, src=None, line=None, node=REVERT_NODE, invert=False, after=None):
        """Top is the condition; continue when it holds, revert otherwise."""
        ok = self.fresh("ok")
        if invert:
            self.op("ISZERO")
        saved = list(self.stack[:-1])
        self.jumpi(ok)
        self.revert(src, line, node, after)
        self.label(ok, saved)

    def call_args(self):
        """Zero return/args ranges; emit value (CALL only) and address next."""
        for _ in range(4):
            self.push(0)

    def call(self, opcode="CALL", src=None, line=None):
        self.op("GAS")
        return self.op(opcode, src=src, node="FunctionCall", line=line)

    def begin(self, fn):
        self._fn = (fn, self.pc)

    def end(self):
        fn, start = self._fn
        self.functions.append({"name": fn, "pc_start": start, "pc_end": self.pc - 1})
        self._fn = None

    def dispatch(self, table):
        """Selector dispatch: ``table`` is [(selector, label)]; unknown selectors stop."""
        self.push(0)
        self.op("CALLDATALOAD")
        for sel, target in table:
            self.op("DUP1")
            self.push(sel)
            self.op("EQ")
            self.jumpi(target)
        self.op("STOP")
        self.stack = [None]

    # -- arithmetic ----------------------------------------------------------
    def arith(self, op, src=None, node="BinaryOperation", line=None, nth=0, safe=False):
        """Stack [.., x, y] -> [.., x op y]; ``safe`` inlines the checked template."""
        if safe:
            return getattr(self, f"_safe_{op.lower()}")()
        if op in ("SUB", "DIV"):
            self.op("SWAP1")
        return self.op(op, src=src, node=node, line=line, nth=nth)

    def _safe_add(self):
        at = "function add_uint256"
        self.op("DUP2")
        self.op("DUP2")
        pc = self.op("ADD", src="a + b", node="BinaryOperation", after=at)
        self.op("DUP3")
        self.op("DUP2")
        self.op("LT")
        self.op("ISZERO")
        self.require(src="require(c >= a);", node=INJECTED_CHECK, after=at)
        self._collapse()
        return pc

    def _safe_sub(self):
        at = "function sub_uint256"
        self.op("DUP2")
        self.op("DUP2")
        self.op("GT")
        self.op("ISZERO")
        self.require(src="require(b <= a);", node=INJECTED_CHECK, after=at)
        self.op("SWAP1")
        return self.op("SUB", src="a - b", node="BinaryOperation", after=at)

    def _safe_mul(self):
        at = "function mul_uint256"
        zero, done = self.fresh("mz"), self.fresh("md")
        base = list(self.stack[:-2])
        self.op("DUP2")
        self.op("ISZERO")
        self.jumpi(zero, src="if (a == 0)", node="IfStatement", after=at)
        self.op("DUP2")
        self.op("DUP2")
        pc = self.op("MUL", src="a * b", node="BinaryOperation", after=at)
        self.op("DUP2")
        self.op("DUP4")
        self.op("DUP3")
        self.op("DIV", src="c / a", node="BinaryOperation", after=at)
        self.op("EQ")
        self.require(src="require(c / a == b);", node=INJECTED_CHECK, after=at)
        self._collapse()
        self.jump(done)
        self.label(zero, base + [None, None])
        self.op("POP")
        self.op("POP")
        self.push(0)
        self.label(done, base + [None])
        return pc

    def _safe_div(self):
        at = "function div_uint256"
        self.op("DUP1")
        self.push(0)
        self.op("SWAP1")
        self.op("GT")
        self.require(src="require(b > 0);", node=INJECTED_CHECK, after=at)
        self.op("SWAP1")
        return self.op("DIV", src="a / b", node="BinaryOperation", after=at)

    def _collapse(self):
        """[.., x, y, r] -> [.., r]"""
        self.op("SWAP2")
        self.op("POP")
        self.op("POP")

    # -- reentrancy guard ----------------------------------------------------
    def guard_enter(self, slot, body="require(!_reentrancyLock);"):
        at = "modifier nonReentrant"
        if body is None:
            return
        self.push(slot)
        self.op("SLOAD")
        self.op("ISZERO")
        self.require(src=body, node=INJECTED_GUARD, after=at)
        self.push(1)
        self.push(slot)
        self.op("SSTORE", src="_reentrancyLock = true;", node="Assignment", after=at)

    def guard_exit(self, slot, enabled=True):
        if not enabled:
            return
        self.push(0)
        self.push(slot)
        self.op("SSTORE", src="_reentrancyLock = false;", node="Assignment",
                after="modifier nonReentrant")

    def assembly(self):
        return "\n".join(self.lines) + "\n"

    def bundle(self, name, **extra):
        data = {"name": name, "assembly": self.assembly(), "source": self.source,
                "sourcemap": self.sourcemap, "functions": self.functions}
        data.update(extra)
        return data
