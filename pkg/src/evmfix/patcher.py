"""Source-level fix plans: reentrancy guards, safe math, tx.origin."""

from dataclasses import asdict, dataclass
import re

from .detectors import ARITH, CROSS, INTRA, TX_ORIGIN, function_of
from .errors import SanityCheckFailed, SpanConflict, SpanOutOfBounds, UnmappedReport
from .opcodes import PATCHABLE_ARITHMETIC

INSERT_MODIFIER = "InsertModifier"
REPLACE_CALL = "ReplaceCall"
REPLACE_IDENTIFIER = "ReplaceIdentifier"
INJECT_HELPER = "InjectHelper"

MODIFIER = "nonReentrant"
LOCK_VAR = "_reentrancyLock"


@dataclass(frozen=True)
class SafeMathTemplate:
    op: str
    function_name: str
    symbol: str
    body: str

    def reference(self, a, b, bits=256):
        """Result of the template on ``bits``-wide words, or None if it reverts."""
        return _REFERENCE[self.op](a, b, (1 << bits) - 1)


def _ref_add(a, b, mask):
    c = (a + b) & mask
    return c if c >= a else None


def _ref_sub(a, b, mask):
    return None if b > a else (a - b) & mask


def _ref_mul(a, b, mask):
    if a == 0:
        return 0
    c = (a * b) & mask
    return c if c // a == b else None


def _ref_div(a, b, mask):
    return None if b == 0 else a // b


def _ref_exp(a, b, mask):
    result = 1
    while b > 0:
        if b & 1:
            result = _ref_mul(result, a, mask)
            if result is None:
                return None
        b >>= 1
        if b > 0:
            a = _ref_mul(a, a, mask)
            if a is None:
                return None
    return result


_REFERENCE = {"ADD": _ref_add, "SUB": _ref_sub, "MUL": _ref_mul, "DIV": _ref_div, "EXP": _ref_exp}

_SIG = "(uint256 a, uint256 b) internal pure returns (uint256)"

TEMPLATES = {
    "ADD": SafeMathTemplate("ADD", "add_uint256", "+", f"""\
    function add_uint256{_SIG} {{
        uint256 c = a + b;
        require(c >= a);
        return c;
    }}
"""),
    "SUB": SafeMathTemplate("SUB", "sub_uint256", "-", f"""\
    function sub_uint256{_SIG} {{
        require(b <= a);
        return a - b;
    }}
"""),
    "MUL": SafeMathTemplate("MUL", "mul_uint256", "*", f"""\
    function mul_uint256{_SIG} {{
        if (a == 0) {{
            return 0;
        }}
        uint256 c = a * b;
        require(c / a == b);
        return c;
    }}
"""),
    "DIV": SafeMathTemplate("DIV", "div_uint256", "/", f"""\
    function div_uint256{_SIG} {{
        require(b > 0);
        return a / b;
    }}
"""),
    "EXP": SafeMathTemplate("EXP", "exp_uint256", "**", f"""\
    function exp_uint256{_SIG} {{
        uint256 result = 1;
        while (b > 0) {{
            if (b & 1 == 1) {{
                result = mul_uint256(result, a);
            }}
            b = b >> 1;
            if (b > 0) {{
                a = mul_uint256(a, a);
            }}
        }}
        return result;
    }}
"""),
}

GUARD_HELPER = f"""\
    bool private {LOCK_VAR};

    modifier {MODIFIER}() {{
        require(!{LOCK_VAR});
        {LOCK_VAR} = true;
        _;
        {LOCK_VAR} = false;
    }}
"""


@dataclass(frozen=True)
class Edit:
    kind: str
    start: int
    length: int
    replacement: str
    reason: str = ""
    op: str | None = None  # arithmetic opcode for ReplaceCall
    node: str | None = None  # source node kind for ReplaceCall

    @property
    def end(self):
        return self.start + self.length

    def to_json(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class PatchPlan:
    edits: list

    def __len__(self):
        return len(self.edits)

    def __bool__(self):
        return bool(self.edits)

    def to_json(self):
        return {"edits": [e.to_json() for e in self.edits]}

    def kinds(self):
        return [e.kind for e in self.edits]


# --- source helpers ---------------------------------------------------------

_CONTRACT = re.compile(r"\bcontract\s+\w+[^{;]*\{")


def contract_end(source):
    """Offset of the first contract's closing brace."""
    m = _CONTRACT.search(source)
    if m is None:
        return None
    depth = 0
    for j in range(m.end() - 1, len(source)):
        if source[j] == "{":
            depth += 1
        elif source[j] == "}":
            depth -= 1
            if depth == 0:
                return j
    return None


def _match_paren(text, i):
    depth = 0
    for j in range(i, len(text)):
        if text[j] == "(":
            depth += 1
        elif text[j] == ")":
            depth -= 1
            if depth == 0:
                return j
    return -1


def function_header(source, name):
    """(start, end-of-parameter-list, end-of-header) of function ``name``."""
    if name == "fallback":
        pat = re.compile(r"\bfunction\s*\(|\bfallback\s*\(")
    else:
        pat = re.compile(rf"\bfunction\s+{re.escape(name)}\s*\(")
    m = pat.search(source)
    if m is None:
        return None
    close = _match_paren(source, m.end() - 1)
    brace = source.find("{", close)
    if close < 0 or brace < 0:
        return None
    return m.start(), close + 1, brace


_OP_TOKENS = ("**", "++", "--", "+=", "-=", "*=", "/=", "==", "<=", ">=", "!=", "&&", "||",
              "<<", ">>")


def _split_top(text, symbol, last=True):
    """Split ``text`` at a top-level binary ``symbol``; returns (lhs, rhs) or None."""
    depth = 0
    hits = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif depth == 0:
            tok = next((t for t in _OP_TOKENS if text.startswith(t, i)), None)
            if tok is not None and tok != symbol:
                i += len(tok)
                continue
            if text.startswith(symbol, i) and i > 0:
                hits.append(i)
                i += len(symbol)
                continue
        i += 1
    if not hits:
        return None
    at = hits[-1] if last else hits[0]
    return text[:at].strip(), text[at + len(symbol):].strip()


def rewrite_arithmetic(text, op, node):
    """Wrap one arithmetic expression in its safe-math call."""
    tpl = TEMPLATES[op]
    fn, sym = tpl.function_name, tpl.symbol
    stripped = text.strip()
    if node.startswith("Assignment"):
        parts = _split_top(stripped, sym + "=", last=False)
        if parts is None:
            raise UnmappedReport(f"no '{sym}=' in assignment {text!r}")
        lhs, rhs = parts
        return f"{lhs} = {fn}({lhs}, {rhs})"
    if node.startswith("UnaryOperation"):
        for tok in ("++", "--"):
            if tok in stripped:
                var = stripped.replace(tok, "").strip()
                return f"{var} = {fn}({var}, 1)"
        raise UnmappedReport(f"no increment in {text!r}")
    parts = _split_top(stripped, sym, last=(op != "EXP"))
    if parts is None:
        raise UnmappedReport(f"no '{sym}' in expression {text!r}")
    return f"{fn}({parts[0]}, {parts[1]})"


# --- planning ---------------------------------------------------------------

def _entry(bundle, pc):
    e = bundle.span_of(pc)
    if e is None:
        raise UnmappedReport(f"pc {pc} has no source mapping")
    return e


def plan_fixes(reports, bundle, dp=None):
    """Edits for every report; identical fixes are emitted once."""
    source = bundle.source
    program = bundle.program
    functions = bundle.functions
    guard_fns = set()
    calls = {}  # span -> Edit
    idents = {}
    for r in reports:
        if r.kind in (INTRA, CROSS):
            # the call's own function is guarded too, even for cross-function reports
            guard_fns.add(function_of(r.critical_pc, functions))
            for pc in r.culprit_pcs:
                guard_fns.add(function_of(pc, functions))
        elif r.kind == TX_ORIGIN:
            for pc in r.culprit_pcs:
                e = _entry(bundle, pc)
                idents[(e.start, e.length)] = Edit(REPLACE_IDENTIFIER, e.start, e.length,
                                                   "msg.sender", f"{r.kind}@{r.critical_pc}")
        elif r.kind == ARITH:
            pcs = list(r.culprit_pcs)
            if dp is not None:
                # EXP in the same chain is patched too
                pcs += [pc for pc in dp.closure.get(r.critical_pc, ())
                        if pc in program and program[pc].mnemonic == "EXP"]
            for pc in pcs:
                e = _entry(bundle, pc)
                op = program[pc].mnemonic
                if op not in PATCHABLE_ARITHMETIC:
                    continue
                text = source[e.start:e.start + e.length]
                if text.lstrip().startswith(TEMPLATES[op].function_name + "("):
                    continue
                calls.setdefault((e.start, e.length), Edit(
                    REPLACE_CALL, e.start, e.length, rewrite_arithmetic(text, op, e.node),
                    f"{r.kind}@{r.critical_pc}", op, e.node))
    edits = list(calls.values()) + list(idents.values())
    need_guard = False
    for name in sorted(guard_fns):
        hdr = function_header(source, name)
        if hdr is None:
            raise UnmappedReport(f"function {name!r} not found in source")
        if MODIFIER in source[hdr[1]:hdr[2]]:
            continue
        edits.append(Edit(INSERT_MODIFIER, hdr[1], 0, f" {MODIFIER}", f"reentrancy in {name}"))
        need_guard = True
    helpers = _helpers_needed(source, edits, need_guard)
    if helpers:
        end = contract_end(source)
        if end is None:
            raise UnmappedReport("no contract declaration to host helpers")
        # appended last so existing storage slots keep their positions
        edits.append(Edit(INJECT_HELPER, end, 0, "\n" + helpers, "helpers"))
    edits.sort(key=lambda e: (e.start, -e.length, e.kind))
    return PatchPlan(edits)


def _helpers_needed(source, edits, guard):
    ops = {e.op for e in edits if e.kind == REPLACE_CALL}
    if "EXP" in ops:
        ops.add("MUL")
    parts = []
    if guard and f"modifier {MODIFIER}" not in source:
        parts.append(GUARD_HELPER)
    for op in ("ADD", "SUB", "MUL", "DIV", "EXP"):
        tpl = TEMPLATES[op]
        if op in ops and f"function {tpl.function_name}" not in source:
            parts.append(tpl.body)
    return "\n".join(parts)


# --- application ------------------------------------------------------------

def _nest(edits, source_len):
    for e in edits:
        if e.start < 0 or e.length < 0 or e.end > source_len:
            raise SpanOutOfBounds(f"{e.kind} span {e.start}+{e.length} outside source of {source_len}")
    ordered = sorted(set(edits), key=lambda e: (e.start, -e.length))
    roots, stack = [], []
    for e in ordered:
        while stack and not (e.start >= stack[-1][0].start and e.end <= stack[-1][0].end
                             and stack[-1][0].length > 0):
            stack.pop()
        node = (e, [])
        if stack:
            parent = stack[-1][0]
            if (e.start, e.length) == (parent.start, parent.length):
                raise SpanConflict(f"two edits at {e.start}+{e.length}")
            if parent.kind != REPLACE_CALL:
                raise SpanConflict(f"{e.kind} nested inside {parent.kind}")
            stack[-1][1].append(node)
        else:
            if roots:
                prev = roots[-1][0]
                if e.start < prev.end or (e.length == 0 and prev.length == 0 and e.start == prev.start):
                    raise SpanConflict(f"edits overlap at {e.start}")
            roots.append(node)
        stack.append(node)
    return roots


def _render(source, lo, hi, nodes):
    out, at = [], lo
    for e, kids in nodes:
        out.append(source[at:e.start])
        if e.kind == REPLACE_CALL:
            inner = _render(source, e.start, e.end, kids)
            out.append(rewrite_arithmetic(inner, e.op, e.node) if kids else e.replacement)
        else:
            out.append(e.replacement)
        at = e.end
    out.append(source[at:hi])
    return "".join(out)


def apply_patches(source, plan):
    """Apply ``plan`` to ``source``; nested arithmetic edits compose inside-out."""
    if not plan.edits:
        return source
    roots = _nest(plan.edits, len(source))
    patched = _render(source, 0, len(source), roots)
    sanity_check(patched)
    return patched


def sanity_check(text):
    pairs = {")": "(", "]": "[", "}": "{"}
    stack = []
    for i, ch in enumerate(text):
        if ch in "([{":
            stack.append(ch)
        elif ch in pairs:
            if not stack or stack.pop() != pairs[ch]:
                raise SanityCheckFailed(f"unbalanced {ch!r} at offset {i}")
    if stack:
        raise SanityCheckFailed(f"unclosed {stack[-1]!r}")
    for tpl in TEMPLATES.values():
        if re.search(rf"\b{tpl.function_name}\(", text) and f"function {tpl.function_name}" not in text:
            raise SanityCheckFailed(f"{tpl.function_name} used but not defined")
    uses_guard = re.search(rf"\)\s*[^{{;]*\b{MODIFIER}\b", text)
    if uses_guard and f"modifier {MODIFIER}" not in text:
        raise SanityCheckFailed(f"{MODIFIER} used but not defined")
    return True


@dataclass
class VerificationResult:
    clean: bool
    reports: list
    analysis: object = None

    @property
    def status(self):
        return "Clean" if self.clean else "NotClean"


def verify_fixed(bundle_fixed, timeout=300, loop_cap=50):
    """Re-run the whole pipeline on a fixed bundle."""
    from .analysis import analyze_bundle

    result = analyze_bundle(bundle_fixed, timeout, loop_cap)
    return VerificationResult(result.clean, result.reports, result)
