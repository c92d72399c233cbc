"""Assembly decoding and the contract-bundle file format."""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BundleError, ParseError, UnknownOpcode
from .opcodes import OPCODES, PUSH_ALIASES, OpInfo, Rule

FALLBACK = "fallback"

_LABEL_DEF = re.compile(r"^@([A-Za-z_][\w.]*):$")
_LABEL_REF = re.compile(r"^@([A-Za-z_][\w.]*)$")
_HEX = re.compile(r"^0[xX][0-9a-fA-F]+$")


@dataclass(frozen=True)
class Instruction:
    pc: int
    op: OpInfo
    immediate: int | None = None
    line: int = 0

    @property
    def mnemonic(self):
        return self.op.mnemonic

    def __str__(self):
        if self.immediate is None:
            return self.mnemonic
        return f"{self.mnemonic} {self.immediate:#x}"


@dataclass(frozen=True)
class FunctionInfo:
    name: str
    pc_start: int
    pc_end: int  # inclusive

    def __contains__(self, pc):
        return self.pc_start <= pc <= self.pc_end


@dataclass
class Program:
    instructions: tuple
    labels: dict = field(default_factory=dict)
    functions: tuple = ()

    entry = 0

    def __len__(self):
        return len(self.instructions)

    def __getitem__(self, pc) -> Instruction:
        return self.instructions[pc]

    def __contains__(self, pc):
        return isinstance(pc, int) and 0 <= pc < len(self.instructions)

    @property
    def pcs(self):
        return range(len(self.instructions))

    def function_of(self, pc):
        for fn in self.functions:
            if pc in fn:
                return fn.name
        return FALLBACK

    def same_code(self, other):
        return [(i.mnemonic, i.immediate) for i in self.instructions] == \
            [(i.mnemonic, i.immediate) for i in other.instructions]


def decode_program(text: str, functions=()) -> Program:
    """Decode line-oriented assembly into a Program with pcs 0..n-1."""
    pending = []  # (line_no, mnemonic, raw immediate)
    labels = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        m = _LABEL_DEF.match(tokens[0])
        if m:
            name = m.group(1)
            if name in labels:
                raise ParseError(line_no, f"duplicate label @{name}")
            labels[name] = len(pending)
            tokens = tokens[1:]
            if not tokens:
                continue
        if len(tokens) > 2:
            raise ParseError(line_no, f"too many operands: {line!r}")
        name = tokens[0].upper()
        name = PUSH_ALIASES.get(name, name)
        if name not in OPCODES:
            raise UnknownOpcode(tokens[0], line_no)
        pending.append((line_no, name, tokens[1] if len(tokens) == 2 else None))

    if not pending:
        raise ParseError(0, "empty program")

    instructions = []
    for pc, (line_no, name, raw) in enumerate(pending):
        op = OPCODES[name]
        immediate = None
        if op.rule is Rule.PUSH:
            if raw is None:
                raise ParseError(line_no, "PUSH needs an immediate")
            immediate = _immediate(raw, labels, line_no)
        elif raw is not None:
            raise ParseError(line_no, f"{name} takes no immediate")
        instructions.append(Instruction(pc, op, immediate, line_no))
    for name, pc in labels.items():
        if pc >= len(instructions):
            raise ParseError(0, f"label @{name} points past the end of the program")
    return Program(tuple(instructions), labels, tuple(functions))


def _immediate(raw, labels, line_no):
    m = _LABEL_REF.match(raw)
    if m:
        if m.group(1) not in labels:
            raise ParseError(line_no, f"undefined label @{m.group(1)}")
        return labels[m.group(1)]
    if not _HEX.match(raw):
        raise ParseError(line_no, f"bad immediate {raw!r}")
    value = int(raw, 16)
    if value >= 1 << 256:
        raise ParseError(line_no, "immediate exceeds 256 bits")
    return value


@dataclass(frozen=True)
class SourceMapEntry:
    pc: int
    start: int
    length: int
    node: str


@dataclass
class ContractBundle:
    name: str
    assembly: str
    source: str
    sourcemap: list
    functions: list
    transactions: list = field(default_factory=list)
    fixed: str | None = None
    path: Path | None = None
    meta: dict = field(default_factory=dict)  # free-form fixture annotations, carried through
    _program: Program | None = field(default=None, repr=False)

    @property
    def program(self) -> Program:
        if self._program is None:
            self._program = decode_program(self.assembly, self.functions)
        return self._program

    def span_of(self, pc):
        for entry in self.sourcemap:
            if entry.pc == pc:
                return entry
        return None

    def fixed_bundle(self):
        if not self.fixed:
            return None
        base = self.path.parent if self.path else Path(".")
        return load_bundle(base / self.fixed)

    def to_json(self):
        data = {
            "name": self.name,
            "assembly": self.assembly,
            "source": self.source,
            "sourcemap": [vars(e) for e in self.sourcemap],
            "functions": [vars(f) for f in self.functions],
        }
        if self.transactions:
            data["transactions"] = self.transactions
        if self.fixed:
            data["fixed"] = self.fixed
        if self.meta:
            data["meta"] = self.meta
        return data


def parse_bundle(data: dict, path=None) -> ContractBundle:
    try:
        sourcemap = [SourceMapEntry(int(e["pc"]), int(e["start"]), int(e["length"]),
                                    str(e["node"])) for e in data.get("sourcemap", [])]
        functions = [FunctionInfo(str(f["name"]), int(f["pc_start"]), int(f["pc_end"]))
                     for f in data.get("functions", [])]
        return ContractBundle(
            name=str(data["name"]),
            assembly=str(data["assembly"]),
            source=str(data.get("source", "")),
            sourcemap=sourcemap,
            functions=functions,
            transactions=list(data.get("transactions", [])),
            fixed=data.get("fixed"),
            path=Path(path) if path else None,
            meta=dict(data.get("meta") or {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"malformed bundle: {exc}") from exc


def load_bundle(path) -> ContractBundle:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise BundleError(f"{path}: bundle must be a JSON object")
    return parse_bundle(data, path)
