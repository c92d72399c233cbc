"""Opcode table: mnemonics, rule groups and stack arity."""

from dataclasses import dataclass
from enum import Enum


class Rule(str, Enum):
    STOP = "STOP"
    POP = "POP"
    UNARY = "UNARY"
    BINARY = "BINARY"
    TERNARY = "TERNARY"
    MLOAD = "MLOAD"
    SHA3 = "SHA3"
    MSTORE = "MSTORE"
    SLOAD = "SLOAD"
    SSTORE = "SSTORE"
    DUP = "DUP"
    SWAP = "SWAP"
    JUMPI = "JUMPI"
    JUMP = "JUMP"
    CALL = "CALL"
    # groups below are not part of the semantic table; they cover the
    # instructions real bytecode needs in addition to it
    PUSH = "PUSH"
    ENV = "ENV"
    JUMPDEST = "JUMPDEST"
    LOG = "LOG"


# Rule table for the semantic core. SELFDESTRUCT is listed both as a halting
# opcode and as a call-like one; it executes under STOP and is still critical.
SEMANTIC_TABLE = {
    Rule.STOP: ("SELFDESTRUCT", "REVERT", "INVALID", "RETURN", "STOP"),
    Rule.POP: ("POP",),
    Rule.UNARY: ("NOT", "ISZERO", "CALLDATALOAD", "EXTCODESIZE", "BLOCKHASH",
                 "BALANCE", "EXTCODEHASH"),
    Rule.BINARY: ("ADD", "MUL", "SUB", "DIV", "SDIV", "MOD", "SMOD", "EXP",
                  "SIGNEXTEND", "LT", "GT", "SLT", "SGT", "EQ", "AND", "OR",
                  "XOR", "BYTE", "SHL", "SHR", "SAR"),
    Rule.TERNARY: ("ADDMOD", "MULMOD", "CALLDATACOPY", "CODECOPY",
                   "RETURNDATACOPY"),
    Rule.MLOAD: ("MLOAD",),
    Rule.SHA3: ("SHA3",),
    Rule.MSTORE: ("MSTORE", "MSTORE8"),
    Rule.SLOAD: ("SLOAD",),
    Rule.SSTORE: ("SSTORE",),
    Rule.DUP: tuple(f"DUP{i}" for i in range(1, 17)),
    Rule.SWAP: tuple(f"SWAP{i}" for i in range(1, 17)),
    Rule.JUMPI: ("JUMPI",),
    Rule.JUMP: ("JUMP",),
    Rule.CALL: ("STATICCALL", "CALL", "CALLCODE", "CREATE", "CREATE2",
                "DELEGATECALL"),
}

EXTRA_TABLE = {
    Rule.PUSH: ("PUSH",),
    Rule.ENV: ("ADDRESS", "ORIGIN", "CALLER", "CALLVALUE", "CALLDATASIZE",
               "CODESIZE", "GASPRICE", "RETURNDATASIZE", "COINBASE",
               "TIMESTAMP", "NUMBER", "DIFFICULTY", "GASLIMIT", "CHAINID",
               "SELFBALANCE", "PC", "MSIZE", "GAS"),
    Rule.JUMPDEST: ("JUMPDEST",),
    Rule.LOG: ("LOG0", "LOG1", "LOG2", "LOG3", "LOG4"),
}

HALTING = frozenset(SEMANTIC_TABLE[Rule.STOP])
CRITICAL = frozenset({"CALL", "CALLCODE", "DELEGATECALL", "SELFDESTRUCT",
                      "CREATE", "CREATE2"})
CALL_LIKE = frozenset(SEMANTIC_TABLE[Rule.CALL])
ARITHMETIC = frozenset({"ADD", "SUB", "MUL", "DIV"})
PATCHABLE_ARITHMETIC = ARITHMETIC | {"EXP"}
# results that depend on the environment and therefore never fold
ENV_READERS = frozenset({"CALLDATALOAD", "EXTCODESIZE", "BLOCKHASH", "BALANCE",
                         "EXTCODEHASH"}) | frozenset(EXTRA_TABLE[Rule.ENV])

# pops for call-like opcodes follow the EVM stack layout
_CALL_POPS = {"CALL": 7, "CALLCODE": 7, "DELEGATECALL": 6, "STATICCALL": 6,
              "CREATE": 3, "CREATE2": 4}
_STOP_POPS = {"STOP": 0, "INVALID": 0, "RETURN": 2, "REVERT": 2,
              "SELFDESTRUCT": 1}
_COPY_OPS = frozenset({"CALLDATACOPY", "CODECOPY", "RETURNDATACOPY"})

PUSH_ALIASES = {f"PUSH{i}": "PUSH" for i in range(1, 33)}


@dataclass(frozen=True)
class OpInfo:
    mnemonic: str
    rule: Rule
    pops: int
    pushes: int
    index: int = 0  # i for DUPi / SWAPi / LOGi


def _info(mnemonic, rule):
    if rule is Rule.STOP:
        return OpInfo(mnemonic, rule, _STOP_POPS[mnemonic], 0)
    if rule is Rule.POP:
        return OpInfo(mnemonic, rule, 1, 0)
    if rule is Rule.UNARY:
        return OpInfo(mnemonic, rule, 1, 1)
    if rule is Rule.BINARY:
        return OpInfo(mnemonic, rule, 2, 1)
    if rule is Rule.TERNARY:
        return OpInfo(mnemonic, rule, 3, 0 if mnemonic in _COPY_OPS else 1)
    if rule in (Rule.MLOAD, Rule.SLOAD):
        return OpInfo(mnemonic, rule, 1, 1)
    if rule is Rule.SHA3:
        return OpInfo(mnemonic, rule, 2, 1)
    if rule in (Rule.MSTORE, Rule.SSTORE):
        return OpInfo(mnemonic, rule, 2, 0)
    if rule is Rule.DUP:
        i = int(mnemonic[3:])
        # DUPi reads i slots deep and leaves them in place
        return OpInfo(mnemonic, rule, 0, 1, i)
    if rule is Rule.SWAP:
        return OpInfo(mnemonic, rule, 0, 0, int(mnemonic[4:]))
    if rule is Rule.JUMPI:
        return OpInfo(mnemonic, rule, 2, 0)
    if rule is Rule.JUMP:
        return OpInfo(mnemonic, rule, 1, 0)
    if rule is Rule.CALL:
        return OpInfo(mnemonic, rule, _CALL_POPS[mnemonic], 1)
    if rule is Rule.PUSH or rule is Rule.ENV:
        return OpInfo(mnemonic, rule, 0, 1)
    if rule is Rule.JUMPDEST:
        return OpInfo(mnemonic, rule, 0, 0)
    if rule is Rule.LOG:
        i = int(mnemonic[3:])
        return OpInfo(mnemonic, rule, 2 + i, 0, i)
    raise AssertionError(rule)


OPCODES: dict[str, OpInfo] = {}
for _table in (SEMANTIC_TABLE, EXTRA_TABLE):
    for _rule, _names in _table.items():
        for _name in _names:
            OPCODES[_name] = _info(_name, _rule)

SEMANTIC_MNEMONICS = frozenset(m for names in SEMANTIC_TABLE.values() for m in names)


def info(mnemonic: str) -> OpInfo:
    return OPCODES[mnemonic]


def stack_need(op: OpInfo) -> int:
    """Minimum stack depth required to execute ``op``."""
    if op.rule is Rule.DUP:
        return op.index
    if op.rule is Rule.SWAP:
        return op.index + 1
    return op.pops
