class EvmFixError(Exception):
    pass


class ParseError(EvmFixError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownOpcode(EvmFixError):
    def __init__(self, name, line=None):
        super().__init__(f"unknown opcode {name!r}" + (f" on line {line}" if line else ""))
        self.name = name
        self.line = line


class BundleError(EvmFixError):
    pass


class StackUnderflow(EvmFixError):
    def __init__(self, pc, mnemonic, need, have):
        super().__init__(f"pc {pc}: {mnemonic} needs {need} stack items, has {have}")
        self.pc = pc


class StackOverflow(EvmFixError):
    pass


class InvalidJumpTarget(EvmFixError):
    def __init__(self, pc, target):
        super().__init__(f"pc {pc}: jump to non-existent pc {target}")
        self.pc = pc
        self.target = target


class SymbolicJumpTarget(EvmFixError):
    def __init__(self, pc, target):
        super().__init__(f"pc {pc}: jump target is symbolic ({target})")
        self.pc = pc
        self.target = target


class StepLimitExceeded(EvmFixError):
    def __init__(self, limit, trace=None):
        super().__init__(f"execution did not halt within {limit} steps")
        self.limit = limit
        self.trace = trace


class ArityMismatch(EvmFixError):
    pass


class AnalysisTimeout(EvmFixError):
    def __init__(self, budget, partial=None):
        super().__init__(f"analysis exceeded {budget}s")
        self.budget = budget
        self.partial = partial


class EmptyTraceSet(EvmFixError):
    pass


class OracleBudgetExceeded(EvmFixError):
    pass


class SpanConflict(EvmFixError):
    pass


class UnmappedReport(EvmFixError):
    pass


class SpanOutOfBounds(EvmFixError):
    pass


class SanityCheckFailed(EvmFixError):
    pass


class DivergentRun(EvmFixError):
    def __init__(self, index, detail):
        super().__init__(f"transaction {index}: original and fixed runs diverge ({detail})")
        self.index = index
        self.detail = detail
