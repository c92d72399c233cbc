"""Detect and repair reentrancy, tx.origin and arithmetic bugs in EVM contract bundles."""

from .analysis import AnalysisResult, analyze_bundle, analyze_program
from .concrete import DEFAULT_GAS, ExecutionEnv, GasTable, run_concrete, step_concrete
from .errors import EvmFixError
from .patcher import PatchPlan, apply_patches, plan_fixes, verify_fixed
from .program import ContractBundle, Program, decode_program, load_bundle, parse_bundle
from .replay import OverheadStats, replay

__version__ = "0.1.0"

__all__ = [
    "AnalysisResult", "ContractBundle", "DEFAULT_GAS", "EvmFixError", "ExecutionEnv", "GasTable",
    "OverheadStats", "PatchPlan", "Program", "analyze_bundle", "analyze_program", "apply_patches",
    "decode_program", "load_bundle", "parse_bundle", "plan_fixes", "replay", "run_concrete",
    "step_concrete", "verify_fixed",
]
