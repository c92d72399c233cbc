"""End-to-end analysis: bounds, traces, CFG, dependency, detectors."""

from dataclasses import dataclass, field
import time

from .cfg import build_cfg, control_deps, post_dominators, static_cfg, static_control_deps
from .dependency import full_dependency
from .detectors import detect_all
from .errors import AnalysisTimeout, EmptyTraceSet
from .traces import DEFAULT_CAP, compute_loop_bounds, enumerate_traces

DEFAULT_TIMEOUT = 300


@dataclass
class AnalysisResult:
    name: str
    program: object
    bounds: object
    traces: object
    cfg: object = None
    pdt: object = None
    cds: dict = field(default_factory=dict)
    dp: object = None
    reports: list = field(default_factory=list)
    timed_out: bool = False
    elapsed: float = 0.0

    @property
    def clean(self):
        return not self.reports and not self.timed_out

    @property
    def truncated(self):
        return bool(self.traces is not None and self.traces.truncated)

    def summary(self):
        if self.timed_out:
            return f"{self.name}: timeout after {len(self.traces or ())} traces"
        if self.clean:
            return f"{self.name}: clean ({len(self.traces)} traces)"
        kinds = sorted({r.kind for r in self.reports})
        return f"{self.name}: {len(self.reports)} report(s) [{', '.join(kinds)}]"

    def to_json(self):
        heads = sorted(self.bounds.loop_heads) if self.bounds else []
        out = {
            "contract": self.name,
            "status": "timeout" if self.timed_out else ("clean" if self.clean else "vulnerable"),
            "traces": len(self.traces or ()),
            "truncated": self.truncated,
            "loop_bounds": {str(h): self.bounds[h] for h in heads},
            "reports": [r.to_json() for r in self.reports],
        }
        if self.dp is not None and self.dp.stats is not None:
            out["address_transforms"] = self.dp.stats.to_json()
        return out


def analyze_program(program, functions=(), sourcemap=None, timeout=DEFAULT_TIMEOUT,
                    loop_cap=DEFAULT_CAP, name="contract"):
    started = time.monotonic()
    bounds = compute_loop_bounds(program, static_cfg(program), sourcemap, loop_cap)
    try:
        traces = enumerate_traces(program, bounds, timeout=timeout)
    except AnalysisTimeout as exc:
        return AnalysisResult(name, program, bounds, exc.partial, timed_out=True,
                              elapsed=time.monotonic() - started)
    if not len(traces):
        raise EmptyTraceSet(f"{name}: no maximal trace within the loop budgets")
    cfg = build_cfg(traces)
    pdt = post_dominators(cfg)
    static = static_control_deps(cfg, pdt)
    cds = {tr.id: control_deps(tr, cfg, pdt, static) for tr in traces}
    dp = full_dependency(traces, cds)
    reports = detect_all(traces, dp, functions, sourcemap)
    return AnalysisResult(name, program, bounds, traces, cfg, pdt, cds, dp, reports,
                          elapsed=time.monotonic() - started)


def analyze_bundle(bundle, timeout=DEFAULT_TIMEOUT, loop_cap=DEFAULT_CAP):
    return analyze_program(bundle.program, bundle.functions, bundle.sourcemap,
                           timeout, loop_cap, bundle.name)
