"""Command line entry point: analyze, fix and replay contract bundles."""

import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import json
from pathlib import Path
import sys

from .analysis import DEFAULT_TIMEOUT, analyze_bundle
from .errors import DivergentRun, EvmFixError
from .patcher import apply_patches, plan_fixes
from .program import load_bundle
from .replay import replay
from .traces import DEFAULT_CAP

EXIT_CLEAN, EXIT_ERROR, EXIT_VULNERABLE = 0, 1, 2


@dataclass
class RunConfig:
    command: str
    bundle_path: str | None = None
    timeout_seconds: float = DEFAULT_TIMEOUT
    loop_cap: int = DEFAULT_CAP
    dump_traces: bool = False
    dump_cfg: bool = False
    dump_deps: bool = False
    emit_plan: str | None = None
    out: str | None = None
    batch: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.timeout_seconds <= 0:
            raise ValueError("timeout must be positive")
        if self.loop_cap < 1:
            raise ValueError("loop cap must be at least 1")


def _analysis_json(result, cfg):
    data = result.to_json()
    if cfg.dump_traces and result.traces is not None:
        data["trace_dump"] = [t.to_json() for t in result.traces]
    if cfg.dump_cfg and result.cfg is not None:
        data["cfg_dot"] = result.cfg.to_dot(result.program)
    if cfg.dump_deps and result.dp is not None:
        data["dependencies"] = result.dp.edge_list()
    return data


def _exit_code(result):
    if result.timed_out:
        return EXIT_ERROR
    return EXIT_CLEAN if result.clean else EXIT_VULNERABLE


def _emit(data, summary, out):
    text = json.dumps(data, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
        print(summary)
    else:
        print(summary, file=sys.stderr)
        print(text)


def run_analyze(cfg):
    bundle = load_bundle(cfg.bundle_path)
    result = analyze_bundle(bundle, cfg.timeout_seconds, cfg.loop_cap)
    _emit(_analysis_json(result, cfg), result.summary(), cfg.out)
    return _exit_code(result)


def run_fix(cfg):
    bundle = load_bundle(cfg.bundle_path)
    result = analyze_bundle(bundle, cfg.timeout_seconds, cfg.loop_cap)
    if result.timed_out:
        print(result.summary(), file=sys.stderr)
        return EXIT_ERROR
    plan = plan_fixes(result.reports, bundle, result.dp)
    patched = apply_patches(bundle.source, plan)
    out = cfg.out or str(Path(cfg.bundle_path).with_suffix(".fixed.sol"))
    Path(out).write_text(patched)
    if cfg.emit_plan:
        Path(cfg.emit_plan).write_text(json.dumps(plan.to_json(), indent=2) + "\n")
    print(f"{result.summary()}; {len(plan)} edit(s) -> {out}")
    return _exit_code(result)


def run_replay(cfg):
    bundle = load_bundle(cfg.bundle_path)
    result = analyze_bundle(bundle, cfg.timeout_seconds, cfg.loop_cap)
    stats = replay(bundle, analysis=result)
    counts = stats.check_counts
    summary = (f"{bundle.name}: {len(stats.transactions)} tx, gas overhead "
               f"{float(stats.gas_overhead_pct):.4f}%, checks targeted {counts['targeted']} "
               f"blanket {counts['blanket']}")
    _emit(stats.to_json(), summary, cfg.out)
    return EXIT_CLEAN


_COMMANDS = {"analyze": run_analyze, "fix": run_fix, "replay": run_replay}


def run(cfg):
    try:
        return _COMMANDS[cfg.command](cfg)
    except DivergentRun as exc:
        print(f"DivergentRun: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except EvmFixError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _batch_one(args):
    path, timeout, cap = args
    try:
        result = analyze_bundle(load_bundle(path), timeout, cap)
        return path, _exit_code(result), result.to_json()
    except EvmFixError as exc:
        return path, EXIT_ERROR, {"contract": Path(path).stem, "status": "error",
                                  "error": f"{type(exc).__name__}: {exc}"}


def run_batch(cfg):
    paths = sorted(str(p) for p in Path(cfg.batch).glob("*.json"))
    jobs = [(p, cfg.timeout_seconds, cfg.loop_cap) for p in paths]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_batch_one, jobs))
    else:
        results = [_batch_one(j) for j in jobs]
    lines = [json.dumps({"path": p, "exit": code, **data}, sort_keys=True)
             for p, code, data in results]
    text = "\n".join(lines) + ("\n" if lines else "")
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    codes = {code for _, code, _ in results}
    print(f"{len(results)} bundle(s): " + ", ".join(
        f"{n} exit {c}" for c, n in sorted(_count(results).items())), file=sys.stderr)
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_VULNERABLE if EXIT_VULNERABLE in codes else EXIT_CLEAN


def _count(results):
    out = {}
    for _, code, _ in results:
        out[code] = out.get(code, 0) + 1
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="evmfix", description="Detect and fix EVM contract vulnerabilities.")
    p.add_argument("command", choices=sorted(_COMMANDS))
    p.add_argument("bundle", nargs="?", help="contract bundle JSON")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="seconds (default 300)")
    p.add_argument("--loop-cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--dump-traces", action="store_true")
    p.add_argument("--dump-cfg", action="store_true")
    p.add_argument("--dump-deps", action="store_true")
    p.add_argument("--emit-plan", metavar="PATH")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--batch", metavar="DIR", help="analyze every *.json bundle in DIR")
    p.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.bundle is None and args.batch is None:
        parser.error("a bundle path or --batch DIR is required")
    try:
        cfg = RunConfig(args.command, args.bundle, args.timeout, args.loop_cap,
                        args.dump_traces, args.dump_cfg, args.dump_deps, args.emit_plan,
                        args.out, args.batch, max(1, args.jobs))
    except ValueError as exc:
        parser.error(str(exc))
    if cfg.batch:
        if cfg.command != "analyze":
            parser.error("--batch only supports analyze")
        return run_batch(cfg)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
