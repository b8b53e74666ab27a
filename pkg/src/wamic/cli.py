"""Command-line driver: ``wamic compile|run|diff-exec|stats``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .interp import diff_modules, exec_wasm, validate_wasm
from .interp.values import format_trace
from .ir import IRError
from .pipeline import DEFAULT_PIPELINE, EMIT_LEVELS, PipelineConfig, compile_module, parse_pipeline
from .textual import parse_module
from .wat import stats

EXIT_OK, EXIT_DIAG, EXIT_TRAP, EXIT_MISMATCH = 0, 1, 2, 3


@dataclass
class RunReport:
    results: list[str] = field(default_factory=list)
    trap: str | None = None
    trap_detail: str = ""
    trace_path: str | None = None
    wall_ms: float = 0.0
    stats: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def render(self) -> str:
        lines = list(self.results)
        if self.trap:
            lines.append(f"trap: {self.trap}" + (f" ({self.trap_detail})" if self.trap_detail else ""))
        if self.trace_path:
            lines.append(f"trace: {self.trace_path}")
        lines.append(f"wall_ms: {self.wall_ms:.3f}")
        for k in sorted(self.stats):
            lines.append(f"{k}: {self.stats[k]}")
        return "\n".join(lines) + "\n"


def _config(args) -> PipelineConfig:
    passes = parse_pipeline(args.pipeline) if args.pipeline else list(DEFAULT_PIPELINE)
    return PipelineConfig(passes=passes, emit=getattr(args, "emit", "wat"), no_opt=args.no_opt,
                          builtin_alloc=args.builtin_alloc, alloca_as_alloc=args.alloca_as_alloc,
                          trace=args.trace, invoke=args.invoke)


def _diag(e: IRError) -> int:
    for d in e.diagnostics:
        print(d, file=sys.stderr)
    return EXIT_DIAG


def _load(path: str):
    return parse_module(Path(path).read_text(encoding="utf-8"), path)


def _compile_wasm(args):
    m = _load(args.file)
    cfg = _config(args)
    cfg.emit = "wat"
    res = compile_module(m, cfg)
    diags = validate_wasm(res.wasm)
    if diags:
        raise IRError(diags)
    return m, res, cfg


def cmd_compile(args) -> int:
    m = _load(args.file)
    cfg = _config(args)
    res = compile_module(m, cfg)
    if res.wasm is not None:
        diags = validate_wasm(res.wasm)
        if diags:
            raise IRError(diags)
    text = res.text(cfg.emit)
    if args.output == "-" or args.output is None and args.stdout:
        sys.stdout.write(text)
        return EXIT_OK
    out = Path(args.output) if args.output else Path(args.file).with_suffix(".wat" if cfg.emit == "wat" else
                                                                             f".{cfg.emit}.mir")
    out.write_text(text, encoding="utf-8")
    print(out)
    return EXIT_OK


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    _, res, cfg = _compile_wasm(args)
    r = exec_wasm(res.wasm, cfg.invoke)
    report = RunReport([str(v) for v in r.results], r.trap, r.trap_detail)
    report.wall_ms = (time.perf_counter() - t0) * 1000
    report.stats = {"steps": r.steps, "instructions": stats(res.wasm).instructions}
    if cfg.trace:
        if args.trace_file:
            Path(args.trace_file).write_text(format_trace(r.trace), encoding="utf-8")
            report.trace_path = args.trace_file
        elif not args.json:
            sys.stdout.write(format_trace(r.trace))
    sys.stdout.write(report.to_json() + "\n" if args.json else report.render())
    return EXIT_TRAP if r.trap else EXIT_OK


def cmd_diff_exec(args) -> int:
    m, res, cfg = _compile_wasm(args)
    rep = diff_modules(m, res.wasm, cfg.invoke)
    if cfg.trace:
        sys.stdout.write("# oracle\n" + format_trace(rep.oracle.trace))
        sys.stdout.write("# wasm\n" + format_trace(rep.compiled.trace))
    if rep.ok:
        status = "trap " + rep.oracle.trap if rep.oracle.trap else " ".join(map(str, rep.oracle.results))
        print(f"match: {status}".rstrip())
        return EXIT_OK
    print(f"mismatch: {rep.divergence}")
    return EXIT_MISMATCH


def cmd_stats(args) -> int:
    m = _load(args.file)
    cfg = _config(args)
    cfg.emit = "wat"
    fused = stats(compile_module(m, cfg).wasm)
    out = {"fused": fused}
    if args.compare_unfused:
        cfg2 = _config(args)
        cfg2.emit = "wat"
        cfg2.passes = [p for p in cfg2.passes if p != "fuse-stack-locals"]
        out["unfused"] = stats(compile_module(m, cfg2).wasm)
    if args.json:
        payload = {k: v.to_dict() for k, v in out.items()}
        print(json.dumps(payload if args.compare_unfused else payload["fused"], indent=2, sort_keys=True))
    else:
        for k, v in out.items():
            if args.compare_unfused:
                print(f"[{k}]")
            sys.stdout.write(v.render())
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are diagnostics, not traps
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_DIAG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wamic", description="Multi-level IR to WebAssembly compiler.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("file")
        sp.add_argument("--pipeline", help="comma-separated pass list")
        sp.add_argument("--no-opt", action="store_true", help="skip cse and fold-constants")
        sp.add_argument("--builtin-alloc", action=argparse.BooleanOptionalAction, default=True)
        sp.add_argument("--alloca-as-alloc", action=argparse.BooleanOptionalAction, default=True)
        sp.add_argument("--trace", action="store_true")
        sp.add_argument("--invoke", default="main")
        sp.add_argument("--json", action="store_true")

    c = sub.add_parser("compile", help="lower a .mir file")
    common(c)
    c.add_argument("--emit", choices=EMIT_LEVELS, default="wat")
    c.add_argument("-o", "--output")
    c.add_argument("--stdout", action="store_true", help="write the result to stdout")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("run", help="compile and execute on the Wasm interpreter")
    common(r)
    r.add_argument("--trace-file")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("diff-exec", help="compare the IR oracle against the compiled Wasm")
    common(d)
    d.set_defaults(func=cmd_diff_exec)

    s = sub.add_parser("stats", help="instruction statistics of the compiled module")
    common(s)
    s.add_argument("--compare-unfused", action="store_true")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IRError as e:
        return _diag(e)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIAG


if __name__ == "__main__":
    sys.exit(main())
