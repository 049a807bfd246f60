"""Command-line entry point: verify, oracle, traces."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import smt
from .oracle import check_subterm_soundness
from .preprocess import LEVELS, preprocess_instances
from .ptcl import ParseError, ValidationError, load
from .theory import FULL, HEURISTIC, build

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_PROVED, EXIT_INCONCLUSIVE, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


@dataclass
class RunReport:
    problem: str
    level: str
    mode: str
    files: list[str] = field(default_factory=list)
    parts: list[list[smt.Verdict]] = field(default_factory=list)  # per split query, every solver's verdict
    emit_only: bool = False

    @property
    def outcome(self) -> str:
        if self.emit_only:
            return "emitted"
        if not self.parts:
            return "no-query"
        bests = [smt.best(p) for p in self.parts]
        if all(v.proved for v in bests):
            return "proved"
        if any(v.outcome == smt.ERROR for v in bests):
            return "solver-error"
        return "inconclusive"

    @property
    def exit_code(self) -> int:
        return {"emitted": EXIT_PROVED, "proved": EXIT_PROVED, "solver-error": EXIT_SOLVER}.get(self.outcome, EXIT_INCONCLUSIVE)

    def to_json(self) -> dict:
        return {
            "problem": self.problem,
            "level": self.level,
            "mode": self.mode,
            "files": self.files,
            "parts": [[{"solver": v.solver, "outcome": v.outcome, "wall_ms": v.wall_ms} for v in p] for p in self.parts],
            "result": self.outcome,
            "exit_code": self.exit_code,
        }

    def text(self) -> str:
        lines = [f"problem {self.problem}: level {self.level} ({self.mode} mode)"]
        lines += [f"  wrote {f}" for f in self.files]
        for k, p in enumerate(self.parts):
            tag = f"query part {k + 1}" if len(self.parts) > 1 else "query"
            for v in p:
                lines.append(f"  {tag}: {v.solver}: {v.outcome} ({v.wall_ms} ms)")
        result = self.outcome
        if result == "inconclusive" and self.mode == HEURISTIC:
            result = "inconclusive (heuristic incomplete)"
        lines.append(f"result: {result}")
        return "\n".join(lines)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _solvers(args, config: dict) -> list[smt.SolverConfig]:
    timeout = args.timeout or float(config.get("timeout", 60))
    specs = list(args.solver or [])
    out = [smt.SolverConfig.parse(s, timeout) for s in specs]
    if not out:
        for name, cmd in sorted(config.get("solvers", {}).items()):
            out.append(smt.SolverConfig(name, cmd, timeout))
    if not out:
        out = smt.available_solvers(timeout)
    return out


def _scripts(problem, level: str, split: bool):
    """(suffix, text) per query part for one level."""
    script = build(problem, level)
    queries = smt.split_iff(script.query) if (split and script.query is not None) else [script.query]
    out = []
    for k, q in enumerate(queries):
        script.query = q
        suffix = "" if len(queries) == 1 else f".part{k + 1}"
        out.append((suffix, smt.emit(script)))
    return script.mode, out


def cmd_verify(args) -> int:
    config = _load_config(args.config)
    level = args.level or config.get("level", "instances")
    if level not in LEVELS:
        print(f"error: unknown level {level}", file=sys.stderr)
        return EXIT_USAGE
    problem = load(args.file)
    if args.dump_instances:
        for inst in preprocess_instances(problem):
            print(inst)
    out_dir = Path(args.out_dir) if args.out_dir else (Path.cwd() if args.emit_only else None)
    if args.emit_only:
        full_level = level if level != "heuristic" else "instances"
        report = RunReport(problem.name, level, FULL, emit_only=True)
        out_dir.mkdir(parents=True, exist_ok=True)
        for mode, lvl in ((FULL, full_level), (HEURISTIC, "heuristic")):
            _, parts = _scripts(problem, lvl, args.split_iff)
            for suffix, text in parts:
                path = out_dir / f"{problem.name}.{mode}{suffix}.smt2"
                path.write_text(text)
                report.files.append(str(path))
        _report(args, report)
        return report.exit_code
    mode, parts = _scripts(problem, level, args.split_iff)
    report = RunReport(problem.name, level, mode)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        for suffix, text in parts:
            path = out_dir / f"{problem.name}.{mode}{suffix}.smt2"
            path.write_text(text)
            report.files.append(str(path))
    solvers = _solvers(args, config)
    if not solvers:
        print("error: no SMT solver configured or found on PATH", file=sys.stderr)
        return EXIT_SOLVER
    for _, text in parts:
        report.parts.append(smt.portfolio_all(solvers, text))
    _report(args, report)
    return report.exit_code


def _report(args, report: RunReport):
    if args.json:
        print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    else:
        print(report.text())


def cmd_oracle(args) -> int:
    problem = load(args.file)
    rep = check_subterm_soundness(problem, args.indices, args.steps, disable_input=args.disable_input)
    if args.json:
        print(json.dumps({"ok": rep.ok, "terms": rep.terms, "traces": rep.traces, "pairs": rep.pairs,
                          "subterms": rep.subterms, "macro_traversals": rep.macro_traversals,
                          "counterexample": str(rep.counterexample) if rep.counterexample else None},
                         indent=2, sort_keys=True))
    else:
        print(rep.summary())
    return 0 if rep.ok else 1


def cmd_traces(args) -> int:
    from .traces import enumerate_traces

    problem = load(args.file)
    n = 0
    for tr in enumerate_traces(problem.protocol, args.indices, args.steps):
        n += 1
        if not args.count:
            print(tr)
    if args.count:
        print(n)
    return 0


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccsa", description="Protocol verification with a first-order subterm encoding.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="translate a problem and run SMT solvers on it")
    v.add_argument("file")
    v.add_argument("--level", choices=LEVELS, default=None, help="preprocessing level (default: instances)")
    v.add_argument("--solver", action="append", metavar="NAME=CMD",
                   help="solver command template with {file} and {timeout}; repeatable")
    v.add_argument("--timeout", type=float, default=None, help="per-solver timeout in seconds (default 60)")
    v.add_argument("--emit-only", action="store_true", help="write the full and heuristic scripts and stop")
    v.add_argument("--split-iff", action="store_true", help="prove each direction of a biconditional query separately")
    v.add_argument("--dump-instances", action="store_true", help="print preprocessed crypto instances")
    v.add_argument("--json", action="store_true")
    v.add_argument("--out-dir", default=None, help="directory for emitted .smt2 files")
    v.add_argument("--config", default=None, help="TOML file with timeout, level and [solvers]")
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help="brute-force check of the subterm-set overapproximation")
    o.add_argument("file")
    o.add_argument("--indices", type=int, default=2)
    o.add_argument("--steps", type=int, default=4)
    o.add_argument("--disable-input", action="store_true", help="mutation hook: drop the input case of st")
    o.add_argument("--json", action="store_true")
    o.set_defaults(func=cmd_oracle)

    t = sub.add_parser("traces", help="list bounded traces, one per line")
    t.add_argument("file")
    t.add_argument("--indices", type=int, default=1)
    t.add_argument("--steps", type=int, default=2)
    t.add_argument("--count", action="store_true", help="print only the number of traces")
    t.set_defaults(func=cmd_traces)
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, OSError, ValueError, tomllib.TOMLDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
