"""SMT-LIB emission, solver processes and verdicts."""
from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import tempfile
import threading
import time
from dataclasses import dataclass

from . import terms as T
from .terms import BOOL, BS, CND, IDX, MSG, NON, TP, FunctionSymbol, Op, Term
from .theory import FULL, TheoryScript


class EmitError(Exception):
    pass


def esc(name: str) -> str:
    """Injective map into [A-Za-z0-9_^]: every other character becomes ^ plus six hex digits."""
    return "".join(c if (c.isascii() and (c.isalnum() or c == "_")) else f"^{ord(c):06x}" for c in name)


SORT_NAMES = {IDX: "Index", TP: "Step", NON: "Nonce", MSG: "Message", CND: "Condition", BS: "Bitstring", BOOL: "Bool"}


def _sort(s) -> str:
    return SORT_NAMES[s]


def fun_name(f: FunctionSymbol) -> str:
    return ("q." if f.kind == T.NAMED_QUANTIFIER else "f.") + esc(f.name)


def rel_name(rel, right_sort) -> str:
    return f"r.{esc(rel.id)}.{'m' if right_sort == MSG else 'c'}"


_BASE_CTORS = {
    Op.CTRUE: ("c.true", ()),
    Op.CFALSE: ("c.false", ()),
    Op.CAND: ("c.and", (CND, CND)),
    Op.COR: ("c.or", (CND, CND)),
    Op.CIMPL: ("c.impl", (CND, CND)),
    Op.CNOT: ("c.not", (CND,)),
    Op.EQUIV: ("c.equiv", (MSG, MSG)),
}


class Emitter:
    def __init__(self, script: TheoryScript):
        self.script = script
        self.full = script.mode == FULL

    # -------------------------------------------------------- terms

    def term(self, t: Term) -> str:
        op = t.op
        if op == Op.VAR:
            return "v." + esc(t.head)
        if op == Op.NONCE:
            return self._apply("n." + esc(t.head.name), t.args)
        if op == Op.NBAR:
            return self._apply("c.nbar", t.args)
        if op == Op.STEP:
            return self._apply("s." + esc(t.head.name), t.args)
        if op == Op.PRED:
            return self._apply("pred", t.args)
        if op == Op.APP:
            if t.head.kind == T.RESERVED:
                raise EmitError(f"cannot emit internal symbol {t.head.name}")
            return self._apply(fun_name(t.head), t.args)
        if op == Op.MACRO:
            if t.head != "input":
                raise EmitError(f"cannot emit macro {t.head}")
            return self._apply("c.input", t.args)
        if op == Op.ITE:
            return self._apply("c.ite", t.args)
        if op in _BASE_CTORS:
            if op in (Op.CAND, Op.COR) and len(t.args) != 2:
                raise EmitError("n-ary condition connective left unbinarized")
            return self._apply(_BASE_CTORS[op][0], t.args)
        if op == Op.EVAL:
            return self._apply("eval.m", t.args)
        if op == Op.EVALC:
            return self._apply("eval.c", t.args)
        if op == Op.EVALF:
            return self._apply("e." + esc(t.head.name), t.args)
        if op == Op.EQ:
            return self._apply("=", t.args)
        if op == Op.LT:
            return self._apply("lt", t.args)
        if op == Op.HAPPENS:
            return self._apply("happens", t.args)
        if op == Op.SUB:
            return self._apply(rel_name(t.head, t.args[1].sort), t.args)
        if op == Op.TRUE:
            return "true"
        if op == Op.FALSE:
            return "false"
        if op in (Op.AND, Op.OR):
            if not t.args:
                return "true" if op == Op.AND else "false"
            if len(t.args) == 1:
                return self.term(t.args[0])
            return self._apply("and" if op == Op.AND else "or", t.args)
        if op == Op.IMPLIES:
            return self._apply("=>", t.args)
        if op == Op.IFF:
            return self._apply("=", t.args)
        if op == Op.NOT:
            return self._apply("not", t.args)
        if op in (Op.FORALL, Op.EXISTS):
            bs = " ".join(f"({self.term(b)} {_sort(b.sort)})" for b in t.binders)
            q = "forall" if op == Op.FORALL else "exists"
            return f"({q} ({bs}) {self.term(t.args[0])})"
        raise EmitError(f"cannot emit {op} term {T.show(t)}")

    def axiom(self, ax, qid: str) -> str:
        f = ax.formula
        if f.op != Op.FORALL:
            return self.term(f)
        bs = " ".join(f"({self.term(b)} {_sort(b.sort)})" for b in f.binders)
        pats = "".join(f" :pattern ({' '.join(self.term(p) for p in group)})" for group in ax.patterns)
        return f"(forall ({bs}) (! {self.term(f.args[0])} :qid {qid}{pats}))"

    def _apply(self, f: str, args) -> str:
        if not args:
            return f
        return f"({f} {' '.join(self.term(a) for a in args)})"

    # -------------------------------------------------------- declarations

    def _ctor(self, name: str, sorts) -> str:
        if not sorts:
            return f"({name})"
        fields = " ".join(f"({name}.{k} {_sort(s)})" for k, s in enumerate(sorts))
        return f"({name} {fields})"

    def constructors(self):
        """(name, arg sorts, result sort) of every message/condition constructor, in a fixed order."""
        sc = self.script
        out = []
        for f in sc.functions:
            out.append((fun_name(f), f.arg_sorts, f.result))
        if T.ATT not in sc.functions:
            out.append((fun_name(T.ATT), T.ATT.arg_sorts, MSG))
        out.append(("c.nbar", (NON,), MSG))
        out.append(("c.input", (TP,), MSG))
        out.append(("c.ite", (CND, MSG, MSG), MSG))
        for nq in sc.named:
            out.append((fun_name(nq.symbol), nq.symbol.arg_sorts, nq.symbol.result))
        for op in (Op.CTRUE, Op.CFALSE, Op.CAND, Op.COR, Op.CIMPL, Op.CNOT, Op.EQUIV):
            name, sorts = _BASE_CTORS[op]
            out.append((name, sorts, CND))
        return out

    def declarations(self) -> list[str]:
        sc = self.script
        lines = ["(set-logic ALL)", "(declare-sort Index 0)"]
        steps = " ".join(self._ctor("s." + esc(s.symbol.name), [IDX] * s.symbol.arity) for s in sc.protocol.steps)
        lines.append(f"(declare-datatypes ((Step 0)) (({steps})))")
        if sc.nonces:
            ns = " ".join(self._ctor("n." + esc(n.name), [IDX] * n.arity) for n in sc.nonces)
            lines.append(f"(declare-datatypes ((Nonce 0)) (({ns})))")
        else:
            lines.append("(declare-sort Nonce 0)")
        lines.append("(declare-sort Bitstring 0)")
        ctors = self.constructors()
        if self.full:
            msg = " ".join(self._ctor(n, s) for n, s, r in ctors if r == MSG)
            cnd = " ".join(self._ctor(n, s) for n, s, r in ctors if r == CND)
            lines.append(f"(declare-datatypes ((Message 0) (Condition 0)) (({msg}) ({cnd})))")
        else:
            lines += ["(declare-sort Message 0)", "(declare-sort Condition 0)"]
            for n, s, r in ctors:
                lines.append(f"(declare-fun {n} ({' '.join(map(_sort, s))}) {_sort(r)})")
        lines += [
            "(declare-fun pred (Step) Step)",
            "(declare-fun lt (Step Step) Bool)",
            "(declare-fun happens (Step) Bool)",
            "(declare-fun eval.m (Message) Bitstring)",
            "(declare-fun eval.c (Condition) Bool)",
        ]
        for f in sc.functions:
            args = " ".join(_sort(T._eval_sort(s)) for s in f.arg_sorts)
            lines.append(f"(declare-fun e.{esc(f.name)} ({args}) {_sort(T._eval_sort(f.result))})")
        for rel in sc.relations:
            left = "Nonce" if rel.nonce_left else "Message"
            for right in (MSG, CND):
                lines.append(f"(declare-fun {rel_name(rel, right)} ({left} {_sort(right)}) Bool)")
        return lines

    def emit(self) -> str:
        sc = self.script
        out = [f"; problem {sc.name}, {sc.mode} mode"]
        out += self.declarations()
        for k, ax in enumerate(sc.axioms):
            note = f" {ax.note}" if ax.note else ""
            out.append(f"; [{ax.tag}]{_ascii(note)}")
            out.append(f"(assert {self.axiom(ax, f'{ax.tag}.{k}')})")
        if sc.query is not None:
            out.append("; [negated-query]")
            out.append(f"(assert (not {self.term(sc.query)}))")
        out.append("(check-sat)")
        return "\n".join(out) + "\n"


def _ascii(s: str) -> str:
    return s.encode("ascii", "backslashreplace").decode().replace("\n", " ")


def emit(script: TheoryScript) -> str:
    return Emitter(script).emit()


def split_iff(query: Term) -> list[Term]:
    """forall x. P => (A <=> B)  ~>  [forall x. P => (A => B), forall x. P => (B => A)]."""

    def go(q: Term):
        if q.op == Op.FORALL:
            parts = go(q.args[0])
            return None if parts is None else [T.Forall(q.binders, p) for p in parts]
        if q.op == Op.IMPLIES:
            parts = go(q.args[1])
            return None if parts is None else [T.Implies(q.args[0], p) for p in parts]
        if q.op == Op.IFF:
            a, b = q.args
            return [T.Implies(a, b), T.Implies(b, a)]
        return None

    return go(query) or [query]


# ---------------------------------------------------------------- solvers

PROVED, SAT, UNKNOWN, TIMEOUT, ERROR = "proved", "inconclusive-sat", "unknown", "timeout", "solver-error"
_RANK = {PROVED: 0, SAT: 1, UNKNOWN: 2, TIMEOUT: 3, ERROR: 4}
GRACE = 1.0

BUILTIN_SOLVERS = {
    "z3": "z3 -smt2 -T:{timeout} {file}",
    "cvc5": "cvc5 --lang=smt2 --tlimit={timeout_ms} {file}",
}


@dataclass(frozen=True)
class SolverConfig:
    name: str
    command: str  # template with {file}, {timeout}, {timeout_ms}; stdin is used without {file}
    timeout: float = 60.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("solver timeout must be positive")

    def argv(self, path: str) -> list[str]:
        t = max(1, int(round(self.timeout)))
        return [a.format(file=path, timeout=t, timeout_ms=int(self.timeout * 1000)) for a in shlex.split(self.command)]

    @staticmethod
    def parse(spec: str, timeout: float) -> "SolverConfig":
        """`name=command template` or a bare builtin name."""
        if "=" in spec:
            name, cmd = spec.split("=", 1)
            return SolverConfig(name.strip(), cmd.strip(), timeout)
        if spec not in BUILTIN_SOLVERS:
            raise ValueError(f"unknown solver {spec}; use name=command")
        return SolverConfig(spec, BUILTIN_SOLVERS[spec], timeout)


def available_solvers(timeout: float) -> list[SolverConfig]:
    return [SolverConfig(n, c, timeout) for n, c in BUILTIN_SOLVERS.items() if shutil.which(n)]


@dataclass(frozen=True)
class Verdict:
    outcome: str
    raw: str = ""
    wall_ms: int = 0
    solver: str = ""

    @property
    def proved(self) -> bool:
        return self.outcome == PROVED


def classify(output: str, returncode: int | None) -> str:
    for line in output.splitlines():
        tok = line.strip()
        if tok == "unsat":
            return PROVED
        if tok == "sat":
            return SAT
        if tok in ("unknown", "timeout"):
            return UNKNOWN
    return ERROR


class _Run:
    def __init__(self, config: SolverConfig, text: str):
        self.config, self.text = config, text
        self.proc: subprocess.Popen | None = None
        self.cancelled = False

    def __call__(self) -> Verdict:
        cfg = self.config
        start = time.monotonic()
        use_file = "{file}" in cfg.command
        path = None
        try:
            if use_file:
                fd, path = tempfile.mkstemp(suffix=".smt2")
                with os.fdopen(fd, "w") as fh:
                    fh.write(self.text)
            try:
                self.proc = subprocess.Popen(cfg.argv(path or ""), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                             stderr=subprocess.STDOUT, text=True)
            except (OSError, ValueError) as e:
                return Verdict(ERROR, f"spawn failed: {e}", 0, cfg.name)
            try:
                out, _ = self.proc.communicate(None if use_file else self.text, timeout=cfg.timeout + GRACE)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                out, _ = self.proc.communicate()
                ms = int((time.monotonic() - start) * 1000)
                return Verdict(TIMEOUT, out or "", ms, cfg.name)
            ms = int((time.monotonic() - start) * 1000)
            outcome = classify(out, self.proc.returncode)
            if self.cancelled and outcome == ERROR:
                outcome = UNKNOWN
            if outcome == UNKNOWN and ms >= cfg.timeout * 1000:
                outcome = TIMEOUT
            return Verdict(outcome, out, ms, cfg.name)
        finally:
            if path:
                os.unlink(path)

    def cancel(self):
        self.cancelled = True
        if self.proc is not None and self.proc.poll() is None:
            self.proc.kill()


def run(config: SolverConfig, text: str) -> Verdict:
    return _Run(config, text)()


def best(verdicts) -> Verdict:
    return min(verdicts, key=lambda v: (_RANK[v.outcome], v.wall_ms, v.solver))


def portfolio(configs, text: str) -> Verdict:
    """Run all solvers concurrently; the first proof wins and cancels the others."""
    return best(portfolio_all(configs, text))


def portfolio_all(configs, text: str) -> list[Verdict]:
    """Every solver's verdict, in configuration order (cancelled runs included)."""
    configs = list(configs)
    if not configs:
        raise ValueError("portfolio needs at least one solver")
    runs = [_Run(c, text) for c in configs]
    results: list[Verdict | None] = [None] * len(runs)
    done = threading.Condition()

    def work(k):
        v = runs[k]()
        with done:
            results[k] = v
            if v.proved:
                for r in runs:
                    if r is not runs[k]:
                        r.cancel()
            done.notify_all()

    threads = [threading.Thread(target=work, args=(k,), daemon=True) for k in range(len(runs))]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    return [v for v in results if v is not None]
