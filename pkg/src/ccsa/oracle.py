"""Brute-force check that st(u) covers every ground subterm of u on bounded traces."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import terms as T
from .ptcl import ProblemFile
from .subterms import st
from .terms import CND, IDX, MSG, NON, TP, Op, Term
from .traces import ExpansionError, GroundExpander, Trace, concrete_steps, enumerate_traces, ground_subterms


@dataclass(frozen=True)
class Counterexample:
    term: Term
    assignment: tuple[tuple[str, str], ...]
    trace: Trace
    missed: Term

    def __str__(self) -> str:
        env = ", ".join(f"{k}={v}" for k, v in self.assignment)
        return f"term {T.show(self.term)} [{env}] on trace {self.trace}: subterm {T.show(self.missed)} not covered"


@dataclass
class OracleReport:
    terms: int = 0
    traces: int = 0
    pairs: int = 0  # (term instance, trace) pairs checked
    subterms: int = 0
    macro_traversals: int = 0
    counterexample: Counterexample | None = None
    term_list: list[Term] = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.counterexample is None

    def summary(self) -> str:
        head = "success" if self.ok else "counterexample"
        s = (f"{head}: {self.terms} terms, {self.traces} traces, {self.pairs} (term, trace) pairs, "
             f"{self.subterms} ground subterms, {self.macro_traversals} macro traversals")
        if self.counterexample:
            s += f"\n  {self.counterexample}"
        return s


def user_terms(problem: ProblemFile) -> list[Term]:
    """Step bodies plus maximal message/condition subterms of axioms and query
    whose free variables are all indices or timepoints."""
    out: list[Term] = []
    for s in problem.protocol.steps:
        out += [s.condition, s.message]

    def collect(t: Term):
        if t.sort in (MSG, CND) and all(v.sort in (IDX, TP) for v in T.free_vars(t)):
            out.append(t)
            return
        for a in t.args:
            collect(a)

    for ax, _ in problem.axioms:
        collect(ax)
    if problem.query is not None:
        collect(problem.query)
    seen, uniq = set(), []
    for t in out:
        k = T.alpha_key(t)
        if k not in seen:
            seen.add(k)
            uniq.append(t)
    return uniq


class _Checker:
    def __init__(self, problem: ProblemFile, trace: Trace):
        self.protocol = problem.protocol
        self.trace = trace
        self.ex = GroundExpander(problem.protocol, trace)
        n = len(trace.steps)
        self.rank = {(c.name, c.indices): k for k, c in enumerate(trace.steps)}
        others = [c for c in concrete_steps(problem.protocol, trace.index_count) if c not in trace.positions]
        for k, c in enumerate(others):
            self.rank[(c.name, c.indices)] = n + k
        self._asg: dict = {}

    def _index(self, t: Term, env: dict) -> int:
        if t.op == Op.VAR:
            t = env[t]
        return t.head

    def timepoint_rank(self, t: Term, env: dict) -> int:
        if t.op == Op.VAR:
            t = env[t]
        if t.op == Op.PRED:
            return max(0, self.timepoint_rank(t.args[0], env) - 1)
        return self.rank[(t.head.name, tuple(self._index(a, env) for a in t.args))]

    def holds(self, g: Term, env: dict) -> bool:
        op = g.op
        if op == Op.TRUE:
            return True
        if op == Op.FALSE:
            return False
        if op == Op.AND:
            return all(self.holds(a, env) for a in g.args)
        if op == Op.OR:
            return any(self.holds(a, env) for a in g.args)
        if op == Op.NOT:
            return not self.holds(g.args[0], env)
        a, b = g.args
        if op == Op.LT:
            return self.timepoint_rank(a, env) < self.timepoint_rank(b, env)
        if op == Op.EQ:
            if a.sort == TP:
                return self.timepoint_rank(a, env) == self.timepoint_rank(b, env)
            if a.sort == IDX:
                return self._index(a, env) == self._index(b, env)
        raise ValueError(f"unsupported guard {T.show(g)}")

    def covered(self, entries, env: dict, need: set[Term]) -> Term | None:
        """Return a ground subterm in `need` that no entry covers, or None."""
        left = set(need)
        guards: dict = {}  # entries from one step copy share guard and bound indices
        for e in entries:
            for asg in self.assignments(e.bound):
                env2 = {**env, **asg}
                gk = (e.guard, tuple(asg.values()))
                ok = guards.get(gk)
                if ok is None:
                    ok = guards[gk] = self.holds(e.guard, env2)
                if not ok:
                    continue
                try:
                    left.discard(self.ex.expand(e.candidate, env2))
                except ExpansionError:
                    continue
                if not left:
                    return None
        return min(left, key=lambda t: (len(T.show(t)), T.show(t))) if left else None

    def assignments(self, bound) -> list[dict]:
        hit = self._asg.get(bound)
        if hit is None:
            hit = self._asg[bound] = list(self.ex.assignments(bound))
        return hit


def check_subterm_soundness(problem: ProblemFile, max_index_count: int, max_step_count: int,
                            *, disable_input: bool = False, stop_at_first: bool = True) -> OracleReport:
    """For every user term, bounded trace and index assignment, check that each ground
    subterm of the expansion is the expansion of some st entry whose guard holds."""
    terms = user_terms(problem)
    protocol = problem.protocol
    sets = [st(u, protocol, disable_input=disable_input).entries for u in terms]
    report = OracleReport(terms=len(terms), term_list=terms)
    report.macro_traversals = sum(1 for u in terms for x in T.walk(u) if x.op == Op.MACRO)
    for trace in enumerate_traces(protocol, max_index_count, max_step_count):
        report.traces += 1
        chk = _Checker(problem, trace)
        for u, entries in zip(terms, sets):
            fv = sorted(T.free_vars(u), key=lambda v: v.head)
            for asg in chk.ex.assignments(fv):
                try:
                    ground = chk.ex.expand(u, asg)
                except ExpansionError:
                    continue
                need = ground_subterms(ground)
                report.pairs += 1
                report.subterms += len(need)
                missed = chk.covered(entries, asg, need)
                if missed is not None and report.counterexample is None:
                    report.counterexample = Counterexample(
                        u, tuple((v.head, T.show(x)) for v, x in asg.items()), trace, missed)
                    if stop_at_first:
                        return report
    return report
