"""Concrete traces: validation, bounded enumeration and ground macro expansion."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

from . import terms as T
from .ptcl import Protocol, match_pattern
from .terms import CND, IDX, MSG, NON, TP, Op, Term


class ExpansionError(Exception):
    pass


@dataclass(frozen=True, order=True)
class ConcreteStep:
    name: str
    indices: tuple[int, ...] = ()

    def __str__(self) -> str:
        if self.name == "init":
            return "init"
        return f"{self.name}[{','.join(map(str, self.indices))}]"

    def term(self, protocol: Protocol) -> Term:
        sym = protocol.step(self.name).symbol
        return T.step(sym, *(T.iconst(i) for i in self.indices))

    @staticmethod
    def of(t: Term) -> "ConcreteStep":
        if t.op != Op.STEP or any(a.op != Op.ICONST for a in t.args):
            raise ExpansionError(f"not a concrete step: {T.show(t)}")
        return ConcreteStep(t.head.name, tuple(a.head for a in t.args))


INIT_CS = ConcreteStep("init")


@dataclass(frozen=True)
class Trace:
    """Index domain {0..index_count-1}; executed steps in order, step-numbering = position."""

    index_count: int
    steps: tuple[ConcreteStep, ...] = (INIT_CS,)

    def __str__(self) -> str:
        return " < ".join(map(str, self.steps))

    @cached_property
    def positions(self) -> dict[ConcreteStep, int]:
        return {s: k for k, s in enumerate(self.steps)}

    def position(self, s: ConcreteStep) -> int | None:
        return self.positions.get(s)


def concrete_steps(protocol: Protocol, index_count: int) -> list[ConcreteStep]:
    """All non-init concrete steps over the index domain, in declaration then index order."""
    out = []
    for st in protocol.steps[1:]:
        for idx in itertools.product(range(index_count), repeat=st.symbol.arity):
            out.append(ConcreteStep(st.name, idx))
    return out


def rank(protocol: Protocol, trace: Trace, s: ConcreteStep) -> int:
    """Numbering extended to non-executed steps: N_T + 1 + lexicographic rank."""
    p = trace.position(s)
    if p is not None:
        return p
    order = {st.name: k for k, st in enumerate(protocol.steps)}
    others = sorted(
        (c for c in concrete_steps(protocol, max([trace.index_count] + [max(s.indices, default=-1) + 1])) if c not in trace.positions),
        key=lambda c: (order[c.name], c.indices),
    )
    return len(trace.steps) + others.index(s)


class _Relations:
    """Ground ≺ (transitively closed) and ◇ over a finite set of concrete steps."""

    def __init__(self, protocol: Protocol, steps: list[ConcreteStep]):
        terms = {s: s.term(protocol) for s in steps}
        self.before: dict[ConcreteStep, set[ConcreteStep]] = {s: set() for s in steps}
        self.excl: set[tuple[ConcreteStep, ConcreteStep]] = set()
        for a, b in itertools.product(steps, repeat=2):
            ta, tb = terms[a], terms[b]
            for o in protocol.order:
                m = match_pattern(o.left, ta, {})
                if m is not None and match_pattern(o.right, tb, m) is not None:
                    self.before[b].add(a)
            for o in protocol.exclusion:
                m = match_pattern(o.left, ta, {})
                if m is not None and match_pattern(o.right, tb, m) is not None:
                    self.excl.add((a, b))
                    self.excl.add((b, a))
        changed = True
        while changed:
            changed = False
            for b, preds in self.before.items():
                extra = set().union(*(self.before.get(a, set()) for a in preds)) - preds if preds else set()
                if extra:
                    preds |= extra
                    changed = True

    def precedes(self, a: ConcreteStep, b: ConcreteStep) -> bool:
        return a in self.before.get(b, ())


def validate_trace(protocol: Protocol, trace: Trace) -> list[str]:
    """Violations of the trace conditions (empty list when the trace is valid)."""
    errs: list[str] = []
    if not trace.steps or trace.steps[0] != INIT_CS:
        errs.append("downward closure: the trace must start with init")
    seen: set[ConcreteStep] = set()
    for k, s in enumerate(trace.steps):
        if s in seen:
            errs.append(f"numbering: {s} is scheduled twice, so the step numbering is not a bijection")
        seen.add(s)
        st = protocol.by_name.get(s.name)
        if st is None or len(s.indices) != st.symbol.arity:
            errs.append(f"instantiation: {s} is not a step of the protocol")
        elif any(not 0 <= i < trace.index_count for i in s.indices):
            errs.append(f"instantiation: {s} uses an index outside the domain")
        elif s.name == "init" and k != 0:
            errs.append("downward closure: init must be the first step")
    if errs:
        return errs
    rel = _Relations(protocol, [INIT_CS] + concrete_steps(protocol, trace.index_count))
    for p, a in enumerate(trace.steps):
        for b in trace.steps[p + 1:]:
            if rel.precedes(b, a):
                errs.append(f"order: {b} must come before {a}")
            if (a, b) in rel.excl:
                errs.append(f"exclusion: {a} and {b} are mutually exclusive")
    return errs


def enumerate_traces(protocol: Protocol, max_index_count: int, max_step_count: int) -> Iterator[Trace]:
    """Every valid trace over index domain {0..max_index_count-1} with at most
    max_step_count steps after init, in lexicographic order of step sequences."""
    cands = concrete_steps(protocol, max_index_count)
    rel = _Relations(protocol, [INIT_CS] + cands)

    def go(prefix: tuple[ConcreteStep, ...]) -> Iterator[Trace]:
        yield Trace(max_index_count, prefix)
        if len(prefix) - 1 >= max_step_count:
            return
        used = set(prefix)
        for c in cands:
            if c in used:
                continue
            if any(rel.precedes(c, x) or (x, c) in rel.excl for x in prefix):
                continue
            yield from go(prefix + (c,))

    yield from go((INIT_CS,))


# ---------------------------------------------------------------- ground expansion


class GroundExpander:
    """Expands macros, quantifiers and lookups of a protocol inside one trace."""

    def __init__(self, protocol: Protocol, trace: Trace):
        self.protocol, self.trace = protocol, trace
        self.step_terms = [s.term(protocol) for s in trace.steps]
        self.pos = {t: k for k, t in enumerate(self.step_terms)}
        self.index_domain = [T.iconst(i) for i in range(trace.index_count)]
        self._memo: dict[tuple[str, int], Term] = {}
        self._cache: dict[tuple[Term, tuple], Term] = {}

    def position(self, tp: Term) -> int:
        if tp.op == Op.PRED:
            return max(0, self.position(tp.args[0]) - 1)
        p = self.pos.get(tp)
        if p is None:
            raise ExpansionError(f"timepoint {T.show(tp)} is not executed")
        return p

    def body(self, p: int, which: str) -> Term:
        cs = self.trace.steps[p]
        st = self.protocol.step(cs.name)
        c, m = st.instantiate(T.iconst(i) for i in cs.indices)
        return self.expand(c if which == "cond" else m, {})

    def macro(self, name: str, p: int) -> Term:
        key = (name, p)
        if key in self._memo:
            return self._memo[key]
        if name == "cond":
            r = T.CTRUE if p == 0 else self.body(p, "cond")
        elif name == "output":
            r = self.body(p, "msg")
        elif name == "exec":
            r = T.CTRUE if p == 0 else T.app(T.AND_INT, self.macro("cond", p), self.macro("exec", p - 1))
        elif name == "input":
            r = T.app(T.EMPTY) if p == 0 else T.app(T.ATT, self.macro("frame", p - 1))
        elif name == "frame":
            if p == 0:
                r = self.body(0, "msg")
            else:
                ex = self.macro("exec", p)
                r = T.app(
                    T.PAIR_C,
                    ex,
                    T.app(T.PAIR_M, T.app(T.IF_INT, ex, self.macro("output", p), T.app(T.ERR)), self.macro("frame", p - 1)),
                )
        else:
            raise ExpansionError(f"unknown macro {name}")
        self._memo[key] = r
        return r

    def domain(self, v: Term) -> list[Term]:
        if v.sort == IDX:
            return self.index_domain
        if v.sort == TP:
            return self.step_terms
        raise ExpansionError(f"cannot range over sort {v.sort.value}")

    def assignments(self, vs) -> Iterator[dict[Term, Term]]:
        vs = list(vs)
        for vals in itertools.product(*(self.domain(v) for v in vs)):
            yield dict(zip(vs, vals))

    def expand(self, t: Term, env: dict[Term, Term]) -> Term:
        """Ground, macro-free image of a message/condition/nonce term under `env`."""
        key = (t, tuple(sorted(((v.head, v.sort.value, x) for v, x in env.items() if v in T.free_vars(t)), key=lambda z: (z[0], z[1]))))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        r = self._expand(t, env)
        self._cache[key] = r
        return r

    def _expand(self, t: Term, env: dict[Term, Term]) -> Term:
        op = t.op
        if op == Op.VAR:
            if t not in env:
                raise ExpansionError(f"unbound variable {t.head}")
            return env[t]
        if op == Op.ICONST:
            return t
        if op == Op.STEP:
            return T.Term(Op.STEP, tuple(self.expand(a, env) for a in t.args), t.head)
        if op == Op.PRED:
            return self.step_terms[max(0, self.position(self.expand(t.args[0], env)) - 1)]
        if op == Op.MACRO:
            return self.macro(t.head, self.position(self.expand(t.args[0], env)))
        if op in (Op.CEXISTS, Op.CFORALL):
            parts = [self.expand(t.args[0], {**env, **a}) for a in self.assignments(t.binders)]
            if not parts:
                return T.CFALSE if op == Op.CEXISTS else T.CTRUE
            return T.Term(Op.COR if op == Op.CEXISTS else Op.CAND, parts)
        if op == Op.FIND:
            c, a, b = t.args
            parts: list[Term] = []
            for asg in self.assignments(t.binders):
                e2 = {**env, **asg}
                parts += [self.expand(c, e2), self.expand(a, e2)]
            parts.append(self.expand(b, env))
            return T.Term(Op.LOOKUP, parts)
        if t.sort not in (MSG, CND, NON):
            raise ExpansionError(f"cannot expand {T.show(t)} of sort {t.sort.value}")
        if not t.args:
            return t
        return T.Term(op, tuple(self.expand(a, env) for a in t.args), t.head, (), t.sort)


def expand_ground(protocol: Protocol, trace: Trace, macro: str, timepoint: ConcreteStep | Term) -> Term:
    ex = GroundExpander(protocol, trace)
    if isinstance(timepoint, ConcreteStep):
        timepoint = timepoint.term(protocol)
    return ex.macro(macro, ex.position(timepoint))


def ground_subterms(t: Term) -> set[Term]:
    """All syntactic subterms of a ground term, itself included (index constants excluded)."""
    out: set[Term] = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if u in out or u.sort not in (MSG, CND, NON):
            continue
        out.add(u)
        stack.extend(u.args)
    return out
