"""Guarded subterm sets st(u) / st_shallow(u) and the subterm-relation axioms."""
from __future__ import annotations

from dataclasses import dataclass

from . import terms as T
from .ptcl import Protocol, Step
from .terms import CND, IDX, MSG, NON, TP, FunctionSymbol, Op, RelationSpec, Term

FUNCTION_OPS = frozenset({
    Op.APP, Op.NBAR, Op.ITE, Op.LOOKUP, Op.EQUIV, Op.CTRUE, Op.CFALSE,
    Op.CAND, Op.COR, Op.CIMPL, Op.CNOT,
})
QUANTIFIER_OPS = frozenset({Op.CFORALL, Op.CEXISTS, Op.FIND})


@dataclass(frozen=True)
class SubtermEntry:
    candidate: Term
    bound: tuple[Term, ...] = ()
    guard: Term = T.TRUE

    def __str__(self) -> str:
        return f"({T.show(self.candidate)}) | bound: {', '.join(v.head for v in self.bound)} | guard: {T.show(self.guard)}"


@dataclass(frozen=True)
class SubtermSet:
    source: Term
    entries: tuple[SubtermEntry, ...]

    def dump(self) -> str:
        return "\n".join(str(e) for e in self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def rename_bound(t: Term, avoid: set[str]) -> Term:
    """Rename every binder of `t` to a name outside `avoid` (which is extended)."""
    if not any(u.binders for u in T.walk(t)):
        return t

    def go(u: Term) -> Term:
        if not u.binders:
            return T.map_children(u, go)
        ren = {}
        for b in u.binders:
            nb = T.var(T.fresh_name(b.head, avoid), b.sort)
            avoid.add(nb.head)
            ren[b] = nb
        if u.op == Op.FIND:
            c, a, e = u.args
            args = (go(T.substitute(c, ren)), go(T.substitute(a, ren)), go(e))
        else:
            args = tuple(go(T.substitute(x, ren)) for x in u.args)
        return T.Term(u.op, args, u.head, tuple(ren[b] for b in u.binders), u.sort)

    return go(t)


def instantiate_step(step: Step, avoid: set[str]) -> tuple[Term, Term, Term]:
    """Fresh copy (timepoint, condition, message) of a step, no name in `avoid`."""
    theta = {}
    for p in step.params:
        v = T.var(T.fresh_name(p.head, avoid), p.sort)
        avoid.add(v.head)
        theta[p] = v
    c, m = step.instantiate(theta[p] for p in step.params)
    c, m = rename_bound(c, avoid), rename_bound(m, avoid)
    return T.step(step.symbol, *(theta[p] for p in step.params)), c, m


def symbolic_expand(macro: str, tp: Term, cond: Term, msg: Term) -> Term:
    """One step of symbolic macro expansion of macro(tp), tp a step with bodies cond/msg."""
    if tp == T.INIT_T:
        return T.CTRUE if macro in ("cond", "exec") else T.app(T.EMPTY)
    if macro == "cond":
        return cond
    if macro == "output":
        return msg
    if macro == "exec":
        return T.app(T.AND_INT, T.macro("cond", tp), T.macro("exec", T.pred(tp)))
    if macro == "input":
        return T.app(T.ATT, T.macro("frame", T.pred(tp)))
    if macro == "frame":
        ex = T.macro("exec", tp)
        return T.app(
            T.PAIR_C,
            ex,
            T.app(T.PAIR_M, T.app(T.IF_INT, ex, T.macro("output", tp), T.app(T.ERR)), T.macro("frame", T.pred(tp))),
        )
    raise ValueError(f"unknown macro {macro}")


def _entry_key(e: SubtermEntry):
    used = [v for v in e.bound if v in T.free_vars(e.candidate) | T.free_vars(e.guard)]
    ren = {v: T.var(f"#{k}", v.sort) for k, v in enumerate(used)}
    return T.alpha_key(T.substitute(e.candidate, ren)), T.alpha_key(T.substitute(e.guard, ren))


def _dedupe(entries) -> tuple[SubtermEntry, ...]:
    seen, out = set(), []
    for e in entries:
        fv = T.free_vars(e.candidate) | T.free_vars(e.guard)
        e = SubtermEntry(e.candidate, tuple(v for v in e.bound if v in fv), e.guard)
        k = _entry_key(e)
        if k not in seen:
            seen.add(k)
            out.append(e)
    return tuple(out)


def _walk(u: Term, rel: RelationSpec, macro_case, bound=(), guard=T.TRUE, self_entry=True):
    """Entries of the function/nonce/quantifier cases; macros are delegated to `macro_case`."""
    op = u.op
    if u.sort not in (MSG, CND, NON):
        return
    if op == Op.MACRO:
        yield from macro_case(u, bound, guard, self_entry)
        return
    if self_entry:
        yield SubtermEntry(u, bound, guard)
    if op in (Op.VAR, Op.NONCE):
        return
    if op in QUANTIFIER_OPS:
        inner = bound + u.binders
        if op == Op.FIND:
            c, a, b = u.args
            yield from _walk(c, rel, macro_case, inner, guard)
            yield from _walk(a, rel, macro_case, inner, guard)
            yield from _walk(b, rel, macro_case, bound, guard)
        else:
            yield from _walk(u.args[0], rel, macro_case, inner, guard)
        return
    if op not in FUNCTION_OPS:
        raise ValueError(f"no subterm case for {op}")
    name = u.head.name if op == Op.APP else None
    for k, a in enumerate(u.args):
        yield from _walk(a, rel, macro_case, bound, guard, not (name and rel.skips(name, k)))


def st_shallow(u: Term, rel: RelationSpec = T.DEFAULT_REL) -> SubtermSet:
    """Subterms of `u` with macros kept atomic and no guards."""

    def atomic(m, bound, guard, self_entry):
        if self_entry:
            yield SubtermEntry(m, bound, guard)

    return SubtermSet(u, _dedupe(_walk(u, rel, atomic)))


def st(u: Term, protocol: Protocol, rel: RelationSpec = T.DEFAULT_REL, *, disable_input: bool = False) -> SubtermSet:
    """Trace-independent guarded overapproximation of the subterms of `u`.

    Each macro m(T) contributes itself plus, for every step a[i] and macro m', the
    shallow subterms of the one-step expansion of m'(a[i]) guarded by a[i] < T when m
    is input and a[i] <= T otherwise.  Relations that do not traverse input keep it atomic.
    """
    avoid = T.all_var_names(u)
    # one fresh copy of each step per source term keeps the output deterministic
    copies = [instantiate_step(s, set(avoid)) for s in protocol.steps]

    def macro_case(m: Term, bound, guard, self_entry):
        if self_entry:
            yield SubtermEntry(m, bound, guard)
        if m.head == "input" and (disable_input or not rel.traverses_input):
            return
        target = m.args[0]
        for tp, c, msg in copies:
            g = T.lt(tp, target) if m.head == "input" else T.le(tp, target)
            g = T.And(guard, g)
            params = tuple(tp.args)
            for m2 in T.MACROS:
                body = symbolic_expand(m2, tp, c, msg)
                for e in _walk(body, rel, _atomic_macro):
                    yield SubtermEntry(e.candidate, bound + params + e.bound, g)

    return SubtermSet(u, _dedupe(_walk(u, rel, macro_case)))


def _atomic_macro(m, bound, guard, self_entry):
    if self_entry:
        yield SubtermEntry(m, bound, guard)


def expand_subterm_atom(atom: Term, protocol: Protocol, *, disable_input: bool = False, keep=None) -> Term:
    """t ⊑ u  ~>  OR over (t0, i, c) in st(u) of  exists i. (t = t0 and c).

    `keep` filters candidates (entries it rejects are dropped)."""
    if atom.op != Op.SUB:
        raise ValueError("expected a subterm atom")
    rel, t, u = atom.head, atom.args[0], atom.args[1]
    disjuncts = []
    avoid = T.all_var_names(t) | T.all_var_names(u)
    for e in st(u, protocol, rel, disable_input=disable_input):
        if e.candidate.sort != t.sort or (keep is not None and not keep(e.candidate)):
            continue
        ren = {}
        for v in e.bound:
            if v.head in T.all_var_names(t):
                ren[v] = T.var(T.fresh_name(v.head, avoid | {b.head for b in e.bound}), v.sort)
                avoid.add(ren[v].head)
        cand, guard = T.substitute(e.candidate, ren), T.substitute(e.guard, ren)
        bound = tuple(ren.get(v, v) for v in e.bound)
        disjuncts.append(T.Exists(bound, T.And(T.eq(t, cand), guard)))
    return T.Or(*disjuncts)


# ---------------------------------------------------------------- relation axioms


@dataclass(frozen=True)
class NamedQuantifier:
    """A base quantifier or find replaced by the constructor `symbol(params)`."""

    symbol: FunctionSymbol
    params: tuple[Term, ...]
    binders: tuple[Term, ...]
    original: Term  # the quantifier with `params` free

    def term(self) -> Term:
        return T.app(self.symbol, *self.params)


def constructor_shapes(symbols) -> list[tuple[str, Term]]:
    """Generic applications f(y1..yn) for every constructor of message/condition."""
    shapes = []

    def vars_for(sorts):
        return [T.var(f"y{k + 1}", s) for k, s in enumerate(sorts)]

    for f in symbols:
        shapes.append((f.name, T.app(f, *vars_for(f.arg_sorts))))
    shapes.append(("nbar", T.nbar(T.var("y1", NON))))
    c1, c2, m1, m2 = T.var("y1", CND), T.var("y2", CND), T.var("y1", MSG), T.var("y2", MSG)
    shapes += [
        ("equiv", T.equiv(m1, m2)),
        ("ctrue", T.CTRUE),
        ("cfalse", T.CFALSE),
        ("cand", T.cand(c1, c2)),
        ("cor", T.cor(c1, c2)),
        ("cimpl", T.cimpl(c1, c2)),
        ("cnot", T.cnot(c1)),
        ("ite", T.ite(c1, T.var("y2", MSG), T.var("y3", MSG))),
    ]
    return shapes


def _left(rel: RelationSpec) -> Term:
    return T.var("n", NON) if rel.nonce_left else T.var("t", MSG)


def _sub(rel, t, u):
    return T.sub(rel, t, u)


def _left_equals(rel: RelationSpec, t: Term, u: Term) -> Term:
    """t = u for the relation's left side (nonce-left relations compare through n̄)."""
    if rel.nonce_left:
        if u.op == Op.NBAR:
            return T.eq(t, u.args[0])
        return T.FALSE
    return T.eq(t, u) if u.sort == t.sort else T.FALSE


def function_axioms(rel: RelationSpec, name: str, shape: Term, *, reverse: bool = True) -> list[Term]:
    """Subterm axioms for one constructor under `rel` (strict-subterm and function cases)."""
    t = _left(rel)
    ys = [y for y in shape.args if y.sort in (MSG, CND)]
    head = _sub(rel, t, shape)
    fv = [t] + list(shape.args)
    out = []
    if rel.nonce_left and shape.op == Op.NBAR:
        out.append(T.Forall(fv, T.Implies(head, T.eq(t, shape.args[0]))))
        return out
    skipped = [k for k, y in enumerate(shape.args) if shape.op == Op.APP and rel.skips(name, k)]
    self_eq = _left_equals(rel, t, shape)
    if not skipped:
        out.append(T.Forall(fv, T.Implies(head, T.Or(self_eq, *(_sub(rel, t, y) for y in ys)))))
    else:
        for j in skipped:
            yj = shape.args[j]
            others = [y for k, y in enumerate(shape.args) if k != j and y.sort in (MSG, CND)]
            if yj.sort == t.sort:
                out.append(T.Forall(fv, T.Implies(T.And(head, T.eq(t, yj)), T.Or(self_eq, *(_sub(rel, t, y) for y in others)))))
                out.append(T.Forall(fv, T.Implies(T.And(head, T.Not(T.eq(t, yj))), T.Or(self_eq, *(_sub(rel, t, y) for y in ys)))))
            else:
                out.append(T.Forall(fv, T.Implies(head, T.Or(self_eq, *(_sub(rel, t, y) for y in ys)))))
    if reverse and not rel.nonce_left:
        for k, y in enumerate(shape.args):
            if y.sort not in (MSG, CND):
                continue
            prem = _sub(rel, t, y)
            if k in skipped and y.sort == t.sort:
                prem = T.And(prem, T.Not(T.eq(t, y)))
            out.append(T.Forall(fv, T.Implies(prem, head)))
    return out


def quantifier_axioms(rel: RelationSpec, q: NamedQuantifier) -> list[Term]:
    """t ⊏ Q x.(u1..uk)  =>  exists x. OR t ⊑ ui, for a named quantifier."""
    t = _left(rel)
    head = _sub(rel, t, q.term())
    orig = q.original
    inner = [a for a in orig.args if a.sort in (MSG, CND)]
    if orig.op == Op.FIND:
        c, a, b = orig.args
        body = T.Or(T.Exists(q.binders, T.Or(_sub(rel, t, c), _sub(rel, t, a))), _sub(rel, t, b))
    else:
        body = T.Exists(q.binders, T.Or(*(_sub(rel, t, x) for x in inner)))
    return [T.Forall((t,) + q.params, T.Implies(head, T.Or(_left_equals(rel, t, q.term()), body)))]


def input_axioms(rel: RelationSpec, protocol: Protocol, target: Term | None = None) -> list[Term]:
    """The input case: traversal over all steps before T, or atomicity for non-traversing relations.

    With `target` the conclusion is instantiated at that timepoint (input preprocessing).
    """
    t = _left(rel)
    tv = T.var("T", TP)
    tgt = tv if target is None else target
    head = _sub(rel, t, T.inp(tgt))
    qvars = [t] + ([tv] if target is None else sorted(T.free_vars(target), key=lambda v: v.head))
    self_eq = _left_equals(rel, t, T.inp(tgt))
    if not rel.traverses_input:
        return [T.Forall(qvars, T.Iff(head, self_eq))]
    inner = rel if rel.nonce_left else rel.companion()
    avoid = {v.head for v in qvars} | T.all_var_names(tgt)
    disj = []
    for s in protocol.steps:
        tp, c, m = instantiate_step(s, set(avoid))
        disj.append(T.Exists(tp.args, T.And(T.lt(tp, tgt), T.Or(_sub(inner, t, m), _sub(inner, t, c)))))
    return [T.Forall(qvars, T.Implies(head, T.Or(self_eq, *disj)))]


def relation_axioms(rel: RelationSpec, protocol: Protocol, symbols, named=(), *, reverse: bool = True) -> list[Term]:
    """All subterm axioms for `rel`: constructors, named quantifiers and the input macro."""
    out: list[Term] = []
    if not rel.nonce_left:
        t = T.var("t", MSG)
        out.append(T.Forall([t], _sub(rel, t, t)))
    for name, shape in constructor_shapes(symbols):
        out += function_axioms(rel, name, shape, reverse=reverse)
    for q in named:
        out += quantifier_axioms(rel, q)
    out += input_axioms(rel, protocol)
    return out
