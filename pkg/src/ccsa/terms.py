"""Sorted term language: sorts, symbols, terms and structural operations."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Iterator, Mapping


class Sort(Enum):
    INDEX = "index"
    TIMEPOINT = "timepoint"
    NONCE = "nonce"
    MESSAGE = "message"
    CONDITION = "condition"
    BITSTRING = "bitstring"
    BOOL = "bool"

    def __repr__(self) -> str:
        return self.value


IDX, TP, NON, MSG, CND, BS, BOOL = (
    Sort.INDEX,
    Sort.TIMEPOINT,
    Sort.NONCE,
    Sort.MESSAGE,
    Sort.CONDITION,
    Sort.BITSTRING,
    Sort.BOOL,
)

# symbol classes
HONEST = "honest"
CONNECTIVE = "base-connective"
RESERVED = "reserved-macro-internal"
ATTACKER = "attacker"
NAMED_QUANTIFIER = "named-quantifier"


@dataclass(frozen=True)
class FunctionSymbol:
    name: str
    arg_sorts: tuple[Sort, ...]
    result: Sort
    kind: str = HONEST

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)


@dataclass(frozen=True)
class NonceSymbol:
    name: str
    arity: int


@dataclass(frozen=True)
class StepSymbol:
    name: str
    arity: int


INIT = StepSymbol("init", 0)
EMPTY = FunctionSymbol("empty", (), MSG)
ATT = FunctionSymbol("att", (MSG,), MSG, ATTACKER)
# internal symbols of the final macro expansion; never written by users
PAIR_C = FunctionSymbol("<<exec;_>>", (CND, MSG), MSG, RESERVED)
PAIR_M = FunctionSymbol("<<_;_>>", (MSG, MSG), MSG, RESERVED)
IF_INT = FunctionSymbol("IF", (CND, MSG, MSG), MSG, RESERVED)
AND_INT = FunctionSymbol("&&int", (CND, CND), CND, RESERVED)
ERR = FunctionSymbol("err", (), MSG, RESERVED)
RESERVED_SYMBOLS = (PAIR_C, PAIR_M, IF_INT, AND_INT, ERR)


@dataclass(frozen=True)
class RelationSpec:
    """A subterm relation: which argument positions are skipped, and whether input is traversed.

    Positions are 0-based argument indices keyed by function-symbol name.
    """

    skip: frozenset = frozenset()
    traverses_input: bool = True
    nonce_left: bool = False  # the heuristic relation whose left side is a nonce

    @property
    def id(self) -> str:
        if self.nonce_left:
            return "subbar"
        base = "sub"
        if self.skip:
            base += "[" + ",".join(f"{f}.{k + 1}" for f, k in sorted(self.skip)) + "]"
        return base if self.traverses_input else base + "'"

    def companion(self) -> "RelationSpec":
        return RelationSpec(self.skip, False, self.nonce_left)

    def skips(self, f: str, k: int) -> bool:
        return (f, k) in self.skip

    def __str__(self) -> str:
        return self.id


DEFAULT_REL = RelationSpec()
DEFAULT_REL_P = RelationSpec(frozenset(), False)
SUBBAR = RelationSpec(frozenset(), True, True)


def relation(skip: Iterable[tuple[str, int]] = (), traverses_input: bool = True) -> RelationSpec:
    return RelationSpec(frozenset(skip), traverses_input)


class SortError(Exception):
    def __init__(self, message: str, position: tuple[int, ...] = ()):
        super().__init__(f"{message} at position {list(position)}")
        self.position = position


class Op:
    VAR = "var"
    ICONST = "iconst"
    NONCE = "nonce"
    NBAR = "nbar"
    STEP = "step"
    PRED = "pred"
    APP = "app"
    MACRO = "macro"
    ITE = "ite"
    FIND = "find"
    LOOKUP = "lookup"  # ground expansion of find (flat chain)
    EQUIV = "equiv"
    CTRUE = "ctrue"
    CFALSE = "cfalse"
    CAND = "cand"
    COR = "cor"
    CIMPL = "cimpl"
    CNOT = "cnot"
    CFORALL = "cforall"
    CEXISTS = "cexists"
    EVAL = "eval"
    EVALC = "evalc"
    EVALF = "evalf"
    EQ = "eq"
    LT = "lt"
    HAPPENS = "happens"
    SUB = "sub"
    TRUE = "true"
    FALSE = "false"
    AND = "and"
    OR = "or"
    IMPLIES = "implies"
    IFF = "iff"
    NOT = "not"
    FORALL = "forall"
    EXISTS = "exists"


BINDING_OPS = frozenset({Op.FIND, Op.CFORALL, Op.CEXISTS, Op.FORALL, Op.EXISTS})
MACROS = ("cond", "exec", "input", "frame", "output")


class Term:
    """Immutable sorted term.  Structural equality, cached hash."""

    __slots__ = ("op", "args", "head", "binders", "sort", "_hash", "_fv")

    def __init__(self, op, args=(), head=None, binders=(), sort=None):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "binders", tuple(binders))
        if sort is None:
            sort = _infer(op, self.args, head, self.binders)
        object.__setattr__(self, "sort", sort)
        object.__setattr__(self, "_hash", None)
        object.__setattr__(self, "_fv", None)

    def __setattr__(self, key, value):
        raise AttributeError("Term is immutable")

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = hash((self.op, self.args, self.head, self.binders, self.sort))
            object.__setattr__(self, "_hash", h)
        return h

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, Term) or hash(self) != hash(other):
            return False
        return (
            self.op == other.op
            and self.head == other.head
            and self.sort == other.sort
            and self.binders == other.binders
            and self.args == other.args
        )

    def __repr__(self) -> str:
        return show(self)

    # convenience
    @property
    def name(self) -> str:
        return self.head if self.op == Op.VAR else getattr(self.head, "name", str(self.head))

    def is_var(self) -> bool:
        return self.op == Op.VAR


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise SortError(msg)


def _sorts(args) -> list[Sort]:
    return [a.sort for a in args]


def _infer(op, args, head, binders) -> Sort:
    """Sort of a node whose children are already sorted."""
    s = _sorts(args)
    if op == Op.ICONST:
        return IDX
    if op == Op.NONCE:
        _expect(len(args) == head.arity, f"nonce {head.name} expects {head.arity} indices")
        _expect(all(x == IDX for x in s), f"nonce {head.name} expects index arguments")
        return NON
    if op == Op.NBAR:
        _expect(s == [NON], "nonce injection expects a nonce")
        return MSG
    if op == Op.STEP:
        _expect(len(args) == head.arity, f"step {head.name} expects {head.arity} indices")
        _expect(all(x == IDX for x in s), f"step {head.name} expects index arguments")
        return TP
    if op == Op.PRED:
        _expect(s == [TP], "pred expects a timepoint")
        return TP
    if op == Op.APP:
        _expect(
            tuple(s) == head.arg_sorts,
            f"{head.name} expects ({', '.join(x.value for x in head.arg_sorts)})"
            f" but got ({', '.join(x.value for x in s)})",
        )
        return head.result
    if op == Op.MACRO:
        _expect(head in MACROS, f"unknown macro {head}")
        _expect(s == [TP], f"{head} expects a timepoint")
        return CND if head in ("cond", "exec") else MSG
    if op == Op.ITE:
        _expect(s == [CND, MSG, MSG], "if-then-else expects (condition, message, message)")
        return MSG
    if op == Op.FIND:
        _expect(all(b.sort == IDX for b in binders), "find binds index variables")
        _expect(s == [CND, MSG, MSG], "find expects (condition, message, message)")
        return MSG
    if op == Op.LOOKUP:
        _expect(len(s) % 2 == 1, "lookup expects an odd number of arguments")
        for k in range(0, len(s) - 1, 2):
            _expect(s[k] == CND and s[k + 1] == MSG, "lookup expects condition/message pairs")
        _expect(s[-1] == MSG, "lookup default must be a message")
        return MSG
    if op == Op.EQUIV:
        _expect(s == [MSG, MSG], "equiv expects two messages")
        return CND
    if op in (Op.CTRUE, Op.CFALSE):
        return CND
    if op in (Op.CAND, Op.COR):
        _expect(all(x == CND for x in s), "condition connective expects conditions")
        return CND
    if op == Op.CIMPL:
        _expect(s == [CND, CND], "condition implication expects two conditions")
        return CND
    if op == Op.CNOT:
        _expect(s == [CND], "condition negation expects a condition")
        return CND
    if op in (Op.CFORALL, Op.CEXISTS):
        _expect(all(b.sort in (IDX, TP) for b in binders), "base quantifiers bind index or timepoint variables")
        _expect(s == [CND], "base quantifier body must be a condition")
        return CND
    if op == Op.EVAL:
        _expect(s == [MSG], "eval expects a message")
        return BS
    if op == Op.EVALC:
        _expect(s == [CND], "condition evaluation expects a condition")
        return BOOL
    if op == Op.EVALF:
        want = tuple(_eval_sort(x) for x in head.arg_sorts)
        _expect(tuple(s) == want, f"evaluated {head.name} expects {want}")
        return _eval_sort(head.result)
    if op == Op.EQ:
        _expect(len(s) == 2 and s[0] == s[1] and s[0] != BOOL, "equality expects two terms of one sort")
        return BOOL
    if op == Op.LT:
        _expect(s == [TP, TP], "< expects timepoints")
        return BOOL
    if op == Op.HAPPENS:
        _expect(s == [TP], "happens expects a timepoint")
        return BOOL
    if op == Op.SUB:
        _expect(isinstance(head, RelationSpec), "subterm atom needs a relation")
        _expect(len(s) == 2 and s[0] in (MSG, NON) and s[1] in (MSG, CND), "subterm atom expects (message|nonce, message|condition)")
        _expect((s[0] == NON) == head.nonce_left, "subterm atom left side has the wrong sort for its relation")
        return BOOL
    if op in (Op.TRUE, Op.FALSE):
        return BOOL
    if op in (Op.AND, Op.OR):
        _expect(all(x == BOOL for x in s), "boolean connective expects booleans")
        return BOOL
    if op in (Op.IMPLIES, Op.IFF):
        _expect(s == [BOOL, BOOL], "boolean connective expects two booleans")
        return BOOL
    if op == Op.NOT:
        _expect(s == [BOOL], "negation expects a boolean")
        return BOOL
    if op in (Op.FORALL, Op.EXISTS):
        _expect(s == [BOOL], "quantifier body must be boolean")
        return BOOL
    raise SortError(f"unknown term constructor {op}")


def _eval_sort(s: Sort) -> Sort:
    return {MSG: BS, CND: BOOL}[s]


# ---------------------------------------------------------------- builders


def var(name: str, sort: Sort) -> Term:
    return Term(Op.VAR, head=name, sort=sort)


def iconst(n: int) -> Term:
    return Term(Op.ICONST, head=n)


def nonce(sym: NonceSymbol, *idx: Term) -> Term:
    return Term(Op.NONCE, idx, sym)


def nbar(n: Term) -> Term:
    return Term(Op.NBAR, (n,))


def step(sym: StepSymbol, *idx: Term) -> Term:
    return Term(Op.STEP, idx, sym)


INIT_T = Term(Op.STEP, (), INIT)


def pred(t: Term) -> Term:
    if t.op == Op.STEP and t.head == INIT:
        return t
    return Term(Op.PRED, (t,))


def app(f: FunctionSymbol, *args: Term) -> Term:
    return Term(Op.APP, args, f)


def macro(name: str, t: Term) -> Term:
    return Term(Op.MACRO, (t,), name)


def inp(t: Term) -> Term:
    return macro("input", t)


def ite(c: Term, a: Term, b: Term) -> Term:
    return Term(Op.ITE, (c, a, b))


def find(bound: Iterable[Term], c: Term, a: Term, b: Term) -> Term:
    return Term(Op.FIND, (c, a, b), binders=tuple(bound))


def equiv(a: Term, b: Term) -> Term:
    return Term(Op.EQUIV, (a, b))


CTRUE = Term(Op.CTRUE)
CFALSE = Term(Op.CFALSE)
TRUE = Term(Op.TRUE)
FALSE = Term(Op.FALSE)


def cand(*a: Term) -> Term:
    return Term(Op.CAND, a)


def cor(*a: Term) -> Term:
    return Term(Op.COR, a)


def cimpl(a: Term, b: Term) -> Term:
    return Term(Op.CIMPL, (a, b))


def cnot(a: Term) -> Term:
    return Term(Op.CNOT, (a,))


def cforall(bound, body) -> Term:
    bound = tuple(bound)
    return Term(Op.CFORALL, (body,), binders=bound) if bound else body


def cexists(bound, body) -> Term:
    bound = tuple(bound)
    return Term(Op.CEXISTS, (body,), binders=bound) if bound else body


def ev(m: Term) -> Term:
    """Evaluation of a message (bitstring) or condition (boolean)."""
    if m.sort == CND:
        return Term(Op.EVALC, (m,))
    return Term(Op.EVAL, (m,))


def evalf(f: FunctionSymbol, *args: Term) -> Term:
    return Term(Op.EVALF, args, f)


def eq(a: Term, b: Term) -> Term:
    return Term(Op.EQ, (a, b))


def lt(a: Term, b: Term) -> Term:
    return Term(Op.LT, (a, b))


def le(a: Term, b: Term) -> Term:
    return Or(lt(a, b), eq(a, b))


def happens(t: Term) -> Term:
    return Term(Op.HAPPENS, (t,))


def sub(rel: RelationSpec, a: Term, b: Term) -> Term:
    """Subterm atom.  A nonce left side of an ordinary relation is read through n̄."""
    if a.sort == NON and not rel.nonce_left:
        a = nbar(a)
    return Term(Op.SUB, (a, b), rel)


def And(*a: Term) -> Term:
    parts: list[Term] = []
    for x in a:
        if x.op == Op.AND:
            parts.extend(x.args)
        elif x == TRUE:
            continue
        elif x == FALSE:
            return FALSE
        else:
            parts.append(x)
    if not parts:
        return TRUE
    if len(parts) == 1:
        return parts[0]
    return Term(Op.AND, parts)


def Or(*a: Term) -> Term:
    parts: list[Term] = []
    for x in a:
        if x.op == Op.OR:
            parts.extend(x.args)
        elif x == FALSE:
            continue
        elif x == TRUE:
            return TRUE
        else:
            parts.append(x)
    if not parts:
        return FALSE
    if len(parts) == 1:
        return parts[0]
    return Term(Op.OR, parts)


def Implies(a: Term, b: Term) -> Term:
    if a == TRUE:
        return b
    if a == FALSE or b == TRUE:
        return TRUE
    return Term(Op.IMPLIES, (a, b))


def Iff(a: Term, b: Term) -> Term:
    return Term(Op.IFF, (a, b))


def Not(a: Term) -> Term:
    if a == TRUE:
        return FALSE
    if a == FALSE:
        return TRUE
    if a.op == Op.NOT:
        return a.args[0]
    return Term(Op.NOT, (a,))


def Forall(bound, body: Term) -> Term:
    bound = tuple(b for b in bound)
    if not bound or body in (TRUE, FALSE):
        return body
    if body.op == Op.FORALL:
        return Term(Op.FORALL, body.args, binders=bound + body.binders)
    return Term(Op.FORALL, (body,), binders=bound)


def Exists(bound, body: Term) -> Term:
    bound = tuple(b for b in bound)
    if not bound or body in (TRUE, FALSE):
        return body
    if body.op == Op.EXISTS:
        return Term(Op.EXISTS, body.args, binders=bound + body.binders)
    return Term(Op.EXISTS, (body,), binders=bound)


# ---------------------------------------------------------------- operations


def sort_of(term: Term) -> Sort:
    """Recheck the whole term bottom-up and return its sort."""

    def go(t: Term, pos: tuple[int, ...]) -> Sort:
        for k, a in enumerate(t.args):
            go(a, pos + (k,))
        if t.op == Op.VAR:
            return t.sort
        try:
            s = _infer(t.op, t.args, t.head, t.binders)
        except SortError as e:
            raise SortError(str(e).split(" at position")[0], pos) from None
        if s != t.sort:
            raise SortError(f"stored sort {t.sort.value} differs from {s.value}", pos)
        return s

    return go(term, ())


def free_vars(term: Term) -> frozenset[Term]:
    fv = term._fv
    if fv is not None:
        return fv
    if term.op == Op.VAR:
        fv = frozenset((term,))
    elif term.op == Op.FIND:
        c, a, b = term.args
        bound = set(term.binders)
        fv = (free_vars(c) | free_vars(a)) - bound | free_vars(b)
    elif term.binders:
        fv = frozenset().union(*(free_vars(a) for a in term.args)) - set(term.binders)
    else:
        fv = frozenset().union(*(free_vars(a) for a in term.args)) if term.args else frozenset()
    object.__setattr__(term, "_fv", fv)
    return fv


def all_var_names(term: Term) -> set[str]:
    names: set[str] = set()
    for t in walk(term):
        if t.op == Op.VAR:
            names.add(t.head)
        for b in t.binders:
            names.add(b.head)
    return names


def fresh_name(base: str, avoid: set[str]) -> str:
    root = base.split("'")[0]
    k = 1
    while f"{root}'{k}" in avoid:
        k += 1
    return f"{root}'{k}"


def substitute(term: Term, bindings: Mapping[Term, Term]) -> Term:
    """Simultaneous capture-avoiding substitution."""
    for v, t in bindings.items():
        if v.op != Op.VAR:
            raise SortError(f"cannot substitute non-variable {show(v)}")
        if v.sort != t.sort:
            raise SortError(f"cannot substitute {show(t)}:{t.sort.value} for {v.head}:{v.sort.value}")
    bindings = {v: t for v, t in bindings.items() if v != t}
    if not bindings:
        return term
    return _subst(term, bindings)


def _subst(t: Term, theta: Mapping[Term, Term]) -> Term:
    fv = free_vars(t)
    if not any(v in fv for v in theta):
        return t
    if t.op == Op.VAR:
        return theta.get(t, t)
    if not t.binders:
        args = tuple(_subst(a, theta) for a in t.args)
        return _rebuild(t, args, t.binders)
    # binder node
    theta_in = {v: s for v, s in theta.items() if v not in t.binders and v in fv}
    range_fv: set[Term] = set()
    for s in theta_in.values():
        range_fv |= free_vars(s)
    avoid = {v.head for v in range_fv} | {v.head for v in fv} | {v.head for v in theta_in}
    for a in t.args:
        avoid |= all_var_names(a)
    new_binders = []
    rename: dict[Term, Term] = {}
    for b in t.binders:
        if b in range_fv:
            nb = var(fresh_name(b.head, avoid), b.sort)
            avoid.add(nb.head)
            rename[b] = nb
            new_binders.append(nb)
        else:
            new_binders.append(b)
    inner = dict(theta_in)
    inner.update(rename)
    if t.op == Op.FIND:
        c, a, b = t.args
        args = (_subst(c, inner), _subst(a, inner), _subst(b, theta))
    else:
        args = tuple(_subst(a, inner) for a in t.args)
    return _rebuild(t, args, tuple(new_binders))


def _rebuild(t: Term, args: tuple[Term, ...], binders: tuple[Term, ...]) -> Term:
    if t.op == Op.PRED:
        return pred(args[0])
    return Term(t.op, args, t.head, binders, t.sort)


def map_children(t: Term, fn: Callable[[Term], Term]) -> Term:
    args = tuple(fn(a) for a in t.args)
    if all(x is y for x, y in zip(args, t.args)):
        return t
    return _rebuild(t, args, t.binders)


def walk(term: Term) -> Iterator[Term]:
    """Pre-order traversal of all nodes (binders not included)."""
    stack = [term]
    while stack:
        t = stack.pop()
        yield t
        stack.extend(reversed(t.args))


def alpha_key(term: Term):
    """Hashable key equal for alpha-equivalent terms (bound vars as de Bruijn levels)."""

    def go(t: Term, env: dict[Term, int], depth: int):
        if t.op == Op.VAR:
            if t in env:
                return ("#", env[t], t.sort.value)
            return ("v", t.head, t.sort.value)
        if t.binders:
            env2 = dict(env)
            for k, b in enumerate(t.binders):
                env2[b] = depth + k
            d2 = depth + len(t.binders)
            sorts = tuple(b.sort.value for b in t.binders)
            if t.op == Op.FIND:
                c, a, b = t.args
                return (t.op, sorts, go(c, env2, d2), go(a, env2, d2), go(b, env, depth))
            return (t.op, sorts) + tuple(go(a, env2, d2) for a in t.args)
        return (t.op, _head_key(t.head), t.sort.value) + tuple(go(a, env, depth) for a in t.args)

    return go(term, {}, 0)


def _head_key(h):
    return h


def alpha_equal(a: Term, b: Term) -> bool:
    return alpha_key(a) == alpha_key(b)


# ---------------------------------------------------------------- display

_BINOPS = {
    Op.CAND: " &. ",
    Op.COR: " |. ",
    Op.CIMPL: " =>. ",
    Op.AND: " & ",
    Op.OR: " | ",
    Op.IMPLIES: " => ",
    Op.IFF: " <=> ",
    Op.EQ: " = ",
    Op.LT: " < ",
    Op.EQUIV: " == ",
}


def _binders(bs) -> str:
    return ", ".join(b.head for b in bs)


def show(t: Term) -> str:
    """Compact human-readable rendering (debug dumps, diagnostics)."""
    op = t.op
    if op == Op.VAR:
        return t.head
    if op == Op.ICONST:
        return str(t.head)
    if op in (Op.NONCE, Op.STEP, Op.APP, Op.EVALF):
        name = t.head.name if op != Op.EVALF else f"[{t.head.name}]"
        if not t.args and op in (Op.APP, Op.EVALF, Op.STEP):
            return name
        return f"{name}({', '.join(show(a) for a in t.args)})"
    if op == Op.NBAR:
        return show(t.args[0])
    if op == Op.PRED:
        return f"pred({show(t.args[0])})"
    if op == Op.MACRO:
        return f"{t.head}({show(t.args[0])})"
    if op == Op.ITE:
        return "if {} then {} else {}".format(*map(show, t.args))
    if op == Op.FIND:
        return "find ({}) such that {} then {} else {}".format(_binders(t.binders), *map(show, t.args))
    if op == Op.LOOKUP:
        return "lookup({})".format(", ".join(map(show, t.args)))
    if op in (Op.CTRUE, Op.TRUE):
        return "true"
    if op in (Op.CFALSE, Op.FALSE):
        return "false"
    if op in _BINOPS:
        return "(" + _BINOPS[op].join(show(a) for a in t.args) + ")"
    if op in (Op.CNOT, Op.NOT):
        return f"!{show(t.args[0])}"
    if op in (Op.CFORALL, Op.CEXISTS, Op.FORALL, Op.EXISTS):
        q = {Op.CFORALL: "forall.", Op.CEXISTS: "exists.", Op.FORALL: "forall", Op.EXISTS: "exists"}[op]
        return f"({q} ({_binders(t.binders)}) {show(t.args[0])})"
    if op in (Op.EVAL, Op.EVALC):
        return f"[[{show(t.args[0])}]]"
    if op == Op.HAPPENS:
        return f"happens({show(t.args[0])})"
    if op == Op.SUB:
        return f"({show(t.args[0])} <<{t.head} {show(t.args[1])})"
    return f"{op}({', '.join(map(show, t.args))})"
