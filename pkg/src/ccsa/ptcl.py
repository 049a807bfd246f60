"""Parser, validator and pretty-printer for `.ptcl` protocol descriptions."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import terms as T
from .terms import (
    BOOL,
    CND,
    IDX,
    MSG,
    NON,
    TP,
    FunctionSymbol,
    NonceSymbol,
    Op,
    Sort,
    SortError,
    StepSymbol,
    Term,
)


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0, file: str = "<input>"):
        super().__init__(message)
        self.message, self.line, self.col, self.file = message, line, col, file

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}: {self.message}"


class ValidationError(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


SORT_NAMES = {s.value: s for s in (IDX, TP, NON, MSG, CND)}
KEYWORDS = {
    "type", "fun", "nonce", "assert", "assert-crypto", "step", "order", "mutex", "query",
    "forall", "exists", "not", "true", "false", "if", "then", "else", "find", "such", "that",
}
BUILTINS = {"happens", "input", "cond", "msg", "pred", "eval", "subterm", "init"}
RESERVED_NAMES = {"att", "err"} | BUILTINS
CRYPTO_KINDS = {"nonce": 0, "euf-cma": 2, "euf-cma-sig": 3, "int-ctxt": (2, 3)}


# ---------------------------------------------------------------- data model


@dataclass(frozen=True)
class Step:
    symbol: StepSymbol
    params: tuple[Term, ...]
    condition: Term
    message: Term
    line: int = 0

    @property
    def name(self) -> str:
        return self.symbol.name

    def timepoint(self) -> Term:
        return T.step(self.symbol, *self.params)

    def instantiate(self, idx: Iterable[Term]) -> tuple[Term, Term]:
        theta = dict(zip(self.params, idx))
        return T.substitute(self.condition, theta), T.substitute(self.message, theta)


INIT_STEP = Step(T.INIT, (), T.CTRUE, T.app(T.EMPTY))


@dataclass(frozen=True)
class Ordering:
    """Universally index-quantified pair a[i] < b[j] (order) or a[i] <> b[j] (mutex)."""

    binders: tuple[Term, ...]
    left: Term
    right: Term
    line: int = 0


@dataclass
class Protocol:
    steps: tuple[Step, ...]
    order: tuple[Ordering, ...] = ()
    exclusion: tuple[Ordering, ...] = ()

    def __post_init__(self):
        self.by_name = {s.name: s for s in self.steps}

    def step(self, name: str) -> Step:
        return self.by_name[name]


@dataclass(frozen=True)
class CryptoAssumption:
    kind: str  # nonce | euf-cma | euf-cma-sig | int-ctxt
    symbols: tuple[FunctionSymbol, ...] = ()
    line: int = 0


@dataclass
class ProblemFile:
    name: str
    sorts: list[str] = field(default_factory=list)
    functions: dict[str, FunctionSymbol] = field(default_factory=dict)
    nonces: dict[str, NonceSymbol] = field(default_factory=dict)
    crypto: list[CryptoAssumption] = field(default_factory=list)
    axioms: list[tuple[Term, int]] = field(default_factory=list)
    protocol: Protocol = field(default_factory=lambda: Protocol((INIT_STEP,)))
    query: Term | None = None
    query_line: int = 0
    items: list[tuple[str, object]] = field(default_factory=list)  # source order for printing

    def symbols(self) -> list[FunctionSymbol]:
        return [T.EMPTY] + list(self.functions.values())


# ---------------------------------------------------------------- lexer

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>//[^\n]*)"
    r"|(?P<word>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*)"
    r"|(?P<op><=>|=>|<=|<>|==|!=|&&|\|\||[(){},:<=!])"
)


@dataclass(frozen=True)
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str, file: str = "<input>") -> list[Tok]:
    out: list[Tok] = []
    line, col, pos = 1, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if not m:
            raise ParseError(f"unexpected character {src[pos]!r}", line, col, file)
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind in ("word", "op"):
                out.append(Tok(kind, text, line, col))
            col += len(text)
        pos = m.end()
    out.append(Tok("eof", "", line, col))
    return out


# ---------------------------------------------------------------- raw syntax


@dataclass
class Node:
    kind: str
    value: object
    children: list
    line: int
    col: int


class _Parser:
    def __init__(self, toks: list[Tok], file: str):
        self.toks, self.i, self.file = toks, 0, file

    @property
    def cur(self) -> Tok:
        return self.toks[self.i]

    def err(self, msg: str, tok: Tok | None = None):
        tok = tok or self.cur
        raise ParseError(msg, tok.line, tok.col, self.file)

    def next(self) -> Tok:
        t = self.cur
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.cur.text == text and self.cur.kind != "eof"

    def eat(self, text: str) -> Tok:
        if not self.at(text):
            self.err(f"expected '{text}' but found '{self.cur.text or 'end of file'}'")
        return self.next()

    def ident(self) -> Tok:
        t = self.cur
        if t.kind != "word" or t.text in KEYWORDS:
            self.err(f"expected identifier but found '{t.text or 'end of file'}'")
        return self.next()

    # declarations -----------------------------------------------------
    def declarations(self) -> list[Node]:
        decls = []
        while self.cur.kind != "eof":
            decls.append(self.declaration())
        return decls

    def declaration(self) -> Node:
        t = self.cur
        kw = t.text
        if kw == "type":
            self.next()
            name = self.ident()
            return Node("type", name.text, [], t.line, t.col)
        if kw == "fun":
            self.next()
            name = self.ident()
            sorts = []
            if self.at("("):
                self.next()
                if not self.at(")"):
                    sorts.append(self.sort_name())
                    while self.at(","):
                        self.next()
                        sorts.append(self.sort_name())
                self.eat(")")
            self.eat(":")
            res = self.sort_name()
            return Node("fun", name.text, [sorts, res], t.line, t.col)
        if kw == "nonce":
            self.next()
            name = self.ident()
            ar = 0
            if self.at("("):
                self.next()
                if not self.at(")"):
                    while True:
                        s = self.sort_name()
                        if s[0] != "index":
                            self.err("nonce arguments must be indices")
                        ar += 1
                        if not self.at(","):
                            break
                        self.next()
                self.eat(")")
            return Node("nonce", name.text, [ar], t.line, t.col)
        if kw == "assert-crypto":
            self.next()
            kind = self.next()
            if kind.text not in CRYPTO_KINDS:
                self.err(f"unknown cryptographic assumption '{kind.text}'", kind)
            names = []
            while self.cur.kind == "word" and self.cur.text not in KEYWORDS and self.cur.line == kind.line:
                names.append(self.next())
            return Node("crypto", kind.text, names, t.line, t.col)
        if kw == "assert":
            self.next()
            return Node("assert", None, [self.expr()], t.line, t.col)
        if kw == "query":
            self.next()
            return Node("query", None, [self.expr()], t.line, t.col)
        if kw == "step":
            self.next()
            name = self.ident()
            params = self.binders() if self.at("(") else []
            self.eat("{")
            c = self.expr()
            self.eat("}")
            self.eat("{")
            m = self.expr()
            self.eat("}")
            return Node("step", name.text, [params, c, m], t.line, t.col)
        if kw in ("order", "mutex"):
            self.next()
            binders = []
            if self.at("forall"):
                self.next()
                binders = self.binders()
            left = self.atom()
            self.eat("<" if kw == "order" else "<>")
            right = self.atom()
            return Node(kw, None, [binders, left, right], t.line, t.col)
        self.err(f"expected a declaration but found '{kw or 'end of file'}'")

    def sort_name(self) -> tuple[str, Tok]:
        t = self.next()
        if t.text not in SORT_NAMES:
            self.err(f"unknown sort '{t.text}'", t)
        return (t.text, t)

    def binders(self) -> list[tuple[Tok, str]]:
        self.eat("(")
        out = []
        if not self.at(")"):
            while True:
                name = self.ident()
                self.eat(":")
                s, _ = self.sort_name()
                out.append((name, s))
                if not self.at(","):
                    break
                self.next()
        self.eat(")")
        return out

    # expressions ------------------------------------------------------
    def expr(self) -> Node:
        if self.at("forall") or self.at("exists"):
            return self.quant()
        left = self.impl()
        if self.at("<=>"):
            t = self.next()
            right = self.quant() if self.at("forall") or self.at("exists") else self.impl()
            return Node("iff", None, [left, right], t.line, t.col)
        return left

    def quant(self) -> Node:
        t = self.next()
        bs = self.binders()
        body = self.expr()
        return Node("quant", t.text, [bs, body], t.line, t.col)

    def impl(self) -> Node:
        left = self.disj()
        if self.at("=>"):
            t = self.next()
            right = self.quant() if self.at("forall") or self.at("exists") else self.impl()
            return Node("impl", None, [left, right], t.line, t.col)
        return left

    def disj(self) -> Node:
        parts = [self.conj()]
        t = self.cur
        while self.at("||"):
            self.next()
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Node("or", None, parts, t.line, t.col)

    def conj(self) -> Node:
        parts = [self.unary()]
        t = self.cur
        while self.at("&&"):
            self.next()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else Node("and", None, parts, t.line, t.col)

    def unary(self) -> Node:
        if self.at("not") or self.at("!"):
            t = self.next()
            return Node("not", None, [self.unary()], t.line, t.col)
        if self.at("forall") or self.at("exists"):
            return self.quant()
        return self.cmp()

    def cmp(self) -> Node:
        left = self.atom()
        for op, kind in (("==", "equiv"), ("!=", "neq"), ("=", "eq"), ("<=", "le"), ("<", "lt")):
            if self.at(op):
                t = self.next()
                right = self.atom()
                return Node(kind, None, [left, right], t.line, t.col)
        return left

    def atom(self) -> Node:
        t = self.cur
        if self.at("("):
            self.next()
            e = self.expr()
            self.eat(")")
            return e
        if self.at("true") or self.at("false"):
            self.next()
            return Node(t.text, None, [], t.line, t.col)
        if self.at("if"):
            self.next()
            c = self.expr()
            self.eat("then")
            a = self.expr()
            self.eat("else")
            b = self.expr()
            return Node("ite", None, [c, a, b], t.line, t.col)
        if self.at("find"):
            self.next()
            bs = self.binders()
            self.eat("such")
            self.eat("that")
            c = self.expr()
            self.eat("then")
            a = self.expr()
            self.eat("else")
            b = self.expr()
            return Node("find", None, [bs, c, a, b], t.line, t.col)
        name = self.ident()
        args = None
        if self.at("("):
            self.next()
            args = []
            if not self.at(")"):
                args.append(self.expr())
                while self.at(","):
                    self.next()
                    args.append(self.expr())
            self.eat(")")
        return Node("ident", name.text, args, name.line, name.col)


# ---------------------------------------------------------------- elaboration


class _Elab:
    def __init__(self, prob: ProblemFile, file: str):
        self.p, self.file = prob, file
        self.steps: dict[str, StepSymbol] = {"init": T.INIT}
        self.step_defs: dict[str, Step] = {"init": INIT_STEP}

    def err(self, msg: str, node: Node | Tok):
        raise ParseError(msg, node.line, node.col, self.file)

    def coerce(self, t: Term, expected: Sort | None, node: Node) -> Term:
        if expected is None or t.sort == expected:
            return t
        if expected == BOOL and t.sort == CND:
            return T.ev(t)
        if expected == MSG and t.sort == NON:
            return T.nbar(t)
        self.err(f"expected {expected.value} but found {t.sort.value}", node)

    def bind(self, env: dict, bs, node: Node) -> tuple[dict, list[Term]]:
        env = dict(env)
        vs = []
        taken = set(env) | {v.head for v in env.values()}
        for tok, sname in bs:
            name = tok.text
            if name in self.p.functions or name in self.p.nonces or name in self.steps:
                self.err(f"variable {name} shadows a declared symbol", tok)
            vname = name
            k = 1
            while vname in taken:
                vname = f"{name}_{k}"
                k += 1
            taken.add(vname)
            v = T.var(vname, SORT_NAMES[sname])
            env[name] = v
            vs.append(v)
        return env, vs

    def elab(self, n: Node, expected: Sort | None, env: dict) -> Term:
        try:
            t = self._elab(n, expected, env)
        except SortError as e:
            self.err(str(e).split(" at position")[0], n)
        return self.coerce(t, expected, n)

    def _conn(self, n: Node, expected, env, cop, bop) -> Term:
        if expected == CND:
            kids = [self.elab(c, CND, env) for c in n.children]
        else:
            kids = [self.elab(c, None, env) for c in n.children]
            if expected == BOOL or not all(k.sort == CND for k in kids):
                kids = [self.coerce(k, BOOL, c) for k, c in zip(kids, n.children)]
                return bop(*kids)
        return cop(*kids)

    def _elab(self, n: Node, expected: Sort | None, env: dict) -> Term:
        k = n.kind
        if k in ("true", "false"):
            if expected == BOOL:
                return T.TRUE if k == "true" else T.FALSE
            return T.CTRUE if k == "true" else T.CFALSE
        if k == "and":
            return self._conn(n, expected, env, _flat(Op.CAND), T.And)
        if k == "or":
            return self._conn(n, expected, env, _flat(Op.COR), T.Or)
        if k == "impl":
            return self._conn(n, expected, env, T.cimpl, lambda a, b: T.Term(Op.IMPLIES, (a, b)))
        if k == "not":
            return self._conn(n, expected, env, T.cnot, lambda a: T.Term(Op.NOT, (a,)))
        if k == "iff":
            a, b = (self.elab(c, BOOL, env) for c in n.children)
            return T.Iff(a, b)
        if k == "quant":
            env2, vs = self.bind(env, n.children[0], n)
            body = self.elab(n.children[1], CND if expected == CND else None, env2)
            if body.sort == CND and all(v.sort in (IDX, TP) for v in vs) and expected != BOOL:
                return T.Term(Op.CFORALL if n.value == "forall" else Op.CEXISTS, (body,), binders=vs)
            body = self.coerce(body, BOOL, n.children[1])
            return T.Term(Op.FORALL if n.value == "forall" else Op.EXISTS, (body,), binders=vs)
        if k in ("eq", "neq"):
            a, b = (self.elab(c, None, env) for c in n.children)
            if a.sort == NON and b.sort == MSG:
                a = T.nbar(a)
            if b.sort == NON and a.sort == MSG:
                b = T.nbar(b)
            if a.sort != b.sort or a.sort == BOOL:
                self.err(f"cannot compare {a.sort.value} with {b.sort.value}", n)
            e = T.eq(a, b)
            return e if k == "eq" else T.Term(Op.NOT, (e,))
        if k == "equiv":
            a, b = (self.elab(c, MSG, env) for c in n.children)
            return T.equiv(a, b)
        if k in ("lt", "le"):
            a, b = (self.elab(c, TP, env) for c in n.children)
            return T.lt(a, b) if k == "lt" else T.le(a, b)
        if k == "ite":
            c, a, b = n.children
            return T.ite(self.elab(c, CND, env), self.elab(a, MSG, env), self.elab(b, MSG, env))
        if k == "find":
            bs, c, a, b = n.children
            env2, vs = self.bind(env, bs, n)
            if any(v.sort != IDX for v in vs):
                self.err("find binds index variables only", n)
            return T.find(vs, self.elab(c, CND, env2), self.elab(a, MSG, env2), self.elab(b, MSG, env))
        if k == "ident":
            return self.ident(n, env)
        self.err(f"unexpected {k}", n)

    def ident(self, n: Node, env: dict) -> Term:
        name, args = n.value, n.children
        if name in env:
            if args is not None:
                self.err(f"variable {name} is not a function", n)
            return env[name]
        nargs = 0 if args is None else len(args)

        def one(sort):
            if nargs != 1:
                self.err(f"{name} expects 1 argument", n)
            return self.elab(args[0], sort, env)

        if name == "happens":
            return T.happens(one(TP))
        if name == "input":
            return T.inp(one(TP))
        if name == "pred":
            return T.pred(one(TP))
        if name == "eval":
            return T.ev(one(None))
        if name in ("cond", "msg"):
            tp = one(TP)
            if tp.op != Op.STEP:
                self.err(f"{name} expects a step application", n)
            st = self.step_defs.get(tp.head.name)
            if st is None:
                self.err(f"{name} refers to step {tp.head.name} before its definition", n)
            c, m = st.instantiate(tp.args)
            return c if name == "cond" else m
        if name == "subterm":
            if nargs != 2:
                self.err("subterm expects 2 arguments", n)
            return T.sub(T.DEFAULT_REL, self.elab(args[0], None, env), self.elab(args[1], None, env))
        if name == "empty" and args is None:
            return T.app(T.EMPTY)
        if name in self.p.functions:
            f = self.p.functions[name]
            if nargs != f.arity:
                self.err(f"{name} expects {f.arity} arguments but got {nargs}", n)
            return T.app(f, *(self.elab(a, s, env) for a, s in zip(args or [], f.arg_sorts)))
        if name in self.p.nonces:
            s = self.p.nonces[name]
            if nargs != s.arity:
                self.err(f"{name} expects {s.arity} indices but got {nargs}", n)
            return T.nonce(s, *(self.elab(a, IDX, env) for a in args or []))
        if name in self.steps:
            s = self.steps[name]
            if nargs != s.arity:
                self.err(f"step {name} expects {s.arity} indices but got {nargs}", n)
            return T.step(s, *(self.elab(a, IDX, env) for a in args or []))
        self.err(f"undeclared symbol {name}", n)


def _flat(op):
    def build(*kids):
        parts = []
        for k in kids:
            parts.extend(k.args if k.op == op else (k,))
        return T.Term(op, parts)

    return build


def parse(source: str, name: str = "problem", file: str = "<input>") -> ProblemFile:
    decls = _Parser(tokenize(source, file), file).declarations()
    prob = ProblemFile(name)
    el = _Elab(prob, file)
    # step symbols are visible everywhere so that bodies may mention later steps
    for d in decls:
        if d.kind == "step":
            if d.value in el.steps:
                el.err(f"step {d.value} declared twice", d)
            el.steps[d.value] = StepSymbol(d.value, len(d.children[0]))
    steps = [INIT_STEP]
    order, mutex = [], []
    for d in decls:
        k = d.kind
        if k == "type":
            if d.value != "index":
                el.err(f"only 'type index' is supported, not '{d.value}'", d)
            prob.sorts.append(d.value)
            prob.items.append(("type", d.value))
        elif k == "fun":
            sorts, (res, rtok) = d.children
            name = d.value
            _check_fresh(el, prob, name, d)
            if res not in ("message", "condition"):
                el.err("function results must be message or condition", rtok)
            for s, tok in sorts:
                if s not in ("message", "condition"):
                    el.err("function arguments must be message or condition", tok)
            f = FunctionSymbol(name, tuple(SORT_NAMES[s] for s, _ in sorts), SORT_NAMES[res])
            prob.functions[name] = f
            prob.items.append(("fun", f))
        elif k == "nonce":
            _check_fresh(el, prob, d.value, d)
            ns = NonceSymbol(d.value, d.children[0])
            prob.nonces[d.value] = ns
            prob.items.append(("nonce", ns))
        elif k == "crypto":
            syms = []
            for tok in d.children:
                if tok.text not in prob.functions:
                    el.err(f"undeclared symbol {tok.text}", tok)
                syms.append(prob.functions[tok.text])
            want = CRYPTO_KINDS[d.value]
            if d.value == "int-ctxt" and len(syms) == 2 and "fail" in prob.functions:
                syms.append(prob.functions["fail"])
            ok = len(syms) in want if isinstance(want, tuple) else len(syms) == want
            if not ok or (d.value == "int-ctxt" and len(syms) != 3):
                el.err(f"assert-crypto {d.value} expects {want} symbols", d)
            ca = CryptoAssumption(d.value, tuple(syms), d.line)
            prob.crypto.append(ca)
            prob.items.append(("crypto", (ca, [t.text for t in d.children])))
        elif k == "assert":
            ax = el.elab(d.children[0], BOOL, {})
            prob.axioms.append((ax, d.line))
            prob.items.append(("assert", ax))
        elif k == "query":
            if prob.query is not None:
                el.err("only one query is allowed", d)
            prob.query = el.elab(d.children[0], BOOL, {})
            prob.query_line = d.line
            prob.items.append(("query", prob.query))
        elif k == "step":
            params, c, m = d.children
            env, vs = el.bind({}, params, d)
            if any(v.sort != IDX for v in vs):
                el.err("step parameters must be indices", d)
            st = Step(el.steps[d.value], tuple(vs), el.elab(c, CND, env), el.elab(m, MSG, env), d.line)
            el.step_defs[d.value] = st
            steps.append(st)
            prob.items.append(("step", st))
        elif k in ("order", "mutex"):
            bs, l, r = d.children
            env, vs = el.bind({}, bs, d)
            lt, rt = el.elab(l, TP, env), el.elab(r, TP, env)
            if lt.op != Op.STEP or rt.op != Op.STEP:
                el.err(f"{k} relates step applications", d)
            o = Ordering(tuple(vs), lt, rt, d.line)
            (order if k == "order" else mutex).append(o)
            prob.items.append((k, o))
    prob.protocol = Protocol(tuple(steps), tuple(order), tuple(mutex))
    return prob


def _check_fresh(el: _Elab, prob: ProblemFile, name: str, d: Node) -> None:
    if name in prob.functions or name in prob.nonces or name in el.steps or name in RESERVED_NAMES or name == "empty":
        el.err(f"symbol {name} is already declared or reserved", d)


def parse_file(path: str | Path) -> ProblemFile:
    path = Path(path)
    name = path.name[: -len(".ptcl")] if path.name.endswith(".ptcl") else path.stem
    return parse(path.read_text(encoding="utf-8"), name=name, file=str(path))


# ---------------------------------------------------------------- validation

_CRYPTO_SIGS = {
    "euf-cma": [((MSG, MSG), MSG), ((MSG, MSG, MSG), CND)],
    "euf-cma-sig": [((MSG, MSG), MSG), ((MSG, MSG, MSG), CND), ((MSG,), MSG)],
    "int-ctxt": [((MSG, MSG, MSG), MSG), ((MSG, MSG), MSG), ((), MSG)],
}


def match_pattern(pattern: Term, target: Term, binding: dict, rigid: frozenset = frozenset()) -> dict | None:
    """One-way matching of `pattern` variables (not in `rigid`) against `target`."""
    if pattern.op == Op.VAR and pattern not in rigid:
        if pattern in binding:
            return binding if binding[pattern] == target else None
        if pattern.sort != target.sort:
            return None
        b = dict(binding)
        b[pattern] = target
        return b
    if pattern.op != target.op or pattern.head != target.head or len(pattern.args) != len(target.args):
        return None
    if pattern.binders or target.binders:
        return binding if pattern == target else None
    for p, t in zip(pattern.args, target.args):
        binding = match_pattern(p, t, binding, rigid)
        if binding is None:
            return None
    return binding


def precedes(protocol: Protocol, a: Term, b: Term, _depth: int = 0) -> bool:
    """Does the declared order entail a ≺ b for these step terms (indices treated rigidly)?"""
    if _depth > len(protocol.order) + 1:
        return False
    for o in protocol.order:
        m = match_pattern(o.left, a, {})
        if m is None:
            continue
        m2 = match_pattern(o.right, b, m)
        if m2 is not None:
            return True
        right = T.substitute(o.right, {v: t for v, t in m.items()})
        if not (free_vars(right) & set(o.binders)) and precedes(protocol, right, b, _depth + 1):
            return True
    return False


def free_vars(t: Term):
    return T.free_vars(t)


def _timepoint_ok(protocol: Protocol, s: Step, tp: Term) -> bool:
    while tp.op == Op.PRED:
        tp = tp.args[0]
    own = s.timepoint()
    if tp == own or tp == T.INIT_T:
        return True
    if tp.op != Op.STEP:
        return False
    return precedes(protocol, tp, own)


def _unifiable_pair(o1: Ordering, o2: Ordering, swap: bool) -> bool:
    from .unify import unify

    ren = {v: T.var(v.head + "'", v.sort) for v in o2.binders}
    l2, r2 = T.substitute(o2.left, ren), T.substitute(o2.right, ren)
    if swap:
        l2, r2 = r2, l2
    return unify([(o1.left, l2), (o1.right, r2)], set(o1.binders) | set(ren.values())) is not None


def validate(problem: ProblemFile) -> ProblemFile:
    """Check the step, protocol and assumption invariants; raise ValidationError listing violations."""
    errs: list[str] = []
    proto = problem.protocol
    for s in proto.steps[1:]:
        fv = T.free_vars(s.condition) | T.free_vars(s.message)
        extra = sorted(v.head for v in fv - set(s.params))
        if extra:
            errs.append(f"line {s.line}: step {s.name} has free variables {', '.join(extra)} outside its parameters (steps: fv(condition) and fv(message) within the parameters)")
        for body in (s.condition, s.message):
            for sub in T.walk(body):
                if sub.sort == TP and sub.op != Op.PRED and not _timepoint_ok(proto, s, sub):
                    errs.append(f"line {s.line}: step {s.name} refers to timepoint {T.show(sub)} which is not a preceding step (protocol: steps may only refer to previous steps)")
                if sub.op in (Op.CFORALL, Op.CEXISTS) and any(b.sort == TP for b in sub.binders):
                    errs.append(f"line {s.line}: step {s.name} quantifies over timepoints (protocol: steps may only refer to previous steps)")
    for o in proto.order:
        if o.right.head == T.INIT:
            errs.append(f"line {o.line}: init must be minimal for the order (protocol: init is minimal)")
        if o.left == o.right:
            errs.append(f"line {o.line}: order relates a step to itself")
        for x in proto.exclusion:
            if _unifiable_pair(o, x, False) or _unifiable_pair(o, x, True):
                errs.append(f"line {o.line}: steps {o.left.head.name} and {o.right.head.name} are both ordered and mutually exclusive (protocol: if a <> b then not a < b)")
    for x in proto.exclusion:
        if T.INIT in (x.left.head, x.right.head):
            errs.append(f"line {x.line}: init cannot be mutually exclusive with a step")
    for ca in problem.crypto:
        if ca.kind == "nonce":
            continue
        for f, (args, res) in zip(ca.symbols, _CRYPTO_SIGS[ca.kind]):
            if f.arg_sorts != args or f.result != res:
                want = f"({', '.join(a.value for a in args)}) -> {res.value}"
                errs.append(f"line {ca.line}: {ca.kind} requires {f.name} : {want}")
    for ax, line in problem.axioms:
        if T.free_vars(ax):
            errs.append(f"line {line}: axiom is not closed")
    if problem.query is not None and T.free_vars(problem.query):
        errs.append(f"line {problem.query_line}: query is not closed")
    for t in _all_user_terms(problem):
        for sub in T.walk(t):
            if sub.op == Op.APP and sub.head.kind in (T.RESERVED, T.ATTACKER):
                errs.append(f"reserved symbol {sub.head.name} in user term")
    if errs:
        raise ValidationError(errs)
    return problem


def _all_user_terms(problem: ProblemFile) -> list[Term]:
    out = []
    for s in problem.protocol.steps:
        out += [s.condition, s.message]
    out += [a for a, _ in problem.axioms]
    if problem.query is not None:
        out.append(problem.query)
    return out


def load(path: str | Path) -> ProblemFile:
    """Parse and validate; bare names fall back to the bundled protocols."""
    return validate(parse_file(resolve(path)))


# ---------------------------------------------------------------- printing

_PREC = {Op.IFF: 1, Op.IMPLIES: 2, Op.CIMPL: 2, Op.OR: 3, Op.COR: 3, Op.AND: 4, Op.CAND: 4,
         Op.NOT: 5, Op.CNOT: 5, Op.EQ: 6, Op.EQUIV: 6, Op.LT: 6}


def _binders(vs) -> str:
    return "(" + ", ".join(f"{v.head}: {v.sort.value}" for v in vs) + ")"


def _accessor(t: Term, steps) -> str | None:
    """Render an instantiated step body as cond(a(..)) / msg(a(..)) when unambiguous."""
    for st in steps:
        for body, kw in ((st.condition, "cond"), (st.message, "msg")):
            if body.sort != t.sort or body.op == Op.VAR or not set(st.params) <= T.free_vars(body):
                continue
            m = match_pattern(body, t, {})
            if m is not None and set(m) == set(st.params):
                tp = T.step(st.symbol, *(m[v] for v in st.params))
                return f"{kw}({pretty(tp)})"
    return None


def pretty(t: Term, prec: int = 0, tail: bool = True, steps=()) -> str:
    """Concrete syntax; with `steps`, instantiated step bodies print as accessors."""
    if steps and t.sort in (MSG, CND):
        acc = _accessor(t, steps)
        if acc is not None:
            return acc
    op = t.op

    def pretty_(t, prec=0, tail=True):
        return pretty(t, prec, tail, steps)

    if op in (Op.EVALC, Op.NBAR):
        return pretty_(t.args[0], prec, tail)
    if op in (Op.CFORALL, Op.CEXISTS, Op.FORALL, Op.EXISTS):
        q = "forall" if op in (Op.CFORALL, Op.FORALL) else "exists"
        s = f"{q} {_binders(t.binders)} {pretty_(t.args[0], 0, True)}"
        return s if tail else f"({s})"
    p = _PREC.get(op)
    if p is not None:
        if op in (Op.NOT, Op.CNOT):
            a = t.args[0]
            if a.op == Op.EQ:
                s = f"{pretty_(a.args[0], 7, False)} != {pretty_(a.args[1], 7, tail)}"
            else:
                s = "not " + pretty_(a, 5, tail)
        elif op in (Op.IMPLIES, Op.CIMPL):
            s = f"{pretty_(t.args[0], 3, False)} => {pretty_(t.args[1], 2, tail)}"
        elif op == Op.IFF:
            s = f"{pretty_(t.args[0], 2, False)} <=> {pretty_(t.args[1], 2, tail)}"
        elif op in (Op.EQ, Op.EQUIV, Op.LT):
            sym = {Op.EQ: "=", Op.EQUIV: "==", Op.LT: "<"}[op]
            s = f"{pretty_(t.args[0], 7, False)} {sym} {pretty_(t.args[1], 7, tail)}"
        else:
            sym = " && " if op in (Op.AND, Op.CAND) else " || "
            n = len(t.args)
            s = sym.join(pretty_(a, p + 1, tail and k == n - 1) for k, a in enumerate(t.args))
        return f"({s})" if p < prec else s
    if op in (Op.TRUE, Op.CTRUE):
        return "true"
    if op in (Op.FALSE, Op.CFALSE):
        return "false"
    if op == Op.VAR:
        return t.head
    if op == Op.ICONST:
        return str(t.head)
    if op in (Op.APP, Op.NONCE, Op.STEP):
        if not t.args:
            return t.head.name
        return f"{t.head.name}({', '.join(pretty_(a) for a in t.args)})"
    if op == Op.MACRO:
        return f"{t.head}({pretty_(t.args[0])})"
    if op in (Op.PRED, Op.HAPPENS, Op.EVAL):
        name = {Op.PRED: "pred", Op.HAPPENS: "happens", Op.EVAL: "eval"}[op]
        return f"{name}({pretty_(t.args[0])})"
    if op == Op.SUB:
        return f"subterm({pretty_(t.args[0])}, {pretty_(t.args[1])})"
    if op == Op.ITE:
        c, a, b = t.args
        s = f"if {pretty_(c)} then {pretty_(a)} else {pretty_(b)}"
        return s if tail and prec == 0 else f"({s})"
    if op == Op.FIND:
        c, a, b = t.args
        s = f"find {_binders(t.binders)} such that {pretty_(c)} then {pretty_(a)} else {pretty_(b)}"
        return s if tail and prec == 0 else f"({s})"
    raise ValueError(f"cannot print {op}")


def _sig(f: FunctionSymbol) -> str:
    args = f"({', '.join(s.value for s in f.arg_sorts)})" if f.arg_sorts else ""
    return f"fun {f.name}{args}: {f.result.value}"


def print_problem(problem: ProblemFile) -> str:
    lines = []
    steps = problem.protocol.steps[1:]
    for kind, x in problem.items:
        if kind == "type":
            lines.append(f"type {x}")
        elif kind == "fun":
            lines.append(_sig(x))
        elif kind == "nonce":
            args = "(" + ", ".join(["index"] * x.arity) + ")" if x.arity else ""
            lines.append(f"nonce {x.name}{args}")
        elif kind == "crypto":
            ca, names = x
            lines.append(" ".join(["assert-crypto", ca.kind] + names))
        elif kind == "assert":
            lines.append(f"assert {pretty(x, steps=steps)}")
        elif kind == "query":
            lines.append(f"query {pretty(x, steps=steps)}")
        elif kind == "step":
            params = _binders(x.params) if x.params else ""
            lines.append(f"step {x.name}{params} {{ {pretty(x.condition)} }} {{ {pretty(x.message)} }}")
        else:
            q = f"forall {_binders(x.binders)} " if x.binders else ""
            sym = "<" if kind == "order" else "<>"
            lines.append(f"{kind} {q}{pretty(x.left)} {sym} {pretty(x.right)}")
    return "\n".join(lines) + "\n"


BUNDLED_DIR = Path(__file__).parent / "protocols"


def bundled_protocols() -> list[Path]:
    """The protocol files shipped with the package, sorted by name."""
    return sorted(BUNDLED_DIR.glob("*.ptcl"))


def resolve(path: str | Path) -> Path:
    """A readable path, falling back to the bundled protocol of that name."""
    p = Path(path)
    if p.exists():
        return p
    for cand in (BUNDLED_DIR / p.name, BUNDLED_DIR / f"{p.name}.ptcl"):
        if cand.exists():
            return cand
    return p
