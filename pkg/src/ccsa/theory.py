"""First-order theory assembly: naming, eval bridge, order theory, crypto schemas."""
from __future__ import annotations

from dataclasses import dataclass, field

from . import terms as T
from .ptcl import CryptoAssumption, ProblemFile, Protocol, Step
from .subterms import NamedQuantifier, input_axioms, instantiate_step, quantifier_axioms, relation_axioms
from .terms import BOOL, CND, IDX, MSG, NON, TP, FunctionSymbol, Op, RelationSpec, Term

FULL, HEURISTIC = "full", "heuristic"


# ---------------------------------------------------------------- normalisation


def binarize(t: Term) -> Term:
    """Right-fold n-ary condition connectives so every constructor has a fixed arity."""

    def go(u: Term) -> Term:
        u = T.map_children(u, go)
        if u.op in (Op.CAND, Op.COR) and len(u.args) != 2:
            if not u.args:
                return T.CTRUE if u.op == Op.CAND else T.CFALSE
            out = u.args[-1]
            for a in reversed(u.args[:-1]):
                out = T.Term(u.op, (a, out))
            return out
        return u

    return go(t)


def normalize_problem(problem: ProblemFile) -> ProblemFile:
    """Copy of the problem with binarized connectives everywhere."""
    steps = tuple(Step(s.symbol, s.params, binarize(s.condition), binarize(s.message), s.line) for s in problem.protocol.steps)
    proto = Protocol(steps, problem.protocol.order, problem.protocol.exclusion)
    out = ProblemFile(problem.name, list(problem.sorts), dict(problem.functions), dict(problem.nonces),
                      list(problem.crypto), [(binarize(a), line) for a, line in problem.axioms], proto,
                      binarize(problem.query) if problem.query is not None else None, problem.query_line,
                      list(problem.items))
    return out


# ---------------------------------------------------------------- quantifier naming


class Namer:
    """Replaces message/condition-level quantifiers and finds by named constructors."""

    def __init__(self, taken: set[str]):
        self.taken = set(taken)
        self.by_key: dict = {}
        self.named: list[NamedQuantifier] = []

    def _symbol_name(self, op: str) -> str:
        base = {Op.CEXISTS: "exists", Op.CFORALL: "forall", Op.FIND: "find"}[op]
        k = 1
        while f"{base}#{k}" in self.taken:
            k += 1
        self.taken.add(f"{base}#{k}")
        return f"{base}#{k}"

    def name(self, t: Term) -> Term:
        """Name every base quantifier/find inside a message or condition term (innermost first)."""
        if not any(u.op in (Op.CEXISTS, Op.CFORALL, Op.FIND) for u in T.walk(t)):
            return t
        if t.op in (Op.CEXISTS, Op.CFORALL, Op.FIND):
            args = tuple(self.name(a) for a in t.args)
            q = T.Term(t.op, args, t.head, t.binders, t.sort)
            return self._named(q)
        return T.map_children(t, self.name)

    def _named(self, q: Term) -> Term:
        params = _first_occurrence_fv(q)
        canon = T.substitute(q, {v: T.var(f"#{k}", v.sort) for k, v in enumerate(params)})
        key = T.alpha_key(canon)
        nq = self.by_key.get(key)
        if nq is None:
            sym = FunctionSymbol(self._symbol_name(q.op), tuple(v.sort for v in params), q.sort, T.NAMED_QUANTIFIER)
            nq = NamedQuantifier(sym, tuple(params), q.binders, q)
            self.by_key[key] = nq
            self.named.append(nq)
            return nq.term()
        theta = dict(zip(nq.params, params))
        return T.substitute(nq.term(), theta)

    def lift(self, c: Term) -> Term:
        """⟦c⟧ at the boolean level, pushed through base connectives and quantifiers."""
        op = c.op
        if op == Op.CTRUE:
            return T.TRUE
        if op == Op.CFALSE:
            return T.FALSE
        if op == Op.CAND:
            return T.And(*(self.lift(a) for a in c.args))
        if op == Op.COR:
            return T.Or(*(self.lift(a) for a in c.args))
        if op == Op.CIMPL:
            return T.Implies(self.lift(c.args[0]), self.lift(c.args[1]))
        if op == Op.CNOT:
            return T.Not(self.lift(c.args[0]))
        if op == Op.CEXISTS:
            return T.Exists(c.binders, self.lift(c.args[0]))
        if op == Op.CFORALL:
            return T.Forall(c.binders, self.lift(c.args[0]))
        if op == Op.EQUIV:
            return T.eq(T.ev(self.name(c.args[0])), T.ev(self.name(c.args[1])))
        return T.ev(self.name(c))

    def formula(self, f: Term) -> Term:
        """Rewrite a boolean formula: lift evaluated conditions, name nested quantifiers."""
        op = f.op
        if op == Op.EVALC:
            return self.lift(f.args[0])
        if op == Op.EVAL:
            return T.ev(self.name(f.args[0]))
        if f.sort in (MSG, CND):
            return self.name(f)
        if f.sort in (IDX, TP, NON) or op == Op.VAR:
            return f
        return T.map_children(f, self.formula)

    def definitions(self, start: int = 0) -> list[Term]:
        """Eval axioms of the named symbols created since `start`."""
        out = []
        for nq in self.named[start:]:
            q, head = nq.original, nq.term()
            if q.op == Op.FIND:
                c, a, b = q.args
                hit = T.Exists(q.binders, T.And(self.lift(c), T.eq(T.ev(head), T.ev(self.name(a)))))
                miss = T.And(T.Forall(q.binders, T.Not(self.lift(c))), T.eq(T.ev(head), T.ev(self.name(b))))
                out.append(T.Forall(nq.params, T.Or(hit, miss)))
            else:
                out.append(T.Forall(nq.params, T.Iff(T.ev(head), self.lift(q))))
        return out


def _first_occurrence_fv(t: Term) -> list[Term]:
    fv = T.free_vars(t)
    out: list[Term] = []
    for u in T.walk(t):
        if u.op == Op.VAR and u in fv and u not in out:
            out.append(u)
    return out


def name_quantifiers(problem: ProblemFile):
    """(rewritten axioms, rewritten query, named quantifiers, defining axioms)."""
    nm = Namer({f.name for f in problem.symbols()})
    axioms = [nm.formula(a) for a, _ in problem.axioms]
    query = nm.formula(problem.query) if problem.query is not None else None
    return axioms, query, nm.named, nm.definitions()


# ---------------------------------------------------------------- eval bridge


def _eval_args(f: FunctionSymbol, ys):
    return [T.ev(y) for y in ys]


def eval_bridge_axioms(symbols) -> list[Term]:
    """⟦f(t..)⟧ = ⟦f⟧(⟦t⟧..) for honest f, and the base connective/equality/conditional equivalences."""
    out = []
    for f in symbols:
        ys = [T.var(f"x{k + 1}", s) for k, s in enumerate(f.arg_sorts)]
        lhs = T.ev(T.app(f, *ys))
        rhs = T.evalf(f, *_eval_args(f, ys))
        out.append(T.Forall(ys, T.eq(lhs, rhs) if f.result == MSG else T.Iff(lhs, rhs)))
    c1, c2 = T.var("c1", CND), T.var("c2", CND)
    m1, m2 = T.var("m1", MSG), T.var("m2", MSG)
    out.append(T.Iff(T.ev(T.CTRUE), T.TRUE))
    out.append(T.Iff(T.ev(T.CFALSE), T.FALSE))
    out.append(T.Forall([c1, c2], T.Iff(T.ev(T.cand(c1, c2)), T.And(T.ev(c1), T.ev(c2)))))
    out.append(T.Forall([c1, c2], T.Iff(T.ev(T.cor(c1, c2)), T.Or(T.ev(c1), T.ev(c2)))))
    out.append(T.Forall([c1, c2], T.Iff(T.ev(T.cimpl(c1, c2)), T.Implies(T.ev(c1), T.ev(c2)))))
    out.append(T.Forall([c1], T.Iff(T.ev(T.cnot(c1)), T.Not(T.ev(c1)))))
    out.append(T.Forall([m1, m2], T.Iff(T.ev(T.equiv(m1, m2)), T.eq(T.ev(m1), T.ev(m2)))))
    ite = T.ite(c1, m1, m2)
    out.append(T.Forall([c1, m1, m2], T.And(
        T.Implies(T.ev(c1), T.eq(T.ev(ite), T.ev(m1))),
        T.Implies(T.Not(T.ev(c1)), T.eq(T.ev(ite), T.ev(m2))),
    )))
    return out


# ---------------------------------------------------------------- order theory


def order_theory(protocol: Protocol) -> list[Term]:
    a, b, c = T.var("a", TP), T.var("b", TP), T.var("c", TP)
    init = T.INIT_T
    out = [
        T.Forall([a], T.Not(T.lt(a, a))),
        T.Forall([a, b, c], T.Implies(T.And(T.lt(a, b), T.lt(b, c)), T.lt(a, c))),
        T.Forall([a, b], T.Or(T.lt(a, b), T.eq(a, b), T.lt(b, a))),
        T.happens(init),
        T.Forall([a], T.Implies(T.Not(T.eq(a, init)), T.lt(init, a))),
        T.Forall([a, b], T.Implies(T.And(T.happens(b), T.lt(a, b)), T.happens(a))),
        T.eq(T.Term(Op.PRED, (init,)), init),
        T.Forall([a], T.Implies(T.Not(T.eq(a, init)), T.lt(T.pred(a), a))),
        T.Forall([a, b], T.Implies(T.Not(T.eq(a, init)), T.Not(T.And(T.lt(T.pred(a), b), T.lt(b, a))))),
    ]
    for o in protocol.order:
        out.append(T.Forall(o.binders, T.Implies(T.And(T.happens(o.left), T.happens(o.right)), T.lt(o.left, o.right))))
    for x in protocol.exclusion:
        out.append(T.Forall(x.binders, T.Not(T.And(T.happens(x.left), T.happens(x.right)))))
    return out


# ---------------------------------------------------------------- crypto schemas


@dataclass(frozen=True)
class CryptoSchema:
    """forall universals. ⟦premise⟧ => conclusion."""

    kind: str
    universals: tuple[Term, ...]
    premise: Term  # condition-sorted trigger pattern
    conclusion: Term

    def axiom(self) -> Term:
        return T.Forall(self.universals, T.Implies(T.ev(self.premise), self.conclusion))

    def instance(self, theta: dict) -> tuple[Term, Term]:
        return T.substitute(self.premise, theta), T.substitute(self.conclusion, theta)


def in_protocol(rel: RelationSpec, t: Term, protocol: Protocol, avoid: set[str]) -> Term:
    """t ⊑' P: t occurs in the condition or message of some step instance."""
    out = []
    for s in protocol.steps:
        tp, c, m = instantiate_step(s, set(avoid))
        out.append(T.Exists(tp.args, T.Or(T.sub(rel, t, m), T.sub(rel, t, c))))
    return T.Or(*out)


def _in_any(rel, t, targets, protocol, avoid, with_protocol=True):
    parts = [T.sub(rel, t, x) for x in targets]
    if with_protocol:
        parts.append(in_protocol(rel.companion(), t, protocol, avoid))
    return T.Or(*parts)


def crypto_schema(ca: CryptoAssumption, protocol: Protocol) -> CryptoSchema:
    avoid = {"m", "s", "k", "u", "c", "r", "r0", "m'"}
    k = T.var("k", NON)
    nk = T.nbar(k)
    if ca.kind == "nonce":
        m = T.var("m", MSG)
        return CryptoSchema("nonce", (k, m), T.equiv(nk, m), T.sub(T.DEFAULT_REL, nk, m))
    if ca.kind in ("euf-cma", "euf-cma-sig"):
        m, s, u = T.var("m", MSG), T.var("s", MSG), T.var("u", MSG)
        if ca.kind == "euf-cma":
            mac, ver = ca.symbols
            key_arg = nk
            skip = T.relation([(ver.name, 2), (mac.name, 1)])
        else:
            mac, ver, vk = ca.symbols
            key_arg = T.app(vk, nk)
            skip = T.relation([(mac.name, 1), (vk.name, 0)])
        premise = T.app(ver, s, m, key_arg)
        leak = _in_any(skip, nk, (m, s), protocol, avoid)
        honest = T.app(mac, u, nk)
        forged = T.Exists([u], T.And(T.Or(T.sub(T.DEFAULT_REL, honest, m), T.sub(T.DEFAULT_REL, honest, s)),
                                     T.eq(T.ev(u), T.ev(m))))
        return CryptoSchema(ca.kind, (s, m, k), premise, T.Or(leak, forged))
    if ca.kind == "int-ctxt":
        enc, dec, fail = ca.symbols
        c, m, r, r0, m2 = T.var("c", MSG), T.var("m", MSG), T.var("r", MSG), T.var("r0", NON), T.var("m'", MSG)
        premise = T.cnot(T.equiv(T.app(dec, c, nk), T.app(fail)))
        ct = T.app(enc, m, r, nk)
        honest = T.Exists([m, r], T.And(T.eq(T.ev(ct), T.ev(c)), T.sub(T.DEFAULT_REL, ct, c)))
        key_rel = T.relation([(enc.name, 2), (dec.name, 1)], traverses_input=False)
        leak = _in_any(key_rel, nk, (c,), protocol, avoid)
        p_rel = T.DEFAULT_REL_P
        rand_rel = T.relation([(enc.name, 1)], traverses_input=False)
        senc_rand = T.Forall([m, r], T.Implies(
            _in_any(p_rel, ct, (c,), protocol, avoid),
            T.And(
                T.Exists([r0], T.eq(r, T.nbar(r0))),
                T.Not(_in_any(rand_rel, r, (c,), protocol, avoid)),
                T.Forall([m2], T.Implies(T.Not(T.eq(m2, m)), T.Not(_in_any(p_rel, T.app(enc, m2, r, nk), (c,), protocol, avoid)))),
            ),
        ))
        return CryptoSchema("int-ctxt", (c, k), premise, T.Or(honest, leak, T.Not(senc_rand)))
    raise ValueError(f"unknown cryptographic assumption {ca.kind}")


# ---------------------------------------------------------------- triggers

_PATTERN_OPS = frozenset({Op.SUB, Op.EVAL, Op.EVALC, Op.LT, Op.HAPPENS})


def _pattern_terms(f: Term, allowed: frozenset) -> list[Term]:
    """Candidate trigger terms of f (pre-order) whose variables are all top-level binders."""
    out = []
    for u in T.walk(f):
        if u.op in _PATTERN_OPS and u.op != Op.VAR and T.free_vars(u) <= allowed and u not in out:
            out.append(u)
    return out


def patterns_for(f: Term) -> tuple[tuple[Term, ...], ...]:
    """One trigger group for a universally quantified axiom.

    A single premise term covering every binder is preferred, then a multi-trigger over
    premise terms, then a single term of the conclusion.  Never the evaluated side of
    an equation alone, which would create fresh constructor terms.
    """
    if f.op != Op.FORALL:
        return ()
    binders = frozenset(f.binders)
    body = f.args[0]
    if body.op == Op.IMPLIES:
        premise, concl = body.args
    else:
        premise, concl = None, body
    if premise is not None:
        cands = _pattern_terms(premise, binders)
        for c in cands:
            if T.free_vars(c) >= binders:
                return ((c,),)
        group, covered = [], set()
        for c in cands:
            if not T.free_vars(c) <= covered:
                group.append(c)
                covered |= T.free_vars(c)
        if covered >= binders:
            return (tuple(group),)
    for c in _pattern_terms(concl, binders):
        if T.free_vars(c) >= binders:
            return ((c,),)
    return ()


# ---------------------------------------------------------------- script


@dataclass(frozen=True)
class Axiom:
    tag: str  # order | eval-bridge | naming | subterm | crypto | user | input-instance | crypto-instance
    formula: Term
    note: str = ""
    patterns: tuple[tuple[Term, ...], ...] = ()  # trigger groups for the outermost quantifier


@dataclass
class TheoryScript:
    name: str
    mode: str
    protocol: Protocol
    nonces: list
    functions: list[FunctionSymbol]
    named: list[NamedQuantifier]
    relations: list[RelationSpec]
    axioms: list[Axiom] = field(default_factory=list)
    query: Term | None = None

    def formulas(self, tag: str | None = None) -> list[Term]:
        return [a.formula for a in self.axioms if tag is None or a.tag == tag]


def relations_in(formulas) -> set[RelationSpec]:
    out = set()
    for f in formulas:
        for u in T.walk(f):
            if u.op == Op.SUB:
                out.add(u.head)
    return out


def relation_closure(rels) -> list[RelationSpec]:
    out = set(rels)
    for r in list(out):
        if r.traverses_input and not r.nonce_left:
            out.add(r.companion())
    return sorted(out, key=lambda r: r.id)


def assemble(problem: ProblemFile, mode: str = FULL, *, input_preprocessing: bool = True,
             crypto_instances: bool = True) -> TheoryScript:
    """Deterministic theory for `problem`.

    Full mode keeps the subterm relations (with the input case instantiated at every
    input(T) when `input_preprocessing`) and the crypto schemas; heuristic mode swaps
    them for the nonce-sided relation and the preprocessed instances at ≡ level.
    """
    from .preprocess import apply_heuristic, heuristic_axioms, preprocess_inputs, preprocess_instances, to_equiv_level

    problem = normalize_problem(problem)
    protocol = problem.protocol
    symbols = problem.symbols()
    nm = Namer({f.name for f in symbols})
    axioms: list[Axiom] = []

    def add(tag, f, note="", lift=True):
        f = nm.formula(f) if lift else f
        axioms.append(Axiom(tag, f, note, patterns_for(f)))

    full = mode == FULL
    schemas = [crypto_schema(ca, protocol) for ca in problem.crypto]
    instances = preprocess_instances(problem) if (crypto_instances or not full) else []
    for f in order_theory(protocol):
        add("order", f)
    for f in eval_bridge_axioms(symbols):
        add("eval-bridge", f, lift=False)
    if full:
        for sch in schemas:
            add("crypto", sch.axiom(), sch.kind)
    else:
        for f in heuristic_axioms(problem, schemas):
            add("crypto", f, "heuristic")
    for a, line in problem.axioms:
        add("user", a if full else to_equiv_level(a, protocol), f"line {line}")
    if full:
        for inst in instances:
            add("crypto-instance", inst.formula, f"{inst.match.trigger.assumption.kind} @ {inst.match.source}")
    else:
        for inst, f in zip(instances, apply_heuristic(problem, instances)):
            add("crypto-instance", f, f"{inst.match.trigger.assumption.kind} @ {inst.match.source}")
    query = None
    if problem.query is not None:
        query = nm.formula(problem.query if full else to_equiv_level(problem.query, protocol))

    if full:
        rels = relation_closure(relations_in([a.formula for a in axioms] + ([query] if query else [])))
        if input_preprocessing:
            for f in preprocess_inputs(problem, rels):
                add("input-instance", f)
        for rel in rels:
            for f in relation_axioms(rel, protocol, symbols):
                is_input = any(u.op == Op.MACRO for u in T.walk(f))
                if not (is_input and rel.traverses_input and input_preprocessing):
                    add("subterm", f)
    else:
        rels = [T.SUBBAR]
    # definitions of named quantifiers, including those named while defining others
    done = 0
    while done < len(nm.named):
        start, done = done, len(nm.named)
        for f in nm.definitions(start):
            add("naming", f)
        for nq in nm.named[start:done]:
            for rel in rels:
                for f in quantifier_axioms(rel, nq):
                    add("naming", f)
    axioms.sort(key=lambda a: _TAG_ORDER[a.tag])
    return TheoryScript(problem.name, mode, protocol, list(problem.nonces.values()),
                        list(symbols), list(nm.named), list(rels), axioms, query)


def build(problem: ProblemFile, level: str = "instances") -> TheoryScript:
    """Theory for one preprocessing level: inputs, instances or heuristic."""
    if level == "inputs":
        return assemble(problem, FULL, crypto_instances=False)
    if level == "instances":
        return assemble(problem, FULL)
    if level == "heuristic":
        return assemble(problem, HEURISTIC)
    raise ValueError(f"unknown level {level}")


_TAG_ORDER = {"order": 0, "eval-bridge": 1, "naming": 2, "subterm": 3, "crypto": 4, "user": 5,
              "input-instance": 6, "crypto-instance": 7}
