"""Input preprocessing, crypto-instance preprocessing and the subterm-elimination heuristic."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import terms as T
from .ptcl import CryptoAssumption, ProblemFile, Protocol, match_pattern
from .subterms import expand_subterm_atom, input_axioms, relation_axioms
from .terms import CND, IDX, MSG, NON, TP, Op, Term

LEVELS = ("inputs", "instances", "heuristic")

# distribution beyond this many conjunct combinations is left undone
DISTRIBUTE_CAP = 256


# ---------------------------------------------------------------- input preprocessing


def input_targets(problem: ProblemFile) -> list[Term]:
    """Timepoints T of every input(T) in step bodies and query, first occurrence order."""
    sources = []
    for s in problem.protocol.steps:
        sources += [s.condition, s.message]
    if problem.query is not None:
        sources.append(problem.query)
    out, seen = [], set()
    for src in sources:
        for u in T.walk(src):
            if u.op == Op.MACRO and u.head == "input":
                k = T.alpha_key(u.args[0])
                if k not in seen:
                    seen.add(k)
                    out.append(u.args[0])
    return out


def preprocess_inputs(problem: ProblemFile, rels) -> list[Term]:
    """Instances of the input case of the subterm axioms at every input(T), per traversing relation."""
    out = []
    targets = input_targets(problem)
    for rel in rels:
        if rel.traverses_input:
            for tgt in targets:
                out += input_axioms(rel, problem.protocol, tgt)
    return out


# ---------------------------------------------------------------- triggers


@dataclass(frozen=True)
class AxiomTrigger:
    assumption: CryptoAssumption
    schema: object  # theory.CryptoSchema
    pattern: Term


@dataclass(frozen=True)
class TriggerMatch:
    trigger: AxiomTrigger
    occurrence: Term
    theta: tuple[tuple[Term, Term], ...]
    source: str

    @property
    def substitution(self) -> dict[Term, Term]:
        return dict(self.theta)


def triggers(problem: ProblemFile) -> list[AxiomTrigger]:
    from .theory import crypto_schema

    out = []
    for ca in problem.crypto:
        if ca.kind == "nonce":
            continue  # no-guessing instances are not preprocessed
        sch = crypto_schema(ca, problem.protocol)
        out.append(AxiomTrigger(ca, sch, sch.premise))
    return out


def _sources(problem: ProblemFile):
    for s in problem.protocol.steps[1:]:
        yield f"step {s.name} (line {s.line}) condition", s.condition
        yield f"step {s.name} (line {s.line}) message", s.message
    for a, line in problem.axioms:
        yield f"axiom (line {line})", a
    if problem.query is not None:
        yield f"query (line {problem.query_line})", problem.query


def find_triggers(problem: ProblemFile, assumption: CryptoAssumption | None = None) -> list[TriggerMatch]:
    """Every occurrence matching a trigger pattern, in source then pre-order."""
    out = []
    for trig in triggers(problem):
        if assumption is not None and trig.assumption != assumption:
            continue
        universals = frozenset(trig.schema.universals)
        rigid = frozenset(v for v in T.free_vars(trig.pattern) if v not in universals)
        for where, src in _sources(problem):
            for u in T.walk(src):
                if u.sort != trig.pattern.sort:
                    continue
                m = match_pattern(trig.pattern, u, {}, rigid)
                if m is not None:
                    theta = tuple((v, m[v]) for v in trig.schema.universals)
                    out.append(TriggerMatch(trig, u, theta, where))
    return out


# ---------------------------------------------------------------- simplification


def user_level(t: Term) -> bool:
    """No internal macro or reserved/attacker symbol: the only candidates a user-level term can equal."""
    for u in T.walk(t):
        if u.op == Op.MACRO and u.head != "input":
            return False
        if u.op == Op.APP and u.head.kind in (T.RESERVED, T.ATTACKER):
            return False
    return True


def expand_atoms(f: Term, protocol: Protocol) -> Term:
    """Replace every ⊑/⊑' atom by its st-based disjunction."""
    if f.op == Op.SUB:
        if f.head.nonce_left:
            return f
        return expand_subterm_atom(f, protocol, keep=user_level)
    if f.sort not in (T.BOOL,):
        return f
    return T.map_children(f, lambda a: expand_atoms(a, protocol))


def nnf(f: Term, pos: bool = True) -> Term:
    op = f.op
    if op == Op.TRUE:
        return T.TRUE if pos else T.FALSE
    if op == Op.FALSE:
        return T.FALSE if pos else T.TRUE
    if op == Op.NOT:
        return nnf(f.args[0], not pos)
    if op in (Op.AND, Op.OR):
        parts = [nnf(a, pos) for a in f.args]
        return (T.And if (op == Op.AND) == pos else T.Or)(*parts)
    if op == Op.IMPLIES:
        a, b = f.args
        return T.Or(nnf(a, False), nnf(b, True)) if pos else T.And(nnf(a, True), nnf(b, False))
    if op == Op.IFF:
        a, b = f.args
        if pos:
            return T.And(T.Or(nnf(a, False), nnf(b, True)), T.Or(nnf(a, True), nnf(b, False)))
        return T.Or(T.And(nnf(a, True), nnf(b, False)), T.And(nnf(a, False), nnf(b, True)))
    if op in (Op.FORALL, Op.EXISTS):
        body = nnf(f.args[0], pos)
        universal = (op == Op.FORALL) == pos
        return (T.Forall if universal else T.Exists)(f.binders, body)
    return f if pos else T.Not(f)


_CTOR_OPS = frozenset({Op.APP, Op.NBAR, Op.NONCE, Op.STEP, Op.ICONST, Op.ITE, Op.EQUIV, Op.CTRUE, Op.CFALSE,
                       Op.CAND, Op.COR, Op.CIMPL, Op.CNOT})
_QUANT_OPS = frozenset({Op.CEXISTS, Op.CFORALL, Op.FIND})


def _ctor(t: Term):
    """Constructor key of a free-datatype term, "q" for named quantifiers, None when not rigid."""
    if t.op in _CTOR_OPS:
        return (t.op, t.head, len(t.args))
    if t.op == Op.MACRO and t.head == "input":
        return ("input",)
    if t.op in _QUANT_OPS:
        return "q"
    return None


def decompose(a: Term, b: Term) -> Term:
    """Symbolic a = b with constructor injectivity and distinctness applied."""
    if a == b:
        return T.TRUE
    if a.op == Op.VAR or b.op == Op.VAR:
        return T.eq(a, b)
    ka, kb = _ctor(a), _ctor(b)
    if ka is None or kb is None:
        return T.eq(a, b)
    if ka == "q" or kb == "q":
        if ka == kb:
            return T.TRUE if T.alpha_equal(a, b) else T.eq(a, b)
        return T.FALSE
    if ka != kb:
        return T.FALSE
    return T.And(*(decompose(x, y) for x, y in zip(a.args, b.args)))


def _lt(a: Term, b: Term) -> Term:
    if a == b:
        return T.FALSE
    if b == T.INIT_T:
        return T.FALSE
    if a == T.INIT_T and b.op == Op.STEP:
        return T.TRUE
    return T.lt(a, b)


def _atom(f: Term) -> Term:
    if f.op == Op.EQ:
        return decompose(*f.args)
    if f.op == Op.LT:
        return _lt(*f.args)
    return f


def _dedupe(parts):
    seen, out = set(), []
    for p in parts:
        k = T.alpha_key(p)
        if k not in seen:
            seen.add(k)
            out.append(p)
    return out


def _open_exists(e: Term, avoid: set[str], inner: set[str] = frozenset()):
    """Binders and body of an existential, renamed apart from `avoid` (which grows)."""
    ren, bs = {}, []
    for b in e.binders:
        if b.head in avoid:
            nb = T.var(T.fresh_name(b.head, avoid | inner), b.sort)
            ren[b] = nb
            b = nb
        avoid.add(b.head)
        bs.append(b)
    body = T.substitute(e.args[0], ren) if ren else e.args[0]
    return bs, body


def _literal(p: Term):
    """(polarity, key) with equality keyed symmetrically."""
    pos = p.op != Op.NOT
    a = p if pos else p.args[0]
    if a.op == Op.EQ:
        return pos, ("=", frozenset(T.alpha_key(x) for x in a.args))
    return pos, T.alpha_key(a)


def _complementary(parts) -> bool:
    seen = {}
    for p in parts:
        pos, k = _literal(p)
        if seen.get(k, pos) != pos:
            return True
        seen[k] = pos
    return False


def _conj(parts) -> Term:
    """And of simplified parts: lifts existentials, distributes over disjunctions."""
    parts = [p for p in _dedupe(T.And(*parts).args if T.And(*parts).op == Op.AND else [T.And(*parts)])]
    if len(parts) == 1:
        return parts[0]
    if T.FALSE in parts or _complementary(parts):
        return T.FALSE
    exists = [p for p in parts if p.op == Op.EXISTS]
    if exists:
        rest = [p for p in parts if p.op != Op.EXISTS]
        avoid = {v.head for p in parts for v in T.free_vars(p)}
        bound, bodies = [], []
        for e in exists:
            bs, body = _open_exists(e, avoid, T.all_var_names(e))
            bound += bs
            bodies.append(body)
        return _exists(bound, _conj(rest + bodies))
    ors = [p for p in parts if p.op == Op.OR]
    if ors:
        size = 1
        for o in ors:
            size *= len(o.args)
        if size <= DISTRIBUTE_CAP:
            rest = [p for p in parts if p.op != Op.OR]
            combos = itertools.product(*(o.args for o in ors))
            return _disj([_conj(rest + list(c)) for c in combos])
    return T.And(*parts)


def _disj(parts) -> Term:
    f = T.Or(*parts)
    if f.op != Op.OR:
        return f
    return T.Or(*_dedupe(f.args))


def _exists(bound, body: Term) -> Term:
    if body.op == Op.OR:
        return _disj([_exists(bound, d) for d in body.args])
    if body.op == Op.EXISTS:
        outer = [b for b in bound if b not in body.binders]
        return _exists(outer + list(body.binders), body.args[0])
    fv = T.free_vars(body)
    bound = [b for b in bound if b in fv]
    if not bound:
        return body
    conj = body.args if body.op == Op.AND else (body,)
    for c in conj:
        if c.op != Op.EQ:
            continue
        for v, t in (c.args, reversed(c.args)):
            if v in bound and v.sort in (MSG, CND, NON) and v not in T.free_vars(t):
                rest = [x for x in bound if x != v]
                return _exists(rest, simplify(T.substitute(body, {v: t})))
    return T.Exists(bound, body)


def simplify(f: Term) -> Term:
    """Simplify a formula in negation normal form."""
    op = f.op
    if op == Op.AND:
        return _conj([simplify(a) for a in f.args])
    if op == Op.OR:
        return _disj([simplify(a) for a in f.args])
    if op == Op.NOT:
        return T.Not(_atom(f.args[0]))
    if op == Op.EXISTS:
        return _exists(f.binders, simplify(f.args[0]))
    if op == Op.FORALL:
        return _forall(f.binders, simplify(f.args[0]))
    return _atom(f)


def _forall(bound, body: Term) -> Term:
    """Universal one-point rule: forall v. (v != t | phi)  ~>  phi[t/v]."""
    if body.op == Op.AND:
        return _conj([_forall(bound, c) for c in body.args])
    fv = T.free_vars(body)
    bound = [b for b in bound if b in fv]
    if not bound:
        return body
    disj = body.args if body.op == Op.OR else (body,)
    for d in disj:
        if d.op != Op.NOT or d.args[0].op != Op.EQ:
            continue
        for v, t in (d.args[0].args, reversed(d.args[0].args)):
            if v in bound and v.sort in (MSG, CND, NON) and v not in T.free_vars(t):
                rest = [x for x in bound if x != v]
                return _forall(rest, simplify(T.substitute(body, {v: t})))
    return T.Forall(bound, body)


def preprocess_formula(f: Term, protocol: Protocol) -> Term:
    return simplify(nnf(expand_atoms(f, protocol)))


@dataclass(frozen=True)
class Instance:
    match: TriggerMatch
    formula: Term  # closed: forall fv. ⟦trigger⟧ => conclusion
    conclusion: Term

    def __str__(self) -> str:
        return f"[{self.match.trigger.assumption.kind} @ {self.match.source}] {T.show(self.formula)}"


def preprocess_instance(match: TriggerMatch, protocol: Protocol) -> Instance:
    schema = match.trigger.schema
    premise, conclusion = schema.instance(match.substitution)
    concl = preprocess_formula(conclusion, protocol)
    body = T.Implies(T.ev(premise), concl)
    fv = sorted(T.free_vars(body), key=lambda v: (v.sort.value, v.head))
    return Instance(match, T.Forall(fv, body), concl)


def preprocess_instances(problem: ProblemFile) -> list[Instance]:
    out, seen = [], set()
    for m in find_triggers(problem):
        inst = preprocess_instance(m, problem.protocol)
        k = T.alpha_key(inst.formula)
        if k not in seen:
            seen.add(k)
            out.append(inst)
    return out


# ---------------------------------------------------------------- heuristic


def to_equiv_level(f: Term, protocol: Protocol) -> Term:
    """Remove ⊑ atoms (expanded) and turn symbolic equality on messages/conditions into ≡."""
    if any(u.op == Op.SUB and not u.head.nonce_left for u in T.walk(f)):
        f = preprocess_formula(f, protocol)

    def go(u: Term) -> Term:
        if u.op == Op.EQ:
            a, b = u.args
            if a.sort == MSG:
                return T.eq(T.ev(a), T.ev(b))
            if a.sort == CND:
                return T.Iff(T.ev(a), T.ev(b))
            return u
        if u.sort != T.BOOL:
            return u
        return T.map_children(u, go)

    return go(f)


def heuristic_axioms(problem: ProblemFile, schemas=()) -> list[Term]:
    """No-guessing through ⊑̄, the forward ⊑̄ axioms and right-compatibility."""
    out = []
    n, m, m2 = T.var("n", NON), T.var("m", MSG), T.var("m'", MSG)
    c, c2 = T.var("c", CND), T.var("c'", CND)
    rel = T.SUBBAR
    if any(ca.kind == "nonce" for ca in problem.crypto):
        out.append(T.Forall([n, m], T.Implies(T.eq(T.ev(T.nbar(n)), T.ev(m)), T.sub(rel, n, m))))
    out += relation_axioms(rel, problem.protocol, problem.symbols(), reverse=False)
    out.append(T.Forall([n, m, m2], T.Implies(T.And(T.eq(T.ev(m), T.ev(m2)), T.sub(rel, n, m)), T.sub(rel, n, m2))))
    out.append(T.Forall([n, c, c2], T.Implies(T.And(T.Iff(T.ev(c), T.ev(c2)), T.sub(rel, n, c)), T.sub(rel, n, c2))))
    return out


def apply_heuristic(problem: ProblemFile, instances) -> list[Term]:
    """Instance formulas rewritten to ≡-level equality."""
    return [to_equiv_level(i.formula if isinstance(i, Instance) else i, problem.protocol) for i in instances]


# ---------------------------------------------------------------- comparison


def _prenex_disjuncts(f: Term):
    """Disjuncts of f with their existential prefixes pulled to the front."""
    if f.op == Op.OR:
        return [d for a in f.args for d in _prenex_disjuncts(a)]
    if f.op == Op.EXISTS:
        return [(f.binders + bs, body) for bs, body in _prenex_disjuncts_one(f.args[0])]
    return [((), f)]


def _prenex_disjuncts_one(f):
    return [(bs, b) for bs, b in _prenex_disjuncts(f)] if f.op in (Op.EXISTS,) else [((), f)]


def _conjunct_keys(bs, body):
    parts = body.args if body.op == Op.AND else (body,)
    return bs, parts


def equivalent_modulo_prenex(a: Term, b: Term) -> bool:
    """Alpha-equivalence up to existential prenexing, binder order, and disjunct/conjunct order."""

    def norm(f):
        if f.op == Op.FORALL:
            inner = norm(f.args[0])
            return ("forall", tuple(v.sort.value for v in f.binders), f.binders, inner)
        if f.op == Op.IMPLIES:
            return ("=>", norm(f.args[0]), norm(f.args[1]))
        return ("or", _prenex_disjuncts(f))

    def same(x, y, ren):
        if x[0] != y[0]:
            return False
        if x[0] == "forall":
            if x[1] != y[1]:
                return False
            return same(x[3], y[3], {**ren, **dict(zip(y[2], x[2]))})
        if x[0] == "=>":
            return same(x[1], y[1], ren) and same(x[2], y[2], ren)
        dx, dy = x[1], y[1]
        if len(dx) != len(dy):
            return False
        used = set()
        for bx, fx in dx:
            for k, (by, fy) in enumerate(dy):
                if k not in used and _disjunct_match(bx, fx, by, fy, ren):
                    used.add(k)
                    break
            else:
                return False
        return True

    return same(norm(a), norm(b), {})


def _disjunct_match(bx, fx, by, fy, ren) -> bool:
    if sorted(v.sort.value for v in bx) != sorted(v.sort.value for v in by) or len(bx) > 6:
        return False
    px = fx.args if fx.op == Op.AND else (fx,)
    py = fy.args if fy.op == Op.AND else (fy,)
    if len(px) != len(py):
        return False
    for perm in itertools.permutations(by):
        if any(u.sort != v.sort for u, v in zip(bx, perm)):
            continue
        theta = {**ren, **dict(zip(perm, bx))}
        keys_y = sorted(map(repr, (T.alpha_key(T.substitute(p, theta)) for p in py)))
        keys_x = sorted(map(repr, (T.alpha_key(p) for p in px)))
        if keys_x == keys_y:
            return True
    return False
