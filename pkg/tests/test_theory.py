import dataclasses

import pytest

from ccsa import terms as T
from ccsa.ptcl import load, parse, validate
from ccsa.smt import emit
from ccsa.terms import Op
from ccsa.theory import (FULL, HEURISTIC, Axiom, Namer, assemble, binarize, build, crypto_schema, eval_bridge_axioms,
                         order_theory, patterns_for)

BH = load("basic-hash")
F, N = BH.functions, BH.nonces
m, s = T.var("m", T.MSG), T.var("s", T.MSG)
j = T.var("j", T.IDX)


def exists_verify():
    return T.cexists([j], T.app(F["verify"], m, s, T.nbar(T.nonce(N["key"], j))))


def test_top_level_quantifier_is_lifted():
    nm = Namer({"verify"})
    out = nm.formula(T.ev(exists_verify()))
    assert out.op == Op.EXISTS
    assert out.args[0] == T.ev(T.app(F["verify"], m, s, T.nbar(T.nonce(N["key"], j))))
    assert nm.named == []


def test_nested_quantifier_is_named():
    nm = Namer({"verify"})
    out = nm.formula(T.ev(T.app(F["tpl"], T.ite(exists_verify(), m, s), m)))
    assert len(nm.named) == 1
    nq = nm.named[0]
    assert nq.symbol.name == "exists#1"
    assert nq.params == (m, s)
    assert nq.symbol.kind == T.NAMED_QUANTIFIER
    assert nq.term() in set(T.walk(out))
    (d,) = nm.definitions()
    assert T.alpha_equal(d, T.Forall([m, s], T.Iff(T.ev(nq.term()), T.Exists([j], T.ev(exists_verify().args[0])))))


def test_alpha_equivalent_quantifiers_share_a_name():
    nm = Namer(set())
    k = T.var("k", T.IDX)
    q2 = T.cexists([k], T.app(F["verify"], m, s, T.nbar(T.nonce(N["key"], k))))
    a = nm.name(T.ite(exists_verify(), m, s))
    b = nm.name(T.ite(q2, m, s))
    assert a == b and len(nm.named) == 1


def test_closed_quantifier_is_a_constant():
    nm = Namer(set())
    q = T.cexists([j], T.equiv(T.nbar(T.nonce(N["key"], j)), T.app(F["ok"])))
    out = nm.name(T.ite(q, T.app(F["ok"]), T.app(F["ko"])))
    assert nm.named[0].symbol.arity == 0
    assert out.args[0] == T.app(nm.named[0].symbol)


def test_binarize_folds_right():
    a, b, c = (T.app(F["verify"], x, x, x) for x in (m, s, T.app(F["ok"])))
    t = binarize(T.Term(Op.CAND, (a, b, c)))
    assert t == T.cand(a, T.cand(b, c))


def test_bridges():
    ax = eval_bridge_axioms(BH.symbols())
    assert T.Iff(T.ev(T.CTRUE), T.TRUE) in ax
    x1 = T.var("x1", T.MSG)
    want = T.Forall([x1], T.eq(T.ev(T.app(F["sel1of2"], x1)), T.evalf(F["sel1of2"], T.ev(x1))))
    assert want in ax


def test_order_theory_basics():
    ax = order_theory(BH.protocol)
    assert T.happens(T.INIT_T) in ax
    i = T.var("i", T.IDX)
    rs, rf = BH.protocol.step("R_s").symbol, BH.protocol.step("R_f").symbol
    excl = T.Forall([i, j], T.Not(T.And(T.happens(T.step(rs, i, j)), T.happens(T.step(rf, i)))))
    assert any(T.alpha_equal(a, excl) for a in ax)


def _only(script, tags, query):
    return dataclasses.replace(script, axioms=[a for a in script.axioms if a.tag in tags], query=query)


def test_strict_order_is_irreflexive_for_the_solver(z3):
    sc = build(BH, "instances")
    tv = T.var("T", T.TP)
    q = T.Forall([tv], T.Not(T.lt(tv, tv)))
    sc = _only(sc, {"order"}, None)
    sc.axioms.append(Axiom("order", T.Exists([tv], T.lt(tv, tv))))
    assert z3(emit(sc)).proved
    assert z3(emit(_only(build(BH), {"order"}, q))).proved


def test_exclusion_for_the_solver(z3):
    i = T.var("i", T.IDX)
    rs, rf = BH.protocol.step("R_s").symbol, BH.protocol.step("R_f").symbol
    q = T.Forall([i, j], T.Implies(T.happens(T.step(rs, i, j)), T.Not(T.happens(T.step(rf, i)))))
    assert z3(emit(_only(build(BH), {"order"}, q))).proved


def test_one_rewrite_proof(z3):
    p = validate(parse(
        "fun tpl(message, message): message\nfun sel1of2(message): message\nfun ok: message\nfun ko: message\n"
        "assert forall (x: message, y: message) sel1of2(tpl(x, y)) == x\n"
        "query sel1of2(tpl(ok, ko)) == ok\n", "rewrite"))
    for level in ("instances", "heuristic"):
        assert z3(emit(build(p, level))).proved


def test_nonce_schema_is_one_axiom():
    sc = build(BH)
    nonce = [a for a in sc.axioms if a.tag == "crypto" and a.note == "nonce"]
    assert len(nonce) == 1


def test_mac_schema_key_disjunct_lists_every_step():
    sch = crypto_schema(BH.crypto[1], BH.protocol)
    # one disjunct per step body: init sends empty, Tag a tpl, R_s ok and R_f ko
    rhs = {u.args[1].head.name for u in T.walk(sch.conclusion)
           if u.op == Op.SUB and u.head.id.endswith("'") and u.args[1].op == Op.APP}
    assert {"empty", "tpl", "ok", "ko"} <= rhs
    rels = {u.head.id for u in T.walk(sch.conclusion) if u.op == Op.SUB}
    assert "sub[hash.2,verify.3]" in rels and "sub[hash.2,verify.3]'" in rels


def test_senc_rand_shape():
    enc = load("toy-enc")
    sch = crypto_schema(enc.crypto[1], enc.protocol)
    neg = sch.conclusion.args[-1]
    assert neg.op == Op.NOT
    rand = neg.args[0]
    assert rand.op == Op.FORALL and [v.head for v in rand.binders] == ["m", "r"]
    assert rand.args[0].op == Op.IMPLIES
    body = rand.args[0].args[1]
    assert body.op == Op.AND and len(body.args) == 3


def test_full_script_has_input_instance_over_all_steps():
    sc = build(BH)
    inst = sc.formulas("input-instance")
    assert inst
    hit = [f for f in inst if any(u.op == Op.SUB and u.head == T.DEFAULT_REL for u in T.walk(f))]
    assert hit
    for f in hit:
        assert {u.head.name for u in T.walk(f) if u.op == Op.STEP} >= {"init", "Tag", "R_s", "R_f"}


@pytest.mark.parametrize("level", ["inputs", "instances", "heuristic"])
def test_assembly_is_deterministic(level):
    assert emit(build(BH, level)) == emit(build(load("basic-hash"), level))


def test_heuristic_uses_only_subbar():
    sc = build(BH, "heuristic")
    assert sc.mode == HEURISTIC and sc.relations == [T.SUBBAR]
    for f in sc.formulas() + [sc.query]:
        for u in T.walk(f):
            if u.op == Op.SUB:
                assert u.head == T.SUBBAR and u.args[0].sort == T.NON
            if u.op == Op.EQ:
                assert u.args[0].sort not in (T.MSG, T.CND)


def test_heuristic_has_no_negative_premise_axiom():
    sc = build(BH, "heuristic")
    for f in sc.formulas():
        for u in T.walk(f):
            if u.op == Op.IMPLIES:
                assert not (u.args[0].op == Op.NOT and u.args[0].args[0].op == Op.SUB)


def test_heuristic_keeps_step_and_nonce_datatypes():
    text = emit(build(BH, "heuristic"))
    assert "(declare-datatypes ((Step 0))" in text
    assert "(declare-datatypes ((Nonce 0))" in text
    assert "(declare-sort Message 0)" in text


def test_levels_are_monotone():
    a = {T.alpha_key(f) for f in build(BH, "inputs").formulas()}
    b = {T.alpha_key(f) for f in build(BH, "instances").formulas()}
    assert a <= b and len(b) > len(a)


def test_patterns_cover_binders():
    for ax in build(BH).axioms:
        f = ax.formula
        if f.op != Op.FORALL:
            continue
        for group in ax.patterns or patterns_for(f):
            seen = set().union(*(T.free_vars(p) for p in group))
            assert set(f.binders) <= seen


def test_full_mode_name():
    assert build(BH).mode == FULL
    assert assemble(BH).name == "basic-hash"
