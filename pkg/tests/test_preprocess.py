import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccsa import terms as T
from ccsa.preprocess import (decompose, equivalent_modulo_prenex, find_triggers, input_targets, nnf,
                             preprocess_inputs, preprocess_instances, simplify, to_equiv_level)
from ccsa.ptcl import load, parse, resolve, validate
from ccsa.smt import emit
from ccsa.terms import Op
from ccsa.theory import assemble
from ccsa.unify import unify

from oracles import mac_expected

BH = load("basic-hash")
F, N = BH.functions, BH.nonces
i, j = T.var("i", T.IDX), T.var("j", T.IDX)


def test_mac_trigger_binds_signature_message_and_key():
    ms = [m for m in find_triggers(BH) if m.source.startswith("step R_s")]
    assert len(ms) == 1
    theta = {v.head: T.show(t) for v, t in ms[0].theta}
    assert theta == {"s": "sel2of2(input(R_s(i, j)))", "m": "sel1of2(input(R_s(i, j)))", "k": "key(j)"}


@pytest.mark.parametrize("name", ["basic-hash", "toy-sig", "toy-enc"])
def test_matches_unify_independently(name):
    p = load(name)
    ms = find_triggers(p)
    assert ms
    for m in ms:
        pattern = m.trigger.pattern
        s = unify([(pattern, m.occurrence)], m.trigger.schema.universals)
        assert s is not None
        assert T.substitute(pattern, s) == m.occurrence
        assert T.substitute(pattern, m.substitution) == m.occurrence


def test_no_matches_without_hash():
    p = validate(parse("type index\nfun ok: message\nnonce n\nassert-crypto nonce\nstep A { true } { ok }\n"))
    assert find_triggers(p) == []


def test_mac_instance_matches_hand_derivation():
    insts = [x for x in preprocess_instances(BH) if x.match.source.startswith("step R_s")]
    assert len(insts) == 1
    assert equivalent_modulo_prenex(insts[0].formula, mac_expected(BH))


def test_comparator_rejects_the_reader_session_nonce():
    (inst,) = [x for x in preprocess_instances(BH) if x.match.source.startswith("step R_s")]
    assert not equivalent_modulo_prenex(inst.formula, mac_expected(BH, (i, j)))


def test_key_in_plaintext_keeps_the_leak():
    src = resolve("basic-hash").read_text().replace(
        "{ tpl(nt(i, j), hash(nt(i, j), key(j))) }", "{ tpl(nt(i, j), tpl(hash(nt(i, j), key(j)), key(j))) }")
    p = validate(parse(src, "leaky"))
    (inst,) = [x for x in preprocess_instances(p) if x.match.source.startswith("step R_s")]
    assert inst.conclusion.op == Op.OR
    assert not equivalent_modulo_prenex(inst.formula, mac_expected(BH))


def test_instances_are_deduplicated():
    insts = preprocess_instances(BH)
    assert len(insts) == 2  # R_s and R_f; the query repeats the R_s trigger
    assert {x.match.source.split()[1] for x in insts} == {"R_s", "R_f"}


def test_instances_are_subterm_free():
    for name in ("basic-hash", "toy-sig", "toy-enc"):
        for inst in preprocess_instances(load(name)):
            assert not any(u.op == Op.SUB for u in T.walk(inst.formula))
            assert not T.free_vars(inst.formula)


def test_input_instance_has_four_disjuncts():
    rs = BH.protocol.step("R_s").timepoint()
    (f,) = [f for f in preprocess_inputs(BH, [T.DEFAULT_REL]) if rs in set(T.walk(f))]
    concl = f.args[0].args[1]
    assert concl.op == Op.OR and len(concl.args) == 5  # self case plus init, Tag, R_s, R_f


def test_init_only_input_instance_is_vacuous():
    p = validate(parse("type index\nfun ok: message\nquery input(init) == ok\n"))
    assert input_targets(p) == [T.INIT_T]
    (f,) = preprocess_inputs(p, [T.DEFAULT_REL])
    concl = f.args[0].args[1]
    step_parts = [d for d in concl.args if d.op != Op.EQ]
    assert len(step_parts) == 1
    assert T.lt(T.INIT_T, T.INIT_T) in set(T.walk(step_parts[0]))


@pytest.mark.parametrize("name", ["basic-hash", "toy-sig", "toy-enc"])
def test_input_instances_follow_from_the_generic_axiom(name, z3):
    p = load(name)
    pre = assemble(p, crypto_instances=False)
    gen = assemble(p, crypto_instances=False, input_preprocessing=False)
    assert [q.symbol.name for q in pre.named] == [q.symbol.name for q in gen.named]
    for f in pre.formulas("input-instance"):
        assert z3(emit(dataclasses.replace(gen, query=f))).proved


def test_equiv_level_removes_symbolic_equality():
    x = T.app(F["ok"])
    f = to_equiv_level(T.eq(x, T.app(F["ko"])), BH.protocol)
    assert f == T.eq(T.ev(x), T.ev(T.app(F["ko"])))
    c = T.app(F["verify"], x, x, x)
    assert to_equiv_level(T.eq(c, c), BH.protocol) == T.Iff(T.ev(c), T.ev(c))


def test_decompose_clash_and_injectivity():
    ok, ko = T.app(F["ok"]), T.app(F["ko"])
    assert decompose(ok, ko) == T.FALSE
    x, y = T.var("x", T.MSG), T.var("y", T.MSG)
    assert decompose(T.app(F["tpl"], x, ok), T.app(F["tpl"], y, ok)) == T.eq(x, y)
    assert decompose(T.nbar(T.nonce(N["key"], i)), T.nbar(T.nonce(N["key"], j))) == T.eq(i, j)


def test_one_point_on_messages():
    x = T.var("x", T.MSG)
    ok = T.app(F["ok"])
    assert simplify(T.Exists([x], T.And(T.eq(x, ok), T.eq(T.ev(x), T.ev(ok))))) == T.TRUE


# ---- the simplifier preserves meaning on index formulas over a small domain

V = [T.var(n, T.IDX) for n in ("a", "b", "c")]


def formulas():
    atoms = st.tuples(st.sampled_from(V), st.sampled_from(V)).map(lambda p: T.eq(*p))
    return st.recursive(atoms, lambda ch: st.one_of(
        st.lists(ch, min_size=2, max_size=3).map(lambda xs: T.And(*xs)),
        st.lists(ch, min_size=2, max_size=3).map(lambda xs: T.Or(*xs)),
        ch.map(T.Not),
        st.tuples(st.sampled_from(V), ch).map(lambda p: T.Exists([p[0]], p[1])),
        st.tuples(st.sampled_from(V), ch).map(lambda p: T.Forall([p[0]], p[1])),
    ), max_leaves=6)


def holds(f, env, dom=range(3)):
    op = f.op
    if op == Op.TRUE:
        return True
    if op == Op.FALSE:
        return False
    if op == Op.EQ:
        return env[f.args[0]] == env[f.args[1]]
    if op == Op.NOT:
        return not holds(f.args[0], env)
    if op == Op.AND:
        return all(holds(a, env) for a in f.args)
    if op == Op.OR:
        return any(holds(a, env) for a in f.args)
    if op == Op.IMPLIES:
        return not holds(f.args[0], env) or holds(f.args[1], env)
    if op in (Op.EXISTS, Op.FORALL):
        import itertools
        q = any if op == Op.EXISTS else all
        return q(holds(f.args[0], {**env, **dict(zip(f.binders, vals))})
                 for vals in itertools.product(dom, repeat=len(f.binders)))
    raise AssertionError(op)


@settings(max_examples=200, deadline=None)
@given(formulas(), st.tuples(*[st.integers(0, 2)] * 3))
def test_simplify_preserves_meaning(f, vals):
    env = dict(zip(V, vals))
    assert holds(simplify(nnf(f)), env) == holds(f, env)
