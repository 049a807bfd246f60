from hypothesis import given, settings
from hypothesis import strategies as st_

from ccsa import terms as T
from ccsa.ptcl import load
from ccsa.subterms import (constructor_shapes, expand_subterm_atom, function_axioms, input_axioms, relation_axioms,
                           st, st_shallow)

BH = load("basic-hash")
F, N = BH.functions, BH.nonces
i, j = T.var("i", T.IDX), T.var("j", T.IDX)
x = T.var("x", T.MSG)
SHAPES = dict(constructor_shapes(BH.symbols()))


def key(v):
    return T.nbar(T.nonce(N["key"], v))


def nt(a, b):
    return T.nbar(T.nonce(N["nt"], a, b))


def macro_free():
    leaves = st_.one_of(
        st_.sampled_from([T.app(F["ok"]), T.app(F["ko"]), x]),
        st_.sampled_from([i, j]).map(key),
        st_.tuples(st_.sampled_from([i, j]), st_.sampled_from([i, j])).map(lambda p: nt(*p)),
    )

    def grow(ch):
        return st_.one_of(
            st_.tuples(ch, ch).map(lambda p: T.app(F["tpl"], *p)),
            st_.tuples(ch, ch).map(lambda p: T.app(F["hash"], *p)),
            ch.map(lambda a: T.app(F["sel1of2"], a)),
            st_.tuples(ch, ch, ch).map(lambda p: T.ite(T.app(F["verify"], *p), p[0], p[1])),
        )

    return st_.recursive(leaves, grow, max_leaves=8)


def test_nonce_case_is_singleton():
    n = T.nonce(N["nt"], i, j)
    s = st(n, BH.protocol)
    assert [(e.candidate, e.bound, e.guard) for e in s] == [(n, (), T.TRUE)]


def test_function_case():
    h = T.app(F["hash"], x, key(j))
    cands = {e.candidate for e in st(h, BH.protocol)}
    assert {h, x, key(j)} <= cands
    assert all(e.guard == T.TRUE and not e.bound for e in st(h, BH.protocol))


def test_input_reaches_tag_output():
    rs = BH.protocol.step("R_s").timepoint()
    entries = st(T.inp(rs), BH.protocol).entries
    hits = [e for e in entries if e.candidate.op == T.Op.APP and e.candidate.head.name == "tpl"]
    assert len(hits) == 1
    e = hits[0]
    k, jj = e.bound
    tag = BH.protocol.step("Tag").symbol
    assert e.candidate == T.app(F["tpl"], nt(k, jj), T.app(F["hash"], nt(k, jj), key(jj)))
    assert e.guard == T.lt(T.step(tag, k, jj), rs)


def test_input_guards_are_strict():
    rs = BH.protocol.step("R_s").timepoint()
    for e in st(T.inp(rs), BH.protocol):
        assert e.guard == T.TRUE or e.guard.op == T.Op.LT


def test_shallow_input_is_atomic():
    tp = T.var("T", T.TP)
    s = st_shallow(T.inp(tp))
    assert [(e.candidate, e.bound) for e in s] == [(T.inp(tp), ())]


def test_shallow_function():
    a = T.app(F["sel1of2"], T.app(F["ok"]))
    assert {e.candidate for e in st_shallow(a)} == {a, T.app(F["ok"])}


@settings(max_examples=100)
@given(macro_free())
def test_shallow_and_full_agree_without_macros(t):
    full = {(e.candidate, e.bound) for e in st(t, BH.protocol)}
    shallow = {(e.candidate, e.bound) for e in st_shallow(t)}
    assert full == shallow
    assert all(e.guard == T.TRUE for e in st(t, BH.protocol))


def test_default_function_axiom():
    ax = function_axioms(T.DEFAULT_REL, "tpl", SHAPES["tpl"])
    t, y1, y2 = T.var("t", T.MSG), T.var("y1", T.MSG), T.var("y2", T.MSG)
    sub = lambda a, b: T.sub(T.DEFAULT_REL, a, b)
    want = T.Forall([t, y1, y2], T.Implies(sub(t, T.app(F["tpl"], y1, y2)),
                                           T.Or(T.eq(t, T.app(F["tpl"], y1, y2)), sub(t, y1), sub(t, y2))))
    assert any(T.alpha_equal(a, want) for a in ax)


def test_key_position_axiom():
    rel = T.relation([("hash", 1)])
    ax = function_axioms(rel, "hash", SHAPES["hash"])
    t, y1, y2 = T.var("t", T.MSG), T.var("y1", T.MSG), T.var("y2", T.MSG)
    h = T.app(F["hash"], y1, y2)
    want = T.Forall([t, y1, y2], T.Implies(T.And(T.sub(rel, t, h), T.eq(t, y2)), T.Or(T.eq(t, h), T.sub(rel, t, y1))))
    assert any(T.alpha_equal(a, want) for a in ax)


def test_companion_has_only_the_negative_input_fact():
    ax = input_axioms(T.DEFAULT_REL_P, BH.protocol)
    assert len(ax) == 1
    body = ax[0].args[0]
    assert body.op == T.Op.IFF and body.args[1].op == T.Op.EQ


def test_traversing_input_axiom_lists_every_step():
    (ax,) = input_axioms(T.DEFAULT_REL, BH.protocol)
    steps = {u.head.name for u in T.walk(ax) if u.op == T.Op.STEP}
    assert steps == {"init", "Tag", "R_s", "R_f"}
    assert not any(u.op == T.Op.SUB and u.head == T.DEFAULT_REL for u in T.walk(ax.args[0].args[1]))


def test_relation_axioms_include_reflexivity():
    ax = relation_axioms(T.DEFAULT_REL, BH.protocol, BH.symbols())
    t = T.var("t", T.MSG)
    assert ax[0] == T.Forall([t], T.sub(T.DEFAULT_REL, t, t))


def test_expand_nonce_atom():
    n = nt(i, j)
    assert expand_subterm_atom(T.sub(T.DEFAULT_REL, x, n), BH.protocol) == T.eq(x, n)


def test_expand_reflexive_atom():
    out = expand_subterm_atom(T.sub(T.DEFAULT_REL, x, x), BH.protocol)
    assert out == T.eq(x, x) or T.eq(x, x) in out.args


def test_expand_input_atom_covers_each_step():
    rs = BH.protocol.step("R_s").timepoint()
    out = expand_subterm_atom(T.sub(T.DEFAULT_REL, T.nonce(N["key"], j), T.inp(rs)), BH.protocol)
    guards = {u.args[0].head.name for u in T.walk(out) if u.op == T.Op.LT}
    assert guards == {"init", "Tag", "R_s", "R_f"}
    assert not any(u.op == T.Op.SUB for u in T.walk(out))
