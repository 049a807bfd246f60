import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccsa import terms as T
from ccsa.terms import CND, IDX, MSG, NON, TP, FunctionSymbol, NonceSymbol, SortError, StepSymbol

F = FunctionSymbol("f", (MSG, MSG), MSG)
G = FunctionSymbol("g", (MSG,), MSG)
OK = FunctionSymbol("ok", (), MSG)
CHK = FunctionSymbol("chk", (MSG,), CND)
N = NonceSymbol("n", 1)
A = StepSymbol("A", 1)

i, j, k = (T.var(x, IDX) for x in "ijk")


def msgs(idx_vars=("i", "j")):
    leaves = st.one_of(
        st.just(T.app(OK)),
        st.sampled_from(idx_vars).map(lambda v: T.nbar(T.nonce(N, T.var(v, IDX)))),
        st.sampled_from(idx_vars).map(lambda v: T.inp(T.step(A, T.var(v, IDX)))),
    )
    return st.recursive(
        leaves,
        lambda ch: st.one_of(
            st.tuples(ch, ch).map(lambda p: T.app(F, *p)),
            ch.map(lambda a: T.app(G, a)),
            st.tuples(ch, ch).map(lambda p: T.ite(T.app(CHK, p[0]), p[1], p[0])),
        ),
        max_leaves=6,
    )


def test_sorts_are_inferred():
    t = T.app(F, T.nbar(T.nonce(N, i)), T.app(OK))
    assert t.sort == MSG
    assert T.sort_of(t) == MSG
    assert T.ev(t).sort == T.BS
    assert T.ev(T.app(CHK, t)).sort == T.BOOL


def test_ill_sorted_application_is_rejected():
    with pytest.raises(SortError):
        T.app(F, T.app(OK), T.CTRUE)


def test_pred_of_init_is_init():
    assert T.pred(T.INIT_T) == T.INIT_T


def test_subterm_atom_reads_nonce_through_nbar():
    atom = T.sub(T.DEFAULT_REL, T.nonce(N, i), T.app(OK))
    assert atom.args[0] == T.nbar(T.nonce(N, i))
    bar = T.sub(T.SUBBAR, T.nonce(N, i), T.app(OK))
    assert bar.args[0].op == T.Op.NONCE


def test_relation_ids():
    rel = T.relation([("verify", 2), ("hash", 1)])
    assert rel.id == "sub[hash.2,verify.3]"
    assert rel.companion().id == "sub[hash.2,verify.3]'"
    assert T.SUBBAR.id == "subbar"


def test_simplifying_builders():
    a = T.happens(T.step(A, i))
    assert T.And(T.TRUE, a) == a
    assert T.And(a, T.FALSE) == T.FALSE
    assert T.Or(T.FALSE) == T.FALSE
    assert T.Not(T.Not(a)) == a
    assert T.Implies(T.TRUE, a) == a
    assert T.Exists([], a) == a


def test_substitution_avoids_capture():
    body = T.cexists([j], T.app(CHK, T.app(F, T.nbar(T.nonce(N, i)), T.nbar(T.nonce(N, j)))))
    out = T.substitute(body, {i: j})
    assert T.free_vars(out) == {j}
    assert out.binders[0] != j


def test_find_else_branch_is_outside_binder():
    t = T.find([j], T.app(CHK, T.nbar(T.nonce(N, j))), T.nbar(T.nonce(N, j)), T.nbar(T.nonce(N, j)))
    assert T.free_vars(t) == {j}


def test_fresh_name_uses_primes():
    assert T.fresh_name("i", {"i"}) == "i'1"
    assert T.fresh_name("i'1", {"i'1"}) == "i'2"


@given(msgs())
def test_alpha_key_ignores_bound_names(t):
    q1 = T.cexists([i], T.app(CHK, t))
    q2 = T.cexists([k], T.app(CHK, T.substitute(t, {i: k})))
    assert T.alpha_equal(q1, q2)


@given(msgs(), msgs())
def test_substitute_removes_variable(t, u):
    u_closed = T.substitute(u, {i: T.iconst(0), j: T.iconst(1)})
    out = T.substitute(t, {i: T.iconst(2)})
    assert i not in T.free_vars(out)
    assert T.free_vars(out) <= T.free_vars(t)
    assert T.sort_of(out) == MSG
    assert not T.free_vars(u_closed)


@given(msgs())
def test_substitution_composes(t):
    once = T.substitute(T.substitute(t, {i: j}), {j: k})
    direct = T.substitute(t, {i: k, j: k})
    assert once == direct


@settings(max_examples=50)
@given(msgs())
def test_walk_reaches_every_argument(t):
    nodes = list(T.walk(t))
    assert nodes[0] is t
    for n in nodes:
        for a in n.args:
            assert any(a is m for m in nodes)


def test_show_is_readable():
    t = T.app(F, T.nbar(T.nonce(N, i)), T.inp(T.step(A, j)))
    assert T.show(t) == "f(n(i), input(A(j)))"
    assert T.show(T.lt(T.step(A, i), T.step(A, j))) == "(A(i) < A(j))"
    assert TP and NON
