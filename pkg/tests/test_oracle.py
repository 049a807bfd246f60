import pytest

from ccsa.oracle import check_subterm_soundness, user_terms
from ccsa.ptcl import load


def test_basic_hash_small_bounds_pinned(basic_hash):
    rep = check_subterm_soundness(basic_hash, 1, 3)
    assert rep.ok, rep.summary()
    assert (rep.terms, rep.traces, rep.pairs) == (9, 8, 52)
    assert rep.macro_traversals > 0


def test_init_only_has_no_traversals():
    rep = check_subterm_soundness(load("init-only"), 2, 4)
    assert rep.ok
    assert rep.macro_traversals == 0


@pytest.mark.parametrize("name", ["toy-sig", "toy-enc"])
def test_small_bounds_sound(name):
    assert check_subterm_soundness(load(name), 1, 3).ok


def test_dropping_the_input_case_is_caught(basic_hash):
    rep = check_subterm_soundness(basic_hash, 1, 3, disable_input=True)
    assert not rep.ok
    assert "not covered" in str(rep.counterexample)


def test_user_terms_are_deduplicated(basic_hash):
    terms = user_terms(basic_hash)
    assert len(terms) == len({str(t) for t in terms})
