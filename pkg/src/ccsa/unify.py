"""Syntactic first-order unification over terms (n̄ is an ordinary constructor)."""
from __future__ import annotations

from .terms import Op, Term, free_vars, substitute


def _walk(t: Term, s: dict[Term, Term]) -> Term:
    while t.op == Op.VAR and t in s:
        t = s[t]
    return t


def _occurs(v: Term, t: Term, s: dict[Term, Term]) -> bool:
    t = _walk(t, s)
    if t == v:
        return True
    return any(_occurs(v, a, s) for a in t.args)


def unify(equations, flexible) -> dict[Term, Term] | None:
    """Most general unifier binding only variables in `flexible`; None if none exists."""
    flexible = set(flexible)
    s: dict[Term, Term] = {}
    todo = list(equations)
    while todo:
        a, b = todo.pop()
        a, b = _walk(a, s), _walk(b, s)
        if a == b:
            continue
        if a.sort != b.sort:
            return None
        if a.op == Op.VAR and a in flexible:
            if _occurs(a, b, s):
                return None
            s[a] = b
            continue
        if b.op == Op.VAR and b in flexible:
            if _occurs(b, a, s):
                return None
            s[b] = a
            continue
        if a.op == Op.VAR or b.op == Op.VAR:
            return None
        if a.binders or b.binders:
            # binders are compared rigidly, with no variable inside instantiated
            return None
        if a.op != b.op or a.head != b.head or len(a.args) != len(b.args):
            return None
        todo.extend(zip(a.args, b.args))
    return resolve(s)


def resolve(s: dict[Term, Term]) -> dict[Term, Term]:
    """Turn a triangular substitution into an idempotent one."""
    out: dict[Term, Term] = {}
    for v in s:
        t = s[v]
        for _ in range(len(s) + 1):
            if not (free_vars(t) & s.keys()):
                break
            t = substitute(t, {x: y for x, y in s.items() if x in free_vars(t)})
        out[v] = t
    return out
