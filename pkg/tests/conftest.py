import shutil

import pytest

from ccsa.ptcl import bundled_protocols, load

HAS_Z3 = shutil.which("z3") is not None
needs_z3 = pytest.mark.skipif(not HAS_Z3, reason="z3 not on PATH")


@pytest.fixture(scope="session")
def basic_hash():
    return load("basic-hash")


@pytest.fixture(scope="session")
def toy_sig():
    return load("toy-sig")


@pytest.fixture(scope="session")
def toy_enc():
    return load("toy-enc")


@pytest.fixture(scope="session")
def bundled():
    return {p.stem: load(p) for p in bundled_protocols()}


@pytest.fixture
def z3():
    """Run z3 on an SMT-LIB text and return the verdict."""
    from ccsa import smt

    if not HAS_Z3:
        pytest.skip("z3 not on PATH")
    cfg = smt.SolverConfig("z3", smt.BUILTIN_SOLVERS["z3"], 20.0)
    return lambda text: smt.run(cfg, text)
