import numpy as np
import pytest
import sympy as sp

from spencerkit.expr import BinOp, Call, ConstSym, Expr, Neg, Num, Pow, Var
from spencerkit.fields import Patch


@pytest.fixture
def patch2d():
    return Patch.box(1, 0.0, 1.0, 9)


@pytest.fixture
def patch2d_sym():
    return Patch.box(1, -1.0, 1.0, 9)


@pytest.fixture
def patch4d():
    return Patch.box(2, -1.0, 1.0, 7)


def to_sympy(e: Expr, symbols):
    """Translate a package AST into sympy (independent-oracle helper)."""
    if isinstance(e, Num):
        return sp.Float(e.value) if e.value != int(e.value) else sp.Integer(int(e.value))
    if isinstance(e, Var):
        return symbols[e.index - 1]
    if isinstance(e, ConstSym):
        return sp.pi if e.name == "pi" else sp.E
    if isinstance(e, Neg):
        return -to_sympy(e.arg, symbols)
    if isinstance(e, BinOp):
        a, b = to_sympy(e.left, symbols), to_sympy(e.right, symbols)
        return {"+": a + b, "-": a - b, "*": a * b, "/": a / b}[e.op]
    if isinstance(e, Pow):
        return to_sympy(e.base, symbols) ** e.exponent
    if isinstance(e, Call):
        fn = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "sqrt": sp.sqrt}[e.func]
        return fn(to_sympy(e.arg, symbols))
    raise TypeError(f"unexpected node {type(e).__name__}")


def random_poly_text(rng: np.random.Generator, dim: int, degree: int = 2,
                     scale: float = 1.0) -> str:
    """Random polynomial as expression text with coefficients in [-scale, scale]."""
    terms = [f"({rng.uniform(-scale, scale)!r})"]
    for _ in range(rng.integers(1, 4)):
        deg = int(rng.integers(1, degree + 1))
        factors = [f"x{int(rng.integers(1, dim + 1))}" for _ in range(deg)]
        coeff = rng.uniform(-scale, scale)
        terms.append(f"({coeff!r})*" + "*".join(factors))
    return " + ".join(terms)
