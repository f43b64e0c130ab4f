import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chiralbag.clifford import gamma, identity
from chiralbag.jets import Jet, index_tuples


def poly_jet(coeffs, order=3):
    # f(x1, x2) = sum c_ab x1^a x2^b at the origin, derivatives commute
    import math

    def partial(idx):
        a, b = idx.count(1), idx.count(2)
        return coeffs.get((a, b), 0) * math.factorial(a) * math.factorial(b)

    return Jet.from_function(2, order, partial)


def test_index_tuples_count():
    assert len(index_tuples(3, 2)) == 1 + 3 + 9


def test_getitem_defaults_and_bounds():
    j = Jet(2, 1, {(): 2.0, (1,): 3.0})
    assert j[(2,)] == 0
    assert j[1] == 3.0
    with pytest.raises(KeyError):
        j[(1, 1)]


def test_index_validation():
    with pytest.raises(ValueError):
        Jet(2, 1, {(3,): 1.0})
    with pytest.raises(ValueError):
        Jet(2, -1)


def test_derivative_shifts_indices():
    j = poly_jet({(2, 0): 1.0, (1, 1): 2.0})
    assert j.d(1)[(1,)] == 2.0
    assert j.d(2)[(1,)] == 2.0
    assert j.d(1).order == 2


coef = st.dictionaries(st.tuples(st.integers(0, 2), st.integers(0, 2)), st.integers(-3, 3), max_size=5)


@settings(max_examples=40, deadline=None)
@given(coef, coef)
def test_leibniz_matches_polynomial_product(ca, cb):
    prod = {}
    for (a1, b1), x in ca.items():
        for (a2, b2), y in cb.items():
            key = (a1 + a2, b1 + b2)
            prod[key] = prod.get(key, 0) + x * y
    lhs = poly_jet(ca) * poly_jet(cb)
    rhs = poly_jet(prod)
    for idx in index_tuples(2, 3):
        assert lhs[idx] == rhs[idx]


def test_clifford_valued_jets_keep_order():
    g1, g2 = gamma(2, 1), gamma(2, 2)
    z = 0 * identity(2)
    a = Jet(2, 1, {(): g1, (1,): g2}, zero=z)
    # left and right multiplication by a Clifford constant
    left = g2 * a
    right = a * g2
    assert left.value == g2 * g1
    assert right.value == g1 * g2
    assert left.value == -right.value


def test_jets_are_immutable():
    j = Jet(2, 1)
    with pytest.raises(AttributeError):
        j.order = 3
