import numpy as np
import pytest
from sympy.polys.domains import QQ

from chiralbag.bochner import NodeField, OperatorSpec, decompose, decompose_node, verify_square_identity
from chiralbag.clifford import QQ_I, CliffordElement, gamma, identity, orientation_element, to_matrix
from chiralbag.geometry import BoundaryJet, Quadrature, flat_halfspace_jets
from chiralbag.jets import Jet
from chiralbag.suites import random_element


def const_jet(m, value, order=2):
    return Jet.constant(m, order, value, zero=CliffordElement(m))


def one_boundary_quad(m=4, L=None, fields=None):
    L = np.zeros((m - 1, m - 1)) if L is None else L
    return Quadrature(m, (), (BoundaryJet(L, np.zeros((m,) * 4), dict(fields or {}), 1.0),))


def test_zero_psi_flat():
    m = 4
    L = np.diag([1.0, 2.0, -0.5])
    q = one_boundary_quad(m, L)
    spec = OperatorSpec.chiral_ansatz(q, exact=True)
    bd = decompose(spec, q).boundary[0]
    assert all(w.value == 0 for w in bd.omega)
    assert bd.phi.value == 0 and bd.E.value == 0
    pp = bd.proj_plus
    assert bd.S == pp * pp * QQ_I(QQ(-5, 4), 0)


def test_even_psi_has_no_connection_term():
    m = 4
    f = Jet(m, 3, {(): 2.0})
    q = one_boundary_quad(m, fields={"f_e": f})
    spec = OperatorSpec.chiral_ansatz(q, exact=True)
    bd = decompose(spec, q).boundary[0]
    assert all(w.value == 0 for w in bd.omega)
    assert bd.phi.value == spec.psi(0).value
    assert bd.phi.value == orientation_element(m) * QQ_I(2, 0)


def test_odd_constant_psi_connection():
    m = 4
    f = Jet(m, 3, {(): 3.0})
    q = one_boundary_quad(m, fields={"f_o": f})
    spec = OperatorSpec.chiral_ansatz(q, exact=True)
    bd = decompose(spec, q).boundary[0]
    gt, gm = orientation_element(m), gamma(m, m)
    for a in range(1, m):
        expected = -(gt * gm * gamma(m, a)) * QQ_I(3, 0)
        assert bd.omega[a - 1].value == expected
        # independent matrix check of the anticommutator definition
        psi = to_matrix(spec.psi(0).value)
        ga = to_matrix(gamma(m, a))
        assert np.allclose(to_matrix(bd.omega[a - 1].value), -0.5 * (psi @ ga + ga @ psi))
    assert bd.omega[m - 1].value == 0


def test_boundary_invariants_and_phi_sum():
    rng = np.random.default_rng(3)
    m = 4
    L = rng.normal(size=(3, 3))
    L = L + L.T
    fe = Jet(m, 3, {idx: float(rng.normal()) for idx in [(), (1,), (4,), (4, 4), (1, 4)]})
    fo = Jet(m, 3, {idx: float(rng.normal()) for idx in [(), (2,), (4,), (2, 4)]})
    q = one_boundary_quad(m, L, {"f_e": fe, "f_o": fo})
    bd = decompose(OperatorSpec.chiral_ansatz(q), q).boundary[0]
    Id = identity(m, 1.0 + 0j)
    assert (bd.chi * bd.chi - Id).is_zero(1e-13)
    pm, pp = bd.proj_minus, bd.proj_plus
    assert (pm * bd.S * pm).is_zero(1e-13)
    assert (pm * bd.S * pp).is_zero(1e-13)
    assert (pp * bd.S * pm).is_zero(1e-13)
    omega = [w.value for w in bd.omega]
    phi = bd.phi.value
    total = phi
    for i in range(1, m + 1):
        total = total + gamma(m, i).numeric() * omega[i - 1]
    spec = OperatorSpec.chiral_ansatz(q)
    assert (total - spec.psi(0).value).is_zero(1e-13)


def test_constant_psi_endomorphism_reduces():
    # constant psi, flat trivial connection: E = -psi^2 - sum omega_i^2
    rng = np.random.default_rng(7)
    m = 4
    psi = random_element(rng, m)
    omega, phi, E, OD = decompose_node(const_jet(m, psi), m)
    P = to_matrix(psi)
    g = [to_matrix(gamma(m, i)) for i in range(1, m + 1)]
    W = [-0.5 * (P @ gi + gi @ P) for gi in g]
    rhs = -(P @ P) - sum(w @ w for w in W)
    assert np.allclose(to_matrix(E.value), rhs)


def test_parity_validated():
    m = 4
    odd = NodeField((), (const_jet(m, gamma(m, 1)),))
    even = NodeField((), (const_jet(m, identity(m)),))
    OperatorSpec(m, 1, 0.0, odd, even)
    with pytest.raises(ValueError):
        OperatorSpec(m, 1, 0.0, even, even)
    with pytest.raises(ValueError):
        OperatorSpec(m, 1, 0.0, odd, odd)


def test_nonzero_angle_rejected():
    q = flat_halfspace_jets()
    spec = OperatorSpec.chiral_ansatz(q, theta=0.3)
    with pytest.raises(ValueError):
        decompose(spec, q)


def test_missing_nodes_rejected():
    q = flat_halfspace_jets()
    spec = OperatorSpec.chiral_ansatz(one_boundary_quad(4))
    with pytest.raises(ValueError):
        decompose(spec, q)


def test_square_identity_examples():
    for m in (2, 4):
        assert verify_square_identity(CliffordElement(m)).ok
        assert verify_square_identity(orientation_element(m)).ok


@pytest.mark.parametrize("m", [2, 4])
def test_square_identity_random_exact(m):
    rng = np.random.default_rng(m)
    for _ in range(20):
        rep = verify_square_identity(random_element(rng, m))
        assert rep.ok, rep.mismatch


def test_square_identity_numeric():
    psi = random_element(np.random.default_rng(1), 4).numeric()
    assert verify_square_identity(psi, tol=1e-12).ok
