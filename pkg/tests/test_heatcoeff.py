import math
from fractions import Fraction

import numpy as np
import pytest

from chiralbag.bochner import OperatorSpec, decompose
from chiralbag.clifford import CliffordElement, identity
from chiralbag.geometry import BoundaryJet, ColumnProfile, Quadrature, collar_jets, flat_halfspace_jets, unit_disk_jets
from chiralbag.heatcoeff import (CoefficientTable, a3_eta, a3_variation, a4_mixed, a4_mixed_integrands, a4_terms,
                                 chain_configuration, dtheta_a4_closed_form, identity_chain_check,
                                 scalar_laplace_data, trace_identities)
from chiralbag.jets import Jet


# --- coefficient table


def test_table_rejects_duplicates_and_bad_entries():
    t = CoefficientTable()
    t.add("a0", 0.5)
    with pytest.raises(ValueError):
        t.add("a0", 0.5)
    with pytest.raises(ValueError):
        t.add("a1", 0.1, 0.01, "closed_form")
    with pytest.raises(ValueError):
        t.add("a1", 0.1, -1.0, "spectral_fit")
    with pytest.raises(ValueError):
        t.add("a1", 0.1, 0.0, "guess")


def test_table_round_trip():
    t = CoefficientTable(meta={"m": 2})
    t.add("a0", 0.25)
    t.add("a2_eta", 1e-6, 2e-6, "spectral_fit")
    back = CoefficientTable.from_dict(t.to_dict())
    assert back.to_json() == t.to_json()
    assert back.uncertainty("a2_eta") == 2e-6
    lines = t.to_csv().splitlines()
    assert lines[0] == "label,value,uncertainty,provenance"
    assert lines[1] == "a0,0.25,0.0,closed_form"


# --- a_4 with mixed conditions


def test_term_table_shape():
    pref, terms = a4_terms()
    assert pref == Fraction(1, 360)
    assert sum(t.region == "interior" for t in terms) == 8
    assert sum(t.region == "boundary" for t in terms) == 20
    assert len({t.label for t in terms}) == len(terms)


def test_flat_halfspace_zero_psi():
    q = flat_halfspace_jets()
    bd = scalar_laplace_data(q, "dirichlet")
    assert a4_mixed(bd, q, fiber=1) == 0.0
    spec = OperatorSpec.chiral_ansatz(q, exact=True)
    assert a4_mixed(decompose(spec, q), q) == 0.0


def test_dirichlet_disk_exact_density():
    q = unit_disk_jets(4)
    _, boundary = a4_mixed_integrands(scalar_laplace_data(q, "dirichlet"), q, fiber=1)
    assert sum(boundary[0].values(), Fraction(0)) == Fraction(4, 315)
    assert a4_mixed(scalar_laplace_data(q, "dirichlet"), q, fiber=1) == pytest.approx(2 / 315, abs=1e-15)


def _shifted_disk(delta, bc="dirichlet", S=0.0):
    q = unit_disk_jets(4)
    zero = CliffordElement(2)
    E = Jet.constant(2, 2, identity(2, 1.0 + 0j) * delta, zero=zero)
    n = len(q.interior) + len(q.boundary)
    return q, scalar_laplace_data(q, bc, S=S, E=[E] * n, exact_mode=False)


@pytest.mark.parametrize("delta", [0.3, -1.1, 2.0])
def test_constant_shift_matches_exponential_factor(delta):
    # a_4(E + delta) = a_4 + delta a_2 + delta^2/2 a_0 on the Dirichlet unit disk
    q, bd = _shifted_disk(delta)
    a0, a2 = 1 / 4, 1 / 6
    assert a4_mixed(bd, q, fiber=1) == pytest.approx(2 / 315 + delta * a2 + delta ** 2 / 2 * a0, rel=1e-13)


@pytest.mark.parametrize("S", [0.0, 0.5])
def test_shift_linear_part_robin(S):
    # second finite difference in delta isolates a_0 for either condition
    vals = []
    for d in (-0.1, 0.0, 0.1):
        q, bd = _shifted_disk(d, "robin", S)
        vals.append(a4_mixed(bd, q, fiber=1))
    second = (vals[0] - 2 * vals[1] + vals[2]) / 0.01
    assert second == pytest.approx(1 / 4, rel=1e-10)


def test_pure_interior_endomorphism():
    # interior only: 180 E^2 / 360 per unit volume, times (4 pi)^-1
    q, bd = _shifted_disk(0.7)
    rows, _ = a4_mixed_integrands(bd, q, exact_mode=False, fiber=1)
    total = sum(r["E^2"] * p.weight for r, p in zip(rows, q.interior)) / (4 * math.pi)
    assert total == pytest.approx(0.49 / 2 * math.pi / (4 * math.pi), rel=1e-13)


def test_missing_jets_reported():
    q = unit_disk_jets(1)
    zero = CliffordElement(2)
    short = Jet.constant(2, 0, zero, zero=zero)
    bd = scalar_laplace_data(q, "dirichlet", E=[short] * (len(q.interior) + 1))
    with pytest.raises(ValueError, match="E_;kk"):
        a4_mixed(bd, q, fiber=1)


# --- dimension-four corrections


def _one_node(fields, L=None, weight=1.0):
    L = np.zeros((3, 3)) if L is None else L
    return Quadrature(4, (), (BoundaryJet(L, np.zeros((4,) * 4), fields, weight),))


def test_a3_variation_example():
    A, w = 1.7, 2.5
    q = _one_node({"f_o": Jet(4, 3, {(4, 4, 4): A})}, weight=w)
    assert a3_variation(q) == pytest.approx(30 * 4 * A * w / (384 * (4 * math.pi) ** 1.5), rel=1e-15)
    assert a3_variation(q, k=2) == pytest.approx(2 * a3_variation(q), rel=1e-15)
    assert a3_variation(_one_node({"f_o": Jet(4, 3)})) == 0.0


def test_a3_variation_linear():
    a = _one_node({"f_o": Jet(4, 3, {(4, 4, 4): 1.0})})
    b = _one_node({"f_o": Jet(4, 3, {(4, 4, 4): -3.0})})
    c = _one_node({"f_o": Jet(4, 3, {(4, 4, 4): -2.0})})
    assert a3_variation(a) + a3_variation(b) == pytest.approx(a3_variation(c), rel=1e-15)


@pytest.mark.parametrize("idx", [(), (4,), (4, 4)])
def test_a3_variation_rejects_low_jets(idx):
    q = _one_node({"f_o": Jet(4, 3, {idx: 0.1, (4, 4, 4): 1.0})})
    with pytest.raises(ValueError):
        a3_variation(q)


def test_dtheta_example():
    c, w = 0.6, 3.0
    q = _one_node({"f_e": Jet(4, 3, {(): 1.0}), "f_o": Jet(4, 3, {(4,): c})}, weight=w)
    assert dtheta_a4_closed_form(q) == pytest.approx(-4 * c * w / (16 * math.pi ** 2), rel=1e-15)


def test_dtheta_vanishes_without_odd_field():
    q = _one_node({"f_e": Jet(4, 3, {(): 1.0, (4,): 2.0}), "f_o": Jet(4, 3)}, L=np.eye(3))
    assert dtheta_a4_closed_form(q) == 0.0


def test_a3_eta_zero_psi():
    cols = [ColumnProfile(1.0, np.eye(3), {"f_e": [1.0, 0.5], "f_o": [0.0]})]
    q = collar_jets(4, 1.0, cols)
    spec = OperatorSpec.chiral_ansatz(q)
    assert a3_eta(spec, q) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("k", [1, 2])
@pytest.mark.parametrize("seed", range(5))
def test_identity_chain(seed, k):
    spec, q = chain_configuration(np.random.default_rng(seed), k=k)
    rep = identity_chain_check(spec, q)
    assert rep.ok, rep
    assert abs(rep.closed_form) > 1e-6


def test_identity_chain_without_curvature():
    spec, q = chain_configuration(np.random.default_rng(11), with_curvature=False)
    assert identity_chain_check(spec, q).ok


def test_induced_curvature_breaks_chain():
    # the identity needs the compatible connection curvature, not the induced one
    spec, q = chain_configuration(np.random.default_rng(2))
    assert not identity_chain_check(spec, q, curvature="omega_D").ok


def test_dimension_guard():
    q = unit_disk_jets(2)
    with pytest.raises(ValueError):
        a3_variation(q)
    with pytest.raises(ValueError):
        dtheta_a4_closed_form(q)


@pytest.mark.parametrize("k", [1, 2])
def test_trace_identities(k):
    lines = trace_identities(k)
    assert len(lines) >= 10
    bad = [ln.label for ln in lines if not ln.ok]
    assert not bad
