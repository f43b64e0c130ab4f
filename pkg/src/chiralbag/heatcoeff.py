"""Closed-form heat and eta coefficient evaluators on quadrature data.

* :func:`a4_mixed` is the ``a_4`` invariant of a Laplace-type operator with
  mixed boundary conditions, assembled term by term from a machine-readable
  coefficient table (``data/a4_mixed_terms.json``).
* :func:`a3_variation`, :func:`a3_eta` and :func:`dtheta_a4_closed_form`
  evaluate the boundary corrections that control the chiral-angle dependence
  in dimension four, and :func:`identity_chain_check` compares the last two.
* :func:`trace_identities` reproduces the gamma-trace reductions behind the
  closed form, exactly, with jets treated as formal symbols.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
from sympy.polys.domains import QQ
from sympy.polys.rings import ring

from .bochner import BochnerData, BoundaryBochner, NodeBochner, OperatorSpec, covariant_d, decompose
from .clifford import (
    QQ_I,
    CliffordElement,
    exact,
    fiber_dim,
    gamma,
    identity,
    orientation_element,
)
from .geometry import BoundaryJet, Quadrature
from .jets import Jet

__all__ = [
    "CoefficientEntry",
    "CoefficientTable",
    "A4Term",
    "a4_terms",
    "a4_mixed",
    "a4_mixed_integrands",
    "scalar_laplace_data",
    "a3_variation",
    "a3_eta",
    "a3_eta_terms",
    "dtheta_a4_closed_form",
    "identity_chain_check",
    "ChainReport",
    "connection_curvature",
    "trace_identities",
    "TraceLine",
    "chain_configuration",
]

PROVENANCES = ("closed_form", "spectral_fit", "finite_difference")


# ---------------------------------------------------------------------------
# Coefficient table


@dataclass(frozen=True)
class CoefficientEntry:
    value: float
    uncertainty: float
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not self.uncertainty >= 0:
            raise ValueError("uncertainty must be nonnegative")
        if self.provenance == "closed_form" and self.uncertainty != 0:
            raise ValueError("closed-form entries carry zero uncertainty")


class CoefficientTable:
    """Labelled coefficients with uncertainties; labels are unique."""

    def __init__(self, entries: Mapping[str, CoefficientEntry] | None = None, meta: Mapping | None = None):
        self.entries: dict[str, CoefficientEntry] = dict(entries or {})
        self.meta: dict = dict(meta or {})

    def add(self, label: str, value: float, uncertainty: float = 0.0, provenance: str = "closed_form") -> None:
        if label in self.entries:
            raise ValueError(f"duplicate coefficient label {label!r}")
        self.entries[label] = CoefficientEntry(float(value), float(uncertainty), provenance)

    def __getitem__(self, label: str) -> CoefficientEntry:
        return self.entries[label]

    def __contains__(self, label: str) -> bool:
        return label in self.entries

    def value(self, label: str) -> float:
        return self.entries[label].value

    def uncertainty(self, label: str) -> float:
        return self.entries[label].uncertainty

    def to_dict(self) -> dict:
        return {
            "meta": self.meta,
            "entries": {k: {"value": e.value, "uncertainty": e.uncertainty, "provenance": e.provenance}
                        for k, e in self.entries.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "value", "uncertainty", "provenance"])
        for k, e in self.entries.items():
            w.writerow([k, repr(e.value), repr(e.uncertainty), e.provenance])
        return buf.getvalue()

    @classmethod
    def from_dict(cls, data: Mapping) -> "CoefficientTable":
        t = cls(meta=data.get("meta", {}))
        for k, e in data["entries"].items():
            t.add(k, e["value"], e["uncertainty"], e["provenance"])
        return t

    def __repr__(self):
        return f"CoefficientTable({self.to_dict()['entries']!r})"


# ---------------------------------------------------------------------------
# a_4 with mixed boundary conditions


@dataclass(frozen=True)
class A4Term:
    label: str
    region: str
    plus: Fraction
    minus: Fraction

    @property
    def split(self) -> bool:
        return self.plus != self.minus


@lru_cache(maxsize=None)
def a4_terms() -> tuple[Fraction, tuple[A4Term, ...]]:
    """Prefactor and term list read from the packaged coefficient table."""
    raw = json.loads(resources.files("chiralbag").joinpath("data/a4_mixed_terms.json").read_text())
    terms = []
    for region in ("interior", "boundary"):
        for t in raw[region]:
            if "coeff" in t:
                c = Fraction(t["coeff"])
                terms.append(A4Term(t["label"], region, c, c))
            else:
                terms.append(A4Term(t["label"], region, Fraction(t["plus"]), Fraction(t["minus"])))
    return Fraction(raw["prefactor"]), tuple(terms)


def _is_exact_element(a) -> bool:
    return isinstance(a, CliffordElement) and all(isinstance(v, type(QQ_I(1, 0))) for v in a.coeffs.values())


class _Ctx:
    """Scalar conversion for one evaluation: exact Gaussian rationals or floats."""

    def __init__(self, m: int, exact_mode: bool):
        self.m = m
        self.exact = exact_mode
        self.one = QQ_I(1, 0) if exact_mode else 1.0 + 0j
        self.Id = identity(m, self.one)

    def s(self, x):
        if self.exact:
            return exact(Fraction(x)) if not isinstance(x, type(QQ_I(1, 0))) else x
        return complex(x)

    def el(self, a):
        if isinstance(a, CliffordElement):
            return a if self.exact else a.numeric()
        return self.Id * self.s(a)


def _to_real(v, exact_mode: bool):
    if exact_mode:
        if not isinstance(v, type(QQ_I(1, 0))):
            v = exact(v)
        if v.y:
            raise ValueError("trace has a nonzero imaginary part")
        return Fraction(int(v.x.numerator), int(v.x.denominator))
    return complex(v).real


def _require(jet: Jet, lengths: int, symbol: str, missing: list[str]) -> None:
    if jet.order < lengths:
        missing.append(symbol)


def _interior_values(node, bd: NodeBochner, ctx: _Ctx) -> dict[str, object]:
    m = ctx.m
    E = bd.E
    missing: list[str] = []
    _require(E, 2, "E_;kk", missing)
    if missing:
        raise ValueError("missing jet components: " + ", ".join(missing))
    E_kk = CliffordElement(m)
    for k in range(1, m + 1):
        E_kk = E_kk + covariant_d(covariant_d(E, k, bd.omega), k, bd.omega).value
    Ev = ctx.el(E.value)
    OO = CliffordElement(m)
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            w = ctx.el(bd.Omega_D[(i, j)].value)
            OO = OO + w * w
    R = node.riemann
    return {
        "E_;kk": ctx.el(E_kk),
        "tau E": Ev * ctx.s(node.tau),
        "E^2": Ev * Ev,
        "Omega_ij Omega_ij": OO,
        "tau_;kk": ctx.el(node.tau_lap),
        "tau^2": ctx.el(node.tau ** 2),
        "rho^2": ctx.el(float(np.sum(node.rho * node.rho))),
        "R^2": ctx.el(float(np.sum(R * R))),
    }


def _boundary_values(node: BoundaryJet, bd: BoundaryBochner, ctx: _Ctx) -> dict[str, object]:
    m = ctx.m
    missing: list[str] = []
    _require(bd.E, 1, "E_;m", missing)
    if bd.S is None:
        missing.append("S")
    if bd.chi is None:
        missing.append("chi")
    if missing:
        raise ValueError("missing jet components: " + ", ".join(missing))
    L = node.second_ff
    trL = float(L.trace())
    LL = float(np.sum(L * L))
    LLL = float(np.einsum("ab,cb,ac->", L, L, L))
    E = ctx.el(bd.E.value)
    E_m = ctx.el(covariant_d(bd.E, m, bd.omega).value)
    S = ctx.el(bd.S)
    chi = ctx.el(bd.chi)
    chi_a = [ctx.el(c) for c in bd.chi_tangent]
    tau = node.tau
    s = ctx.s
    chi_omega = CliffordElement(m)
    for a in range(1, m):
        chi_omega = chi_omega + chi * chi_a[a - 1] * ctx.el(bd.Omega_D[(a, m)].value)
    cc = CliffordElement(m)
    cc_L = CliffordElement(m)
    for a in range(1, m):
        cc = cc + chi_a[a - 1] * chi_a[a - 1]
        for b in range(1, m):
            if L[a - 1, b - 1]:
                cc_L = cc_L + chi_a[a - 1] * chi_a[b - 1] * s(L[a - 1, b - 1])
    return {
        "E_;m": E_m,
        "tau_;m": ctx.el(node.tau_m),
        "E L_aa": E * s(trL),
        "tau L_aa": ctx.el(tau * trL),
        "rho_mm L_aa": ctx.el(node.rho_mm * trL),
        "R_ambm L_ab": ctx.el(float(np.sum(node.r_ambm * L))),
        "R_abcb L_ac": ctx.el(float(np.sum(node.r_abcb * L))),
        "L_aa L_bb L_cc": ctx.el(trL ** 3),
        "L_ab L_ab L_cc": ctx.el(LL * trL),
        "L_ab L_cb L_ac": ctx.el(LLL),
        "S E": S * E,
        "S tau": S * s(tau),
        "S L_aa L_bb": S * s(trL * trL),
        "S L_ab L_ab": S * s(LL),
        "S^2 L_aa": S * S * s(trL),
        "S^3": S * S * S,
        "chi chi_:a Omega_am": chi_omega,
        "chi_:a chi_:a L_bb": cc * s(trL),
        "chi_:a chi_:b L_ab": cc_L,
        "chi_:a chi_:a S": cc * S,
    }


def _trace(a: CliffordElement, fdim: int):
    return fdim * a.scalar_part()


def a4_mixed_integrands(bochner: BochnerData, quad: Quadrature, exact_mode: bool | None = None,
                        fiber: int | None = None) -> tuple[list[dict[str, object]], list[dict[str, object]]]:
    """Per-node, per-term integrand values including the 1/360 prefactor.

    The ``(4 pi)^{-m/2}`` factor and the quadrature weights are not applied.
    With exact Bochner data (and ``exact_mode`` unset or true) every value is
    a ``Fraction``; geometric floats are converted exactly.  ``fiber``
    overrides the fibre dimension (1 for a scalar Laplacian).
    """
    m = quad.m
    if exact_mode is None:
        exact_mode = _bochner_is_exact(bochner)
    ctx = _Ctx(m, exact_mode)
    fdim = fiber if fiber is not None else fiber_dim(m, bochner.k)
    pref, terms = a4_terms()
    conv = (lambda c: exact(c)) if exact_mode else (lambda c: float(c))
    interior_out = []
    for node, bd in zip(quad.interior, bochner.interior):
        vals = _interior_values(node, bd, ctx)
        row = {}
        for t in terms:
            if t.region == "interior":
                row[t.label] = _to_real(_trace(vals[t.label] * conv(pref * t.plus), fdim), exact_mode)
        interior_out.append(row)
    boundary_out = []
    for node, bd in zip(quad.boundary, bochner.boundary):
        vals = _boundary_values(node, bd, ctx)
        pp, pm = ctx.el(bd.proj_plus), ctx.el(bd.proj_minus)
        row = {}
        for t in terms:
            if t.region != "boundary":
                continue
            if t.split:
                weight_el = pp * conv(pref * t.plus) + pm * conv(pref * t.minus)
                row[t.label] = _to_real(_trace(weight_el * vals[t.label], fdim), exact_mode)
            else:
                row[t.label] = _to_real(_trace(vals[t.label] * conv(pref * t.plus), fdim), exact_mode)
        boundary_out.append(row)
    return interior_out, boundary_out


def _bochner_is_exact(bd: BochnerData) -> bool:
    for node in bd.interior + bd.boundary:
        for v in node.E.values.values():
            if isinstance(v, CliffordElement) and v.coeffs and not _is_exact_element(v):
                return False
        if isinstance(node, BoundaryBochner) and node.chi is not None and not _is_exact_element(node.chi):
            return False
    return True


def a4_mixed(bochner: BochnerData, quad: Quadrature, fiber: int | None = None,
             breakdown: bool = False):
    """Quadrature sum of the full ``a_4`` integrand (interior plus boundary).

    With ``breakdown`` set, also returns the per-term totals.
    """
    interior, boundary = a4_mixed_integrands(bochner, quad, exact_mode=False, fiber=fiber)
    scale = (4 * math.pi) ** (-quad.m / 2)
    totals: dict[str, float] = {}
    for rows, nodes in ((interior, quad.interior), (boundary, quad.boundary)):
        for row, node in zip(rows, nodes):
            for label, v in row.items():
                totals[label] = totals.get(label, 0.0) + float(v) * node.weight * scale
    _, terms = a4_terms()
    value = math.fsum(totals.get(t.label, 0.0) for t in terms)
    return (value, totals) if breakdown else value


def scalar_laplace_data(quad: Quadrature, bc: str = "dirichlet", S: float = 0.0,
                        E: Sequence[Jet] | None = None, exact_mode: bool = True) -> BochnerData:
    """Bochner data of a scalar Laplacian ``-d^2 - E`` with pure Dirichlet or Robin conditions.

    Scalars are embedded as multiples of the identity; evaluate with
    ``fiber=1``.  ``E`` (optional) gives one endomorphism jet per node,
    interior nodes first.
    """
    m = quad.m
    one = QQ_I(1, 0) if exact_mode else 1.0 + 0j
    zero = CliffordElement(m)
    if bc not in ("dirichlet", "robin"):
        raise ValueError("bc must be 'dirichlet' or 'robin'")
    Id = identity(m, one)
    chi = -Id if bc == "dirichlet" else Id
    pp = (Id + chi) * (QQ_I(QQ(1, 2), 0) if exact_mode else 0.5)
    pm = Id - pp
    Sv = zero if bc == "dirichlet" else Id * (exact(Fraction(S)) if exact_mode else complex(S))
    zero_jet = Jet.constant(m, 2, zero, zero=zero)
    omega = tuple(zero_jet for _ in range(m))
    OD = {(i, j): zero_jet for i in range(1, m + 1) for j in range(1, m + 1)}
    n_int = len(quad.interior)
    Es = list(E) if E is not None else [zero_jet] * (n_int + len(quad.boundary))
    interior = tuple(NodeBochner(omega, zero_jet, Es[n], OD) for n in range(n_int))
    boundary = tuple(
        BoundaryBochner(omega, zero_jet, Es[n_int + n], OD, S=Sv, chi=chi,
                        chi_tangent=tuple(zero for _ in range(m - 1)), proj_plus=pp, proj_minus=pm)
        for n in range(len(quad.boundary))
    )
    return BochnerData(m, 1, interior, boundary)


# ---------------------------------------------------------------------------
# Dimension-four chiral corrections


def _field(node, name: str) -> Jet:
    jet = node.field_jets.get(name)
    if jet is None:
        raise ValueError(f"missing field {name!r} at a quadrature node")
    return jet


def a3_variation(quad: Quadrature, k: int = 1, field_name: str = "f_o", tol: float = 1e-14) -> float:
    """``a_3`` for the perturbation ``-f_o gt g_m`` with ``f_o`` flat to second order at the boundary."""
    if quad.m != 4:
        raise ValueError("the closed form holds for m = 4 only")
    d = fiber_dim(4, k)
    acc = []
    for node in quad.boundary:
        f = _field(node, field_name)
        if f.order < 3:
            raise ValueError(f"{field_name};mmm missing")
        low = [f[()], f[(4,)], f[(4, 4)]]
        if any(abs(v) > tol for v in low):
            raise ValueError(f"{field_name} must vanish to second order on the boundary")
        acc.append(f[(4, 4, 4)] * node.weight)
    return 30 * d * math.fsum(acc) / (384 * (4 * math.pi) ** 1.5)


def dtheta_a4_closed_form(quad: Quadrature, k: int = 1, f_e: str = "f_e", f_o: str = "f_o",
                          breakdown: bool = False):
    """Chiral-angle derivative of ``a_4`` at angle zero, boundary closed form."""
    if quad.m != 4:
        raise ValueError("the closed form holds for m = 4 only")
    d = fiber_dim(4, k)
    parts = {"2 f_e f_o L_aa": [], "2 f_e^2 f_o": [], "-2 f_e;m f_o": [], "-f_e f_o;m": []}
    for node in quad.boundary:
        fe, fo = _field(node, f_e), _field(node, f_o)
        w = node.weight
        trL = float(node.second_ff.trace())
        parts["2 f_e f_o L_aa"].append(2 * fe.value * fo.value * trL * w)
        parts["2 f_e^2 f_o"].append(2 * fe.value ** 2 * fo.value * w)
        parts["-2 f_e;m f_o"].append(-2 * fe[(4,)] * fo.value * w)
        parts["-f_e f_o;m"].append(-fe.value * fo[(4,)] * w)
    pref = d / (16 * math.pi ** 2)
    totals = {k_: pref * math.fsum(v) for k_, v in parts.items()}
    value = math.fsum(totals.values())
    return (value, totals) if breakdown else value


def connection_curvature(m: int, riemann: np.ndarray | None = None, abelian: np.ndarray | None = None
                         ) -> dict[tuple[int, int], CliffordElement]:
    """``Omega_ij = 1/4 R_ijkl g_k g_l + i F_ij`` (spin part plus a U(1) twist), numeric."""
    out = {}
    gk = [gamma(m, i).numeric() for i in range(1, m + 1)]
    for i in range(m):
        for j in range(i + 1, m):
            acc = CliffordElement(m)
            if riemann is not None:
                for kk in range(m):
                    for ll in range(m):
                        r = riemann[i, j, kk, ll]
                        if r:
                            acc = acc + gk[kk] * gk[ll] * (0.25 * r)
            if abelian is not None and abelian[i, j]:
                acc = acc + identity(m, 1.0 + 0j) * (1j * abelian[i, j])
            out[(i + 1, j + 1)] = acc
    return out


def _omega_full(raw: Mapping, m: int, i: int, j: int):
    if i == j:
        return CliffordElement(m)
    if i < j:
        v = raw.get((i, j), CliffordElement(m))
        return v.value if isinstance(v, Jet) else v
    v = raw.get((j, i), CliffordElement(m))
    v = v.value if isinstance(v, Jet) else v
    return -v


def a3_eta_terms(spec: OperatorSpec, quad: Quadrature, f_e: str = "f_e", curvature: str = "connection"
                 ) -> dict[str, float]:
    """Weighted per-term contributions to ``a_3^eta`` (prefactor included).

    ``curvature`` selects what plays the role of the curvature term ``W``:
    ``"connection"`` uses the compatible connection curvature of ``spec``,
    ``"omega_D"`` uses the curvature of the induced connection.
    """
    if quad.m != 4 or spec.m != 4:
        raise ValueError("the closed form holds for m = 4 only")
    if spec.theta != 0:
        raise ValueError("a3_eta is evaluated at angle zero")
    if curvature not in ("connection", "omega_D"):
        raise ValueError("curvature must be 'connection' or 'omega_D'")
    m, k = 4, spec.k
    d = fiber_dim(m, k)
    g = [gamma(m, i).numeric() for i in range(1, m + 1)]
    gt = orientation_element(m).numeric()
    chi = -(gt * g[m - 1])
    bdata = decompose(spec, quad) if curvature == "omega_D" else None
    totals: dict[str, list[float]] = {}

    def add(label, value_el, w):
        totals.setdefault(label, []).append(_trace(value_el, d).real * w if isinstance(value_el, CliffordElement)
                                            else complex(value_el).real * w)

    def W(node_index, i, j, which):
        if bdata is None:
            return _omega_full(spec.curvature(node_index), m, i, j)
        nodes = bdata.interior if which == "interior" else bdata.boundary
        local = node_index if which == "interior" else node_index - len(quad.interior)
        return nodes[local].Omega_D[(i, j)].value.numeric()

    for n, node in enumerate(quad.interior):
        fe = _field(node, f_e).value
        psi = spec.psi(n)
        if psi.order < 2:
            raise ValueError("interior psi jets need order 2")
        psi = psi.map(lambda v: v.numeric())
        p1 = psi.truncate(1)
        Psi1 = _jets_sum([_sandwich(p1, gi) for gi in g])
        pv = psi.value
        Psiv = Psi1.value
        div = CliffordElement(m)
        for i in range(1, m + 1):
            X = psi.d(i) * 6.0 + (Psi1 * g[i - 1]) * p1 * 3.0
            div = div + X.d(i).value
        w = node.weight * fe
        add("div(6 psi_;i + 3 Psi g_i psi)", div, w)
        add("-tau psi", pv * (-node.tau), w)
        ww = CliffordElement(m)
        for i in range(1, m + 1):
            for j in range(1, m + 1):
                if i != j:
                    ww = ww + g[i - 1] * g[j - 1] * W(n, i, j, "interior")
        add("-6 g_i g_j W_ij psi", ww * pv * (-6.0), w)
        acc = CliffordElement(m)
        for i in range(1, m + 1):
            acc = acc + pv * psi[(i,)] * g[i - 1]
        add("6 psi psi_;i g_i", acc * 6.0, w)
        add("-3 psi psi Psi", pv * pv * Psiv * (-3.0), w)

    offset = len(quad.interior)
    for n, node in enumerate(quad.boundary):
        fj = _field(node, f_e)
        fe, fe_m = fj.value, fj[(m,)]
        psi = spec.psi(offset + n)
        if psi.order < 1:
            raise ValueError("boundary psi jets need order 1")
        psi = psi.map(lambda v: v.numeric())
        pv = psi.value
        pm_ = psi[(m,)]
        trL = float(node.second_ff.trace())
        PsiT = CliffordElement(m)
        for a in range(1, m):
            PsiT = PsiT + g[a - 1] * pv * g[a - 1]
        w = node.weight
        add("12 f_e;m chi psi", chi * pv * 12.0, w * fe_m)
        add("6 chi psi_;m", chi * pm_ * 6.0, w * fe)
        add("6 psi_;m", pm_ * 6.0, w * fe)
        acc = CliffordElement(m)
        for a in range(1, m):
            acc = acc + chi * g[m - 1] * g[a - 1] * psi[(a,)]
        add("6 chi g_m g_a psi_;a", acc * 6.0, w * fe)
        add("-12 chi psi L_aa", chi * pv * (-12.0 * trL), w * fe)
        add("-2 psi L_aa", pv * (-2.0 * trL), w * fe)
        add("-6 chi g_m psi psi", chi * g[m - 1] * pv * pv * (-6.0), w * fe)
        add("3 g_m psi Psi_T", g[m - 1] * pv * PsiT * 3.0, w * fe)
        add("-3 chi g_m psi chi psi", chi * g[m - 1] * pv * chi * pv * (-3.0), w * fe)
        acc = CliffordElement(m)
        for a in range(1, m):
            acc = acc + chi * g[a - 1] * W(offset + n, a, m, "boundary")
        add("6 chi g_a W_am", acc * 6.0, w * fe)

    pref = -1.0 / (192 * math.pi ** 2)
    return {label: pref * math.fsum(v) for label, v in totals.items()}


def _sandwich(jet: Jet, gi: CliffordElement) -> Jet:
    return jet.map(lambda v: gi * v * gi)


def _jets_sum(jets: Sequence[Jet]) -> Jet:
    acc = jets[0]
    for j in jets[1:]:
        acc = acc + j
    return acc


def a3_eta(spec: OperatorSpec, quad: Quadrature, f_e: str = "f_e", curvature: str = "connection") -> float:
    """Eta coefficient ``a_3^eta(f_e, P, B_0)`` in dimension four."""
    return math.fsum(a3_eta_terms(spec, quad, f_e, curvature).values())


@dataclass(frozen=True)
class ChainReport:
    ok: bool
    closed_form: float
    minus_two_eta: float
    discrepancy: float
    relative: float
    closed_terms: dict = field(default_factory=dict)
    eta_terms: dict = field(default_factory=dict)


def identity_chain_check(spec: OperatorSpec, quad: Quadrature, rtol: float = 1e-12,
                         f_e: str = "f_e", f_o: str = "f_o", curvature: str = "connection") -> ChainReport:
    """Compare the boundary closed form with ``-2 a_3^eta`` evaluated independently."""
    closed, closed_terms = dtheta_a4_closed_form(quad, spec.k, f_e, f_o, breakdown=True)
    eta_terms = a3_eta_terms(spec, quad, f_e, curvature)
    eta = math.fsum(eta_terms.values())
    disc = closed + 2 * eta
    scale = max([abs(v) for v in closed_terms.values()] + [2 * abs(v) for v in eta_terms.values()] + [1e-300])
    rel = abs(disc) / scale
    return ChainReport(rel <= rtol, closed, -2 * eta, disc, rel, closed_terms, eta_terms)


# ---------------------------------------------------------------------------
# Exact trace reductions with formal jets


@dataclass(frozen=True)
class TraceLine:
    label: str
    computed: object
    expected: object

    @property
    def ok(self) -> bool:
        return self.computed == self.expected


def _formal_setup(k: int):
    m = 4
    names = []
    for f in ("fe", "fo"):
        names.append(f)
        names += [f"{f}_{i}" for i in range(1, m + 1)]
        names += [f"{f}_{i}{j}" for i in range(1, m + 1) for j in range(i, m + 1)]
    names += ["L", "tau"]
    names += [f"h{i}{j}" for i in range(1, m + 1) for j in range(i, m + 1)]
    names += [f"q{i}{j}" for i in range(1, m + 1) for j in range(i, m + 1)]
    names += [f"F{i}{j}" for i in range(1, m + 1) for j in range(i + 1, m + 1)]
    R, *gens = ring(",".join(names), QQ_I)
    sym = dict(zip(names, gens))
    return R, sym


def trace_identities(k: int = 1) -> list[TraceLine]:
    """Exact gamma-trace reductions for ``psi = f_o gt g_m + f_e gt``, ``chi = -gt g_m``, m = 4.

    Jets are formal ring symbols; results are polynomials with Gaussian
    rational coefficients, compared exactly.  ``W`` is a generic curvature
    ``1/4 R_ijkl g_k g_l + i F_ij`` with ``R`` an algebraic curvature tensor
    built from symbolic symmetric tensors (Kulkarni-Nomizu product).
    """
    m = 4
    R, sym = _formal_setup(k)
    one = R.one
    d = fiber_dim(m, k) * one
    zero = CliffordElement(m)

    def el(a: CliffordElement) -> CliffordElement:
        return a.map(lambda c: one * c)

    g = [el(gamma(m, i)) for i in range(1, m + 1)]
    gt = el(orientation_element(m))
    gm = g[m - 1]
    chi = -(gt * gm)

    def fjet(name):
        def val(idx):
            if not idx:
                return sym[name]
            key = "".join(str(i) for i in sorted(idx))
            return sym[f"{name}_{key}"]
        return Jet.from_function(m, 2, val, zero=R.zero)

    fe, fo = fjet("fe"), fjet("fo")
    psi_o = fo * (gt * gm)
    psi_e = fe * gt
    psi = psi_o + psi_e

    def tr(a):
        return spinor_scalar(a) * d

    def spinor_scalar(a):
        if isinstance(a, CliffordElement):
            return a.scalar_part() if a.coeffs else R.zero
        return a

    def conj_sum(p: Jet, idx) -> Jet:
        acc = None
        for i in idx:
            term = _sandwich(p, g[i])
            acc = term if acc is None else acc + term
        return acc

    Psi = conj_sum(psi, range(m))
    Psi_e = conj_sum(psi_e, range(m))
    Psi_o = conj_sum(psi_o, range(m))
    PsiT = conj_sum(psi, range(m - 1))

    # symbolic algebraic curvature tensor and U(1) field
    def sym2(prefix):
        M = [[None] * m for _ in range(m)]
        for i in range(m):
            for j in range(i, m):
                M[i][j] = M[j][i] = sym[f"{prefix}{i + 1}{j + 1}"]
        return M

    h, q = sym2("h"), sym2("q")

    def curv(i, j, kk, ll):
        return (h[i][ll] * q[j][kk] + h[j][kk] * q[i][ll] - h[i][kk] * q[j][ll] - h[j][ll] * q[i][kk])

    I_ = QQ_I(0, 1)

    def W(i, j):
        acc = zero
        for kk in range(m):
            for ll in range(m):
                c = curv(i, j, kk, ll)
                if c:
                    acc = acc + g[kk] * g[ll] * (c * QQ_I(QQ(1, 4), 0))
        if i != j:
            a, b, s = (i, j, 1) if i < j else (j, i, -1)
            acc = acc + el(identity(m)) * (sym[f"F{a + 1}{b + 1}"] * I_ * s)
        return acc

    tau, L = sym["tau"], sym["L"]

    def der(jet: Jet, i: int):
        return jet.d(i + 1)

    def total(gen):
        acc = None
        for t in gen:
            acc = t if acc is None else acc + t
        return acc

    lines: list[TraceLine] = []
    fe0, fo0 = fe.value, fo.value
    fe_m, fo_m = fe[(m,)], fo[(m,)]

    def trj(jet: Jet) -> Jet:
        # trace commutes with covariant derivatives
        return jet.map(lambda a: tr(a), zero=R.zero)

    # interior lines
    psi_ii = total(psi.d(i + 1).d(i + 1).value for i in range(m))
    ww = total(g[i] * g[j] * W(i, j) for i in range(m) for j in range(m))
    val = tr(psi_ii * 6 - psi.value * tau - ww * psi.value * 6 - psi.value * psi.value * Psi.value * 3)
    lines.append(TraceLine("Tr{6 psi_;ii - tau psi - 6 g_i g_j W_ij psi - 3 psi psi Psi} = 0", val, R.zero))

    p1e, p1o = psi_e.truncate(1), psi_o.truncate(1)
    div = total(der(trj((Psi_e.truncate(1) * g[i]) * p1o * 3), i).value for i in range(m))
    lines.append(TraceLine("Tr(3 Psi_e g_i psi_o)_;i = 12d(f_e;m f_o + f_o;m f_e)", div,
                           d * 12 * (fe_m * fo0 + fo_m * fe0)))
    div = total(der(trj((Psi_o.truncate(1) * g[i]) * p1e * 3), i).value for i in range(m))
    lines.append(TraceLine("Tr(3 Psi_o g_i psi_e)_;i = 6d(f_e;m f_o + f_o;m f_e)", div,
                           d * 6 * (fe_m * fo0 + fo_m * fe0)))
    lines.append(TraceLine("Tr(6 psi_o psi_e;m g_m) = 6d f_e;m f_o",
                           tr(psi_o.value * psi_e[(m,)] * gm * 6), d * 6 * fe_m * fo0))
    lines.append(TraceLine("Tr(6 psi_e psi_o;m g_m) = -6d f_e f_o;m",
                           tr(psi_e.value * psi_o[(m,)] * gm * 6), -d * 6 * fe0 * fo_m))
    p1 = psi.truncate(1)
    Psi1 = Psi.truncate(1)
    div = total(der(trj((Psi1 * g[i]) * p1 * 3), i).value for i in range(m))
    lin = total(tr(psi.value * psi[(i + 1,)] * g[i] * 6) for i in range(m))
    lines.append(TraceLine("f_e Tr{(3 Psi g_i psi)_;i + 6 psi psi_;i g_i} = 12d(f_e^2 f_o)_;m",
                           fe0 * (div + lin), d * 12 * (2 * fe0 * fe_m * fo0 + fe0 ** 2 * fo_m)))

    # boundary lines
    tang = total(chi * gm * g[a] * psi[(a + 1,)] for a in range(m - 1))
    chiW = total(chi * g[a] * W(a, m - 1) for a in range(m - 1))
    val = fe0 * tr(psi[(m,)] * 6 + tang * 6 - psi.value * L * 2 - chi * gm * psi.value * psi.value * 6 + chiW * 6)
    lines.append(TraceLine("f_e Tr{6 psi_;m + 6 chi g_m g_a psi_;a - 2 psi L_aa - 6 chi g_m psi psi + 6 chi g_a W_am} = 0",
                           val, R.zero))
    lines.append(TraceLine("f_e;m Tr{12 chi psi} = -12d f_e;m f_o", fe_m * tr(chi * psi.value * 12),
                           -d * 12 * fe_m * fo0))
    lines.append(TraceLine("f_e Tr{6 chi psi_;m} = -6d f_e f_o;m", fe0 * tr(chi * psi[(m,)] * 6),
                           -d * 6 * fe0 * fo_m))
    lines.append(TraceLine("f_e Tr{-12 chi psi L_aa} = 12d f_e f_o L_aa", fe0 * tr(chi * psi.value * (-12 * L)),
                           d * 12 * fe0 * fo0 * L))
    # quadratic lines, first via the intermediate gamma words, then the reduction
    word = total(gm * gt * gm * g[a] * gt * g[a] + gm * gt * g[a] * gt * gm * g[a] for a in range(m - 1))
    lines.append(TraceLine("f_e Tr{3 g_m psi Psi_T} = 3 f_e^2 f_o Tr{g_m gt g_m g_a gt g_a + g_m gt g_a gt g_m g_a}",
                           fe0 * tr(gm * psi.value * PsiT.value * 3), fe0 ** 2 * fo0 * 3 * tr(word)))
    lines.append(TraceLine("f_e Tr{3 g_m psi Psi_T} = 18d f_e^2 f_o", fe0 * tr(gm * psi.value * PsiT.value * 3),
                           d * 18 * fe0 ** 2 * fo0))
    word = gt * gm * gm * gt * gt * gm * gt * gm + gt * gm * gm * gt * gm * gt * gm * gt
    lines.append(TraceLine("f_e Tr{-3 chi g_m psi chi psi} = -3 f_e^2 f_o Tr{gt g_m g_m gt gt g_m gt g_m + gt g_m g_m gt g_m gt g_m gt}",
                           fe0 * tr(chi * gm * psi.value * chi * psi.value * (-3)), -fe0 ** 2 * fo0 * 3 * tr(word)))
    lines.append(TraceLine("f_e Tr{-3 chi g_m psi chi psi} = 6d f_e^2 f_o",
                           fe0 * tr(chi * gm * psi.value * chi * psi.value * (-3)), d * 6 * fe0 ** 2 * fo0))
    return lines


def chain_configuration(rng: np.random.Generator, k: int = 1, n_columns: int = 2,
                        with_curvature: bool = True) -> tuple[OperatorSpec, Quadrature]:
    """Random collar data for the identity chain.

    ``f_e`` is a cubic and ``f_o = (H - s)^2 q(s)`` with quadratic ``q``, so
    ``f_o`` vanishes to first order on the inner face of the collar and the
    interior divergence integrates to a pure boundary term.  The curvature
    is a random algebraic curvature tensor and the twist a random 2-form.
    """
    from .geometry import ColumnProfile, collar_jets, kulkarni_nomizu

    m = 4
    H = float(rng.uniform(0.5, 2.0))
    cols, curvs = [], []
    for _ in range(n_columns):
        fe = rng.normal(size=4)
        q = rng.normal(size=3)
        fo = np.polynomial.Polynomial([H, -1.0]) ** 2 * np.polynomial.Polynomial(q)
        L = rng.normal(size=(m - 1, m - 1))
        L = 0.5 * (L + L.T)
        R = None
        F = None
        if with_curvature:
            a = rng.normal(size=(m, m))
            b = rng.normal(size=(m, m))
            R = kulkarni_nomizu(0.5 * (a + a.T), 0.5 * (b + b.T))
            F = rng.normal(size=(m, m))
            F = F - F.T
        cols.append(ColumnProfile(float(rng.uniform(0.5, 2.0)), L, {"f_e": list(fe), "f_o": list(fo.coef)}, R))
        curvs.append(connection_curvature(m, R, F) if with_curvature else {})
    n_gauss = 8
    quad = collar_jets(m, H, cols, n_gauss=n_gauss)
    omega = [c for c in curvs for _ in range(n_gauss)] + curvs
    spec = OperatorSpec.chiral_ansatz(quad, k=k, omega_spin=tuple(omega) if with_curvature else None)
    return spec, quad
